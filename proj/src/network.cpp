#include "mkmmd/network.hpp"

#include <cmath>
#include <string>

#include "mkmmd/errors.hpp"
#include "mkmmd/rng.hpp"

namespace mkmmd {

namespace {

constexpr double kProbabilityFloor = 1e-12;

void check_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("network: non-finite ") + what);
}

MatrixXd activate(const MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::rectifier:
      return z.cwiseMax(0.0);
    case Activation::softmax:
      return softmax_rows(z);
    case Activation::identity:
      return z;
  }
  return z;
}

/// dL/dz from dL/dh for the given activation; h is the post-activation.
MatrixXd activation_backward(const MatrixXd& grad_h, const MatrixXd& z, const MatrixXd& h, Activation a) {
  switch (a) {
    case Activation::rectifier:
      // Subgradient at exactly zero is zero.
      return (z.array() > 0.0).select(grad_h.array(), 0.0).matrix();
    case Activation::softmax: {
      // J' g = p * (g - p.g) per row
      const VectorXd dots = (grad_h.cwiseProduct(h)).rowwise().sum();
      return h.cwiseProduct(grad_h - dots.replicate(1, grad_h.cols()));
    }
    case Activation::identity:
      return grad_h;
  }
  return grad_h;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::rectifier:
      return "rectifier";
    case Activation::softmax:
      return "softmax";
    case Activation::identity:
      return "identity";
  }
  return "unknown";
}

std::string to_string(Trainability t) {
  switch (t) {
    case Trainability::frozen:
      return "frozen";
    case Trainability::finetune:
      return "finetune";
    case Trainability::train_scratch:
      return "train_scratch";
  }
  return "unknown";
}

double default_lr_multiplier(Trainability t) {
  switch (t) {
    case Trainability::frozen:
      return 1.0;
    case Trainability::finetune:
      return 1.0;
    case Trainability::train_scratch:
      return 10.0;
  }
  return 1.0;
}

double cross_entropy(const VectorXd& probs, int label) {
  if (label < 0 || label >= probs.size()) {
    throw InputError("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs(label), kProbabilityFloor));
}

MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - peak).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Network::Network(std::vector<LayerSpec> specs, NetworkParams params)
    : specs_(std::move(specs)), params_(std::move(params)) {
  if (specs_.empty()) throw InputError("network: needs at least one layer");
  if (specs_.size() != params_.size()) throw InputError("network: spec/parameter count mismatch");
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const auto& s = specs_[l];
    const auto& p = params_[l];
    if (s.input_width < 1 || s.output_width < 1) throw InputError("network: layer widths must be positive");
    if (l > 0 && s.input_width != specs_[l - 1].output_width) {
      throw InputError("network: layer " + std::to_string(l) + " input width does not chain");
    }
    if (s.activation == Activation::softmax && l + 1 != specs_.size()) {
      throw InputError("network: softmax is only allowed on the final layer");
    }
    if (!(s.lr_multiplier > 0)) throw InputError("network: lr multiplier must be positive");
    if (p.weight.rows() != s.output_width || p.weight.cols() != s.input_width ||
        p.bias.size() != s.output_width) {
      throw InputError("network: layer " + std::to_string(l) + " parameter shape mismatch");
    }
    if (!p.weight.allFinite() || !p.bias.allFinite()) throw NumericError("network: non-finite parameters");
  }
}

Network Network::initialize(std::vector<LayerSpec> specs, std::uint64_t seed) {
  Rng rng(seed);
  NetworkParams params;
  params.reserve(specs.size());
  for (const auto& s : specs) {
    if (s.input_width < 1 || s.output_width < 1) throw InputError("network: layer widths must be positive");
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.input_width));
    LayerParams p{MatrixXd(s.output_width, s.input_width), VectorXd::Zero(s.output_width)};
    for (Index r = 0; r < p.weight.rows(); ++r) {
      for (Index c = 0; c < p.weight.cols(); ++c) p.weight(r, c) = rng.uniform(-scale, scale);
    }
    params.push_back(std::move(p));
  }
  return Network(std::move(specs), std::move(params));
}

ForwardCache Network::forward(const MatrixXd& batch) const {
  if (batch.cols() != input_width()) {
    throw InputError("network: input width " + std::to_string(batch.cols()) + " does not match " +
                     std::to_string(input_width()));
  }
  ForwardCache cache;
  cache.input = batch;
  cache.pre_activations.reserve(specs_.size());
  cache.hidden.reserve(specs_.size());
  const MatrixXd* prev = &cache.input;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    MatrixXd z = (*prev) * params_[l].weight.transpose();
    z.rowwise() += params_[l].bias.transpose();
    check_finite(z, "pre-activation");
    cache.hidden.push_back(activate(z, specs_[l].activation));
    cache.pre_activations.push_back(std::move(z));
    prev = &cache.hidden.back();
  }
  cache.probs = specs_.back().activation == Activation::softmax ? cache.hidden.back()
                                                                 : softmax_rows(cache.hidden.back());
  return cache;
}

ForwardResult Network::forward(const VectorXd& x) const {
  const ForwardCache cache = forward(MatrixXd(x.transpose()));
  ForwardResult out;
  for (const auto& h : cache.hidden) out.hidden.push_back(h.row(0).transpose());
  out.probs = cache.probs.row(0).transpose();
  return out;
}

NetworkGradients Network::zero_gradients() const {
  NetworkGradients grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    grads.push_back({MatrixXd::Zero(p.weight.rows(), p.weight.cols()), VectorXd::Zero(p.bias.size())});
  }
  return grads;
}

NetworkGradients Network::backward(const ForwardCache& cache, std::span<const int> labels, double ce_weight,
                                   const std::vector<MatrixXd>& injections) const {
  const Index n = cache.input.rows();
  const std::size_t depth = specs_.size();
  if (cache.hidden.size() != depth) throw InputError("network: forward cache does not match network");
  if (static_cast<Index>(labels.size()) != n) throw InputError("network: label count does not match batch");
  if (!injections.empty() && injections.size() != depth) {
    throw InputError("network: injections must be empty or one per layer");
  }
  auto injection = [&](std::size_t l) -> const MatrixXd* {
    if (injections.empty() || injections[l].size() == 0) return nullptr;
    if (injections[l].rows() != n || injections[l].cols() != specs_[l].output_width) {
      throw InputError("network: injection shape mismatch at layer " + std::to_string(l));
    }
    return &injections[l];
  };

  // Cross-entropy gradient with respect to the logits that feed the softmax.
  MatrixXd ce_grad = MatrixXd::Zero(n, class_count());
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    if (y >= class_count()) throw InputError("network: label " + std::to_string(y) + " out of range");
    ce_grad.row(i) = ce_weight * cache.probs.row(i);
    ce_grad(i, y) -= ce_weight;
  }

  NetworkGradients grads = zero_gradients();
  const std::size_t last = depth - 1;
  MatrixXd grad_h = MatrixXd::Zero(n, specs_[last].output_width);
  if (const auto* inj = injection(last)) grad_h += *inj;
  MatrixXd grad_z;
  if (specs_[last].activation == Activation::softmax) {
    grad_z = activation_backward(grad_h, cache.pre_activations[last], cache.hidden[last], Activation::softmax) +
             ce_grad;
  } else {
    grad_h += ce_grad;
    grad_z = activation_backward(grad_h, cache.pre_activations[last], cache.hidden[last], specs_[last].activation);
  }

  for (std::size_t l = depth; l-- > 0;) {
    const MatrixXd& below = l == 0 ? cache.input : cache.hidden[l - 1];
    if (specs_[l].trainability != Trainability::frozen) {
      grads[l].weight = grad_z.transpose() * below;
      grads[l].bias = grad_z.colwise().sum().transpose();
    }
    if (l == 0) break;
    grad_h = grad_z * params_[l].weight;
    if (const auto* inj = injection(l - 1)) grad_h += *inj;
    grad_z = activation_backward(grad_h, cache.pre_activations[l - 1], cache.hidden[l - 1], specs_[l - 1].activation);
  }
  for (const auto& g : grads) {
    if (!g.weight.allFinite() || !g.bias.allFinite()) throw NumericError("network: non-finite gradient");
  }
  return grads;
}

NetworkGradients Network::backward(const VectorXd& x, int label, const std::vector<VectorXd>& injections) const {
  const ForwardCache cache = forward(MatrixXd(x.transpose()));
  std::vector<MatrixXd> inj;
  inj.reserve(injections.size());
  for (const auto& v : injections) inj.emplace_back(v.size() == 0 ? MatrixXd() : MatrixXd(v.transpose()));
  const int labels[1] = {label};
  return backward(cache, labels, 1.0, inj);
}

double LrSchedule::factor(std::int64_t step) const {
  if (kind == Kind::constant) return 1.0;
  return std::pow(1.0 + gamma * static_cast<double>(step), -power);
}

SgdMomentum::SgdMomentum(const Network& net, double base_lr, double momentum, LrSchedule schedule)
    : velocity_(net.zero_gradients()), base_lr_(base_lr), momentum_(momentum), schedule_(schedule) {
  if (!(base_lr > 0)) throw ParameterError("sgd: base learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ParameterError("sgd: momentum must be in [0, 1)");
}

void SgdMomentum::step(Network& net, const NetworkGradients& grads, std::int64_t step_index) {
  if (grads.size() != velocity_.size()) throw InputError("sgd: gradient layer count mismatch");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (grads[l].weight.rows() != velocity_[l].weight.rows() || grads[l].weight.cols() != velocity_[l].weight.cols() ||
        grads[l].bias.size() != velocity_[l].bias.size()) {
      throw InputError("sgd: gradient shape mismatch at layer " + std::to_string(l));
    }
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite()) {
      throw NumericError("sgd: non-finite gradient at layer " + std::to_string(l));
    }
  }
  const double anneal = schedule_.factor(step_index);
  auto& params = net.mutable_params();
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& spec = net.specs()[l];
    if (spec.trainability == Trainability::frozen) continue;
    const double lr = base_lr_ * spec.lr_multiplier * anneal;
    velocity_[l].weight = momentum_ * velocity_[l].weight - lr * grads[l].weight;
    velocity_[l].bias = momentum_ * velocity_[l].bias - lr * grads[l].bias;
    params[l].weight += velocity_[l].weight;
    params[l].bias += velocity_[l].bias;
  }
}

std::vector<LayerSpec> make_classifier_specs(Index input_width, std::span<const Index> hidden_widths,
                                             Index class_count) {
  std::vector<LayerSpec> specs;
  Index in = input_width;
  for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
    const auto mode = i == 0 ? Trainability::finetune : Trainability::train_scratch;
    specs.push_back({in, hidden_widths[i], Activation::rectifier, mode, default_lr_multiplier(mode)});
    in = hidden_widths[i];
  }
  specs.push_back({in, class_count, Activation::softmax, Trainability::train_scratch,
                   default_lr_multiplier(Trainability::train_scratch)});
  return specs;
}

}  // namespace mkmmd
