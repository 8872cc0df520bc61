#include "mkmmd/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mkmmd/diagnostics.hpp"
#include "mkmmd/errors.hpp"
#include "mkmmd/rng.hpp"

namespace mkmmd {

namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamBatches = 2;
constexpr std::uint64_t kStreamBeta = 3;
constexpr std::uint64_t kStreamMedian = 4;
constexpr std::uint64_t kStreamSplit = 5;
constexpr std::uint64_t kStreamSelection = 6;

MatrixXd rows_of(const MatrixXd& data, const std::vector<Index>& order, Index begin, Index count) {
  MatrixXd out(count, data.cols());
  for (Index i = 0; i < count; ++i) out.row(i) = data.row(order[static_cast<std::size_t>(begin + i)]);
  return out;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::source_only:
      return "source-only";
    case Variant::dan:
      return "dan";
    case Variant::dan_single_kernel:
      return "dan-sk";
    case Variant::dan_single_layer:
      return "dan-layer";
  }
  return "unknown";
}

std::vector<std::size_t> default_adapted_layers(std::size_t layer_count) {
  std::vector<std::size_t> layers;
  const std::size_t first = layer_count >= 3 ? layer_count - 3 : 0;
  for (std::size_t l = first; l < layer_count; ++l) layers.push_back(l);
  return layers;
}

std::vector<std::size_t> AdaptationConfig::effective_layers() const {
  if (variant == Variant::dan_single_layer) return {single_layer};
  return adapted_layers;
}

double AdaptationConfig::effective_lambda() const { return variant == Variant::source_only ? 0.0 : lambda; }

void AdaptationConfig::validate(std::size_t layer_count) const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ParameterError("config: lambda must be non-negative");
  if (batch_size < 4) throw ParameterError("config: batch_size must be at least 4");
  if (batch_size % 2 != 0) throw ParameterError("config: batch_size must be even");
  if (beta_update_period < 1) throw ParameterError("config: beta_update_period must be positive");
  if (epochs < 1) throw ParameterError("config: epochs must be positive");
  if (beta_eval_samples < 4) throw ParameterError("config: beta_eval_samples must be at least 4");
  const auto layers = effective_layers();
  if (layers.empty() && variant != Variant::source_only) {
    throw ParameterError("config: adapted layers must be nonempty for adaptation variants");
  }
  std::set<std::size_t> seen;
  for (auto l : layers) {
    if (l >= layer_count) throw ParameterError("config: adapted layer " + std::to_string(l) + " does not exist");
    if (!seen.insert(l).second) throw ParameterError("config: adapted layer listed twice");
  }
  if (!families.empty() && families.size() != layers.size()) {
    throw ParameterError("config: need exactly one kernel family per adapted layer");
  }
}

void AdaptationTask::validate() const {
  source.validate();
  if (source.size() < 4) throw InputError("task: source needs at least 4 samples");
  if (!source.fully_labeled()) throw InputError("task: every source sample needs a label");
  if (target_unlabeled.rows() < 4) throw InputError("task: target needs at least 4 samples");
  if (target_unlabeled.cols() != source.dimension()) throw InputError("task: source/target dimension mismatch");
  if (target_labeled.size() > 0) {
    target_labeled.validate();
    if (target_labeled.dimension() != source.dimension()) throw InputError("task: labeled target dimension mismatch");
    if (!target_labeled.fully_labeled()) throw InputError("task: labeled target set contains unlabeled rows");
  }
  if (class_count < 1) throw InputError("task: class_count must be positive");
  auto check = [&](const std::vector<int>& labels) {
    for (int y : labels) {
      if (y >= class_count) throw InputError("task: label " + std::to_string(y) + " >= class_count");
    }
  };
  check(source.labels);
  check(target_labeled.labels);
  if (!target_truth.empty()) {
    if (static_cast<Index>(target_truth.size()) != target_unlabeled.rows()) {
      throw InputError("task: target ground truth size mismatch");
    }
    check(target_truth);
  }
}

AdaptationTask make_task(const LabeledDataset& source, const LabeledDataset& target,
                         const LabeledDataset& target_labeled) {
  AdaptationTask task;
  task.source = source;
  task.target_unlabeled = target.features;
  if (target.fully_labeled()) task.target_truth = target.labels;
  task.target_labeled = target_labeled;
  task.class_count = std::max({source.class_count(), target_labeled.class_count(),
                               target.fully_labeled() ? target.class_count() : 0});
  task.validate();
  return task;
}

Index per_domain_batch(Index batch_size) {
  const Index half = batch_size / 2;
  return half - (half % 2);
}

std::vector<Batch> make_batches(const AdaptationTask& task, Index batch_size, std::uint64_t seed, int epoch_index) {
  const Index per_domain = per_domain_batch(batch_size);
  if (per_domain < 2) throw InputError("make_batches: batch_size must be at least 4");
  const Index n_s = task.source.size();
  const Index n_t = task.target_unlabeled.rows();
  if (per_domain > std::min(n_s, n_t)) {
    throw InputError("make_batches: batch needs " + std::to_string(per_domain) + " samples per domain, only " +
                     std::to_string(std::min(n_s, n_t)) + " available");
  }
  Rng rng(derive_seed(seed ^ static_cast<std::uint64_t>(epoch_index), kStreamBatches));
  const auto order_s = random_permutation(n_s, rng);
  const auto order_t = random_permutation(n_t, rng);
  std::vector<Index> order_a;
  const Index n_a = task.target_labeled.size();
  if (n_a > 0) order_a = random_permutation(n_a, rng);

  const Index n_batches = std::min(n_s, n_t) / per_domain;
  std::vector<Batch> batches;
  batches.reserve(static_cast<std::size_t>(n_batches));
  Index cursor_a = 0;
  for (Index b = 0; b < n_batches; ++b) {
    Batch batch;
    batch.source = rows_of(task.source.features, order_s, b * per_domain, per_domain);
    batch.source_labels.reserve(static_cast<std::size_t>(per_domain));
    for (Index i = 0; i < per_domain; ++i) {
      batch.source_labels.push_back(task.source.labels[static_cast<std::size_t>(order_s[static_cast<std::size_t>(b * per_domain + i)])]);
    }
    batch.target = rows_of(task.target_unlabeled, order_t, b * per_domain, per_domain);
    if (n_a > 0) {
      // Annotated target samples cycle through a shuffled order.
      const Index take = std::min(per_domain, n_a);
      batch.target_labeled.resize(take, task.target_labeled.dimension());
      for (Index i = 0; i < take; ++i, cursor_a = (cursor_a + 1) % n_a) {
        const Index row = order_a[static_cast<std::size_t>(cursor_a)];
        batch.target_labeled.row(i) = task.target_labeled.features.row(row);
        batch.target_labeled_labels.push_back(task.target_labeled.labels[static_cast<std::size_t>(row)]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

LossAndGrads dan_loss_and_grads(const Network& net, const Batch& batch, const std::vector<std::size_t>& layers,
                                const std::vector<KernelFamilyd>& families, double lambda) {
  if (layers.size() != families.size()) throw InputError("dan_loss: one kernel family per layer required");
  const Index n_s = batch.source.rows();
  const Index n_t = batch.target.rows();
  const Index n_a = batch.target_labeled.rows();
  if (n_s == 0) throw InputError("dan_loss: empty batch");
  if (static_cast<Index>(batch.source_labels.size()) != n_s ||
      static_cast<Index>(batch.target_labeled_labels.size()) != n_a) {
    throw InputError("dan_loss: label count mismatch");
  }

  MatrixXd inputs(n_s + n_t + n_a, batch.source.cols());
  inputs.topRows(n_s) = batch.source;
  if (n_t > 0) inputs.middleRows(n_s, n_t) = batch.target;
  if (n_a > 0) inputs.bottomRows(n_a) = batch.target_labeled;
  std::vector<int> labels(static_cast<std::size_t>(inputs.rows()), kUnlabeled);
  std::copy(batch.source_labels.begin(), batch.source_labels.end(), labels.begin());
  std::copy(batch.target_labeled_labels.begin(), batch.target_labeled_labels.end(), labels.begin() + n_s + n_t);

  const ForwardCache cache = net.forward(inputs);
  LossAndGrads out;
  const double n_labeled = static_cast<double>(n_s + n_a);
  double ce = 0.0;
  for (Index i = 0; i < inputs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y >= 0) ce += cross_entropy(cache.probs.row(i).transpose(), y);
  }
  out.classification_loss = ce / n_labeled;

  std::vector<MatrixXd> injections;
  if (lambda != 0.0 && !layers.empty()) injections.resize(net.layer_count());
  double penalty = 0.0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::size_t l = layers[k];
    if (l >= net.layer_count()) throw InputError("dan_loss: layer index out of range");
    const MatrixXd& h = cache.hidden[l];
    const MatrixXd hs = h.topRows(n_s);
    const MatrixXd ht = h.middleRows(n_s, n_t);
    double value = 0.0;
    if (lambda != 0.0) {
      MatrixXd grad_s, grad_t;
      value = mmd2_linear_with_gradient(hs, ht, families[k], grad_s, grad_t);
      MatrixXd& inj = injections[l];
      if (inj.size() == 0) inj = MatrixXd::Zero(h.rows(), h.cols());
      inj.topRows(n_s) += lambda * grad_s;
      inj.middleRows(n_s, n_t) += lambda * grad_t;
    } else {
      value = mmd2_linear(hs, ht, families[k]);
    }
    out.mmd2.push_back(value);
    penalty += value;
  }
  out.total_loss = out.classification_loss + lambda * penalty;
  out.grads = net.backward(cache, labels, 1.0 / n_labeled, injections);
  return out;
}

std::vector<LayerBetaUpdate> update_beta(const Network& net, const AdaptationTask& task,
                                         const std::vector<std::size_t>& layers, std::vector<KernelFamilyd>& families,
                                         Index eval_samples, std::uint64_t seed, double epsilon) {
  if (layers.size() != families.size()) throw InputError("update_beta: one kernel family per layer required");
  const Index n_s = task.source.size();
  const Index n_t = task.target_unlabeled.rows();
  const Index k_s = std::min(eval_samples, n_s);
  const Index k_t = std::min(eval_samples, n_t);
  if (common_even_length(k_s, k_t) < 4) throw InputError("update_beta: needs at least 2 quad-tuples");

  // Same seed for both permutations: equal-sized domains get the same order.
  Rng rng_s(seed);
  Rng rng_t(seed);
  const auto order_s = random_permutation(n_s, rng_s);
  const auto order_t = random_permutation(n_t, rng_t);
  const ForwardCache cs = net.forward(rows_of(task.source.features, order_s, 0, k_s));
  const ForwardCache ct = net.forward(rows_of(task.target_unlabeled, order_t, 0, k_t));

  std::vector<LayerBetaUpdate> updates;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    LayerBetaUpdate up;
    up.layer = layers[k];
    up.report = per_kernel_stats(cs.hidden[layers[k]], ct.hidden[layers[k]], families[k]);
    try {
      const auto sol = solve_beta<double>(up.report.per_kernel_d, up.report.covariance_q, epsilon);
      up.beta_pre_rescale = sol.beta;
      families[k].set_weights(rescale_to_simplex<double>(sol.beta));
    } catch (const InfeasibleDirectionError& e) {
      up.status = BetaUpdateStatus::infeasible;
      up.message = e.what();
    } catch (const SolverError& e) {
      up.status = BetaUpdateStatus::solver_failed;
      up.message = e.what();
    } catch (const ParameterError& e) {
      up.status = BetaUpdateStatus::solver_failed;
      up.message = e.what();
    }
    updates.push_back(std::move(up));
  }
  return updates;
}

std::uint64_t beta_hash(const std::vector<KernelFamilyd>& families) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& f : families) {
    mix(static_cast<std::uint64_t>(f.size()));
    for (Index u = 0; u < f.size(); ++u) mix(std::bit_cast<std::uint64_t>(f.weights()(u)));
  }
  return h;
}

Network initial_network(Index input_width, const std::vector<Index>& hidden_widths, int class_count,
                        std::uint64_t seed) {
  return Network::initialize(make_classifier_specs(input_width, hidden_widths, class_count),
                             derive_seed(seed, kStreamInit));
}

MatrixXd layer_features(const Network& net, const MatrixXd& features, std::size_t layer) {
  if (layer >= net.layer_count()) throw InputError("layer_features: layer index out of range");
  return net.forward(features).hidden[layer];
}

double evaluate(const Network& net, const MatrixXd& features, const std::vector<int>& labels) {
  if (features.rows() == 0) throw InputError("evaluate: empty sample set");
  if (static_cast<Index>(labels.size()) != features.rows()) throw InputError("evaluate: label count mismatch");
  const MatrixXd probs = net.forward(features).probs;
  Index correct = 0;
  for (Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) throw InputError("evaluate: invalid label " + std::to_string(y));
    Index best = 0;
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    if (best == y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

namespace {

std::vector<double> median_bandwidths(const Network& net, const AdaptationTask& task,
                                      const std::vector<std::size_t>& layers, std::uint64_t seed,
                                      std::vector<std::string>* warnings) {
  constexpr Index kMedianSamplesPerDomain = 500;
  Rng rng(derive_seed(seed, kStreamMedian));
  const auto order_s = random_permutation(task.source.size(), rng);
  const auto order_t = random_permutation(task.target_unlabeled.rows(), rng);
  const Index k_s = std::min(kMedianSamplesPerDomain, task.source.size());
  const Index k_t = std::min(kMedianSamplesPerDomain, task.target_unlabeled.rows());
  MatrixXd pooled(k_s + k_t, task.source.dimension());
  pooled << rows_of(task.source.features, order_s, 0, k_s), rows_of(task.target_unlabeled, order_t, 0, k_t);
  const ForwardCache cache = net.forward(pooled);

  std::vector<double> gammas;
  for (auto l : layers) {
    double gamma = std::numeric_limits<double>::quiet_NaN();
    try {
      gamma = median_heuristic(cache.hidden[l], derive_seed(seed, kStreamMedian + l));
    } catch (const DegenerateInputError&) {
      if (warnings) warnings->push_back("layer " + std::to_string(l) + ": degenerate representation");
    }
    gammas.push_back(gamma);
  }
  return gammas;
}

KernelFamilyd family_for(const AdaptationConfig& config, double gamma) {
  const bool multi = config.variant == Variant::dan || config.variant == Variant::dan_single_layer;
  return multi ? build_family(gamma, config.span_exponent, config.step_exponent) : KernelFamilyd::single(gamma);
}

}  // namespace

std::vector<KernelFamilyd> initial_families(const Network& net, const AdaptationTask& task,
                                            const AdaptationConfig& config, std::vector<std::string>* warnings) {
  std::vector<KernelFamilyd> families;
  for (double gamma : median_bandwidths(net, task, config.effective_layers(), config.seed, warnings)) {
    families.push_back(family_for(config, std::isnan(gamma) ? 1.0 : gamma));
  }
  return families;
}

void refresh_bandwidths(const Network& net, const AdaptationTask& task, const AdaptationConfig& config,
                        std::vector<KernelFamilyd>& families) {
  const auto gammas = median_bandwidths(net, task, config.effective_layers(), config.seed, nullptr);
  if (gammas.size() != families.size()) throw InputError("refresh_bandwidths: one kernel family per layer required");
  for (std::size_t k = 0; k < families.size(); ++k) {
    if (std::isnan(gammas[k])) continue;  // keep the previous bandwidths
    KernelFamilyd next = family_for(config, gammas[k]);
    if (next.size() == families[k].size()) next.set_weights(families[k].weights());
    families[k] = std::move(next);
  }
}

TrainResult train(Network net, const AdaptationTask& task, const AdaptationConfig& config) {
  task.validate();
  config.validate(net.layer_count());
  if (net.input_width() != task.source.dimension()) throw InputError("train: network input width mismatch");
  if (net.class_count() < task.class_count) throw InputError("train: network has fewer outputs than classes");

  TrainResult result{net, {}, {}, config.effective_layers(), {}, false, {}};
  result.families = config.families.empty() ? initial_families(net, task, config, &result.warnings) : config.families;
  const auto& layers = result.layers;
  const double lambda = config.effective_lambda();
  const bool select_beta = config.variant == Variant::dan || config.variant == Variant::dan_single_layer;
  const bool refresh =
      config.refresh_bandwidths && config.families.empty() && config.variant != Variant::source_only;

  std::int64_t beta_updates = 0;
  auto run_beta_update = [&](const Network& current) {
    if (refresh) refresh_bandwidths(current, task, config, result.families);
    if (!select_beta) return;
    const auto seed = derive_seed(config.seed, kStreamBeta + 16 * static_cast<std::uint64_t>(beta_updates++));
    for (const auto& up : update_beta(current, task, layers, result.families, config.beta_eval_samples, seed,
                                      config.qp_epsilon)) {
      if (up.status == BetaUpdateStatus::solver_failed) {
        result.warnings.push_back("beta update " + std::to_string(beta_updates) + " layer " +
                                  std::to_string(up.layer) + ": " + up.message);
      }
    }
  };

  SgdMomentum sgd(net, config.base_lr, config.momentum, config.schedule);
  if (select_beta) run_beta_update(net);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(task, config.batch_size, config.seed, epoch);
    HistoryRecord rec;
    rec.epoch = epoch;
    rec.lambda = lambda;
    rec.mmd2.assign(layers.size(), 0.0);
    try {
      for (const auto& batch : batches) {
        LossAndGrads lg = dan_loss_and_grads(net, batch, layers, result.families, lambda);
        if (!std::isfinite(lg.total_loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
        sgd.step(net, lg.grads, step);
        ++step;
        rec.classification_loss += lg.classification_loss;
        rec.total_loss += lg.total_loss;
        for (std::size_t k = 0; k < layers.size(); ++k) rec.mmd2[k] += lg.mmd2[k];
        if ((select_beta || refresh) && step % config.beta_update_period == 0) run_beta_update(net);
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.failure = e.what();
      break;
    }
    const double nb = static_cast<double>(batches.size());
    rec.classification_loss /= nb;
    rec.total_loss /= nb;
    for (auto& v : rec.mmd2) v /= nb;
    rec.batch = step;
    rec.beta_hash = beta_hash(result.families);
    try {
      rec.source_acc = evaluate(net, task.source.features, task.source.labels);
      rec.target_acc = task.target_truth.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                 : evaluate(net, task.target_unlabeled, task.target_truth);
    } catch (const NumericError& e) {
      result.diverged = true;
      result.failure = e.what();
      break;
    }
    result.history.push_back(std::move(rec));
  }
  result.network = std::move(net);
  return result;
}

namespace {

void append_double(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

}  // namespace

std::string history_csv_header(const std::vector<std::size_t>& layers) {
  std::string out = "epoch,batch,classification_loss";
  for (auto l : layers) out += ",mmd2_layer" + std::to_string(l);
  out += ",lambda,beta_hash,source_acc,target_acc\n";
  return out;
}

std::string format_history_csv(const std::vector<HistoryRecord>& history, const std::vector<std::size_t>& layers) {
  std::string out = history_csv_header(layers);
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.batch) + ",";
    append_double(out, r.classification_loss);
    for (double m : r.mmd2) {
      out.push_back(',');
      append_double(out, m);
    }
    out.push_back(',');
    append_double(out, r.lambda);
    out += "," + hex64(r.beta_hash) + ",";
    append_double(out, r.source_acc);
    out.push_back(',');
    append_double(out, r.target_acc);
    out.push_back('\n');
  }
  return out;
}

double selection_score(const Network& net, const LabeledDataset& source_val, const MatrixXd& target_val,
                       std::uint64_t seed) {
  const double source_acc = evaluate(net, source_val.features, source_val.labels);
  const std::size_t top_hidden = net.layer_count() >= 2 ? net.layer_count() - 2 : 0;
  const MatrixXd fs = layer_features(net, source_val.features, top_hidden);
  const MatrixXd ft = layer_features(net, target_val, top_hidden);
  const double domain_acc = 1.0 - a_distance(fs, ft, seed).test_error;
  return source_acc - (domain_acc - 0.5);
}

std::vector<LambdaSweepRow> sweep_lambda(const std::vector<Index>& hidden_widths, const LabeledDataset& source,
                                         const LabeledDataset& target, const AdaptationConfig& config,
                                         const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds) {
  if (lambdas.empty() || seeds.empty()) throw ParameterError("sweep_lambda: empty lambda grid or seed list");
  const int classes = std::max(source.class_count(), target.fully_labeled() ? target.class_count() : 0);

  std::vector<LambdaSweepRow> rows;
  for (double lambda : lambdas) {
    LambdaSweepRow row;
    row.lambda = lambda;
    std::vector<double> accs, scores;
    for (auto seed : seeds) {
      Rng rng(derive_seed(seed, kStreamSplit));
      auto split = [&](const LabeledDataset& d) {
        auto order = random_permutation(d.size(), rng);
        const Index n_train = d.size() - d.size() / 5;
        std::vector<Index> tr(order.begin(), order.begin() + n_train), va(order.begin() + n_train, order.end());
        return std::pair{subset(d, tr), subset(d, va)};
      };
      const auto [src_train, src_val] = split(source);
      const auto [tgt_train, tgt_val] = split(target);
      LabeledDataset tgt_train_unlabeled = tgt_train;
      std::fill(tgt_train_unlabeled.labels.begin(), tgt_train_unlabeled.labels.end(), kUnlabeled);
      AdaptationTask task = make_task(src_train, tgt_train_unlabeled);
      task.class_count = classes;

      AdaptationConfig cfg = config;
      cfg.lambda = lambda;
      cfg.seed = seed;
      ++row.runs;
      try {
        const auto res = train(initial_network(source.dimension(), hidden_widths, classes, seed), task, cfg);
        if (res.diverged) {
          ++row.failed;
          continue;
        }
        if (target.fully_labeled()) accs.push_back(evaluate(res.network, target.features, target.labels));
        scores.push_back(selection_score(res.network, src_val, tgt_val.features, derive_seed(seed, kStreamSelection)));
      } catch (const NumericError&) {
        ++row.failed;
      }
    }
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                       : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    row.mean_target_acc = mean(accs);
    row.mean_selection_score = mean(scores);
    double ss = 0.0;
    for (double a : accs) ss += (a - row.mean_target_acc) * (a - row.mean_target_acc);
    row.std_target_acc = accs.size() > 1 ? std::sqrt(ss / static_cast<double>(accs.size() - 1)) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

const LambdaSweepRow& select_lambda(const std::vector<LambdaSweepRow>& rows) {
  if (rows.empty()) throw ParameterError("select_lambda: no rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].mean_selection_score > rows[best].mean_selection_score) best = i;
  }
  return rows[best];
}

}  // namespace mkmmd
