#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mkmmd/types.hpp"

namespace mkmmd {

enum class Activation : std::uint8_t { rectifier = 0, softmax = 1, identity = 2 };
enum class Trainability : std::uint8_t { frozen = 0, finetune = 1, train_scratch = 2 };

std::string to_string(Activation a);
std::string to_string(Trainability t);

/// Learning-rate multiplier conventionally paired with a trainability mode:
/// 1 for fine-tuned layers, 10 for layers trained from scratch.
double default_lr_multiplier(Trainability t);

struct LayerSpec {
  Index input_width = 0;
  Index output_width = 0;
  Activation activation = Activation::rectifier;
  Trainability trainability = Trainability::train_scratch;
  double lr_multiplier = 10.0;

  bool operator==(const LayerSpec&) const = default;
};

/// Dense layer parameters; weight is output_width x input_width.
struct LayerParams {
  MatrixXd weight;
  VectorXd bias;
};

using NetworkParams = std::vector<LayerParams>;
using NetworkGradients = std::vector<LayerParams>;

/// Activations of one forward pass over a batch (one sample per row).
struct ForwardCache {
  MatrixXd input;
  std::vector<MatrixXd> pre_activations;  ///< W h + b per layer
  std::vector<MatrixXd> hidden;           ///< f(W h + b) per layer
  MatrixXd probs;                         ///< class probabilities per row
};

/// Single-sample forward result.
struct ForwardResult {
  std::vector<VectorXd> hidden;
  VectorXd probs;
};

/// -log(max(p[label], 1e-12)).
double cross_entropy(const VectorXd& probs, int label);

/// Row-wise numerically stable softmax.
MatrixXd softmax_rows(const MatrixXd& logits);

/// Ordered stack of dense layers.
///
/// Softmax is allowed on the final layer only. When the final layer is not a
/// softmax, class probabilities are the softmax of its output.
class Network {
 public:
  Network(std::vector<LayerSpec> specs, NetworkParams params);

  /// Weights uniform in [-1/sqrt(in), 1/sqrt(in)] from `seed`; biases zero.
  static Network initialize(std::vector<LayerSpec> specs, std::uint64_t seed);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const NetworkParams& params() const { return params_; }
  NetworkParams& mutable_params() { return params_; }
  std::size_t layer_count() const { return specs_.size(); }
  Index input_width() const { return specs_.front().input_width; }
  Index class_count() const { return specs_.back().output_width; }

  ForwardCache forward(const MatrixXd& batch) const;
  ForwardResult forward(const VectorXd& x) const;

  /// Reverse-mode gradient of
  ///   ce_weight * sum_{rows with label >= 0} CE(probs_row, label)
  ///   + sum_l <injections[l], hidden[l]>
  /// where injections[l] is dL/dhidden[l] from an external term (an empty
  /// matrix means none). Frozen layers get zero gradient.
  NetworkGradients backward(const ForwardCache& cache, std::span<const int> labels, double ce_weight,
                            const std::vector<MatrixXd>& injections = {}) const;

  NetworkGradients backward(const VectorXd& x, int label,
                            const std::vector<VectorXd>& injections = {}) const;

  NetworkGradients zero_gradients() const;

 private:
  std::vector<LayerSpec> specs_;
  NetworkParams params_;
};

/// Learning-rate annealing. `inv`: factor(t) = (1 + gamma t)^(-power).
struct LrSchedule {
  enum class Kind { constant, inv };
  Kind kind = Kind::inv;
  double gamma = 0.001;
  double power = 0.75;

  double factor(std::int64_t step) const;
  static LrSchedule constant() { return {Kind::constant, 0.0, 0.0}; }
};

/// Classical momentum SGD with per-layer learning-rate multipliers:
///   v <- momentum v - base_lr * mult_l * schedule(t) * g;  theta <- theta + v
class SgdMomentum {
 public:
  SgdMomentum(const Network& net, double base_lr, double momentum = 0.9, LrSchedule schedule = {});

  /// Throws NumericError before touching any parameter if a gradient is non-finite.
  void step(Network& net, const NetworkGradients& grads, std::int64_t step_index);

  const NetworkParams& velocity() const { return velocity_; }
  double base_lr() const { return base_lr_; }
  double momentum() const { return momentum_; }
  const LrSchedule& schedule() const { return schedule_; }

 private:
  NetworkParams velocity_;
  double base_lr_;
  double momentum_;
  LrSchedule schedule_;
};

/// Layer specs for a dense classifier with rectifier hidden layers and a
/// softmax output. The first hidden layer is fine-tuned, the rest train from
/// scratch with the larger multiplier.
std::vector<LayerSpec> make_classifier_specs(Index input_width, std::span<const Index> hidden_widths,
                                             Index class_count);

}  // namespace mkmmd
