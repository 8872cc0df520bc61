#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mkmmd/data.hpp"
#include "mkmmd/kernels.hpp"
#include "mkmmd/mmd.hpp"
#include "mkmmd/kernel_selection.hpp"
#include "mkmmd/network.hpp"

namespace mkmmd {

enum class Variant {
  source_only,        ///< cross-entropy only; MMD is monitored, not penalized
  dan,                ///< multi-kernel MMD on every adapted layer, beta by QP
  dan_single_kernel,  ///< one median-heuristic Gaussian kernel, beta fixed at (1)
  dan_single_layer,   ///< multi-kernel MMD on one layer only
};

std::string to_string(Variant v);

/// The lambda grid of the sensitivity study.
inline const std::vector<double> kLambdaGrid = {0.1, 0.4, 0.7, 1.0, 1.4, 1.7, 2.0};

struct AdaptationConfig {
  Variant variant = Variant::dan;
  std::vector<std::size_t> adapted_layers;  ///< 0-based layer indices
  std::size_t single_layer = 0;             ///< the layer used by dan_single_layer
  double lambda = 1.0;
  /// One family per adapted layer. When empty, training builds them from the
  /// median heuristic on the initial network's representations.
  std::vector<KernelFamilyd> families;
  Index batch_size = 64;  ///< source + target samples per batch
  int beta_update_period = 50;
  int epochs = 150;
  std::uint64_t seed = 0;

  double base_lr = 0.001;
  double momentum = 0.9;
  LrSchedule schedule{};

  double span_exponent = 8.0;
  double step_exponent = 0.5;
  Index beta_eval_samples = 256;  ///< per domain, for each beta update
  double qp_epsilon = kDefaultQpEpsilon;
  /// Re-run the median heuristic on the current representation at every
  /// kernel update, keeping the weights (adaptation variants only).
  bool refresh_bandwidths = true;

  /// Layers that carry an MMD term (or are monitored, for source_only).
  std::vector<std::size_t> effective_layers() const;
  /// Penalty actually applied: zero for source_only.
  double effective_lambda() const;
  void validate(std::size_t layer_count) const;
};

/// Last two hidden layers plus the classifier layer, clipped to what exists.
std::vector<std::size_t> default_adapted_layers(std::size_t layer_count);

struct AdaptationTask {
  LabeledDataset source;            ///< labeled source domain
  MatrixXd target_unlabeled;        ///< target domain, labels never read by training
  LabeledDataset target_labeled;    ///< optional annotated target samples (may be empty)
  std::vector<int> target_truth;    ///< optional labels of target_unlabeled, for reporting only
  int class_count = 0;

  void validate() const;
};

/// Build a task from a labeled source set and a target set whose labels (if
/// any) are kept only as reporting ground truth.
AdaptationTask make_task(const LabeledDataset& source, const LabeledDataset& target,
                         const LabeledDataset& target_labeled = {});

struct Batch {
  MatrixXd source;
  std::vector<int> source_labels;
  MatrixXd target;
  MatrixXd target_labeled;
  std::vector<int> target_labeled_labels;

  /// Consecutive rows of source and target form the quad-tuples.
  Index quad_count() const { return source.rows() / 2; }
  std::vector<QuadTupled> quads() const { return make_quads(source, target); }
};

/// Per-domain share of a batch: batch_size / 2 rounded down to even.
Index per_domain_batch(Index batch_size);

/// Shuffles both domains independently (stream derived from seed and epoch),
/// then cuts min(n_s, n_t) / per_domain batches of per_domain_batch(batch_size)
/// samples from each domain.
std::vector<Batch> make_batches(const AdaptationTask& task, Index batch_size, std::uint64_t seed, int epoch_index);

struct LossAndGrads {
  double total_loss = 0.0;
  double classification_loss = 0.0;
  std::vector<double> mmd2;  ///< one per entry of `layers`
  NetworkGradients grads;
};

/// Batch objective: mean cross-entropy over labeled rows plus
/// lambda * sum_l mmd2_linear(source_l, target_l), and its gradient.
LossAndGrads dan_loss_and_grads(const Network& net, const Batch& batch, const std::vector<std::size_t>& layers,
                                const std::vector<KernelFamilyd>& families, double lambda);

enum class BetaUpdateStatus { updated, infeasible, solver_failed };

struct LayerBetaUpdate {
  std::size_t layer = 0;
  BetaUpdateStatus status = BetaUpdateStatus::updated;
  MmdReportd report;  ///< statistics under the previous weights
  VectorXd beta_pre_rescale;
  std::string message;
};

/// Re-selects kernel weights for every layer from a seeded evaluation
/// subsample (the same permutation seed for both domains). Solver failures
/// keep the previous weights.
std::vector<LayerBetaUpdate> update_beta(const Network& net, const AdaptationTask& task,
                                         const std::vector<std::size_t>& layers, std::vector<KernelFamilyd>& families,
                                         Index eval_samples, std::uint64_t seed,
                                         double epsilon = kDefaultQpEpsilon);

/// FNV-1a hash of all kernel weights' bit patterns.
std::uint64_t beta_hash(const std::vector<KernelFamilyd>& families);

struct HistoryRecord {
  int epoch = 0;
  std::int64_t batch = 0;  ///< batches completed so far
  double classification_loss = 0.0;
  double total_loss = 0.0;
  std::vector<double> mmd2;
  double lambda = 0.0;
  std::uint64_t beta_hash = 0;
  double source_acc = 0.0;
  double target_acc = 0.0;  ///< NaN without target ground truth
};

struct TrainResult {
  Network network;
  std::vector<HistoryRecord> history;
  std::vector<KernelFamilyd> families;
  std::vector<std::size_t> layers;
  std::vector<std::string> warnings;
  bool diverged = false;
  std::string failure;
};

/// Initial kernel families for `layers`: median heuristic on the pooled
/// source/target representations, then the bandwidth grid (dan variants) or a
/// single kernel (source_only, dan_single_kernel).
std::vector<KernelFamilyd> initial_families(const Network& net, const AdaptationTask& task,
                                            const AdaptationConfig& config, std::vector<std::string>* warnings = nullptr);

/// Rebuilds each family around the median heuristic of the current
/// representation, keeping its weights.
void refresh_bandwidths(const Network& net, const AdaptationTask& task, const AdaptationConfig& config,
                        std::vector<KernelFamilyd>& families);

/// Alternating optimization: SGD on network parameters every batch, QP on
/// kernel weights every beta_update_period batches (and once before the first
/// batch). A non-finite loss stops training with `diverged` set.
TrainResult train(Network net, const AdaptationTask& task, const AdaptationConfig& config);

/// Dense classifier (make_classifier_specs) initialized from a stream derived
/// from `seed`.
Network initial_network(Index input_width, const std::vector<Index>& hidden_widths, int class_count,
                        std::uint64_t seed);

/// Argmax accuracy; ties go to the lowest class index. Unlabeled rows are an error.
double evaluate(const Network& net, const MatrixXd& features, const std::vector<int>& labels);

/// Hidden representation of every row at `layer`.
MatrixXd layer_features(const Network& net, const MatrixXd& features, std::size_t layer);

std::string history_csv_header(const std::vector<std::size_t>& layers);
std::string format_history_csv(const std::vector<HistoryRecord>& history, const std::vector<std::size_t>& layers);

/// Unsupervised model-selection score on held-out data:
/// source accuracy - (domain classifier accuracy - 0.5), the domain classifier
/// being trained on the last hidden layer's features.
double selection_score(const Network& net, const LabeledDataset& source_val, const MatrixXd& target_val,
                       std::uint64_t seed);

struct LambdaSweepRow {
  double lambda = 0.0;
  double mean_target_acc = 0.0;
  double std_target_acc = 0.0;
  double mean_selection_score = 0.0;
  int runs = 0;
  int failed = 0;
};

/// Trains `config` (with each lambda substituted) for every seed on an 80/20
/// split of both domains; accuracy is measured on the whole target set, the
/// selection score on the held-out 20%.
std::vector<LambdaSweepRow> sweep_lambda(const std::vector<Index>& hidden_widths, const LabeledDataset& source,
                                         const LabeledDataset& target, const AdaptationConfig& config,
                                         const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds);

/// Row with the highest mean selection score (first wins ties).
const LambdaSweepRow& select_lambda(const std::vector<LambdaSweepRow>& rows);

}  // namespace mkmmd
