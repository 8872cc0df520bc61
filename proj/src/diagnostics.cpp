#include "mkmmd/diagnostics.hpp"

#include <cmath>
#include <vector>

#include "mkmmd/errors.hpp"
#include "mkmmd/kernel_selection.hpp"
#include "mkmmd/rng.hpp"

namespace mkmmd {

namespace {

/// Unbiased MMD^2 for the split (first n_source entries of `order` vs the rest)
/// of a pooled Gram matrix.
double split_statistic(const MatrixXd& gram, const std::vector<Index>& order, Index n_source) {
  const Index n_total = static_cast<Index>(order.size());
  const Index n_target = n_total - n_source;
  double within_s = 0.0, within_t = 0.0, cross = 0.0;
  for (Index a = 0; a < n_source; ++a) {
    const Index i = order[static_cast<std::size_t>(a)];
    for (Index b = a + 1; b < n_source; ++b) within_s += gram(i, order[static_cast<std::size_t>(b)]);
    for (Index b = n_source; b < n_total; ++b) cross += gram(i, order[static_cast<std::size_t>(b)]);
  }
  for (Index a = n_source; a < n_total; ++a) {
    const Index i = order[static_cast<std::size_t>(a)];
    for (Index b = a + 1; b < n_total; ++b) within_t += gram(i, order[static_cast<std::size_t>(b)]);
  }
  const double ns = static_cast<double>(n_source);
  const double nt = static_cast<double>(n_target);
  return 2.0 * within_s / (ns * (ns - 1.0)) + 2.0 * within_t / (nt * (nt - 1.0)) - 2.0 * cross / (ns * nt);
}

}  // namespace

PermutationTestResult permutation_test(const MatrixXd& source, const MatrixXd& target, const KernelFamilyd& family,
                                       int n_permutations, double alpha, std::uint64_t seed) {
  if (n_permutations < 100) throw ParameterError("permutation_test: needs at least 100 permutations");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("permutation_test: alpha must be in (0, 1)");
  if (source.rows() < 2 || target.rows() < 2) throw InputError("permutation_test: needs two samples per domain");
  if (source.cols() != target.cols()) throw InputError("permutation_test: source/target dimension mismatch");

  const Index n_total = source.rows() + target.rows();
  MatrixXd pooled(n_total, source.cols());
  pooled << source, target;
  MatrixXd gram(n_total, n_total);
  for (Index i = 0; i < n_total; ++i) {
    gram(i, i) = 1.0;
    for (Index j = i + 1; j < n_total; ++j) {
      gram(i, j) = gram(j, i) = multi_kernel(pooled.row(i), pooled.row(j), family);
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n_total));
  for (Index i = 0; i < n_total; ++i) order[static_cast<std::size_t>(i)] = i;
  PermutationTestResult result;
  result.statistic = split_statistic(gram, order, source.rows());
  result.n_permutations = n_permutations;
  result.seed = seed;

  Rng rng(seed);
  int exceed = 0;
  for (int p = 0; p < n_permutations; ++p) {
    rng.shuffle(std::span<Index>(order));
    if (split_statistic(gram, order, source.rows()) >= result.statistic) ++exceed;
  }
  result.p_value = (1.0 + exceed) / (1.0 + n_permutations);
  result.reject = result.p_value <= alpha;
  return result;
}

ADistanceResult a_distance(const MatrixXd& source, const MatrixXd& target, std::uint64_t seed,
                           const TwoSampleClassifierOptions& options) {
  constexpr Index kMinPerDomain = 20;
  if (source.rows() < kMinPerDomain || target.rows() < kMinPerDomain) {
    throw InputError("a_distance: needs at least 20 samples per domain");
  }
  if (source.cols() != target.cols()) throw InputError("a_distance: feature dimension mismatch");

  Rng rng(seed);
  const auto perm_s = random_permutation(source.rows(), rng);
  const auto perm_t = random_permutation(target.rows(), rng);
  const Index train_s = source.rows() / 2;
  const Index train_t = target.rows() / 2;
  const Index n_train = train_s + train_t;
  const Index n_test = source.rows() + target.rows() - n_train;
  const Index dim = source.cols();

  MatrixXd x_train(n_train, dim), x_test(n_test, dim);
  VectorXd y_train(n_train), y_test(n_test);
  Index r_train = 0, r_test = 0;
  auto place = [&](const MatrixXd& data, const std::vector<Index>& perm, Index n_first, double label) {
    for (Index k = 0; k < data.rows(); ++k) {
      const Index row = perm[static_cast<std::size_t>(k)];
      if (k < n_first) {
        x_train.row(r_train) = data.row(row);
        y_train(r_train++) = label;
      } else {
        x_test.row(r_test) = data.row(row);
        y_test(r_test++) = label;
      }
    }
  };
  place(source, perm_s, train_s, 0.0);
  place(target, perm_t, train_t, 1.0);

  const Eigen::RowVectorXd mean = x_train.colwise().mean();
  Eigen::RowVectorXd scale = ((x_train.rowwise() - mean).array().square().colwise().sum() / double(n_train)).sqrt();
  for (Index c = 0; c < dim; ++c) {
    if (!(scale(c) > 1e-12)) scale(c) = 1.0;
  }
  // Design matrices with a trailing bias column.
  MatrixXd a_train(n_train, dim + 1), a_test(n_test, dim + 1);
  a_train.leftCols(dim) = (x_train.rowwise() - mean).array().rowwise() / scale.array();
  a_train.col(dim).setOnes();
  a_test.leftCols(dim) = (x_test.rowwise() - mean).array().rowwise() / scale.array();
  a_test.col(dim).setOnes();

  const MatrixXd gram = a_train.transpose() * a_train / double(n_train);
  const double lipschitz = 0.25 * largest_eigenvalue<double>(gram) + options.l2;
  const double step = 1.0 / lipschitz;
  VectorXd w = VectorXd::Zero(dim + 1);
  for (int it = 0; it < options.iterations; ++it) {
    const VectorXd margin = a_train * w;
    const VectorXd prob = (1.0 / (1.0 + (-margin.array()).exp())).matrix();
    VectorXd grad = a_train.transpose() * (prob - y_train) / double(n_train);
    grad.head(dim) += options.l2 * w.head(dim);
    w -= step * grad;
  }
  if (!w.allFinite()) throw NumericError("a_distance: classifier diverged");

  const VectorXd scores = a_test * w;
  Index errors = 0;
  for (Index i = 0; i < n_test; ++i) {
    const double predicted = scores(i) > 0.0 ? 1.0 : 0.0;
    if (predicted != y_test(i)) ++errors;
  }
  ADistanceResult out;
  out.test_error = static_cast<double>(errors) / static_cast<double>(n_test);
  out.a_distance = std::max(0.0, 2.0 * (1.0 - 2.0 * out.test_error));
  return out;
}

}  // namespace mkmmd
