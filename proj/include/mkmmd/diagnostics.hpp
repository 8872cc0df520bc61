#pragma once

#include <cstdint>

#include "mkmmd/kernels.hpp"
#include "mkmmd/types.hpp"

namespace mkmmd {

struct PermutationTestResult {
  double statistic = 0.0;  ///< quadratic-time unbiased MK-MMD^2 of the given split
  double p_value = 1.0;    ///< (1 + #{permuted >= observed}) / (1 + n_permutations)
  bool reject = false;     ///< p_value <= alpha
  int n_permutations = 0;
  std::uint64_t seed = 0;
};

/// Two-sample permutation test of p = q on the unbiased MK-MMD^2 statistic.
/// Requires n_permutations >= 100, alpha in (0, 1) and two samples per side.
PermutationTestResult permutation_test(const MatrixXd& source, const MatrixXd& target, const KernelFamilyd& family,
                                       int n_permutations, double alpha, std::uint64_t seed);

struct TwoSampleClassifierOptions {
  double l2 = 1e-3;
  int iterations = 2000;
};

struct ADistanceResult {
  double a_distance = 0.0;  ///< max(0, 2 (1 - 2 error)), in [0, 2]
  double test_error = 0.0;  ///< held-out error of the domain classifier
};

/// Proxy A-distance from an L2-regularized logistic domain classifier.
///
/// Source rows are labeled 0 and target rows 1. Each domain is split 50/50
/// into train and test halves with `seed`; features are standardized with
/// training statistics and the classifier is fit by full-batch gradient descent.
ADistanceResult a_distance(const MatrixXd& source, const MatrixXd& target, std::uint64_t seed,
                           const TwoSampleClassifierOptions& options = {});

}  // namespace mkmmd
