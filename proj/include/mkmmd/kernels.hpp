#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mkmmd/errors.hpp"
#include "mkmmd/rng.hpp"
#include "mkmmd/types.hpp"

namespace mkmmd {

/// Squared Euclidean distance between two vectors of equal length. Row and
/// column vectors may be mixed.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar squared_distance(const Eigen::MatrixBase<DerivedX>& x,
                                           const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) {
    throw InputError("kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  }
  typename DerivedX::Scalar acc(0);
  for (Index i = 0; i < x.size(); ++i) {
    const auto diff = x.derived().coeff(i) - y.derived().coeff(i);
    acc += diff * diff;
  }
  return acc;
}

/// exp(-||x - y||^2 / gamma). Bandwidth is in squared-distance units.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar gaussian_kernel(const Eigen::MatrixBase<DerivedX>& x,
                                          const Eigen::MatrixBase<DerivedY>& y,
                                          typename DerivedX::Scalar gamma) {
  if (!(gamma > 0)) throw ParameterError("kernel: bandwidth must be positive");
  return std::exp(-squared_distance(x, y) / gamma);
}

/// A convex combination of Gaussian kernels, k = sum_u beta_u k_u.
///
/// Invariants: at least one kernel, every bandwidth positive, weights
/// non-negative and summing to one within 1e-9.
template <typename Scalar>
class KernelFamily {
 public:
  using VectorType = Vector<Scalar>;

  static constexpr double kWeightSumTolerance = 1e-9;

  KernelFamily(VectorType bandwidths, VectorType weights)
      : bandwidths_(std::move(bandwidths)), weights_(std::move(weights)) {
    validate(bandwidths_, weights_);
  }

  /// Single Gaussian kernel with weight one.
  static KernelFamily single(Scalar gamma) {
    return KernelFamily(VectorType::Constant(1, gamma), VectorType::Ones(1));
  }

  /// Uniform weights over the given bandwidths.
  static KernelFamily uniform(VectorType bandwidths) {
    const Index m = bandwidths.size();
    if (m < 1) throw ParameterError("kernel family: needs at least one bandwidth");
    return KernelFamily(std::move(bandwidths), VectorType::Constant(m, Scalar(1) / Scalar(m)));
  }

  Index size() const { return bandwidths_.size(); }
  const VectorType& bandwidths() const { return bandwidths_; }
  const VectorType& weights() const { return weights_; }

  /// Installs new weights; they must satisfy the simplex invariant.
  void set_weights(VectorType weights) {
    if (weights.size() != bandwidths_.size()) {
      throw ParameterError("kernel family: weight count does not match bandwidth count");
    }
    validate(bandwidths_, weights);
    weights_ = std::move(weights);
  }

  /// The family restricted to base kernel u with weight one.
  KernelFamily base(Index u) const { return single(bandwidths_(u)); }

 private:
  static void validate(const VectorType& bandwidths, const VectorType& weights) {
    if (bandwidths.size() < 1) throw ParameterError("kernel family: needs at least one bandwidth");
    if (bandwidths.size() != weights.size()) {
      throw ParameterError("kernel family: weight count does not match bandwidth count");
    }
    for (Index u = 0; u < bandwidths.size(); ++u) {
      if (!(bandwidths(u) > 0) || !std::isfinite(static_cast<double>(bandwidths(u)))) {
        throw ParameterError("kernel family: bandwidths must be positive and finite");
      }
      if (!(weights(u) >= 0)) throw ParameterError("kernel family: weights must be non-negative");
    }
    if (std::abs(static_cast<double>(weights.sum()) - 1.0) > kWeightSumTolerance) {
      throw ParameterError("kernel family: weights must sum to one");
    }
  }

  VectorType bandwidths_;
  VectorType weights_;
};

using KernelFamilyd = KernelFamily<double>;

/// Multi-kernel value from a precomputed squared distance.
template <typename Scalar>
Scalar multi_kernel_from_sqdist(Scalar sqdist, const KernelFamily<Scalar>& family) {
  Scalar acc(0);
  for (Index u = 0; u < family.size(); ++u) {
    acc += family.weights()(u) * std::exp(-sqdist / family.bandwidths()(u));
  }
  return acc;
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar multi_kernel(const Eigen::MatrixBase<DerivedX>& x,
                                       const Eigen::MatrixBase<DerivedY>& y,
                                       const KernelFamily<typename DerivedX::Scalar>& family) {
  return multi_kernel_from_sqdist(squared_distance(x, y), family);
}

/// Pairs beyond this count are subsampled by the median heuristic.
inline constexpr std::int64_t kMedianMaxPairs = 1'000'000;

/// Median squared pairwise distance over unordered distinct pairs of rows.
///
/// Even-length lists take the lower-middle element. Above kMedianMaxPairs
/// pairs, a uniform subsample of kMedianMaxPairs pairs drawn with `seed` is used.
template <typename Derived>
typename Derived::Scalar median_heuristic(const Eigen::MatrixBase<Derived>& samples,
                                          std::uint64_t seed = 0) {
  using Scalar = typename Derived::Scalar;
  const Index n = samples.rows();
  if (n < 2) throw DegenerateInputError("median heuristic: needs at least two samples");

  const std::int64_t total = static_cast<std::int64_t>(n) * (n - 1) / 2;
  std::vector<Scalar> sq;
  if (total <= kMedianMaxPairs) {
    sq.reserve(static_cast<std::size_t>(total));
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) sq.push_back(squared_distance(samples.row(i), samples.row(j)));
    }
  } else {
    Rng rng(seed);
    sq.reserve(static_cast<std::size_t>(kMedianMaxPairs));
    const auto un = static_cast<std::uint64_t>(n);
    while (static_cast<std::int64_t>(sq.size()) < kMedianMaxPairs) {
      const auto i = static_cast<Index>(rng.below(un));
      const auto j = static_cast<Index>(rng.below(un));
      if (i == j) continue;
      sq.push_back(squared_distance(samples.row(i), samples.row(j)));
    }
  }

  const bool all_zero = std::all_of(sq.begin(), sq.end(), [](Scalar v) { return v == Scalar(0); });
  if (all_zero) throw DegenerateInputError("median heuristic: all pairwise distances are zero");

  const auto mid = sq.begin() + static_cast<std::ptrdiff_t>((sq.size() - 1) / 2);
  std::nth_element(sq.begin(), mid, sq.end());
  if (*mid == Scalar(0)) throw DegenerateInputError("median heuristic: at least half of the pairs coincide");
  return *mid;
}

/// Bandwidths base * 2^e for e = -span, -span + step, ..., +span with uniform
/// weights. `span` must be an integer multiple of `step` (tolerance 1e-9).
template <typename Scalar>
KernelFamily<Scalar> build_family(Scalar base, Scalar span_exponent, Scalar step_exponent) {
  if (!(base > 0)) throw ParameterError("build_family: base bandwidth must be positive");
  if (!(span_exponent >= 0)) throw ParameterError("build_family: span must be non-negative");
  if (span_exponent == 0) return KernelFamily<Scalar>::single(base);
  if (!(step_exponent > 0)) throw ParameterError("build_family: step must be positive");

  const double ratio = static_cast<double>(span_exponent) / static_cast<double>(step_exponent);
  const double steps = std::round(ratio);
  if (std::abs(ratio - steps) > 1e-9) {
    throw ParameterError("build_family: span is not a multiple of step");
  }
  const auto half = static_cast<Index>(steps);
  Vector<Scalar> bandwidths(2 * half + 1);
  for (Index i = -half; i <= half; ++i) {
    bandwidths(i + half) = base * std::exp2(static_cast<Scalar>(i) * step_exponent);
  }
  return KernelFamily<Scalar>::uniform(std::move(bandwidths));
}

}  // namespace mkmmd
