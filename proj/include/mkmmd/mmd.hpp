#pragma once

#include <algorithm>
#include <vector>

#include "mkmmd/errors.hpp"
#include "mkmmd/kernels.hpp"
#include "mkmmd/types.hpp"

namespace mkmmd {

/// Four-sample unit of the linear-time estimator: a source pair and a target pair.
template <typename Scalar>
struct QuadTuple {
  Vector<Scalar> s1, s2, t1, t2;
};

using QuadTupled = QuadTuple<double>;

/// Per-kernel linear-time statistics and the combined test quantities.
template <typename Scalar>
struct MmdReport {
  Vector<Scalar> per_kernel_d;  ///< d_u, one linear-time MMD^2 per base kernel
  Matrix<Scalar> covariance_q;  ///< Q, m x m
  Scalar combined_mmd2{};       ///< beta' d; may be negative
  Scalar variance{};            ///< max(0, beta' Q beta)
};

using MmdReportd = MmdReport<double>;

/// Largest common even length of two sample streams.
inline Index common_even_length(Index n_source, Index n_target) {
  const Index n = std::min(n_source, n_target);
  return n - (n % 2);
}

/// Consecutive pairing of rows into quad-tuples after truncating both sets
/// to their common even length.
template <typename DerivedS, typename DerivedT>
std::vector<QuadTuple<typename DerivedS::Scalar>> make_quads(const Eigen::MatrixBase<DerivedS>& source,
                                                             const Eigen::MatrixBase<DerivedT>& target) {
  if (source.cols() != target.cols()) throw InputError("make_quads: source/target dimension mismatch");
  const Index n = common_even_length(source.rows(), target.rows());
  std::vector<QuadTuple<typename DerivedS::Scalar>> quads;
  quads.reserve(static_cast<std::size_t>(n / 2));
  for (Index i = 0; i < n; i += 2) {
    quads.push_back({source.row(i).transpose(), source.row(i + 1).transpose(),
                     target.row(i).transpose(), target.row(i + 1).transpose()});
  }
  return quads;
}

namespace detail {

template <typename Scalar>
void check_quad(const QuadTuple<Scalar>& q) {
  const Index d = q.s1.size();
  if (q.s2.size() != d || q.t1.size() != d || q.t2.size() != d) {
    throw InputError("quad-tuple: vectors have different dimensions");
  }
}

/// Squared distances of the four kernel terms of one quad:
/// (s1,s2), (t1,t2), (s1,t2), (s2,t1).
template <typename Scalar>
struct QuadDistances {
  Scalar ss, tt, st, ts;
};

template <typename A, typename B, typename C, typename D>
QuadDistances<typename A::Scalar> quad_distances(const Eigen::MatrixBase<A>& s1, const Eigen::MatrixBase<B>& s2,
                                                 const Eigen::MatrixBase<C>& t1, const Eigen::MatrixBase<D>& t2) {
  return {squared_distance(s1, s2), squared_distance(t1, t2), squared_distance(s1, t2),
          squared_distance(s2, t1)};
}

template <typename Scalar>
Scalar g_from_distances(const QuadDistances<Scalar>& q, Scalar gamma) {
  return std::exp(-q.ss / gamma) + std::exp(-q.tt / gamma) - std::exp(-q.st / gamma) -
         std::exp(-q.ts / gamma);
}

}  // namespace detail

/// g_k(z) = k(s1,s2) + k(t1,t2) - k(s1,t2) - k(s2,t1).
template <typename Scalar>
Scalar g_k(const QuadTuple<Scalar>& quad, const KernelFamily<Scalar>& family) {
  detail::check_quad(quad);
  return multi_kernel(quad.s1, quad.s2, family) + multi_kernel(quad.t1, quad.t2, family) -
         multi_kernel(quad.s1, quad.t2, family) - multi_kernel(quad.s2, quad.t1, family);
}

/// Matrix of g_{k_u}(z_i): one row per quad-tuple, one column per base kernel.
template <typename Scalar>
Matrix<Scalar> per_kernel_g(const std::vector<QuadTuple<Scalar>>& quads, const KernelFamily<Scalar>& family) {
  const auto n = static_cast<Index>(quads.size());
  Matrix<Scalar> g(n, family.size());
  for (Index i = 0; i < n; ++i) {
    const auto& q = quads[static_cast<std::size_t>(i)];
    detail::check_quad(q);
    const auto dist = detail::quad_distances(q.s1, q.s2, q.t1, q.t2);
    for (Index u = 0; u < family.size(); ++u) g(i, u) = detail::g_from_distances(dist, family.bandwidths()(u));
  }
  return g;
}

/// Same as above, pairing consecutive rows of the two sample sets directly.
template <typename DerivedS, typename DerivedT>
Matrix<typename DerivedS::Scalar> per_kernel_g(const Eigen::MatrixBase<DerivedS>& source,
                                               const Eigen::MatrixBase<DerivedT>& target,
                                               const KernelFamily<typename DerivedS::Scalar>& family) {
  using Scalar = typename DerivedS::Scalar;
  if (source.cols() != target.cols()) throw InputError("mmd: source/target dimension mismatch");
  const Index n_quads = common_even_length(source.rows(), target.rows()) / 2;
  Matrix<Scalar> g(n_quads, family.size());
  for (Index i = 0; i < n_quads; ++i) {
    const auto dist = detail::quad_distances(source.row(2 * i), source.row(2 * i + 1), target.row(2 * i),
                                             target.row(2 * i + 1));
    for (Index u = 0; u < family.size(); ++u) g(i, u) = detail::g_from_distances(dist, family.bandwidths()(u));
  }
  return g;
}

/// Linear-time unbiased MK-MMD^2: (2 / n) sum_i g_k(z_i) over n / 2
/// consecutive quad-tuples, i.e. the mean of g_k. Both sets are truncated to
/// their common even length, which must be at least 4.
template <typename DerivedS, typename DerivedT>
typename DerivedS::Scalar mmd2_linear(const Eigen::MatrixBase<DerivedS>& source,
                                      const Eigen::MatrixBase<DerivedT>& target,
                                      const KernelFamily<typename DerivedS::Scalar>& family) {
  using Scalar = typename DerivedS::Scalar;
  if (source.cols() != target.cols()) throw InputError("mmd2_linear: source/target dimension mismatch");
  const Index n = common_even_length(source.rows(), target.rows());
  if (n < 4) throw InputError("mmd2_linear: needs at least 4 samples per domain");
  Scalar acc(0);
  for (Index i = 0; i < n; i += 2) {
    const auto dist =
        detail::quad_distances(source.row(i), source.row(i + 1), target.row(i), target.row(i + 1));
    acc += multi_kernel_from_sqdist(dist.ss, family) + multi_kernel_from_sqdist(dist.tt, family) -
           multi_kernel_from_sqdist(dist.st, family) - multi_kernel_from_sqdist(dist.ts, family);
  }
  return acc * Scalar(2) / Scalar(n);
}

/// mmd2_linear plus its gradient with respect to every row of `source` and
/// `target`. Rows dropped by truncation receive zero gradient.
template <typename Scalar>
Scalar mmd2_linear_with_gradient(const Matrix<Scalar>& source, const Matrix<Scalar>& target,
                                 const KernelFamily<Scalar>& family, Matrix<Scalar>& grad_source,
                                 Matrix<Scalar>& grad_target) {
  if (source.cols() != target.cols()) throw InputError("mmd2_linear: source/target dimension mismatch");
  const Index n = common_even_length(source.rows(), target.rows());
  if (n < 4) throw InputError("mmd2_linear: needs at least 4 samples per domain");
  grad_source.setZero(source.rows(), source.cols());
  grad_target.setZero(target.rows(), target.cols());

  const Scalar scale = Scalar(2) / Scalar(n);
  // d/dx k(x, y) = -2 (x - y) sum_u beta_u k_u(x, y) / gamma_u
  auto value_and_slope = [&](const auto& x, const auto& y, Scalar& slope) {
    const Scalar sq = squared_distance(x, y);
    Scalar value(0);
    slope = Scalar(0);
    for (Index u = 0; u < family.size(); ++u) {
      const Scalar k = family.weights()(u) * std::exp(-sq / family.bandwidths()(u));
      value += k;
      slope += k / family.bandwidths()(u);
    }
    return value;
  };
  // Adds sign * d k(x_row, y_row) to the two gradient rows.
  auto accumulate = [&](auto x, auto y, auto gx, auto gy, Scalar sign, Scalar& total) {
    Scalar slope;
    total += sign * value_and_slope(x, y, slope);
    const Scalar c = Scalar(-2) * sign * scale * slope;
    gx += c * (x - y);
    gy -= c * (x - y);
  };

  Scalar acc(0);
  for (Index i = 0; i < n; i += 2) {
    accumulate(source.row(i), source.row(i + 1), grad_source.row(i), grad_source.row(i + 1), Scalar(1), acc);
    accumulate(target.row(i), target.row(i + 1), grad_target.row(i), grad_target.row(i + 1), Scalar(1), acc);
    accumulate(source.row(i), target.row(i + 1), grad_source.row(i), grad_target.row(i + 1), Scalar(-1), acc);
    accumulate(source.row(i + 1), target.row(i), grad_source.row(i + 1), grad_target.row(i), Scalar(-1), acc);
  }
  return acc * scale;
}

/// Quadratic-time unbiased MK-MMD^2 (U-statistic). Within-domain terms
/// average over ordered distinct pairs; the cross term over all pairs.
template <typename DerivedS, typename DerivedT>
typename DerivedS::Scalar mmd2_quadratic_unbiased(const Eigen::MatrixBase<DerivedS>& source,
                                                  const Eigen::MatrixBase<DerivedT>& target,
                                                  const KernelFamily<typename DerivedS::Scalar>& family) {
  using Scalar = typename DerivedS::Scalar;
  if (source.cols() != target.cols()) throw InputError("mmd2_quadratic: source/target dimension mismatch");
  const Index ns = source.rows();
  const Index nt = target.rows();
  if (ns < 2 || nt < 2) throw InputError("mmd2_quadratic: needs at least 2 samples per domain");

  auto within = [&](const auto& x) {
    Scalar acc(0);
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = i + 1; j < x.rows(); ++j) acc += multi_kernel(x.row(i), x.row(j), family);
    }
    return Scalar(2) * acc / (Scalar(x.rows()) * Scalar(x.rows() - 1));
  };
  Scalar cross(0);
  for (Index i = 0; i < ns; ++i) {
    for (Index j = 0; j < nt; ++j) cross += multi_kernel(source.row(i), target.row(j), family);
  }
  cross /= Scalar(ns) * Scalar(nt);
  return within(source) + within(target) - Scalar(2) * cross;
}

/// Per-kernel statistics d and covariance Q over an even number of
/// quad-tuples; Q averages g^D g^D' over consecutive quad pairs where
/// g^D_u = g_u(z_{2i-1}) - g_u(z_{2i}). Odd trailing quads are dropped.
template <typename Scalar>
MmdReport<Scalar> per_kernel_stats_from_g(const Matrix<Scalar>& g, const Vector<Scalar>& weights) {
  const Index n_quads = g.rows() - (g.rows() % 2);
  if (n_quads < 2) throw InputError("per_kernel_stats: needs at least 2 quad-tuples");
  const Index m = g.cols();
  const Index n_pairs = n_quads / 2;

  MmdReport<Scalar> report;
  report.per_kernel_d = g.topRows(n_quads).colwise().mean().transpose();

  Matrix<Scalar> delta(n_pairs, m);
  for (Index i = 0; i < n_pairs; ++i) delta.row(i) = g.row(2 * i) - g.row(2 * i + 1);
  report.covariance_q = Matrix<Scalar>::Zero(m, m);
  for (Index i = 0; i < n_pairs; ++i) {
    for (Index u = 0; u < m; ++u) {
      for (Index v = 0; v < m; ++v) report.covariance_q(u, v) += delta(i, u) * delta(i, v);
    }
  }
  report.covariance_q /= Scalar(n_pairs);

  report.combined_mmd2 = weights.dot(report.per_kernel_d);
  report.variance = std::max(Scalar(0), weights.dot(report.covariance_q * weights));
  return report;
}

template <typename Scalar>
MmdReport<Scalar> per_kernel_stats(const std::vector<QuadTuple<Scalar>>& quads, const KernelFamily<Scalar>& family) {
  if (quads.size() < 2) throw InputError("per_kernel_stats: needs at least 2 quad-tuples");
  return per_kernel_stats_from_g(per_kernel_g(quads, family), family.weights());
}

template <typename DerivedS, typename DerivedT>
MmdReport<typename DerivedS::Scalar> per_kernel_stats(const Eigen::MatrixBase<DerivedS>& source,
                                                      const Eigen::MatrixBase<DerivedT>& target,
                                                      const KernelFamily<typename DerivedS::Scalar>& family) {
  return per_kernel_stats_from_g(per_kernel_g(source, target, family), family.weights());
}

}  // namespace mkmmd
