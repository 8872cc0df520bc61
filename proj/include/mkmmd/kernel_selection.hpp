#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mkmmd/errors.hpp"
#include "mkmmd/types.hpp"

namespace mkmmd {

/// Regularizer added to Q in the kernel-weight QP.
inline constexpr double kDefaultQpEpsilon = 1e-3;

struct BetaSolverOptions {
  int max_iterations = 10'000;
  double tolerance = 1e-8;  ///< on the projected-gradient norm
  bool polish = true;       ///< exact re-solve on the identified active set
};

template <typename Scalar>
struct BetaSolution {
  Vector<Scalar> beta;   ///< minimizer with d' beta = 1, beta >= 0 (not rescaled)
  Scalar objective{};    ///< beta' (Q + eps I) beta
  Scalar kkt_residual{};  ///< projected-gradient norm at beta
  int iterations = 0;
};

/// Euclidean projection onto {b : d' b = 1, b >= 0}.
///
/// The minimizer is max(0, v + tau d) for the scalar tau solving
/// sum_i d_i max(0, v_i + tau d_i) = 1; that function is piecewise linear and
/// non-decreasing in tau, so tau is found exactly from its breakpoints.
template <typename Scalar>
Vector<Scalar> project_onto_slice(const Vector<Scalar>& v, const Vector<Scalar>& d) {
  const Index m = v.size();
  auto phi = [&](Scalar tau) {
    Scalar acc(0);
    for (Index i = 0; i < m; ++i) acc += d(i) * std::max(Scalar(0), v(i) + tau * d(i));
    return acc;
  };
  // tau on the linear piece whose active set is the one at `probe`.
  auto solve_piece = [&](Scalar probe, Scalar fallback) {
    Scalar num(1), den(0);
    for (Index i = 0; i < m; ++i) {
      if (v(i) + probe * d(i) > 0) {
        num -= d(i) * v(i);
        den += d(i) * d(i);
      }
    }
    return den > 0 ? num / den : fallback;
  };

  std::vector<Scalar> breaks;
  for (Index i = 0; i < m; ++i) {
    if (d(i) != 0) breaks.push_back(-v(i) / d(i));
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  if (breaks.empty()) throw InfeasibleDirectionError("kernel selection: d is identically zero");

  Scalar tau;
  std::size_t k = 0;
  while (k < breaks.size() && phi(breaks[k]) < Scalar(1)) ++k;
  if (k == breaks.size()) {
    tau = solve_piece(breaks.back() + Scalar(1), breaks.back());
  } else if (k == 0) {
    tau = solve_piece(breaks.front() - Scalar(1), breaks.front());
  } else {
    tau = solve_piece(Scalar(0.5) * (breaks[k - 1] + breaks[k]), breaks[k]);
  }
  Vector<Scalar> out(m);
  for (Index i = 0; i < m; ++i) out(i) = std::max(Scalar(0), v(i) + tau * d(i));
  return out;
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
template <typename Scalar>
Scalar largest_eigenvalue(const Matrix<Scalar>& a, int iterations = 500) {
  Vector<Scalar> x = Vector<Scalar>::Ones(a.rows()) / std::sqrt(Scalar(a.rows()));
  Scalar lambda(0);
  for (int it = 0; it < iterations; ++it) {
    Vector<Scalar> y = a * x;
    const Scalar norm = y.norm();
    if (norm == Scalar(0)) return Scalar(0);
    const Scalar next = x.dot(y);
    x = y / norm;
    if (std::abs(next - lambda) <= Scalar(1e-14) * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

/// Projected-gradient norm of f(b) = b' H b on the feasible slice:
/// L * || b - P(b - grad / L) ||.
template <typename Scalar>
Scalar projected_gradient_norm(const Vector<Scalar>& beta, const Matrix<Scalar>& h, const Vector<Scalar>& d,
                               Scalar lipschitz) {
  const Vector<Scalar> grad = Scalar(2) * h * beta;
  return lipschitz * (beta - project_onto_slice<Scalar>(beta - grad / lipschitz, d)).norm();
}

/// Solves min_b b' (Q + eps I) b subject to d' b = 1, b >= 0.
///
/// Fixed-step projected gradient with step 1 / L, L = 2 lambda_max(Q + eps I).
/// When enabled, the result is polished by solving the equality-constrained
/// problem on the active set and kept only if it passes the KKT sign checks.
template <typename Scalar>
BetaSolution<Scalar> solve_beta(const Vector<Scalar>& d, const Matrix<Scalar>& q,
                                Scalar epsilon = Scalar(kDefaultQpEpsilon), const BetaSolverOptions& options = {}) {
  const Index m = d.size();
  if (m < 1) throw ParameterError("solve_beta: empty d");
  if (q.rows() != m || q.cols() != m) throw ParameterError("solve_beta: Q shape does not match d");
  if (!(epsilon > 0)) throw ParameterError("solve_beta: epsilon must be positive");
  if (!d.allFinite() || !q.allFinite()) throw SolverError("solve_beta: non-finite input");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-9)) throw ParameterError("solve_beta: Q not symmetric");
  if ((d.array() <= Scalar(0)).all()) {
    throw InfeasibleDirectionError("solve_beta: no base kernel has positive MMD estimate");
  }

  const Matrix<Scalar> h = q + epsilon * Matrix<Scalar>::Identity(m, m);
  const Scalar lipschitz = Scalar(2) * largest_eigenvalue(h) * Scalar(1.01);
  if (!(lipschitz > 0) || !std::isfinite(static_cast<double>(lipschitz))) {
    throw SolverError("solve_beta: could not bound the curvature of Q + eps I");
  }

  BetaSolution<Scalar> sol;
  Vector<Scalar> beta = project_onto_slice<Scalar>(Vector<Scalar>::Constant(m, Scalar(1) / Scalar(m)), d);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Vector<Scalar> grad = Scalar(2) * h * beta;
    const Vector<Scalar> next = project_onto_slice<Scalar>(beta - grad / lipschitz, d);
    const Scalar step_norm = lipschitz * (next - beta).norm();
    beta = next;
    if (step_norm <= Scalar(options.tolerance)) break;
  }
  sol.iterations = it;

  if (options.polish) {
    std::vector<Index> active;
    for (Index i = 0; i < m; ++i) {
      if (beta(i) > 0) active.push_back(i);
    }
    const auto na = static_cast<Index>(active.size());
    if (na > 0) {
      Matrix<Scalar> h_aa(na, na);
      Vector<Scalar> d_a(na);
      for (Index a = 0; a < na; ++a) {
        d_a(a) = d(active[a]);
        for (Index b = 0; b < na; ++b) h_aa(a, b) = h(active[a], active[b]);
      }
      const Vector<Scalar> w = h_aa.ldlt().solve(d_a);
      const Scalar denom = d_a.dot(w);
      if (denom > 0 && w.allFinite()) {
        Vector<Scalar> candidate = Vector<Scalar>::Zero(m);
        for (Index a = 0; a < na; ++a) candidate(active[a]) = w(a) / denom;
        // Multiplier of d' b = 1 is 2 b'Hb; inactive components need
        // (2 H b)_i >= multiplier * d_i.
        const Vector<Scalar> grad = Scalar(2) * h * candidate;
        const Scalar nu = Scalar(2) * candidate.dot(h * candidate);
        bool ok = (candidate.array() >= Scalar(0)).all();
        for (Index i = 0; ok && i < m; ++i) {
          if (candidate(i) == 0 && grad(i) - nu * d(i) < -Scalar(1e-12) * (Scalar(1) + std::abs(nu))) ok = false;
        }
        if (ok && candidate.dot(h * candidate) <= beta.dot(h * beta) + Scalar(1e-15)) beta = candidate;
      }
    }
  }

  if (!beta.allFinite()) throw SolverError("solve_beta: iteration diverged");
  beta = beta.cwiseMax(Scalar(0));
  sol.beta = beta;
  sol.objective = beta.dot(h * beta);
  sol.kkt_residual = projected_gradient_norm<Scalar>(beta, h, d, lipschitz);
  if (std::abs(d.dot(beta) - Scalar(1)) > Scalar(1e-6)) {
    throw SolverError("solve_beta: constraint violated, d'beta = " + std::to_string(static_cast<double>(d.dot(beta))));
  }
  return sol;
}

/// Rescales non-negative weights to sum to one.
template <typename Scalar>
Vector<Scalar> rescale_to_simplex(const Vector<Scalar>& beta) {
  const Scalar total = beta.sum();
  if (!(total > 0)) throw SolverError("rescale_to_simplex: weights sum to zero");
  return beta / total;
}

}  // namespace mkmmd
