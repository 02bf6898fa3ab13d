#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nnsparse/core.hpp"

namespace nnsparse {

/// All numeric knobs of the solvers. Tolerances live here so callers can
/// tighten or relax them per run; nothing below is hard-coded elsewhere.
struct SolverOptions {
  double tol = 1e-9;        // primal/dual residual norm target
  int max_iter = 20000;
  double zero_tol = 1e-8;   // entries below zero_tol * max(x) clip to exact zero
  double support_tol = 1e-6;  // in-support iff x_i > support_tol * max(1, ||x||inf)
  double kkt_tol = 1e-6;
  double penalty = 1.0;          // initial augmented-Lagrangian penalty
  double balance_factor = 10.0;  // residual imbalance that triggers a penalty update
  double rank_tol = kDefaultRankTol;
  bool polish = true;            // refine onto the detected support when certifiable
  bool record_history = false;   // keep the objective trace of accepted iterates
};

/// One non-negative lasso instance: min 0.5||y - Ax||^2 + gamma 1'x, x >= 0.
struct Problem {
  Dictionary dict;
  Observation y;
  double gamma;

  Problem(Dictionary d, Observation obs, double g)
      : dict(std::move(d)), y(std::move(obs)), gamma(g) {
    if (!(gamma >= 0.0))
      throw std::invalid_argument("gamma must be non-negative");
    if (y.values.size() != dict.num_rows())
      throw std::invalid_argument("observation length " + std::to_string(y.values.size()) +
                                  " does not match dictionary rows " +
                                  std::to_string(dict.num_rows()));
  }
};

inline double nlasso_objective(const Matrix& A, const Vector& y, double gamma,
                               const Vector& x) {
  return 0.5 * (y - A * x).squaredNorm() + gamma * x.sum();
}

inline double nlasso_objective(const Problem& p, const Vector& x) {
  return nlasso_objective(p.dict.entries(), p.y.values, p.gamma, x);
}

/// Optimality residuals of a candidate point. stationarity_residuals holds the
/// multipliers gamma - a_j'(y - Ax); at an optimum they are non-negative and
/// complementary to x.
struct KKTCertificate {
  Vector stationarity_residuals;
  double complementarity_max = 0.0;
  double dual_feasibility_min = 0.0;
  double primal_feasibility_min = 0.0;

  bool is_optimal(double kkt_tol) const {
    return dual_feasibility_min >= -kkt_tol && primal_feasibility_min >= -kkt_tol &&
           complementarity_max <= kkt_tol;
  }
};

inline KKTCertificate kkt_certificate(const Matrix& A, const Vector& y, double gamma,
                                      const Vector& x) {
  if (!x.allFinite())
    throw std::invalid_argument("kkt_certificate requires a finite candidate");
  if (x.size() != A.cols())
    throw std::invalid_argument("candidate length does not match atom count");
  KKTCertificate cert;
  cert.stationarity_residuals =
      Vector::Constant(A.cols(), gamma) - A.transpose() * (y - A * x);
  cert.complementarity_max =
      cert.stationarity_residuals.cwiseProduct(x).cwiseAbs().maxCoeff();
  cert.dual_feasibility_min = cert.stationarity_residuals.minCoeff();
  cert.primal_feasibility_min = x.minCoeff();
  return cert;
}

inline KKTCertificate kkt_certificate(const Problem& p, const Vector& x) {
  return kkt_certificate(p.dict.entries(), p.y.values, p.gamma, x);
}

/// v* = A† y - gamma (A'A)^-1 1: the restricted minimizer when it is strictly
/// positive (otherwise some non-negativity constraint is active and the caller
/// must fall back to an iterative solve).
inline Vector restricted_closed_form(const SubdictionaryCache& cache, const Vector& y,
                                     double gamma) {
  if (!cache.full_rank())
    throw RankDeficientError("closed-form restricted solution requires full column rank");
  return cache.pseudoinverse() * y -
         gamma * (cache.gram_inverse() * Vector::Ones(cache.size()));
}

/// Indices with x_i strictly above support_tol * max(1, ||x||inf).
inline Support extract_support(const Vector& x, double support_tol = 1e-6) {
  const double scale = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
  const double cut = support_tol * std::max(1.0, scale);
  std::vector<int> idx;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) > cut) idx.push_back(static_cast<int>(i));
  return Support(std::move(idx));
}

/// Over-complete solution record. For restricted solves x is zero-padded to the
/// full atom count while the certificate refers to the system actually solved.
struct Solution {
  Vector x;
  double objective = 0.0;
  Support support;
  KKTCertificate kkt;
  int iterations = 0;
  bool converged = false;
  bool non_unique = false;  // the solved system had linearly dependent atoms
  std::vector<double> objective_history;  // accepted iterates, when recorded
};

namespace detail {

struct IterativeOutcome {
  Vector x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

/// Variable-splitting augmented-Lagrangian scheme for the non-negative lasso:
/// split x = z, alternate a ridge solve in x with a shifted clamp in z, and
/// rebalance the penalty when one residual dominates the other. Returns the
/// best feasible iterate seen, so the recorded objective trace is
/// non-increasing by construction.
inline IterativeOutcome admm_nonneg_lasso(const Matrix& A, const Vector& y,
                                          double gamma, const SolverOptions& opts) {
  const Eigen::Index m = A.cols();
  const Matrix AtA = A.transpose() * A;
  const Vector Aty = A.transpose() * y;

  double mu = opts.penalty;
  Eigen::LLT<Matrix> chol(AtA + mu * Matrix::Identity(m, m));

  Vector x = Vector::Zero(m);
  Vector z = Vector::Zero(m);
  Vector u = Vector::Zero(m);

  IterativeOutcome out;
  out.x = z;
  double best_obj = nlasso_objective(A, y, gamma, z);
  if (opts.record_history) out.history.push_back(best_obj);

  int it = 0;
  for (it = 1; it <= opts.max_iter; ++it) {
    x = chol.solve(Aty + mu * (z - u));
    const Vector z_old = z;
    z = ((x + u).array() - gamma / mu).cwiseMax(0.0).matrix();
    u += x - z;

    if (!x.allFinite() || !z.allFinite())
      throw NumericFailureError("non-finite iterate in augmented-Lagrangian solver");

    const double primal = (x - z).norm();
    const double dual = mu * (z - z_old).norm();

    const double obj = nlasso_objective(A, y, gamma, z);
    if (obj <= best_obj) {
      best_obj = obj;
      out.x = z;
      if (opts.record_history) out.history.push_back(obj);
    }

    if (primal <= opts.tol && dual <= opts.tol) {
      out.converged = true;
      break;
    }

    if (primal > opts.balance_factor * dual && mu < 1e8) {
      mu *= 2.0;
      u /= 2.0;
      chol.compute(AtA + mu * Matrix::Identity(m, m));
    } else if (dual > opts.balance_factor * primal && mu > 1e-8) {
      mu /= 2.0;
      u *= 2.0;
      chol.compute(AtA + mu * Matrix::Identity(m, m));
    }
  }
  out.iterations = std::min(it, opts.max_iter);
  return out;
}

/// Replace the iterate by the exact optimum on its detected support whenever
/// that candidate certifies optimal for the system being solved and does not
/// worsen the objective.
inline Vector polish_on_support(const Matrix& A, const Vector& y, double gamma,
                                Vector x, const SolverOptions& opts) {
  const Support detected = extract_support(x, opts.support_tol);
  const double current_obj = nlasso_objective(A, y, gamma, x);
  const double slack = 1e-12 * (1.0 + std::abs(current_obj));

  if (detected.empty()) {
    const Vector zero = Vector::Zero(A.cols());
    if (kkt_certificate(A, y, gamma, zero).is_optimal(opts.kkt_tol)) return zero;
    return x;
  }

  Matrix As(A.rows(), detected.size());
  for (int c = 0; c < detected.size(); ++c)
    As.col(c) = A.col(detected.indices()[static_cast<size_t>(c)]);
  const SubdictionaryCache cache(As, opts.rank_tol);
  if (!cache.full_rank()) return x;

  const Vector v = restricted_closed_form(cache, y, gamma);
  if (v.minCoeff() <= 0.0) return x;

  Vector candidate = Vector::Zero(A.cols());
  for (int c = 0; c < detected.size(); ++c)
    candidate(detected.indices()[static_cast<size_t>(c)]) = v(c);

  if (nlasso_objective(A, y, gamma, candidate) > current_obj + slack) return x;
  if (!kkt_certificate(A, y, gamma, candidate).is_optimal(opts.kkt_tol)) return x;
  return candidate;
}

inline void clip_zeros(Vector& x, double zero_tol) {
  const double mx = x.size() > 0 ? x.maxCoeff() : 0.0;
  if (mx <= 0.0) {
    x.setZero();
    return;
  }
  const double cut = zero_tol * mx;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) < cut) x(i) = 0.0;
}

inline bool support_rank_deficient(const Matrix& A, const Support& support,
                                   double rank_tol) {
  if (support.empty()) return false;
  Matrix As(A.rows(), support.size());
  for (int c = 0; c < support.size(); ++c)
    As.col(c) = A.col(support.indices()[static_cast<size_t>(c)]);
  return !SubdictionaryCache(As, rank_tol).full_rank();
}

}  // namespace detail

/// Numeric solve of the non-negative lasso over the full dictionary.
inline Solution solve_nlasso(const Problem& p, const SolverOptions& opts = {}) {
  const Matrix& A = p.dict.entries();
  const Vector& y = p.y.values;

  detail::IterativeOutcome run = detail::admm_nonneg_lasso(A, y, p.gamma, opts);
  Vector x = std::move(run.x);
  if (opts.polish) x = detail::polish_on_support(A, y, p.gamma, std::move(x), opts);
  detail::clip_zeros(x, opts.zero_tol);

  Solution sol;
  sol.x = std::move(x);
  sol.objective = nlasso_objective(A, y, p.gamma, sol.x);
  sol.support = extract_support(sol.x, opts.support_tol);
  sol.kkt = kkt_certificate(A, y, p.gamma, sol.x);
  sol.iterations = run.iterations;
  sol.converged = run.converged;
  sol.non_unique = detail::support_rank_deficient(A, sol.support, opts.rank_tol);
  sol.objective_history = std::move(run.history);
  return sol;
}

/// Non-negative least squares by the Lawson-Hanson active-set method. This is
/// an independent route from solve_nlasso at gamma = 0; the two must agree on
/// the optimal objective.
inline Solution solve_nnls(const Dictionary& dict, const Observation& y,
                           const SolverOptions& opts = {}) {
  const Matrix& A = dict.entries();
  const Vector& b = y.values;
  if (b.size() != A.rows())
    throw std::invalid_argument("observation length does not match dictionary rows");

  const int n = dict.num_cols();
  std::vector<char> passive(static_cast<size_t>(n), 0);
  Vector x = Vector::Zero(n);
  Vector w = A.transpose() * b;
  const double wtol = opts.tol * std::max(1.0, w.cwiseAbs().maxCoeff());

  std::vector<double> history;
  if (opts.record_history) history.push_back(0.5 * b.squaredNorm());

  const int max_outer = std::max(3 * n, 30);
  bool converged = false;
  int outer = 0;

  while (outer < max_outer) {
    int enter = -1;
    double best_w = wtol;
    for (int j = 0; j < n; ++j) {
      if (!passive[static_cast<size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        enter = j;
      }
    }
    if (enter < 0) {
      converged = true;
      break;
    }
    ++outer;
    passive[static_cast<size_t>(enter)] = 1;

    // Inner loop: step toward the unconstrained least-squares point on the
    // passive set, dropping atoms that would go negative.
    for (int inner = 0; inner <= n + 1; ++inner) {
      std::vector<int> pset;
      for (int j = 0; j < n; ++j)
        if (passive[static_cast<size_t>(j)]) pset.push_back(j);
      if (pset.empty()) break;
      Matrix Ap(A.rows(), static_cast<Eigen::Index>(pset.size()));
      for (size_t c = 0; c < pset.size(); ++c)
        Ap.col(static_cast<Eigen::Index>(c)) = A.col(pset[c]);
      const Vector zp = Ap.colPivHouseholderQr().solve(b);

      if (zp.minCoeff() > 0.0) {
        x.setZero();
        for (size_t c = 0; c < pset.size(); ++c)
          x(pset[c]) = zp(static_cast<Eigen::Index>(c));
        break;
      }

      double alpha = std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < pset.size(); ++c) {
        const double zi = zp(static_cast<Eigen::Index>(c));
        if (zi <= 0.0) {
          const double xi = x(pset[c]);
          alpha = std::min(alpha, xi / (xi - zi));
        }
      }
      if (!std::isfinite(alpha)) alpha = 0.0;

      for (size_t c = 0; c < pset.size(); ++c) {
        const int j = pset[c];
        x(j) += alpha * (zp(static_cast<Eigen::Index>(c)) - x(j));
      }
      // the step-limiting atoms land on the bound; zero and release them
      bool dropped = false;
      for (size_t c = 0; c < pset.size(); ++c) {
        const int j = pset[c];
        const double zi = zp(static_cast<Eigen::Index>(c));
        if (zi <= 0.0 && x(j) <= 1e-12 * std::max(1.0, x.maxCoeff())) {
          x(j) = 0.0;
          passive[static_cast<size_t>(j)] = 0;
          dropped = true;
        }
      }
      if (!dropped) break;  // guards against stalling on degenerate steps
    }

    w = A.transpose() * (b - A * x);
    if (!x.allFinite())
      throw NumericFailureError("non-finite iterate in active-set solver");
    if (opts.record_history) history.push_back(0.5 * (b - A * x).squaredNorm());
  }

  detail::clip_zeros(x, opts.zero_tol);

  Solution sol;
  sol.x = std::move(x);
  sol.objective = 0.5 * (b - A * sol.x).squaredNorm();
  sol.support = extract_support(sol.x, opts.support_tol);
  sol.kkt = kkt_certificate(A, b, 0.0, sol.x);
  sol.iterations = outer;
  sol.converged = converged;
  sol.non_unique = detail::support_rank_deficient(A, sol.support, opts.rank_tol);
  sol.objective_history = std::move(history);
  return sol;
}

/// Non-negative lasso restricted to a column subset. The returned coefficient
/// vector is zero-padded to the full atom count; the KKT certificate refers to
/// the restricted system. non_unique flags a rank-deficient subdictionary, in
/// which case the minimizer returned is one of possibly many.
inline Solution solve_restricted(const Problem& p, const Support& support,
                                 const SolverOptions& opts = {}) {
  if (support.empty())
    throw std::invalid_argument("solve_restricted requires a nonempty support");
  support.validate_for(p.dict.num_cols());

  const Matrix As = subdictionary(p.dict, support);
  const Vector& y = p.y.values;

  detail::IterativeOutcome run = detail::admm_nonneg_lasso(As, y, p.gamma, opts);
  Vector v = std::move(run.x);
  if (opts.polish) v = detail::polish_on_support(As, y, p.gamma, std::move(v), opts);
  detail::clip_zeros(v, opts.zero_tol);

  Solution sol;
  sol.x = Vector::Zero(p.dict.num_cols());
  for (int c = 0; c < support.size(); ++c)
    sol.x(support.indices()[static_cast<size_t>(c)]) = v(c);
  sol.objective = nlasso_objective(p, sol.x);
  sol.support = extract_support(sol.x, opts.support_tol);
  sol.kkt = kkt_certificate(As, y, p.gamma, v);
  sol.iterations = run.iterations;
  sol.converged = run.converged;
  sol.non_unique = !SubdictionaryCache(As, opts.rank_tol).full_rank();
  sol.objective_history = std::move(run.history);
  return sol;
}

}  // namespace nnsparse
