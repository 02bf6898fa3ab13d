#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "nnsparse/core.hpp"
#include "nnsparse/rng.hpp"
#include "nnsparse/solvers.hpp"

namespace nnsparse {

/// Hard cap on the atom count accepted by the exhaustive routines; keeps the
/// worst-case enumeration around 65k supports.
inline constexpr int kOracleMaxAtoms = 16;

struct OracleResult {
  Support best_support;
  Vector best_x;
  double best_objective = std::numeric_limits<double>::infinity();
  KKTCertificate kkt;       // certificate of best_x on the full problem
  bool kkt_optimal = false;
  /// Restricted-problem optimum per enumerated support; populated on request.
  std::map<std::vector<int>, double> per_support_objectives;
};

namespace detail {

/// Visit all strictly increasing k-tuples drawn from {0, ..., n-1} in
/// lexicographic order.
template <typename Visit>
void for_each_combination(int n, int k, Visit&& visit) {
  if (k > n) return;
  std::vector<int> c(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) c[static_cast<size_t>(i)] = i;
  while (true) {
    visit(static_cast<const std::vector<int>&>(c));
    if (k == 0) return;
    int i = k - 1;
    while (i >= 0 && c[static_cast<size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++c[static_cast<size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      c[static_cast<size_t>(j)] = c[static_cast<size_t>(j - 1)] + 1;
  }
}

struct SubsetCandidate {
  bool valid = false;
  Vector coeffs;          // on the subset, clipped non-negative
  double objective = 0.0;
};

/// Interior stationary point of the problem restricted to `idx`: the solution
/// of A_Γ'A_Γ v = A_Γ'y - gamma 1 that is elementwise non-negative. When such
/// a point exists it is the optimum of the restricted problem with support Γ;
/// sweeping Γ over all subsets therefore covers every restricted optimum.
inline SubsetCandidate stationary_candidate(const Matrix& A, const Vector& y,
                                            double gamma,
                                            const std::vector<int>& idx,
                                            double rank_tol) {
  SubsetCandidate cand;
  const int J = static_cast<int>(idx.size());
  if (J == 0) {
    cand.valid = true;
    cand.coeffs = Vector();
    cand.objective = 0.5 * y.squaredNorm();
    return cand;
  }

  Matrix As(A.rows(), J);
  for (int c = 0; c < J; ++c) As.col(c) = A.col(idx[static_cast<size_t>(c)]);

  Eigen::JacobiSVD<Matrix> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = rank_tol * sv(0);
  const Vector rhs = As.transpose() * y - gamma * Vector::Ones(J);
  const Vector t = svd.matrixV().transpose() * rhs;
  Vector scaled = Vector::Zero(J);
  for (int i = 0; i < J; ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) scaled(i) = t(i) / (sv(i) * sv(i));
  Vector v = svd.matrixV() * scaled;

  // The minimum-norm solve above only solves the system when it is
  // consistent; inconsistency means no stationary point has support inside Γ.
  const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  const Vector system_residual = As.transpose() * (As * v) - rhs;
  if (system_residual.lpNorm<Eigen::Infinity>() > 1e-9 * scale) return cand;

  const double pos_slack = 1e-12 * std::max(1.0, v.lpNorm<Eigen::Infinity>());
  if (v.minCoeff() < -pos_slack) return cand;
  v = v.cwiseMax(0.0);

  cand.valid = true;
  cand.coeffs = std::move(v);
  cand.objective = 0.5 * (y - As * cand.coeffs).squaredNorm() +
                   gamma * cand.coeffs.sum();
  return cand;
}

inline void guard_enumeration(int num_atoms, int max_support) {
  if (num_atoms > kOracleMaxAtoms)
    throw std::invalid_argument("exhaustive enumeration refused beyond " +
                                std::to_string(kOracleMaxAtoms) + " atoms (got " +
                                std::to_string(num_atoms) + ")");
  if (max_support < 0 || max_support > num_atoms)
    throw std::invalid_argument("max support size must lie in [0, num_atoms]");
}

inline Vector pad_subset(const std::vector<int>& idx, const Vector& coeffs, int n) {
  Vector x = Vector::Zero(n);
  for (size_t c = 0; c < idx.size(); ++c) x(idx[c]) = coeffs(static_cast<Eigen::Index>(c));
  return x;
}

/// Per-support restricted optima from the subset candidates: the optimum for
/// support S is the best interior candidate over all subsets of S.
inline std::map<std::vector<int>, double> restricted_optima_map(
    const std::vector<double>& candidate_by_mask, int n, int max_support) {
  std::vector<double> best(candidate_by_mask.size(),
                           std::numeric_limits<double>::infinity());
  std::map<std::vector<int>, double> out;
  for (std::uint32_t mask = 0; mask < best.size(); ++mask) {
    const int card = __builtin_popcount(mask);
    if (card > max_support) continue;
    double b = candidate_by_mask[mask];
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) b = std::min(b, best[mask & ~(1u << i)]);
    best[mask] = b;
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) idx.push_back(i);
    out[idx] = b;
  }
  return out;
}

}  // namespace detail

/// Global solve of the non-negative lasso by exhausting every support of size
/// up to max_support and taking the best restricted optimum. Enumeration runs
/// supports in (cardinality, lexicographic) order and keeps the first of any
/// exact objective ties, so the result is deterministic.
inline OracleResult enumerate_global(const Problem& p, int max_support,
                                     bool record_per_support = false,
                                     double kkt_tol = 1e-6) {
  const int n = p.dict.num_cols();
  detail::guard_enumeration(n, max_support);
  const Matrix& A = p.dict.entries();
  const Vector& y = p.y.values;

  OracleResult result;
  std::vector<int> best_idx;
  Vector best_coeffs;

  std::vector<double> candidate_by_mask;
  if (record_per_support)
    candidate_by_mask.assign(1u << n, std::numeric_limits<double>::infinity());

  for (int k = 0; k <= max_support; ++k) {
    detail::for_each_combination(n, k, [&](const std::vector<int>& idx) {
      const detail::SubsetCandidate cand =
          detail::stationary_candidate(A, y, p.gamma, idx, kDefaultRankTol);
      if (!cand.valid) return;
      if (record_per_support) {
        std::uint32_t mask = 0;
        for (int i : idx) mask |= 1u << i;
        candidate_by_mask[mask] = cand.objective;
      }
      if (cand.objective < result.best_objective) {
        result.best_objective = cand.objective;
        best_idx = idx;
        best_coeffs = cand.coeffs;
      }
    });
  }

  result.best_x = detail::pad_subset(best_idx, best_coeffs, n);
  std::vector<int> support_idx;
  for (int i = 0; i < n; ++i)
    if (result.best_x(i) > 0.0) support_idx.push_back(i);
  result.best_support = Support(std::move(support_idx));
  result.kkt = kkt_certificate(A, y, p.gamma, result.best_x);
  result.kkt_optimal = result.kkt.is_optimal(kkt_tol);
  if (record_per_support)
    result.per_support_objectives =
        detail::restricted_optima_map(candidate_by_mask, n, max_support);
  return result;
}

/// Cardinality-constrained non-negative least squares by exhaustive search:
/// the least residual over all supports of size at most k, with ties inside a
/// relative band of 1e-9 broken by smaller cardinality first and then by
/// lexicographically smallest support. Used to build ground truth the same way
/// a per-pixel best-subset fit would.
inline OracleResult cardinality_nnls(const Dictionary& dict, const Observation& y,
                                     int k, bool record_per_support = false,
                                     double kkt_tol = 1e-6) {
  const int n = dict.num_cols();
  detail::guard_enumeration(n, k);
  const Matrix& A = dict.entries();
  const Vector& b = y.values;
  constexpr double kTieTol = 1e-9;

  double least = std::numeric_limits<double>::infinity();
  std::vector<double> candidate_by_mask;
  if (record_per_support)
    candidate_by_mask.assign(1u << n, std::numeric_limits<double>::infinity());

  for (int size = 0; size <= k; ++size) {
    detail::for_each_combination(n, size, [&](const std::vector<int>& idx) {
      const detail::SubsetCandidate cand =
          detail::stationary_candidate(A, b, 0.0, idx, kDefaultRankTol);
      if (!cand.valid) return;
      if (record_per_support) {
        std::uint32_t mask = 0;
        for (int i : idx) mask |= 1u << i;
        candidate_by_mask[mask] = cand.objective;
      }
      least = std::min(least, cand.objective);
    });
  }

  // Second pass: the first candidate within the tie band, in (cardinality,
  // lexicographic) order, is the winner.
  const double band = least + kTieTol * std::max(1.0, least);
  OracleResult result;
  std::vector<int> best_idx;
  Vector best_coeffs;
  bool found = false;
  for (int size = 0; size <= k && !found; ++size) {
    detail::for_each_combination(n, size, [&](const std::vector<int>& idx) {
      if (found) return;
      const detail::SubsetCandidate cand =
          detail::stationary_candidate(A, b, 0.0, idx, kDefaultRankTol);
      if (!cand.valid || cand.objective > band) return;
      best_idx = idx;
      best_coeffs = cand.coeffs;
      result.best_objective = cand.objective;
      found = true;
    });
  }

  result.best_x = detail::pad_subset(best_idx, best_coeffs, n);
  std::vector<int> support_idx;
  for (int i = 0; i < n; ++i)
    if (result.best_x(i) > 0.0) support_idx.push_back(i);
  result.best_support = Support(std::move(support_idx));
  result.kkt = kkt_certificate(A, b, 0.0, result.best_x);
  result.kkt_optimal = result.kkt.is_optimal(kkt_tol);
  if (record_per_support)
    result.per_support_objectives =
        detail::restricted_optima_map(candidate_by_mask, n, k);
  return result;
}

/// Monte-Carlo probe of local optimality: sample random feasible perturbations
/// at the given step scale (in-support coordinates may move either way down to
/// zero, others only upward) and report the largest objective decrease found.
/// At an optimum this should not exceed ~1e-10.
inline double feasible_direction_probe(const Problem& p, const Vector& x, int trials,
                                       double step,
                                       std::uint64_t seed = 0x5eedf00d1234abcdULL) {
  if (x.size() != p.dict.num_cols())
    throw std::invalid_argument("candidate length does not match atom count");
  const double neg_slack = 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff());
  if (x.minCoeff() < -neg_slack)
    throw std::invalid_argument("feasible_direction_probe requires x >= 0");
  if (trials <= 0) return 0.0;

  const Vector base = x.cwiseMax(0.0);
  const double f0 = nlasso_objective(p, base);
  Rng rng(seed);
  double worst = -std::numeric_limits<double>::infinity();
  Vector direction(x.size());
  for (int t = 0; t < trials; ++t) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double g = rng.normal();
      direction(i) = base(i) > 0.0 ? g : std::abs(g);
    }
    const double norm = direction.norm();
    if (norm == 0.0) continue;
    Vector delta = (step / norm) * direction;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (base(i) + delta(i) < 0.0) delta(i) = -base(i);
    worst = std::max(worst, f0 - nlasso_objective(p, base + delta));
  }
  return worst;
}

}  // namespace nnsparse
