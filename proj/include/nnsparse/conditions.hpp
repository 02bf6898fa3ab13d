#pragma once

#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

#include "nnsparse/core.hpp"
#include "nnsparse/solvers.hpp"

namespace nnsparse {

namespace detail {
inline void require_full_rank(const SubdictionaryCache& cache, const char* what) {
  if (!cache.full_rank())
    throw RankDeficientError(std::string(what) +
                             " is undefined for a rank-deficient subdictionary (rank " +
                             std::to_string(cache.rank()) + " of " +
                             std::to_string(cache.size()) + ")");
}

inline void require_outside_atoms(const Support& support, int num_atoms,
                                  const char* what) {
  if (support.size() >= num_atoms)
    throw std::invalid_argument(std::string(what) +
                                " needs at least one atom outside the support");
}
}  // namespace detail

/// Exact recovery coefficient: 1 - max over outside atoms of ||A† a_n||_1.
inline double erc(const Dictionary& dict, const Support& support,
                  const SubdictionaryCache& cache) {
  detail::require_full_rank(cache, "erc");
  detail::require_outside_atoms(support, dict.num_cols(), "erc");
  const Support outside = Support::complement(support, dict.num_cols());
  double worst = -std::numeric_limits<double>::infinity();
  for (int j : outside.indices())
    worst = std::max(worst, (cache.pseudoinverse() * dict.atom(j)).lpNorm<1>());
  return 1.0 - worst;
}

/// Positive subset coherence of one atom against the cached subdictionary:
/// 1 - 1' A† a_j. Positive iff the projection of a_j onto the subdictionary
/// span lies on the origin side of the hyperplane through the support atoms,
/// zero on the hyperplane, negative beyond it.
inline double psc(const SubdictionaryCache& cache, const Vector& atom) {
  detail::require_full_rank(cache, "psc");
  if (atom.size() != cache.subdictionary().rows())
    throw std::invalid_argument("atom length does not match subdictionary rows");
  return 1.0 - (cache.pseudoinverse() * atom).sum();
}

/// Positive exact recovery coefficient: min PSC over atoms outside the support.
inline double perc(const Dictionary& dict, const Support& support,
                   const SubdictionaryCache& cache) {
  detail::require_full_rank(cache, "perc");
  detail::require_outside_atoms(support, dict.num_cols(), "perc");
  const Support outside = Support::complement(support, dict.num_cols());
  double lowest = std::numeric_limits<double>::infinity();
  for (int j : outside.indices()) lowest = std::min(lowest, psc(cache, dict.atom(j)));
  return lowest;
}

/// Margins of the approximately perfect model recovery condition. The MCC
/// margin is the smallest entry of A† y - gamma (A'A)^-1 1; each NSCC margin is
/// gamma PSC(j) - a_j' P⊥ y for an outside atom j. The condition holds when all
/// margins are strictly positive.
struct ApmrcResult {
  double mcc_margin = 0.0;
  std::map<int, double> nscc_margins;

  double min_nscc_margin() const {
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& [j, m] : nscc_margins) lowest = std::min(lowest, m);
    return lowest;
  }

  bool verdict(double strict_tol = 0.0) const {
    if (!(mcc_margin > strict_tol)) return false;
    for (const auto& [j, m] : nscc_margins)
      if (!(m > strict_tol)) return false;
    return true;
  }
};

inline ApmrcResult check_apmrc(const Problem& p, const Support& support,
                               const SubdictionaryCache& cache) {
  detail::require_full_rank(cache, "check_apmrc");
  ApmrcResult res;
  res.mcc_margin = restricted_closed_form(cache, p.y.values, p.gamma).minCoeff();
  const Vector projected = cache.apply_complement_projector(p.y.values);
  const Support outside = Support::complement(support, p.dict.num_cols());
  for (int j : outside.indices()) {
    const double correlation = p.dict.atom(j).dot(projected);
    res.nscc_margins[j] = p.gamma * psc(cache, p.dict.atom(j)) - correlation;
  }
  return res;
}

/// gamma PERC - max over outside atoms of a_j' P⊥ y. A strictly positive margin
/// together with the MCC gives exact support identification.
inline double check_perc_max(const Problem& p, const Support& support,
                             const SubdictionaryCache& cache) {
  detail::require_full_rank(cache, "check_perc_max");
  detail::require_outside_atoms(support, p.dict.num_cols(), "check_perc_max");
  const Vector projected = cache.apply_complement_projector(p.y.values);
  const Support outside = Support::complement(support, p.dict.num_cols());
  double worst = -std::numeric_limits<double>::infinity();
  for (int j : outside.indices())
    worst = std::max(worst, p.dict.atom(j).dot(projected));
  return p.gamma * perc(p.dict, support, cache) - worst;
}

/// gamma PERC - ||A' P⊥ y||_inf, the absolute-maximum tightening of PERC-Max.
inline double check_perc_amax(const Problem& p, const Support& support,
                              const SubdictionaryCache& cache) {
  detail::require_full_rank(cache, "check_perc_amax");
  detail::require_outside_atoms(support, p.dict.num_cols(), "check_perc_amax");
  const Vector projected = cache.apply_complement_projector(p.y.values);
  const double amax =
      (p.dict.entries().transpose() * projected).lpNorm<Eigen::Infinity>();
  return p.gamma * perc(p.dict, support, cache) - amax;
}

/// ERC-based recovery condition. Needs the generating coefficients and the
/// distortion term, so it only applies to synthetic data. The noise margin is
/// gamma ERC - ||A' P⊥ e||_inf (non-strict); the coefficient margin is the
/// smallest x_i - (gamma ||(A'A)^-1||_inf,inf - (A† e)_i) over the support
/// (strict). The hypothesis additionally requires ERC >= 0.
struct ErcMrcResult {
  double noise_margin = 0.0;
  double coef_margin = 0.0;
  double erc_value = 0.0;

  bool verdict(double strict_tol = 0.0) const {
    return erc_value >= -strict_tol && noise_margin >= -strict_tol &&
           coef_margin > strict_tol;
  }
};

inline ErcMrcResult check_erc_mrc(const GroundTruth& truth, const Dictionary& dict,
                                  const Support& support, const SubdictionaryCache& cache,
                                  double gamma) {
  detail::require_full_rank(cache, "check_erc_mrc");
  if (truth.coefficients.size() != dict.num_cols())
    throw std::invalid_argument("ground-truth coefficient length does not match atoms");
  if (truth.distortion.size() != dict.num_rows())
    throw std::invalid_argument("ground-truth distortion length does not match bands");

  ErcMrcResult res;
  res.erc_value = erc(dict, support, cache);

  const Vector projected_e = cache.apply_complement_projector(truth.distortion);
  const double noise_inf =
      (dict.entries().transpose() * projected_e).lpNorm<Eigen::Infinity>();
  res.noise_margin = gamma * res.erc_value - noise_inf;

  const Vector pinv_e = cache.pseudoinverse() * truth.distortion;
  const double gram_bound = gamma * inf_inf_norm(cache.gram_inverse());
  double lowest = std::numeric_limits<double>::infinity();
  for (int c = 0; c < support.size(); ++c) {
    const int i = support.indices()[static_cast<size_t>(c)];
    lowest = std::min(lowest, truth.coefficients(i) - (gram_bound - pinv_e(c)));
  }
  res.coef_margin = lowest;
  return res;
}

/// Margins gamma - (y - A_Λ v̂)' a_j for each outside atom, given a certified
/// optimum v̂ of the restricted problem. All strictly positive implies every
/// solution of the full problem has its support inside Λ; conversely, support
/// containment implies all margins are non-negative.
inline std::map<int, double> check_base(const Problem& p, const Support& support,
                                        const Solution& restricted_solution,
                                        double certificate_tol = 1e-6) {
  if (!restricted_solution.kkt.is_optimal(certificate_tol))
    throw std::invalid_argument(
        "check_base requires a KKT-certified restricted solution");
  if (restricted_solution.x.size() != p.dict.num_cols())
    throw std::invalid_argument("restricted solution must be zero-padded to all atoms");
  const Vector residual = p.y.values - p.dict.entries() * restricted_solution.x;
  std::map<int, double> margins;
  const Support outside = Support::complement(support, p.dict.num_cols());
  for (int j : outside.indices())
    margins[j] = p.gamma - p.dict.atom(j).dot(residual);
  return margins;
}

inline bool base_verdict(const std::map<int, double>& margins, bool strict,
                         double strict_tol = 0.0) {
  for (const auto& [j, m] : margins) {
    if (strict && !(m > strict_tol)) return false;
    if (!strict && !(m >= -strict_tol)) return false;
  }
  return true;
}

/// The gamma = 0 specialization: A† y strictly positive and every outside
/// correlation with the projected observation strictly negative.
inline ApmrcResult check_apmrc_nnls(const Dictionary& dict, const Support& support,
                                    const SubdictionaryCache& cache,
                                    const Observation& y) {
  return check_apmrc(Problem(dict, y, 0.0), support, cache);
}

/// Open interval of trade-off values satisfying both the MCC and the NSCC.
/// hi may be +infinity; empty() reports an empty intersection.
struct GammaInterval {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  bool infeasible = false;

  bool empty() const { return infeasible || !(lo < hi); }
  bool contains(double g) const { return !empty() && g > lo && g < hi; }
};

/// Exact intersection of the per-row MCC and per-atom NSCC constraints, each a
/// half-line in gamma. MCC row i reads (A† y)_i > gamma s_i with s_i the i-th
/// entry of (A'A)^-1 1; NSCC row j reads t_j < gamma PSC(j) with
/// t_j = a_j' P⊥ y.
inline GammaInterval gamma_interval(const Dictionary& dict, const Observation& y,
                                    const Support& support,
                                    const SubdictionaryCache& cache) {
  detail::require_full_rank(cache, "gamma_interval");
  GammaInterval iv;

  const Vector c = cache.pseudoinverse() * y.values;
  const Vector s = cache.gram_inverse() * Vector::Ones(cache.size());
  for (int i = 0; i < cache.size(); ++i) {
    if (s(i) > 0.0) {
      iv.hi = std::min(iv.hi, c(i) / s(i));
    } else if (s(i) < 0.0) {
      iv.lo = std::max(iv.lo, c(i) / s(i));
    } else if (!(c(i) > 0.0)) {
      iv.infeasible = true;
    }
  }

  const Vector projected = cache.apply_complement_projector(y.values);
  const Support outside = Support::complement(support, dict.num_cols());
  for (int j : outside.indices()) {
    const double t = dict.atom(j).dot(projected);
    const double p = psc(cache, dict.atom(j));
    if (p > 0.0) {
      iv.lo = std::max(iv.lo, t / p);
    } else if (p < 0.0) {
      iv.hi = std::min(iv.hi, t / p);
    } else if (!(t < 0.0)) {
      iv.infeasible = true;
    }
  }

  iv.lo = std::max(iv.lo, 0.0);
  if (!(iv.lo < iv.hi)) iv.infeasible = true;
  return iv;
}

struct ConditionVerdicts {
  bool apmrc = false;
  bool perc_max = false;
  bool perc_amax = false;
  std::optional<bool> erc_mrc;      // needs ground truth
  std::optional<bool> base_strict;  // needs a certified restricted solution
  std::optional<bool> base_weak;
};

/// Every metric, margin, and verdict for one (problem, support) pair. The
/// PERC-Max and PERC-AMax verdicts include the MCC, since each corollary pairs
/// its coherence bound with the minimum coefficient condition.
struct ConditionReport {
  double erc = 0.0;
  std::map<int, double> psc_per_atom;
  double perc = 0.0;
  double mcc_margin = 0.0;
  std::map<int, double> nscc_margins;
  double perc_max_margin = 0.0;
  double perc_amax_margin = 0.0;
  std::optional<double> erc_mrc_noise_margin;
  std::optional<double> erc_mrc_coef_margin;
  std::map<int, double> base_margins;
  bool base_partial = false;  // restricted solve was non-unique; margins cover one minimizer
  ConditionVerdicts verdicts;

  double min_nscc_margin() const {
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& [j, m] : nscc_margins) lowest = std::min(lowest, m);
    return lowest;
  }
};

inline ConditionReport evaluate_conditions(const Problem& p, const Support& support,
                                           const SubdictionaryCache& cache,
                                           const GroundTruth* truth = nullptr,
                                           const Solution* restricted = nullptr,
                                           double strict_tol = 0.0) {
  detail::require_full_rank(cache, "evaluate_conditions");
  detail::require_outside_atoms(support, p.dict.num_cols(), "evaluate_conditions");

  ConditionReport rep;
  rep.erc = erc(p.dict, support, cache);
  const Support outside = Support::complement(support, p.dict.num_cols());
  for (int j : outside.indices()) rep.psc_per_atom[j] = psc(cache, p.dict.atom(j));
  rep.perc = std::numeric_limits<double>::infinity();
  for (const auto& [j, v] : rep.psc_per_atom) rep.perc = std::min(rep.perc, v);

  const ApmrcResult apmrc = check_apmrc(p, support, cache);
  rep.mcc_margin = apmrc.mcc_margin;
  rep.nscc_margins = apmrc.nscc_margins;
  rep.perc_max_margin = check_perc_max(p, support, cache);
  rep.perc_amax_margin = check_perc_amax(p, support, cache);

  rep.verdicts.apmrc = apmrc.verdict(strict_tol);
  rep.verdicts.perc_max =
      rep.mcc_margin > strict_tol && rep.perc_max_margin > strict_tol;
  rep.verdicts.perc_amax =
      rep.mcc_margin > strict_tol && rep.perc_amax_margin > strict_tol;

  if (truth != nullptr) {
    const ErcMrcResult em = check_erc_mrc(*truth, p.dict, support, cache, p.gamma);
    rep.erc_mrc_noise_margin = em.noise_margin;
    rep.erc_mrc_coef_margin = em.coef_margin;
    rep.verdicts.erc_mrc = em.verdict(strict_tol);
  }

  if (restricted != nullptr) {
    rep.base_margins = check_base(p, support, *restricted);
    rep.base_partial = restricted->non_unique;
    rep.verdicts.base_strict = base_verdict(rep.base_margins, true, strict_tol);
    rep.verdicts.base_weak = base_verdict(rep.base_margins, false, strict_tol);
  }
  return rep;
}

}  // namespace nnsparse
