#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "nnsparse/conditions.hpp"
#include "nnsparse/core.hpp"
#include "nnsparse/rng.hpp"
#include "nnsparse/solvers.hpp"

namespace nnsparse {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DistortionKind { none, gaussian, directional, bilinear };

inline const char* to_string(DistortionKind k) {
  switch (k) {
    case DistortionKind::none: return "none";
    case DistortionKind::gaussian: return "gaussian";
    case DistortionKind::directional: return "directional";
    case DistortionKind::bilinear: return "bilinear";
  }
  return "?";
}

/// Additive distortion recipe. `directional` builds
/// e = magnitude * sign * P⊥ a_j / ||P⊥ a_j||, which exercises the boundary
/// between tolerable and intolerable deviations; `bilinear` adds weighted
/// elementwise products of support-atom pairs, mimicking nonlinear mixing.
struct DistortionSpec {
  DistortionKind kind = DistortionKind::none;
  double sigma = 0.0;        // gaussian
  int target_atom = -1;      // directional; -1 picks a random outside atom
  double magnitude = 0.0;    // directional
  int sign = +1;             // directional, +1 or -1
  std::vector<double> pair_weights;  // bilinear; a single value broadcasts

  static DistortionSpec none() { return {}; }
  static DistortionSpec gaussian(double sigma) {
    DistortionSpec d;
    d.kind = DistortionKind::gaussian;
    d.sigma = sigma;
    return d;
  }
  static DistortionSpec directional(int target_atom, double magnitude, int sign) {
    DistortionSpec d;
    d.kind = DistortionKind::directional;
    d.target_atom = target_atom;
    d.magnitude = magnitude;
    d.sign = sign;
    return d;
  }
  static DistortionSpec bilinear(std::vector<double> weights) {
    DistortionSpec d;
    d.kind = DistortionKind::bilinear;
    d.pair_weights = std::move(weights);
    return d;
  }
};

struct InstanceSpec {
  int L = 0;
  int N = 0;
  int J = 0;
  double coherence_target = 0.8;  // max pairwise |cosine| between atoms
  double coef_min = 0.5;
  double coef_max = 1.0;
  DistortionSpec distortion;
  std::uint64_t seed = 0;

  void validate() const {
    if (L < 1 || N < 1) throw GenerationError("instance needs L >= 1 and N >= 1");
    if (J < 1 || J > std::min(L, N))
      throw GenerationError("support size J must satisfy 1 <= J <= min(L, N)");
    if (!(coherence_target >= 0.0 && coherence_target < 1.0))
      throw GenerationError("coherence target must lie in [0, 1)");
    if (!(coef_min > 0.0) || !(coef_max >= coef_min))
      throw GenerationError("coefficient range must satisfy 0 < min <= max");
    if (distortion.kind == DistortionKind::gaussian && distortion.sigma < 0.0)
      throw GenerationError("gaussian sigma must be non-negative");
    if (distortion.kind == DistortionKind::directional) {
      if (distortion.magnitude < 0.0)
        throw GenerationError("directional magnitude must be non-negative");
      if (distortion.sign != 1 && distortion.sign != -1)
        throw GenerationError("directional sign must be +1 or -1");
    }
  }
};

struct Instance {
  Dictionary dict;
  GroundTruth truth;
  Observation y;
  Support support;
};

namespace detail {

inline double worst_coherence(const Matrix& atoms, int accepted, const Vector& cand) {
  double worst = 0.0;
  for (int i = 0; i < accepted; ++i)
    worst = std::max(worst, std::abs(atoms.col(i).dot(cand)));
  return worst;
}

/// Draw unit atoms whose pairwise |cosine| stays at or below the target,
/// first by rejection and then, when a candidate keeps failing, by mixing it
/// toward its component orthogonal to the accepted atoms until it fits.
inline Matrix draw_dictionary(int L, int N, double coherence_target, Rng& rng) {
  constexpr int kMaxRejections = 200;
  Matrix atoms(L, N);
  Matrix basis(L, 0);  // orthonormal basis of the accepted span

  for (int j = 0; j < N; ++j) {
    Vector cand(L);
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRejections && !ok; ++attempt) {
      for (int l = 0; l < L; ++l) cand(l) = rng.normal();
      const double nrm = cand.norm();
      if (nrm == 0.0) continue;
      cand /= nrm;
      ok = worst_coherence(atoms, j, cand) <= coherence_target;
    }
    if (!ok) {
      Vector ortho = cand - basis * (basis.transpose() * cand);
      const double onorm = ortho.norm();
      if (onorm < 1e-10)
        throw GenerationError("coherence target infeasible: accepted atoms span the space");
      ortho /= onorm;
      double lo = 0.0, hi = 1.0;  // t = 1 is fully orthogonal, always feasible
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Vector mixed = ((1.0 - mid) * cand + mid * ortho).normalized();
        if (worst_coherence(atoms, j, mixed) <= coherence_target) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      cand = ((1.0 - hi) * cand + hi * ortho).normalized();
      if (worst_coherence(atoms, j, cand) > coherence_target)
        throw GenerationError("coherence target infeasible after orthogonalization mixing");
    }
    atoms.col(j) = cand;
    Vector res = cand - basis * (basis.transpose() * cand);
    if (res.norm() > 1e-12) {
      basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
      basis.col(basis.cols() - 1) = res.normalized();
    }
  }
  return atoms;
}

}  // namespace detail

/// Deterministic synthetic instance: unit-norm atoms with bounded pairwise
/// coherence, a random size-J support, positive coefficients in the requested
/// range, and y = A x + e built exactly from the distortion recipe.
inline Instance generate(const InstanceSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  Matrix atoms = detail::draw_dictionary(spec.L, spec.N, spec.coherence_target, rng);
  Dictionary dict(atoms);

  Support support(rng.sample_sorted(spec.N, spec.J));
  Vector coeffs = Vector::Zero(spec.N);
  for (int i : support.indices()) coeffs(i) = rng.uniform(spec.coef_min, spec.coef_max);

  Vector e = Vector::Zero(spec.L);
  switch (spec.distortion.kind) {
    case DistortionKind::none:
      break;
    case DistortionKind::gaussian:
      for (int l = 0; l < spec.L; ++l) e(l) = spec.distortion.sigma * rng.normal();
      break;
    case DistortionKind::directional: {
      int target = spec.distortion.target_atom;
      const Support outside = Support::complement(support, spec.N);
      if (target < 0) {
        if (outside.empty())
          throw GenerationError("directional distortion needs an atom outside the support");
        target = outside.indices()[static_cast<size_t>(
            rng.uniform_int(0, outside.size() - 1))];
      }
      if (target >= spec.N || support.contains(target))
        throw GenerationError("directional target must be an atom outside the support");
      const SubdictionaryCache cache = build_cache(dict, support);
      const Vector projected = cache.apply_complement_projector(dict.atom(target));
      const double nrm = projected.norm();
      if (nrm < 1e-12)
        throw GenerationError("directional target lies in the span of the support atoms");
      e = (spec.distortion.magnitude * spec.distortion.sign / nrm) * projected;
      break;
    }
    case DistortionKind::bilinear: {
      const auto& idx = support.indices();
      const size_t num_pairs = idx.size() * (idx.size() - 1) / 2;
      std::vector<double> weights = spec.distortion.pair_weights;
      if (weights.size() == 1 && num_pairs != 1) weights.assign(num_pairs, weights[0]);
      if (weights.size() != num_pairs)
        throw GenerationError("bilinear distortion needs one weight per support pair (" +
                              std::to_string(num_pairs) + ")");
      size_t w = 0;
      for (size_t a = 0; a < idx.size(); ++a)
        for (size_t b = a + 1; b < idx.size(); ++b)
          e += weights[w++] *
               dict.atom(idx[a]).cwiseProduct(dict.atom(idx[b])).matrix();
      break;
    }
  }

  Vector y = atoms * coeffs + e;
  return Instance{std::move(dict), GroundTruth(std::move(coeffs), std::move(e)),
                  Observation(std::move(y)), std::move(support)};
}

/// Highly correlated library in the style of reflectance spectra: every atom
/// shares a common component so that all pairwise cosines land inside
/// [min_cos, max_cos]. Offending perturbations are redrawn until the band
/// holds, deterministically under the seed.
inline Dictionary make_correlated_dictionary(int L, int N, double min_cos,
                                             double max_cos, std::uint64_t seed) {
  if (L < 2 || N < 2) throw GenerationError("correlated dictionary needs L, N >= 2");
  if (!(0.0 < min_cos && min_cos < max_cos && max_cos < 1.0))
    throw GenerationError("cosine band must satisfy 0 < min < max < 1");
  Rng rng(seed);

  Vector base(L);
  for (int l = 0; l < L; ++l) base(l) = rng.normal();
  base.normalize();

  const double alpha2 = 0.5 * (min_cos + max_cos);
  const double alpha = std::sqrt(alpha2);
  const double beta = std::sqrt(1.0 - alpha2);

  Matrix atoms(L, N);
  for (int attempt = 0; attempt < 500; ++attempt) {
    for (int j = 0; j < N; ++j) {
      Vector w(L);
      for (int l = 0; l < L; ++l) w(l) = rng.normal();
      w -= base * base.dot(w);
      const double nrm = w.norm();
      if (nrm < 1e-12) { --j; continue; }
      atoms.col(j) = alpha * base + (beta / nrm) * w;
    }
    bool ok = true;
    for (int i = 0; i < N && ok; ++i)
      for (int j = i + 1; j < N && ok; ++j) {
        const double c = atoms.col(i).dot(atoms.col(j));
        ok = c >= min_cos && c <= max_cos;
      }
    if (ok) return Dictionary(atoms);
  }
  throw GenerationError("could not hit the requested cosine band");
}

/// Cross-tabulation of a condition verdict against the solver outcome, in the
/// true/false x correct/incorrect layout.
struct ConfusionMatrix {
  long true_correct = 0;
  long true_incorrect = 0;
  long false_correct = 0;
  long false_incorrect = 0;
  long boundary_excluded = 0;

  void add(bool verdict, bool correct) {
    if (verdict && correct) ++true_correct;
    else if (verdict && !correct) ++true_incorrect;
    else if (!verdict && correct) ++false_correct;
    else ++false_incorrect;
  }

  long tallied() const {
    return true_correct + true_incorrect + false_correct + false_incorrect;
  }
};

/// The four recovery conditions tracked by batch evaluation.
enum class Mrc : int { apmrc = 0, perc_max = 1, perc_amax = 2, erc_mrc = 3 };
inline constexpr int kNumMrcs = 4;
inline constexpr std::array<const char*, kNumMrcs> kMrcNames = {
    "apmrc", "perc-max", "perc-amax", "erc-mrc"};

struct EvalOptions {
  std::vector<double> gammas;
  /// When set, each requested gamma is multiplied by ||A'y||_inf of the
  /// instance, so the trade-off tracks the natural scale of the data.
  bool scale_gamma = false;
  double boundary_tol = 1e-8;  // |margin| below this is logged, not tallied
  double strict_tol = 0.0;
  SolverOptions solver;
  int workers = 1;
};

struct InstanceOutcome {
  int instance_index = 0;
  std::uint64_t seed = 0;
  double gamma_requested = 0.0;
  double gamma = 0.0;
  bool usable = false;    // solver converged and the support cache is full rank
  bool correct = false;   // solver support equals the generating support
  std::array<bool, kNumMrcs> verdict{};
  std::array<bool, kNumMrcs> boundary{};
  ConditionReport report;
  Support estimated_support;
  Support true_support;
  DistortionKind distortion = DistortionKind::none;
};

struct BatchResult {
  std::vector<double> gammas;
  /// confusion[g][mrc] aggregates the usable, non-boundary outcomes at gamma g.
  std::vector<std::array<ConfusionMatrix, kNumMrcs>> confusion;
  std::vector<InstanceOutcome> records;  // ordered by (instance, gamma)
  long unusable = 0;

  const ConfusionMatrix& cell(int gamma_index, Mrc c) const {
    return confusion[static_cast<size_t>(gamma_index)][static_cast<int>(c)];
  }
};

namespace detail {

inline std::array<bool, kNumMrcs> boundary_flags(const ConditionReport& rep,
                                                 double tol) {
  std::array<bool, kNumMrcs> flags{};
  double apmrc_min = std::abs(rep.mcc_margin);
  for (const auto& [j, m] : rep.nscc_margins) apmrc_min = std::min(apmrc_min, std::abs(m));
  flags[static_cast<int>(Mrc::apmrc)] = apmrc_min < tol;
  flags[static_cast<int>(Mrc::perc_max)] =
      std::min(std::abs(rep.mcc_margin), std::abs(rep.perc_max_margin)) < tol;
  flags[static_cast<int>(Mrc::perc_amax)] =
      std::min(std::abs(rep.mcc_margin), std::abs(rep.perc_amax_margin)) < tol;
  double erc_min = std::abs(rep.erc);
  if (rep.erc_mrc_noise_margin) erc_min = std::min(erc_min, std::abs(*rep.erc_mrc_noise_margin));
  if (rep.erc_mrc_coef_margin) erc_min = std::min(erc_min, std::abs(*rep.erc_mrc_coef_margin));
  flags[static_cast<int>(Mrc::erc_mrc)] = erc_min < tol;
  return flags;
}

}  // namespace detail

/// Solve every instance at every trade-off value, compare the solver support
/// with the generating one, evaluate all four conditions, and tally the
/// confusion cells. Instances whose solve fails to converge (or whose support
/// atoms are numerically dependent) are excluded from the tallies and counted
/// in `unusable`; outcomes within the boundary band of a condition are logged
/// on that condition's boundary_excluded counter instead of its cells.
inline BatchResult evaluate_batch(const std::vector<InstanceSpec>& specs,
                                  const EvalOptions& opts) {
  if (opts.gammas.empty())
    throw std::invalid_argument("evaluate_batch needs at least one gamma");
  const int num_gammas = static_cast<int>(opts.gammas.size());

  BatchResult out;
  out.gammas = opts.gammas;
  out.confusion.assign(static_cast<size_t>(num_gammas), {});
  out.records.assign(specs.size() * static_cast<size_t>(num_gammas), {});

  std::atomic<size_t> cursor{0};
  auto work = [&]() {
    for (;;) {
      const size_t i = cursor.fetch_add(1);
      if (i >= specs.size()) break;
      const InstanceSpec& spec = specs[i];
      Instance inst = generate(spec);
      const double gamma_scale =
          opts.scale_gamma
              ? (inst.dict.entries().transpose() * inst.y.values).lpNorm<Eigen::Infinity>()
              : 1.0;

      SubdictionaryCache cache = build_cache(inst.dict, inst.support,
                                             opts.solver.rank_tol);
      for (int g = 0; g < num_gammas; ++g) {
        InstanceOutcome& rec = out.records[i * static_cast<size_t>(num_gammas) +
                                           static_cast<size_t>(g)];
        rec.instance_index = static_cast<int>(i);
        rec.seed = spec.seed;
        rec.gamma_requested = opts.gammas[static_cast<size_t>(g)];
        rec.gamma = rec.gamma_requested * gamma_scale;
        rec.true_support = inst.support;
        rec.distortion = spec.distortion.kind;
        if (!cache.full_rank()) continue;  // unusable, counted below

        Problem p(inst.dict, inst.y, rec.gamma);
        Solution sol = solve_nlasso(p, opts.solver);
        rec.usable = sol.converged;
        rec.estimated_support = sol.support;
        rec.correct = (sol.support == inst.support);
        rec.report = evaluate_conditions(p, inst.support, cache, &inst.truth,
                                         nullptr, opts.strict_tol);
        rec.verdict[static_cast<int>(Mrc::apmrc)] = rec.report.verdicts.apmrc;
        rec.verdict[static_cast<int>(Mrc::perc_max)] = rec.report.verdicts.perc_max;
        rec.verdict[static_cast<int>(Mrc::perc_amax)] = rec.report.verdicts.perc_amax;
        rec.verdict[static_cast<int>(Mrc::erc_mrc)] =
            rec.report.verdicts.erc_mrc.value_or(false);
        rec.boundary = detail::boundary_flags(rec.report, opts.boundary_tol);
      }
    }
  };

  const int workers = std::max(1, opts.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  // Tally sequentially so the result is independent of completion order.
  for (size_t i = 0; i < specs.size(); ++i) {
    for (int g = 0; g < num_gammas; ++g) {
      const InstanceOutcome& rec =
          out.records[i * static_cast<size_t>(num_gammas) + static_cast<size_t>(g)];
      if (!rec.usable) {
        ++out.unusable;
        continue;
      }
      for (int c = 0; c < kNumMrcs; ++c) {
        ConfusionMatrix& cm = out.confusion[static_cast<size_t>(g)][c];
        if (rec.boundary[static_cast<size_t>(c)]) {
          ++cm.boundary_excluded;
        } else {
          cm.add(rec.verdict[static_cast<size_t>(c)], rec.correct);
        }
      }
    }
  }
  return out;
}

struct SweepPoint {
  double gamma = 0.0;
  bool correct = false;
  bool false_alarm = false;   // solver detected an atom outside the support
  bool missed = false;        // solver dropped a support atom
  bool apmrc = false;
  double mcc_margin = 0.0;
  double min_nscc_margin = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  GammaInterval interval;
  /// Smallest grid gamma with no false alarm and largest with no missed
  /// detection; NaN when the grid never reaches that regime.
  double min_gamma_no_false_alarm = std::numeric_limits<double>::quiet_NaN();
  double max_gamma_no_missed = std::numeric_limits<double>::quiet_NaN();
};

/// Sweep the trade-off over a grid and record verdicts, margins, and the
/// solver support at each point. False alarms recede as gamma grows; missed
/// detections appear once gamma passes the interval's upper end.
inline SweepResult gamma_sweep(const Instance& inst, const std::vector<double>& grid,
                               const SolverOptions& solver_opts = {}) {
  SweepResult out;
  const SubdictionaryCache cache = build_cache(inst.dict, inst.support,
                                               solver_opts.rank_tol);
  out.interval = gamma_interval(inst.dict, inst.y, inst.support, cache);

  out.points.reserve(grid.size());
  for (double g : grid) {
    Problem p(inst.dict, inst.y, g);
    const Solution sol = solve_nlasso(p, solver_opts);
    const ApmrcResult apmrc = check_apmrc(p, inst.support, cache);

    SweepPoint pt;
    pt.gamma = g;
    pt.correct = (sol.support == inst.support);
    pt.false_alarm = false;
    for (int j : sol.support.indices())
      if (!inst.support.contains(j)) pt.false_alarm = true;
    pt.missed = false;
    for (int j : inst.support.indices())
      if (!sol.support.contains(j)) pt.missed = true;
    pt.apmrc = apmrc.verdict();
    pt.mcc_margin = apmrc.mcc_margin;
    pt.min_nscc_margin = apmrc.min_nscc_margin();
    out.points.push_back(pt);

    if (!pt.false_alarm && std::isnan(out.min_gamma_no_false_alarm))
      out.min_gamma_no_false_alarm = g;
    if (!pt.missed) out.max_gamma_no_missed = g;
  }
  return out;
}

}  // namespace nnsparse
