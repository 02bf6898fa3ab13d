#include <catch2/catch_amalgamated.hpp>

#include "nnsparse/bench.hpp"
#include "nnsparse/conditions.hpp"

using namespace nnsparse;

namespace {

InstanceSpec base_spec(std::uint64_t seed) {
  InstanceSpec s;
  s.L = 20;
  s.N = 8;
  s.J = 2;
  s.coherence_target = 0.8;
  s.coef_min = 0.5;
  s.coef_max = 1.0;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("generate") {
  SECTION("atoms are unit norm and respect the coherence target") {
    InstanceSpec spec = base_spec(5);
    spec.coherence_target = 0.5;
    const Instance inst = generate(spec);
    const Matrix& a = inst.dict.entries();
    for (int j = 0; j < spec.N; ++j)
      CHECK(a.col(j).norm() == Catch::Approx(1.0).margin(1e-12));
    for (int i = 0; i < spec.N; ++i)
      for (int j = i + 1; j < spec.N; ++j)
        CHECK(std::abs(a.col(i).dot(a.col(j))) <= spec.coherence_target + 1e-12);
  }

  SECTION("no distortion leaves the observation inside the span") {
    const Instance inst = generate(base_spec(6));
    const SubdictionaryCache cache = build_cache(inst.dict, inst.support);
    CHECK(cache.apply_complement_projector(inst.y.values).norm() <
          1e-12 * std::max(1.0, inst.y.values.norm()));
    CHECK((inst.dict.entries() * inst.truth.coefficients + inst.truth.distortion -
           inst.y.values)
              .norm() == 0.0);
  }

  SECTION("directional construction hits its stated correlation") {
    InstanceSpec spec = base_spec(7);
    spec.distortion = DistortionSpec::directional(/*target=*/5, /*magnitude=*/0.3,
                                                  /*sign=*/+1);
    const Instance inst = generate(spec);
    REQUIRE_FALSE(inst.support.contains(5));
    const SubdictionaryCache cache = build_cache(inst.dict, inst.support);
    const Vector projected = cache.apply_complement_projector(inst.dict.atom(5));
    const double correlation =
        inst.y.values.dot(cache.apply_complement_projector(inst.dict.atom(5)));
    CHECK(correlation == Catch::Approx(0.3 * projected.norm()).margin(1e-10));
  }

  SECTION("zero-sigma gaussian equals the clean instance") {
    InstanceSpec clean = base_spec(8);
    InstanceSpec zeroed = base_spec(8);
    zeroed.distortion = DistortionSpec::gaussian(0.0);
    const Instance a = generate(clean);
    const Instance b = generate(zeroed);
    CHECK(a.dict.entries() == b.dict.entries());
    CHECK(a.y.values == b.y.values);
    CHECK(a.truth.distortion.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("bilinear distortion sums weighted atom products") {
    InstanceSpec spec = base_spec(9);
    spec.J = 3;
    spec.distortion = DistortionSpec::bilinear({0.05});
    const Instance inst = generate(spec);
    const auto& idx = inst.support.indices();
    Vector expected = Vector::Zero(spec.L);
    for (size_t a = 0; a < idx.size(); ++a)
      for (size_t b = a + 1; b < idx.size(); ++b)
        expected += 0.05 * inst.dict.atom(idx[a]).cwiseProduct(inst.dict.atom(idx[b]));
    CHECK((inst.truth.distortion - expected).cwiseAbs().maxCoeff() < 1e-15);
  }

  SECTION("deterministic under the seed, bit for bit") {
    InstanceSpec spec = base_spec(10);
    spec.distortion = DistortionSpec::gaussian(0.05);
    const Instance a = generate(spec);
    const Instance b = generate(spec);
    CHECK(a.dict.entries() == b.dict.entries());
    CHECK(a.truth.coefficients == b.truth.coefficients);
    CHECK(a.truth.distortion == b.truth.distortion);
    CHECK(a.y.values == b.y.values);
    CHECK(a.support == b.support);
  }

  SECTION("invalid specs are refused") {
    InstanceSpec s = base_spec(1);
    s.J = 9;  // exceeds N
    CHECK_THROWS_AS(generate(s), GenerationError);
    s = base_spec(1);
    s.coherence_target = 1.0;
    CHECK_THROWS_AS(generate(s), GenerationError);
    s = base_spec(1);
    s.coef_min = 0.0;
    CHECK_THROWS_AS(generate(s), GenerationError);
  }
}

TEST_CASE("correlated library mimics reflectance spectra") {
  const Dictionary dict = make_correlated_dictionary(50, 5, 0.7, 0.95, 42);
  for (int i = 0; i < 5; ++i) {
    CHECK(dict.atom(i).norm() == Catch::Approx(1.0).margin(1e-12));
    for (int j = i + 1; j < 5; ++j) {
      const double c = dict.atom(i).dot(dict.atom(j));
      CHECK(c >= 0.7);
      CHECK(c <= 0.95);
    }
  }
}

TEST_CASE("correlated five-atom library follows the confusion-table structure") {
  // stands in for a real reflectance library: highly correlated atoms, 2- and
  // 3-atom mixtures, mild distortion
  const Dictionary lib = make_correlated_dictionary(50, 5, 0.7, 0.95, 99);
  Rng rng(12345);
  ConfusionMatrix apmrc_cells;
  ConfusionMatrix amax_cells;
  for (int i = 0; i < 200; ++i) {
    const Support support(rng.sample_sorted(5, 2 + (i % 2)));
    Vector x = Vector::Zero(5);
    for (int j : support.indices()) x(j) = rng.uniform(0.4, 1.2);
    Vector e(50);
    for (int l = 0; l < 50; ++l) e(l) = 0.01 * rng.normal();
    const Observation y{Vector(lib.entries() * x + e)};
    const SubdictionaryCache cache = build_cache(lib, support);
    if (!cache.full_rank()) continue;

    const double gamma =
        0.1 * (lib.entries().transpose() * y.values).lpNorm<Eigen::Infinity>();
    const Problem p(lib, y, gamma);
    const Solution sol = solve_nlasso(p);
    if (!sol.converged) continue;
    const bool correct = (sol.support == support);
    const ConditionReport rep = evaluate_conditions(p, support, cache);

    double apmrc_min = std::abs(rep.mcc_margin);
    for (const auto& [j, m] : rep.nscc_margins)
      apmrc_min = std::min(apmrc_min, std::abs(m));
    if (apmrc_min >= 1e-8) apmrc_cells.add(rep.verdicts.apmrc, correct);
    if (std::min(std::abs(rep.mcc_margin), std::abs(rep.perc_amax_margin)) >= 1e-8)
      amax_cells.add(rep.verdicts.perc_amax, correct);
  }
  CHECK(apmrc_cells.tallied() > 150);
  CHECK(apmrc_cells.true_incorrect == 0);   // sufficiency
  CHECK(apmrc_cells.false_correct == 0);    // practical necessity
  CHECK(apmrc_cells.true_correct > 0);
  CHECK(amax_cells.true_incorrect == 0);
  CHECK(amax_cells.false_correct >= apmrc_cells.false_correct);  // conservatism
}

TEST_CASE("evaluate_batch") {
  SECTION("clean batch inside the trade-off interval is all true-correct") {
    std::vector<InstanceSpec> specs;
    for (int i = 0; i < 40; ++i) specs.push_back(base_spec(100 + i));

    EvalOptions opts;
    opts.gammas = {0.1};
    opts.scale_gamma = true;
    const BatchResult batch = evaluate_batch(specs, opts);

    const ConfusionMatrix& cm = batch.cell(0, Mrc::apmrc);
    CHECK(batch.unusable == 0);
    CHECK(cm.true_correct + cm.boundary_excluded == 40);
    CHECK(cm.true_incorrect == 0);
    CHECK(cm.false_correct == 0);
    CHECK(cm.false_incorrect == 0);
  }

  SECTION("cells plus exclusions account for every instance") {
    std::vector<InstanceSpec> specs;
    for (int i = 0; i < 30; ++i) {
      InstanceSpec s = base_spec(500 + i);
      if (i % 3 == 1) s.distortion = DistortionSpec::gaussian(0.1);
      if (i % 3 == 2)
        s.distortion = DistortionSpec::directional(-1, 0.2, (i % 2) ? +1 : -1);
      specs.push_back(s);
    }
    EvalOptions opts;
    opts.gammas = {0.15, 0.05};
    opts.scale_gamma = true;
    const BatchResult batch = evaluate_batch(specs, opts);
    REQUIRE(batch.records.size() == 60);
    for (size_t g = 0; g < 2; ++g) {
      long unusable_here = 0;
      for (const InstanceOutcome& rec : batch.records)
        if (rec.gamma_requested == opts.gammas[g] && !rec.usable) ++unusable_here;
      for (int c = 0; c < kNumMrcs; ++c) {
        const ConfusionMatrix& cm = batch.confusion[g][static_cast<size_t>(c)];
        CHECK(cm.tallied() + cm.boundary_excluded + unusable_here == 30);
      }
    }
  }

  SECTION("adversarial directional distortion defeats both solver and condition") {
    std::vector<InstanceSpec> specs;
    for (int i = 0; i < 20; ++i) {
      InstanceSpec s = base_spec(900 + i);
      s.distortion = DistortionSpec::directional(-1, /*magnitude=*/1.0, /*sign=*/+1);
      specs.push_back(s);
    }
    EvalOptions opts;
    opts.gammas = {0.05};
    opts.scale_gamma = true;
    const BatchResult batch = evaluate_batch(specs, opts);
    const ConfusionMatrix& cm = batch.cell(0, Mrc::apmrc);
    CHECK(cm.false_incorrect > cm.tallied() / 2);
    CHECK(cm.true_incorrect == 0);
  }

  SECTION("parallel evaluation matches the sequential tally") {
    std::vector<InstanceSpec> specs;
    for (int i = 0; i < 16; ++i) specs.push_back(base_spec(2000 + i));
    EvalOptions seq;
    seq.gammas = {0.1, 0.02};
    seq.scale_gamma = true;
    EvalOptions par = seq;
    par.workers = 4;
    const BatchResult a = evaluate_batch(specs, seq);
    const BatchResult b = evaluate_batch(specs, par);
    for (size_t g = 0; g < 2; ++g) {
      for (int c = 0; c < kNumMrcs; ++c) {
        CHECK(a.confusion[g][static_cast<size_t>(c)].true_correct ==
              b.confusion[g][static_cast<size_t>(c)].true_correct);
        CHECK(a.confusion[g][static_cast<size_t>(c)].false_incorrect ==
              b.confusion[g][static_cast<size_t>(c)].false_incorrect);
      }
    }
    for (size_t r = 0; r < a.records.size(); ++r) {
      CHECK(a.records[r].correct == b.records[r].correct);
      CHECK(a.records[r].gamma == b.records[r].gamma);
    }
  }
}

TEST_CASE("gamma_sweep") {
  SECTION("single-axis fixture: no false alarms, misses beyond 1") {
    Matrix eye = Matrix::Identity(2, 2);
    Vector coeffs(2);
    coeffs << 1, 0;
    Vector y(2);
    y << 1, 0;
    Instance inst{Dictionary(eye), GroundTruth(coeffs, Vector::Zero(2)),
                  Observation(y), Support({0})};
    std::vector<double> grid;
    for (double g = 0.05; g <= 1.3; g += 0.05) grid.push_back(g);
    const SweepResult sweep = gamma_sweep(inst, grid);
    for (const SweepPoint& pt : sweep.points) {
      CHECK_FALSE(pt.false_alarm);
      if (pt.gamma < 1.0 - 1e-9) CHECK_FALSE(pt.missed);
      if (pt.gamma > 1.0 + 1e-9) CHECK(pt.missed);
    }
    CHECK(sweep.min_gamma_no_false_alarm == Catch::Approx(0.05));
    CHECK(sweep.max_gamma_no_missed < 1.0 + 1e-12);
    CHECK(sweep.interval.hi == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("empty interval admits no correct recovery") {
    Matrix a(3, 3);
    a.col(0) << 1, 0, 0;
    a.col(1) << 0, 1, 0;
    a.col(2) << 0.6, 0.8, 0.3;
    a.col(2).normalize();
    Vector coeffs(3);
    coeffs << 1, 1, 0;
    Vector e(3);
    e << 0, 0, 0.1;
    Vector y = a * coeffs + e;
    Instance inst{Dictionary(a), GroundTruth(coeffs, e), Observation(y),
                  Support({0, 1})};
    const SubdictionaryCache cache = build_cache(inst.dict, inst.support);
    REQUIRE(gamma_interval(inst.dict, inst.y, inst.support, cache).empty());

    std::vector<double> grid;
    for (double g = 0.02; g <= 1.0; g += 0.02) grid.push_back(g);
    const SweepResult sweep = gamma_sweep(inst, grid);
    for (const SweepPoint& pt : sweep.points) CHECK_FALSE(pt.correct);
  }

  SECTION("empirical transitions bracket the computed interval") {
    const Instance inst = generate(base_spec(777));
    const SubdictionaryCache cache = build_cache(inst.dict, inst.support);
    const GammaInterval iv = gamma_interval(inst.dict, inst.y, inst.support, cache);
    REQUIRE_FALSE(iv.empty());
    const double step = iv.hi / 200.0;
    std::vector<double> grid;
    for (double g = step; g < 1.5 * iv.hi; g += step) grid.push_back(g);
    const SweepResult sweep = gamma_sweep(inst, grid);
    REQUIRE(std::isfinite(sweep.max_gamma_no_missed));
    CHECK(std::abs(sweep.max_gamma_no_missed - iv.hi) <= step + 1e-12);
    REQUIRE(std::isfinite(sweep.min_gamma_no_false_alarm));
    CHECK(sweep.min_gamma_no_false_alarm - step <= iv.lo + 1e-12);
  }
}
