// Command-line front end: generate synthetic instances, solve non-negative
// lasso / NNLS problems, check recovery conditions, and run batch evaluations
// with confusion-matrix reports.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nnsparse/nnsparse.hpp"

namespace {

using namespace nnsparse;

// Exit codes: 0 success, 2 usage, 3 parse, 4 numeric failure, 5 infeasible spec.
constexpr int kExitUsage = 2;
constexpr int kExitParse = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitInfeasible = 5;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " list is empty");
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_double_list(text, what)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw UsageError(std::string(what) + " entries must be integers");
    out.push_back(i);
  }
  return out;
}

// Distortion strings: none | gaussian:sigma=S | directional:j=J,beta=B,sign=+/-
// (j=auto picks a random outside atom) | bilinear:w=W or w=W1;W2;...
DistortionSpec parse_distortion(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  std::map<std::string, std::string> kv;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos)
        throw UsageError("distortion option '" + item + "' is not key=value");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  auto need = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end())
      throw UsageError("distortion '" + kind + "' needs " + key + "=...");
    return it->second;
  };

  if (kind == "none") return DistortionSpec::none();
  if (kind == "gaussian") {
    return DistortionSpec::gaussian(std::stod(need("sigma")));
  }
  if (kind == "directional") {
    const std::string j = need("j");
    const int target = (j == "auto") ? -1 : std::stoi(j);
    const std::string sign = need("sign");
    if (sign != "+" && sign != "-")
      throw UsageError("directional sign must be + or -");
    return DistortionSpec::directional(target, std::stod(need("beta")),
                                       sign == "+" ? +1 : -1);
  }
  if (kind == "bilinear") {
    std::vector<double> weights;
    std::stringstream ss(need("w"));
    std::string item;
    while (std::getline(ss, item, ';')) weights.push_back(std::stod(item));
    return DistortionSpec::bilinear(std::move(weights));
  }
  throw UsageError("unknown distortion kind '" + kind + "'");
}

int worker_count(int requested, size_t jobs) {
  int w = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  if (const char* env = std::getenv("NNSPARSE_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) w = std::min(w, cap);
    } catch (const std::exception&) {
      throw UsageError("NNSPARSE_THREADS is not an integer");
    }
  }
  return static_cast<int>(std::min<size_t>(static_cast<size_t>(w), std::max<size_t>(jobs, 1)));
}

struct GenArgs {
  InstanceSpec spec;
  std::string distortion = "none";
  std::string prefix = "instance";
  std::string out_dict, out_obs, out_truth;
  bool header = false;
};

int cmd_gen(GenArgs& args) {
  args.spec.distortion = parse_distortion(args.distortion);
  const Instance inst = generate(args.spec);

  const std::string dict_path =
      args.out_dict.empty() ? args.prefix + "_dict.csv" : args.out_dict;
  const std::string obs_path =
      args.out_obs.empty() ? args.prefix + "_obs.csv" : args.out_obs;
  const std::string truth_path =
      args.out_truth.empty() ? args.prefix + "_truth.json" : args.out_truth;

  if (args.header) {
    std::vector<std::string> names;
    for (int j = 0; j < inst.dict.num_cols(); ++j)
      names.push_back("atom_" + std::to_string(j));
    write_csv_matrix(dict_path, inst.dict.entries(), &names);
  } else {
    write_csv_matrix(dict_path, inst.dict.entries());
  }
  write_csv_matrix(obs_path, inst.y.values);
  write_ground_truth_json(truth_path, inst.truth, inst.support);

  std::cout << "wrote " << dict_path << ", " << obs_path << ", " << truth_path << "\n";
  return 0;
}

struct SolveArgs {
  std::string dict_path, obs_path, out_path;
  double gamma = 0.0;
  std::string solver = "admm";
  bool header = false;
  SolverOptions opts;
};

int cmd_solve(SolveArgs& args) {
  const Matrix A = read_csv_matrix(args.dict_path, args.header);
  const Matrix obs = read_csv_matrix(args.obs_path);
  if (obs.rows() != A.rows())
    throw ParseError("observation rows (" + std::to_string(obs.rows()) +
                     ") do not match dictionary rows (" + std::to_string(A.rows()) +
                     ")");
  if (args.gamma < 0.0) throw UsageError("gamma must be non-negative");
  if (args.solver != "admm" && args.solver != "nnls")
    throw UsageError("solver must be admm or nnls");
  if (args.solver == "nnls" && args.gamma != 0.0)
    throw UsageError("the nnls solver requires gamma 0");

  const Dictionary dict(A);
  nlohmann::json out;
  out["gamma"] = args.gamma;
  out["solver"] = args.solver;
  nlohmann::json solutions = nlohmann::json::array();
  bool all_converged = true;
  for (Eigen::Index c = 0; c < obs.cols(); ++c) {
    const Observation y{Vector(obs.col(c))};
    Solution sol;
    if (args.solver == "nnls") {
      sol = solve_nnls(dict, y, args.opts);
    } else {
      sol = solve_nlasso(Problem(dict, y, args.gamma), args.opts);
    }
    all_converged = all_converged && sol.converged;
    solutions.push_back(solution_to_json(sol, args.opts.kkt_tol));
  }
  out["solutions"] = solutions;

  const std::string text = out.dump(2) + "\n";
  if (args.out_path.empty()) {
    std::cout << text;
  } else {
    atomic_write_text(args.out_path, text);
  }
  if (!all_converged) {
    std::cerr << "warning: solver did not converge on every observation\n";
    return kExitNumeric;
  }
  return 0;
}

struct CheckArgs {
  std::string dict_path, obs_path, truth_path, out_path;
  std::string support_list, conditions = "all";
  double gamma = 0.0;
  double strict_tol = 0.0;
  bool header = false;
  SolverOptions opts;
};

int cmd_check(CheckArgs& args) {
  const Matrix A = read_csv_matrix(args.dict_path, args.header);
  const Matrix obs = read_csv_matrix(args.obs_path);
  if (obs.rows() != A.rows())
    throw ParseError("observation rows do not match dictionary rows");
  if (obs.cols() != 1)
    throw UsageError("check expects a single-column observation file");
  if (args.gamma < 0.0) throw UsageError("gamma must be non-negative");

  const bool wants_erc_mrc = args.conditions.find("erc-mrc") != std::string::npos ||
                             args.conditions == "all";
  const bool erc_mrc_explicit = args.conditions.find("erc-mrc") != std::string::npos;
  if (erc_mrc_explicit && args.truth_path.empty())
    throw UsageError("--conditions erc-mrc requires --truth");

  const Dictionary dict(A);
  const Observation y{Vector(obs.col(0))};
  const Support support(parse_int_list(args.support_list, "--support"));
  support.validate_for(dict.num_cols());

  const SubdictionaryCache cache = build_cache(dict, support, args.opts.rank_tol);
  if (!cache.full_rank()) {
    std::cerr << "error: subdictionary is rank-deficient (rank " << cache.rank()
              << " of " << cache.size()
              << "); the coherence metrics are undefined for this support\n";
    return kExitNumeric;
  }

  const Problem p(dict, y, args.gamma);

  std::optional<LoadedTruth> truth;
  if (!args.truth_path.empty()) truth = read_ground_truth_json(args.truth_path);

  const Solution restricted = solve_restricted(p, support, args.opts);
  const ConditionReport rep = evaluate_conditions(
      p, support, cache, (truth && wants_erc_mrc) ? &truth->truth : nullptr,
      &restricted, args.strict_tol);
  const GammaInterval interval = gamma_interval(dict, y, support, cache);

  nlohmann::json out = condition_report_to_json(rep);
  out["gamma"] = args.gamma;
  out["support"] = support_to_json(support);
  out["gamma_interval"] = {{"lo", interval.lo},
                           {"hi", interval.hi},
                           {"empty", interval.empty()}};

  auto show = [](bool b) { return b ? "true " : "false"; };
  std::cout << "condition    verdict  margin\n";
  std::cout << "apmrc        " << show(rep.verdicts.apmrc) << "    mcc "
            << format_full(rep.mcc_margin) << ", min nscc "
            << format_full(rep.min_nscc_margin()) << "\n";
  std::cout << "perc-max     " << show(rep.verdicts.perc_max) << "    "
            << format_full(rep.perc_max_margin) << "\n";
  std::cout << "perc-amax    " << show(rep.verdicts.perc_amax) << "    "
            << format_full(rep.perc_amax_margin) << "\n";
  if (rep.verdicts.erc_mrc) {
    std::cout << "erc-mrc      " << show(*rep.verdicts.erc_mrc) << "    noise "
              << format_full(*rep.erc_mrc_noise_margin) << ", coef "
              << format_full(*rep.erc_mrc_coef_margin) << "\n";
  }
  if (rep.verdicts.base_strict) {
    std::cout << "base-strict  " << show(*rep.verdicts.base_strict)
              << (rep.base_partial ? "    (partial: non-unique restricted solution)"
                                   : "")
              << "\n";
    std::cout << "base-weak    " << show(*rep.verdicts.base_weak) << "\n";
  }
  std::cout << "erc " << format_full(rep.erc) << ", perc " << format_full(rep.perc)
            << "\n";
  if (interval.empty()) {
    std::cout << "gamma interval: empty\n";
  } else {
    std::cout << "gamma interval: (" << format_full(interval.lo) << ", "
              << format_full(interval.hi) << ")\n";
  }

  const std::string text = out.dump(2) + "\n";
  if (!args.out_path.empty()) atomic_write_text(args.out_path, text);
  return 0;  // verdicts are data, not an error status
}

struct EvalArgs {
  int instances = 100;
  int L = 50, N = 12;
  std::string J_list = "2,3";
  std::string gammas = "0.2,0.1,0.05";
  bool scale_gamma = false;
  double coherence = 0.8;
  double coef_min = 0.5, coef_max = 1.0;
  std::vector<std::string> distortions;
  std::uint64_t seed_base = 1;
  double boundary_tol = 1e-8;
  std::string prefix = "eval";
  int workers = 0;
  SolverOptions opts;
};

int cmd_eval(EvalArgs& args) {
  if (args.instances < 1) throw UsageError("--instances must be positive");
  const std::vector<int> js = parse_int_list(args.J_list, "--J");
  std::vector<DistortionSpec> distortions;
  if (args.distortions.empty()) distortions.push_back(DistortionSpec::none());
  for (const auto& d : args.distortions) distortions.push_back(parse_distortion(d));

  std::vector<InstanceSpec> specs;
  specs.reserve(static_cast<size_t>(args.instances));
  for (int i = 0; i < args.instances; ++i) {
    InstanceSpec s;
    s.L = args.L;
    s.N = args.N;
    s.J = js[static_cast<size_t>(i) % js.size()];
    s.coherence_target = args.coherence;
    s.coef_min = args.coef_min;
    s.coef_max = args.coef_max;
    s.distortion = distortions[static_cast<size_t>(i) % distortions.size()];
    s.seed = args.seed_base + static_cast<std::uint64_t>(i);
    s.validate();
    specs.push_back(std::move(s));
  }

  EvalOptions opts;
  opts.gammas = parse_double_list(args.gammas, "--gammas");
  opts.scale_gamma = args.scale_gamma;
  opts.boundary_tol = args.boundary_tol;
  opts.solver = args.opts;
  opts.workers = worker_count(args.workers, specs.size());

  const BatchResult batch = evaluate_batch(specs, opts);

  for (size_t g = 0; g < batch.gammas.size(); ++g) {
    std::ostringstream name;
    name << args.prefix << "_confusion_g" << g << ".csv";
    write_confusion_csv(name.str(), batch.confusion[g]);
  }
  write_records_csv(args.prefix + "_records.csv", batch);

  std::cout << "instances: " << args.instances << ", gammas: " << batch.gammas.size()
            << ", unusable: " << batch.unusable << "\n";
  for (size_t g = 0; g < batch.gammas.size(); ++g) {
    std::cout << "gamma " << format_full(batch.gammas[g]) << ":";
    for (int c = 0; c < kNumMrcs; ++c) {
      const ConfusionMatrix& cm = batch.confusion[g][static_cast<size_t>(c)];
      std::cout << "  " << kMrcNames[static_cast<size_t>(c)] << " [" << cm.true_correct
                << "," << cm.true_incorrect << "," << cm.false_correct << ","
                << cm.false_incorrect << "]";
      if (cm.boundary_excluded > 0) std::cout << " (b" << cm.boundary_excluded << ")";
    }
    std::cout << "\n";
  }
  return 0;
}

void add_solver_flags(CLI::App* cmd, SolverOptions& opts) {
  cmd->add_option("--tol", opts.tol, "residual norm target");
  cmd->add_option("--max-iter", opts.max_iter, "iteration cap");
  cmd->add_option("--kkt-tol", opts.kkt_tol, "certificate tolerance");
  cmd->add_option("--support-tol", opts.support_tol, "support extraction factor");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-negative sparse regression: solvers, recovery conditions, "
               "and batch validation"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic instance");
  cgen->add_option("--L", gen.spec.L, "number of bands")->required();
  cgen->add_option("--N", gen.spec.N, "number of atoms")->required();
  cgen->add_option("--J", gen.spec.J, "support size")->required();
  cgen->add_option("--seed", gen.spec.seed, "random seed");
  cgen->add_option("--coherence", gen.spec.coherence_target,
                   "max pairwise |cosine| between atoms");
  cgen->add_option("--coef-min", gen.spec.coef_min, "smallest coefficient");
  cgen->add_option("--coef-max", gen.spec.coef_max, "largest coefficient");
  cgen->add_option("--distortion", gen.distortion,
                   "none | gaussian:sigma=S | directional:j=J,beta=B,sign=+/- | "
                   "bilinear:w=W");
  cgen->add_option("--prefix", gen.prefix, "output file prefix");
  cgen->add_option("--out-dict", gen.out_dict, "dictionary CSV path");
  cgen->add_option("--out-obs", gen.out_obs, "observation CSV path");
  cgen->add_option("--out-truth", gen.out_truth, "ground-truth JSON path");
  cgen->add_flag("--header", gen.header, "write atom names as a CSV header");

  SolveArgs solve;
  CLI::App* csolve = app.add_subcommand("solve", "solve one or more observations");
  csolve->add_option("--dict", solve.dict_path, "dictionary CSV")->required();
  csolve->add_option("--obs", solve.obs_path, "observations CSV, one per column")
      ->required();
  csolve->add_option("--gamma", solve.gamma, "sparsity trade-off")->required();
  csolve->add_option("--solver", solve.solver, "admm | nnls");
  csolve->add_option("--out", solve.out_path, "solution JSON path (default stdout)");
  csolve->add_flag("--header", solve.header, "dictionary CSV has a header row");
  add_solver_flags(csolve, solve.opts);

  CheckArgs check;
  CLI::App* ccheck = app.add_subcommand("check", "evaluate recovery conditions");
  ccheck->add_option("--dict", check.dict_path, "dictionary CSV")->required();
  ccheck->add_option("--obs", check.obs_path, "observation CSV, single column")
      ->required();
  ccheck->add_option("--support", check.support_list, "candidate support, e.g. 0,2,5")
      ->required();
  ccheck->add_option("--gamma", check.gamma, "sparsity trade-off")->required();
  ccheck->add_option("--truth", check.truth_path, "ground-truth JSON (for erc-mrc)");
  ccheck->add_option("--conditions", check.conditions,
                     "all or a comma list including erc-mrc");
  ccheck->add_option("--strict-tol", check.strict_tol, "margin tolerance for verdicts");
  ccheck->add_option("--out", check.out_path, "report JSON path");
  ccheck->add_flag("--header", check.header, "dictionary CSV has a header row");
  add_solver_flags(ccheck, check.opts);

  EvalArgs eval;
  CLI::App* ceval = app.add_subcommand("eval", "batch evaluation with confusion CSVs");
  ceval->add_option("--instances", eval.instances, "number of instances");
  ceval->add_option("--L", eval.L, "bands");
  ceval->add_option("--N", eval.N, "atoms");
  ceval->add_option("--J", eval.J_list, "support sizes, cycled (e.g. 2,3)");
  ceval->add_option("--gammas", eval.gammas, "trade-off values, comma separated");
  ceval->add_flag("--scale-gamma", eval.scale_gamma,
                  "multiply each gamma by ||A'y||_inf of the instance");
  ceval->add_option("--coherence", eval.coherence, "max pairwise |cosine|");
  ceval->add_option("--coef-min", eval.coef_min, "smallest coefficient");
  ceval->add_option("--coef-max", eval.coef_max, "largest coefficient");
  ceval->add_option("--distortion", eval.distortions,
                    "distortion spec, repeatable; instances cycle through");
  ceval->add_option("--seed-base", eval.seed_base, "seed of instance 0");
  ceval->add_option("--boundary-tol", eval.boundary_tol,
                    "margin band excluded from tallies");
  ceval->add_option("--out-prefix", eval.prefix, "output file prefix");
  ceval->add_option("--workers", eval.workers,
                    "worker threads (0 = hardware, capped by NNSPARSE_THREADS)");
  add_solver_flags(ceval, eval.opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (csolve->parsed()) return cmd_solve(solve);
    if (ccheck->parsed()) return cmd_check(check);
    if (ceval->parsed()) return cmd_eval(eval);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const GenerationError& e) {
    std::cerr << "infeasible spec: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const NumericFailureError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InvalidSupportError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "parse error: " << e.what() << "\n";  // input data failed validation
    return kExitParse;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
