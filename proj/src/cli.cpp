#include "selfcens/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selfcens/errors.hpp"
#include "selfcens/io.hpp"
#include "selfcens/oracle.hpp"

namespace selfcens {

namespace {

struct GlobalArgs {
  std::size_t threads = 0;
};

struct EstimateArgs {
  std::string data, config, method, functional, out;
  std::size_t bootstrap = 0;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

struct SimulateArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

struct OracleArgs {
  std::string config, out;
};

struct ValidateArgs {
  std::string data, config, out;
  bool json = false;
};

Json section(const Json& config, const char* key) {
  if (config.is_object() && config.contains(key)) return config.at(key);
  return Json::object();
}

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  Json j = read_json_file(path);
  if (!j.is_object()) throw ConfigurationError(path + ": top level must be an object");
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

int run_validate(const ValidateArgs& a, std::ostream& out) {
  const Json config = load_config(a.config);
  const Dataset data = read_csv(a.data, schema_from_json(section(config, "data")));
  const EstimationOptions opts = options_from_json(section(config, "estimation"));
  const PatternSet ps = enumerate_patterns(data);
  const ValidationReport rep = validate_positivity(ps, opts.min_count, opts.min_propensity);
  if (!a.out.empty()) write_text_file(a.out, dump(to_json(rep, ps)));
  if (a.json)
    out << dump(to_json(rep, ps));
  else
    out << validation_text(rep, ps);
  return rep.valid() ? kExitOk : kExitInput;
}

int run_estimate(const EstimateArgs& a, const GlobalArgs& g, std::ostream& out) {
  const Json config = load_config(a.config);
  const Dataset data = read_csv(a.data, schema_from_json(section(config, "data")));
  const WorkingModelSpec spec = spec_from_json(section(config, "model"), data.p(), data.d());
  const EstimationOptions opts = options_from_json(section(config, "estimation"));
  const Json fcfg = section(config, "functional");
  const Functional f = a.functional.empty() ? functional_from_json(fcfg) : functional_by_name(a.functional, fcfg);
  const Method method = method_from_string(a.method.empty() ? config.value("method", std::string("dr")) : a.method);

  const EstimationResult res = estimate(method, data, spec, f, opts);
  Json report = to_json(res);
  std::string text = estimation_text(res);

  if (a.bootstrap > 0) {
    std::vector<std::string> names = res.component_names;
    for (const auto& c : res.contrasts) names.push_back(c.name);
    EstimationOptions inner = opts;
    inner.compute_covariance = false;
    const Pipeline pipeline = [&](const Dataset& d) {
      const EstimationResult r = estimate(method, d, spec, f, inner);
      Eigen::VectorXd v(r.psi_hat.size() + static_cast<Eigen::Index>(r.contrasts.size()));
      v.head(r.psi_hat.size()) = r.psi_hat;
      for (std::size_t k = 0; k < r.contrasts.size(); ++k)
        v(r.psi_hat.size() + static_cast<Eigen::Index>(k)) = r.contrasts[k].estimate;
      return v;
    };
    const std::uint64_t seed = a.seed.value_or(config.value("seed", std::uint64_t{1}));
    const BootstrapResult boot = bootstrap(data, pipeline, a.bootstrap, seed, opts.level, g.threads);
    report["bootstrap"] = to_json(boot, names);
    report["bootstrap"]["seed"] = seed;
    std::ostringstream o;
    o << "bootstrap: " << boot.replicates.rows() << " replicates, " << boot.failed.size() << " failed\n";
    for (std::size_t k = 0; k < names.size(); ++k)
      o << "  " << names[k] << " percentile [" << format_double(boot.intervals[k].lower) << ", "
        << format_double(boot.intervals[k].upper) << "]\n";
    text += o.str();
  }

  if (!a.out.empty()) write_text_file(a.out, dump(report));
  out << (a.json ? dump(report) : text);
  return kExitOk;
}

int run_simulate(const SimulateArgs& a, const GlobalArgs& g, std::ostream& out) {
  const Json config = load_config(a.config);
  std::vector<ScenarioConfig> scenarios = scenarios_from_json(section(config, "simulation"));
  std::vector<MonteCarloReport> reports;
  Json all = Json::array();
  for (auto& sc : scenarios) {
    if (a.seed) sc.seed = *a.seed;
    if (g.threads > 0) sc.threads = g.threads;
    reports.push_back(run_scenario(sc));
    all.push_back(to_json(reports.back()));
  }
  const CoverageTable table = coverage_table(reports);
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    const std::filesystem::path dir(a.out);
    write_text_file((dir / "report.json").string(), dump(all));
    write_text_file((dir / "coverage.txt").string(), table.text);
    write_text_file((dir / "coverage.csv").string(), table.csv);
    for (const auto& r : reports)
      write_text_file((dir / ("replicates_" + std::string(to_string(r.scenario)) + ".csv")).string(),
                      replicate_csv(r));
  }
  out << table.text;
  return kExitOk;
}

PatternSet patterns_from_json(const Json& j, std::size_t p) {
  if (!j.is_array()) throw ConfigurationError("oracle.patterns must be an array of 0/1 arrays");
  PatternSet ps(p);
  for (const auto& row : j) {
    std::vector<int> bits;
    try {
      bits = row.get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError(std::string("oracle.patterns: ") + e.what());
    }
    if (bits.size() != p) throw ConfigurationError("oracle.patterns entries must have length p");
    ps.add(Pattern::from_bits(bits));
  }
  return ps;
}

int run_oracle(const OracleArgs& a, std::ostream& out) {
  const Json config = load_config(a.config);
  const Json oc = section(config, "oracle");
  const double tol = oc.value("tol", 1e-8);

  DiscreteJoint joint;
  if (oc.contains("joint_csv")) {
    joint = read_joint_csv(oc.at("joint_csv").get<std::string>());
  } else {
    if (!oc.contains("truth")) throw ConfigurationError("oracle section needs 'truth' or 'joint_csv'");
    const WorkingModelSpec truth = spec_from_json(oc.at("truth"));
    const PatternSet ps =
        oc.contains("patterns") ? patterns_from_json(oc.at("patterns"), truth.p) : PatternSet::full_lattice(truth.p);
    std::vector<double> x_levels;
    if (oc.contains("x_levels")) x_levels = oc.at("x_levels").get<std::vector<double>>();
    joint = construct_self_censoring_joint(truth, ps, x_levels);
  }
  joint.validate();

  Json report;
  const SelfCensoringCheck sc = verify_self_censoring(joint);
  report["self_censoring"] = {{"holds", sc.holds}, {"max_violation", sc.max_violation}};
  const ObservedLaw observed = observe(joint);

  bool ok = sc.holds;
  Json items = Json::array();
  for (std::size_t i = 0; i < joint.p; ++i) {
    const RestrictionResult rr = test_self_censoring_restriction(observed, i);
    items.push_back({{"item", i + 1}, {"status", to_string(rr.status)}});
    if (rr.status == RestrictionStatus::rejected) ok = false;
  }
  report["restriction_test"] = items;

  try {
    const DiscreteJoint rec = reconstruct_joint(observed);
    const double err = max_abs_difference(rec, joint);
    report["reconstruction"] = {{"max_abs_error", err}, {"tolerance", tol}, {"ok", err < tol}};
    if (!(err < tol)) ok = false;
  } catch (const IdentificationError& e) {
    report["reconstruction"] = {{"ok", false}, {"error", e.what()}, {"null_space_dim", e.null_space_dim()}};
    ok = false;
  }
  report["passed"] = ok;
  if (!a.out.empty()) write_text_file(a.out, dump(report));
  out << dump(report);
  return ok ? kExitOk : kExitIdentification;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimation under self-censoring nonmonotone missingness", "selfcens"};
  app.require_subcommand(1);
  GlobalArgs g;
  app.add_option("--threads", g.threads, "Worker cap (0: SELFCENS_THREADS or hardware)");

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Fit IPW, REG, DR or the MAR benchmark");
  est->add_option("--data", ea.data, "CSV data file")->required();
  est->add_option("--config", ea.config, "JSON configuration");
  est->add_option("--method", ea.method, "ipw | reg | dr | mar");
  est->add_option("--functional", ea.functional, "mean | risk-diff");
  est->add_option("--bootstrap", ea.bootstrap, "Bootstrap replicates");
  est->add_option("--seed", ea.seed, "Bootstrap seed");
  est->add_option("--out", ea.out, "Write the JSON report here");
  est->add_flag("--json", ea.json, "Print the JSON report instead of text");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run Monte Carlo scenarios");
  sim->add_option("--config", sa.config, "JSON configuration");
  sim->add_option("--out", sa.out, "Output directory");
  sim->add_option("--seed", sa.seed, "Master seed");

  OracleArgs oa;
  auto* orc = app.add_subcommand("oracle-check", "Identification round trip on a discrete law");
  orc->add_option("--config", oa.config, "JSON configuration")->required();
  orc->add_option("--out", oa.out, "Write the JSON report here");

  ValidateArgs va;
  auto* val = app.add_subcommand("validate", "Pattern and positivity report");
  val->add_option("--data", va.data, "CSV data file")->required();
  val->add_option("--config", va.config, "JSON configuration");
  val->add_option("--out", va.out, "Write the JSON report here");
  val->add_flag("--json", va.json, "Print the JSON report instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitInput;
  }

  try {
    if (*est) return run_estimate(ea, g, out);
    if (*sim) return run_simulate(sa, g, out);
    if (*orc) return run_oracle(oa, out);
    if (*val) return run_validate(va, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const IdentificationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIdentification;
  } catch (const nlohmann::json::exception& e) {
    err << "error: configuration: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

int cli_main(int argc, char** argv) { return cli_main(argc, argv, std::cout, std::cerr); }

}  // namespace selfcens
