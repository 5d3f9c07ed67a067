#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "selfcens/cli.hpp"
#include "selfcens/errors.hpp"
#include "selfcens/io.hpp"
#include "selfcens/random.hpp"
#include "selfcens/simharness.hpp"

using namespace selfcens;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("selfcens_" + tag + "_" + std::to_string(substream_seed(std::hash<std::string>{}(tag), 0) % 1000000));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code = 0;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "selfcens");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Run r;
  r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Synthetic Gaussian dataset used by the golden estimate report.
void write_golden_data(const std::string& path) {
  const auto s = sample_dataset(default_truth(), 1500, 20240601);
  write_csv(s.data, path);
}

void check_close(const Json& got, const Json& want, const std::string& where) {
  INFO(where);
  REQUIRE(got.type() == want.type());
  if (want.is_number_float()) {
    const double a = got.get<double>(), b = want.get<double>();
    CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)));
  } else if (want.is_array()) {
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) check_close(got[k], want[k], where + "[" + std::to_string(k) + "]");
  } else if (want.is_object()) {
    for (auto it = want.begin(); it != want.end(); ++it) {
      REQUIRE(got.contains(it.key()));
      check_close(got[it.key()], it.value(), where + "." + it.key());
    }
  } else {
    CHECK(got == want);
  }
}

}  // namespace

TEST_CASE("read_csv: missing tokens mask outcome cells") {
  const auto d = parse_dataset("x1,y1,y2,y3\n0.5,1.2,NA,0.3\n");
  CHECK(d.x()(0, 0) == 0.5);
  CHECK(d.y()(0, 0) == 1.2);
  CHECK(std::isnan(d.y()(0, 1)));
  CHECK(d.y()(0, 2) == 0.3);
  CHECK(d.pattern_codes()[0] == 0b101u);
}

TEST_CASE("read_csv: complete file gives all-ones patterns") {
  const auto d = parse_dataset("x,ya,yb\n1,2,3\n4,5,6\n");
  for (auto c : d.pattern_codes()) CHECK(c == 0b11u);
}

TEST_CASE("read_csv: errors") {
  CHECK_THROWS_AS(parse_dataset("x1,y1\nNA,1\n"), InputError);
  CHECK_THROWS_AS(parse_dataset("x1,y1\n0.1,abc\n"), InputError);
  CsvSchema schema;
  schema.covariates = {"x1"};
  schema.outcomes = {"y9"};
  CHECK_THROWS_AS(parse_dataset("x1,y1\n0.1,1\n", schema), InputError);
  CHECK_THROWS_AS(parse_dataset("x1,y1\n0.1\n"), InputError);
  CHECK_THROWS_AS(read_csv("/nonexistent/file.csv"), InputError);
}

TEST_CASE("read_csv: explicit schema, custom tokens, quoting and CRLF") {
  CsvSchema schema;
  schema.covariates = {"age"};
  schema.outcomes = {"b", "a"};
  schema.missing_tokens = {"."};
  const auto d = parse_dataset("\"a\",age,b,ignored\r\n1,\"2.5\",.,\"x,y\"\r\n", schema);
  CHECK(d.outcome_names() == std::vector<std::string>{"b", "a"});
  CHECK(d.x()(0, 0) == 2.5);
  CHECK(d.pattern_codes()[0] == 0b10u);
  CHECK(d.y()(0, 1) == 1.0);
}

TEST_CASE("write_csv then read_csv is the identity") {
  TempDir dir("roundtrip");
  const auto s = sample_dataset(default_truth(), 300, 9);
  write_csv(s.data, dir.file("d.csv"));
  const auto back = read_csv(dir.file("d.csv"));
  CHECK(back.pattern_codes() == s.data.pattern_codes());
  CHECK(back.x() == s.data.x());
  CHECK(back.covariate_names() == s.data.covariate_names());
  CHECK(back.outcome_names() == s.data.outcome_names());
  for (std::size_t r = 0; r < back.n(); ++r)
    for (std::size_t j = 0; j < back.p(); ++j)
      if (back.observed(r, j))
        CHECK(back.y()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) ==
              s.data.y()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 6.02214076e23})
    CHECK(parse_double(format_double(v), "t") == v);
}

TEST_CASE("model configuration round-trips") {
  auto spec = default_truth();
  spec.exp_scale = 1.5;
  const auto back = spec_from_json(spec_to_json(spec));
  CHECK(back.p == spec.p);
  CHECK(back.gaussian().coef == spec.gaussian().coef);
  CHECK(back.gaussian().cov == spec.gaussian().cov);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.alpha1[i] == spec.alpha1[i]);
    CHECK(back.gamma[i] == spec.gamma[i]);
  }
  CHECK(back.alpha2 == spec.alpha2);
  CHECK(back.exp_scale == 1.5);
}

TEST_CASE("configuration errors are reported as input errors") {
  CHECK_THROWS_AS(spec_from_json(Json::parse(R"({"p": 2, "outcome": {"family": "poisson"}})")), InputError);
  CHECK_THROWS_AS(spec_from_json(Json::parse(R"({"p": 2, "alpha1": "x"})")), InputError);
  CHECK_THROWS_AS(functional_by_name("median", Json::object()), InputError);
  CHECK_THROWS_AS(options_from_json(Json::parse(R"({"level": 2})")), InputError);
}

TEST_CASE("cli: unknown flags print usage and exit 1") {
  const auto r = run_cli({"estimate", "--bogus"});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run_cli({}).code == kExitInput);
  CHECK(run_cli({"--help"}).code == kExitOk);
}

TEST_CASE("cli: validate on monotone missingness exits 1 with the missing patterns") {
  TempDir dir("validate");
  std::string csv = "x1,y1,y2,y3\n";
  for (int k = 0; k < 30; ++k) {
    const std::string x = std::to_string(k * 0.01);
    csv += x + (k % 3 == 0 ? ",1,2,3\n" : k % 3 == 1 ? ",1,2,NA\n" : ",1,NA,NA\n");
  }
  write_text_file(dir.file("mono.csv"), csv);
  const auto r = run_cli({"validate", "--data", dir.file("mono.csv"), "--json"});
  CHECK(r.code == kExitInput);
  const auto j = Json::parse(r.out);
  CHECK(j["valid"] == false);
  const auto missing = j["missing_patterns"].get<std::vector<std::string>>();
  CHECK(missing == std::vector<std::string>{"(1,0,1)"});
}

TEST_CASE("cli: estimate dr mean matches the golden report") {
  TempDir dir("estimate");
  write_golden_data(dir.file("data.csv"));
  const auto r = run_cli({"estimate", "--data", dir.file("data.csv"), "--method", "dr", "--functional", "mean",
                          "--json", "--out", dir.file("report.json")});
  REQUIRE(r.code == kExitOk);
  const auto got = Json::parse(r.out);
  for (const char* key : {"psi_hat", "se", "ci", "gamma_hat", "diagnostics"}) CHECK(got.contains(key));
  CHECK(read_text_file(dir.file("report.json")) == r.out);
  const auto want = read_json_file(std::string(SELFCENS_GOLDEN_DIR) + "/estimate_dr_mean.json");
  for (const char* key : {"method", "psi_hat", "se", "ci", "gamma_hat"}) check_close(got[key], want[key], key);
  CHECK(got["diagnostics"]["converged"] == true);
}

TEST_CASE("cli: estimate with bootstrap on binary data reports percentile intervals") {
  TempDir dir("boot");
  MultinomialOutcome tab;
  tab.support.assign(3, {0.0, 1.0});
  // Strongly associated outcomes keep the odds ratios well identified in resamples.
  tab.probs = {0.25, 0.05, 0.05, 0.08, 0.05, 0.08, 0.08, 0.36};
  WorkingModelSpec truth = make_spec(3, 0, tab);
  for (auto& a : truth.alpha1) a(0) = 0.9;
  for (auto& g : truth.gamma) g(0) = 0.5;
  write_csv(sample_dataset(truth, 2000, 3).data, dir.file("bin.csv"));
  Json cfg;
  cfg["model"] = spec_to_json(make_spec(3, 0, tab));
  cfg["functional"] = {{"name", "risk-diff"}, {"treat", 1}, {"outcome", 2}, {"stratum", 3}};
  write_text_file(dir.file("cfg.json"), cfg.dump());
  const std::vector<std::string> args{"--threads", "1", "estimate", "--data", dir.file("bin.csv"), "--config",
                                      dir.file("cfg.json"), "--method", "ipw", "--bootstrap", "40",
                                      "--seed", "5", "--json"};
  const auto a = run_cli(args);
  REQUIRE(a.code == kExitOk);
  const auto b = run_cli(args);
  CHECK(a.out == b.out);
  const auto j = Json::parse(a.out);
  CHECK(j["contrasts"].size() == 2);
  CHECK(j["bootstrap"]["percentile_ci"].size() == 6);
}

TEST_CASE("cli: simulate twice with the same seed gives identical reports") {
  TempDir dir("simulate");
  Json cfg;
  cfg["simulation"] = {{"scenarios", {"TT", "FT"}}, {"n", 500}, {"replications", 3}, {"estimators", {"ipw", "dr"}}};
  write_text_file(dir.file("cfg.json"), cfg.dump());
  const auto a = run_cli({"simulate", "--config", dir.file("cfg.json"), "--out", dir.file("a"), "--seed", "11"});
  const auto b = run_cli({"--threads", "2", "simulate", "--config", dir.file("cfg.json"), "--out", dir.file("b"),
                          "--seed", "11"});
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  CHECK(a.out == b.out);
  for (const char* f : {"report.json", "coverage.csv", "coverage.txt", "replicates_TT.csv", "replicates_FT.csv"})
    CHECK(read_text_file(dir.file(std::string("a/") + f)) == read_text_file(dir.file(std::string("b/") + f)));
  const auto c = run_cli({"simulate", "--config", dir.file("cfg.json"), "--seed", "12"});
  CHECK(c.out != a.out);
}

TEST_CASE("cli: oracle-check passes on a self-censoring law and fails on a leaking one") {
  TempDir dir("oracle");
  Json cfg;
  cfg["oracle"]["truth"] = {{"p", 3},
                            {"d", 1},
                            {"alpha1", {{0.5, 0.3}, {0.2, -0.4}, {0.8, 0.1}}},
                            {"gamma", {{0.6}, {-0.5}, {0.3}}},
                            {"alpha2", {{0.2, 0.1}, {-0.1, 0.3}}},
                            {"outcome",
                             {{"family", "multinomial"},
                              {"support", {{0, 1}, {0, 1}, {0, 1}}},
                              {"probs", {0.2, 0.08, 0.1, 0.12, 0.14, 0.09, 0.11, 0.16}}}}};
  cfg["oracle"]["x_levels"] = {-0.5, 0.5};
  write_text_file(dir.file("ok.json"), cfg.dump());
  const auto ok = run_cli({"oracle-check", "--config", dir.file("ok.json")});
  CHECK(ok.code == kExitOk);
  CHECK(Json::parse(ok.out)["passed"] == true);

  // Same table with the mass of one pattern shifted between Y_2 levels: R_1 now leaks Y_2.
  std::string csv = "x,y1,y2,r1,r2,prob\n";
  const double f[4] = {0.3, 0.2, 0.15, 0.35};
  for (int c = 0; c < 4; ++c) {
    const int y1 = c % 2, y2 = c / 2;
    const double pi1 = 1.0 / (1.0 + std::exp(-(0.5 + 0.8 * y1 + 1.5 * y2)));
    const double pi2 = 1.0 / (1.0 + std::exp(-(0.7 - 0.6 * y2)));
    for (int r = 0; r < 4; ++r) {
      const int r1 = r % 2, r2 = r / 2;
      const double v = f[c] * (r1 ? pi1 : 1 - pi1) * (r2 ? pi2 : 1 - pi2);
      csv += "," + std::to_string(y1) + "," + std::to_string(y2) + "," + std::to_string(r1) + "," +
             std::to_string(r2) + "," + format_double(v) + "\n";
    }
  }
  write_text_file(dir.file("leak.csv"), csv);
  Json leak;
  leak["oracle"]["joint_csv"] = dir.file("leak.csv");
  write_text_file(dir.file("leak.json"), leak.dump());
  const auto bad = run_cli({"oracle-check", "--config", dir.file("leak.json")});
  CHECK(bad.code == kExitIdentification);
  CHECK(Json::parse(bad.out)["passed"] == false);
}

TEST_CASE("cli: the installed binary maps errors to exit codes") {
  const std::string bin = SELFCENS_CLI_PATH;
  CHECK(WEXITSTATUS(std::system((bin + " frobnicate > /dev/null 2>&1").c_str())) == 1);
  CHECK(WEXITSTATUS(std::system((bin + " estimate --data /nonexistent.csv > /dev/null 2>&1").c_str())) == 1);
}
