#include "selfcens/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "selfcens/errors.hpp"

namespace selfcens {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& where) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (text.empty() || end != begin + text.size())
    throw InputError(where + ": cannot parse '" + text + "' as a number");
  return v;
}

// ---------------------------------------------------------------------------
// CSV

CsvTable parse_csv(std::string_view text, const std::string& where) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && k + 1 < text.size() && text[k + 1] == '\n') {
      // handled by the following '\n'
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw InputError(where + ": unterminated quoted field near line " + std::to_string(line));
  if (!field.empty() || !record.empty()) end_record();
  if (records.empty()) throw InputError(where + ": missing header row");

  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      throw InputError(where + ": record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                       " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

CsvTable read_csv_table(const std::string& path) { return parse_csv(read_text_file(path), path); }

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto line = [&out](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += csv_field(row[c]);
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

void write_csv_table(const CsvTable& table, const std::string& path) { write_text_file(path, to_csv(table)); }

Dataset parse_dataset(std::string_view text, const CsvSchema& schema, const std::string& where) {
  const CsvTable t = parse_csv(text, where);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (col.count(t.header[c])) throw InputError(where + ": duplicate column '" + t.header[c] + "'");
    col[t.header[c]] = c;
  }
  std::vector<std::string> xs = schema.covariates, ys = schema.outcomes;
  if (xs.empty() && ys.empty()) {
    for (const auto& h : t.header) {
      if (!h.empty() && h[0] == 'x') xs.push_back(h);
      if (!h.empty() && h[0] == 'y') ys.push_back(h);
    }
  }
  if (ys.empty()) throw InputError(where + ": no outcome columns");
  auto index_of = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw InputError(where + ": unknown column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> xi, yi;
  for (const auto& n : xs) xi.push_back(index_of(n));
  for (const auto& n : ys) yi.push_back(index_of(n));
  auto is_missing = [&](const std::string& s) {
    for (const auto& tok : schema.missing_tokens)
      if (s == tok) return true;
    return false;
  };

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (n == 0) throw InputError(where + ": no data rows");
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(xs.size())), y(n, static_cast<Eigen::Index>(ys.size()));
  std::vector<std::uint32_t> codes(t.rows.size(), 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string loc = where + " row " + std::to_string(r + 2);
    for (std::size_t j = 0; j < xi.size(); ++j) {
      const std::string& s = row[xi[j]];
      if (is_missing(s)) throw InputError(loc + ": missing value in covariate column '" + xs[j] + "'");
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = parse_double(s, loc + " column '" + xs[j] + "'");
    }
    for (std::size_t j = 0; j < yi.size(); ++j) {
      const std::string& s = row[yi[j]];
      if (is_missing(s)) {
        y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = parse_double(s, loc + " column '" + ys[j] + "'");
      codes[r] |= 1u << j;
    }
  }
  Dataset d(std::move(x), y, std::move(codes), xs, ys);
  d.validate();
  return d;
}

Dataset read_csv(const std::string& path, const CsvSchema& schema) {
  return parse_dataset(read_text_file(path), schema, path);
}

std::string dataset_to_csv(const Dataset& data, const std::string& missing_token) {
  CsvTable t;
  t.header = data.covariate_names();
  t.header.insert(t.header.end(), data.outcome_names().begin(), data.outcome_names().end());
  for (std::size_t r = 0; r < data.n(); ++r) {
    std::vector<std::string> row;
    for (std::size_t j = 0; j < data.d(); ++j)
      row.push_back(format_double(data.x()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j))));
    for (std::size_t j = 0; j < data.p(); ++j)
      row.push_back(data.observed(r, j) ? format_double(data.y()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)))
                                        : missing_token);
    t.rows.push_back(std::move(row));
  }
  return to_csv(t);
}

void write_csv(const Dataset& data, const std::string& path, const std::string& missing_token) {
  write_text_file(path, dataset_to_csv(data, missing_token));
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("config field '") + key + "': " + e.what());
  }
}

Eigen::VectorXd vec_from(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigurationError("config field '" + what + "' must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ConfigurationError("config field '" + what + "' must be an array of numbers");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

std::vector<Eigen::VectorXd> vecs_from(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigurationError("config field '" + what + "' must be an array of arrays");
  std::vector<Eigen::VectorXd> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(vec_from(j[k], what + "[" + std::to_string(k) + "]"));
  return out;
}

}  // namespace

Json spec_to_json(const WorkingModelSpec& spec) {
  Json j;
  j["p"] = spec.p;
  j["d"] = spec.d;
  j["y0"] = vec_json(spec.y0);
  j["alpha1"] = Json::array();
  for (const auto& a : spec.alpha1) j["alpha1"].push_back(vec_json(a));
  j["gamma"] = Json::array();
  for (const auto& g : spec.gamma) j["gamma"].push_back(vec_json(g));
  j["gamma_interacts"] = spec.gamma_dim() > 1;
  j["sequential"] = spec.sequential == SequentialMode::shared ? "shared" : "pattern_specific";
  j["alpha2"] = Json::array();
  for (const auto& a : spec.alpha2) j["alpha2"].push_back(vec_json(a));
  Json o;
  if (spec.is_gaussian()) {
    const auto& g = spec.gaussian();
    o["family"] = "gaussian";
    o["coef"] = Json::array();
    for (Eigen::Index c = 0; c < g.coef.cols(); ++c) o["coef"].push_back(vec_json(g.coef.col(c)));
    o["cov"] = Json::array();
    for (Eigen::Index r = 0; r < g.cov.rows(); ++r) o["cov"].push_back(vec_json(g.cov.row(r).transpose()));
  } else {
    const auto& t = spec.multinomial();
    o["family"] = "multinomial";
    o["support"] = t.support;
    o["probs"] = t.probs;
  }
  j["outcome"] = o;
  j["propensity_covariates"] = std::string(to_string(spec.propensity_covariates));
  j["outcome_covariates"] = std::string(to_string(spec.outcome_covariates));
  j["exp_scale"] = spec.exp_scale;
  return j;
}

WorkingModelSpec spec_from_json(const Json& j, std::optional<std::size_t> p_hint, std::optional<std::size_t> d_hint) {
  if (!j.is_object()) throw ConfigurationError("model configuration must be an object");
  const Json o = j.contains("outcome") ? j.at("outcome") : Json::object();
  const std::string family = get_or<std::string>(o, "family", "gaussian");

  std::optional<std::size_t> p = j.contains("p") ? std::optional<std::size_t>(get_or<std::size_t>(j, "p", 0)) : p_hint;
  std::optional<std::size_t> d = j.contains("d") ? std::optional<std::size_t>(get_or<std::size_t>(j, "d", 0)) : d_hint;
  if (!p && family == "multinomial" && o.contains("support")) p = o.at("support").size();
  if (!p) throw ConfigurationError("model configuration needs 'p'");
  if (!d) d = 0;
  if (*p == 0 || *p > kMaxOutcomes) throw ConfigurationError("model 'p' must be in [1, 16]");
  const auto dd = static_cast<Eigen::Index>(*d + 1), pp = static_cast<Eigen::Index>(*p);

  OutcomeModel outcome;
  if (family == "gaussian") {
    GaussianOutcome g;
    g.coef = Eigen::MatrixXd::Zero(dd, pp);
    g.cov = Eigen::MatrixXd::Identity(pp, pp);
    if (o.contains("coef")) {
      const auto cols = vecs_from(o.at("coef"), "outcome.coef");
      if (static_cast<Eigen::Index>(cols.size()) != pp) throw ConfigurationError("outcome.coef needs one array per outcome");
      for (Eigen::Index c = 0; c < pp; ++c) {
        if (cols[static_cast<std::size_t>(c)].size() != dd)
          throw ConfigurationError("outcome.coef arrays must have length d + 1");
        g.coef.col(c) = cols[static_cast<std::size_t>(c)];
      }
    }
    if (o.contains("cov")) {
      const auto rows = vecs_from(o.at("cov"), "outcome.cov");
      if (static_cast<Eigen::Index>(rows.size()) != pp) throw ConfigurationError("outcome.cov must be p x p");
      for (Eigen::Index r = 0; r < pp; ++r) {
        if (rows[static_cast<std::size_t>(r)].size() != pp) throw ConfigurationError("outcome.cov must be p x p");
        g.cov.row(r) = rows[static_cast<std::size_t>(r)].transpose();
      }
    }
    outcome = g;
  } else if (family == "multinomial") {
    MultinomialOutcome t;
    if (!o.contains("support")) throw ConfigurationError("multinomial outcome needs 'support'");
    try {
      t.support = o.at("support").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError(std::string("outcome.support: ") + e.what());
    }
    if (t.support.size() != *p) throw ConfigurationError("outcome.support needs one array per outcome");
    const std::size_t cells = t.cells();
    t.probs = get_or<std::vector<double>>(o, "probs", std::vector<double>(cells, 1.0 / static_cast<double>(cells)));
    outcome = t;
  } else {
    throw ConfigurationError("unknown outcome family '" + family + "'");
  }

  const std::string seq = get_or<std::string>(j, "sequential", "shared");
  SequentialMode mode;
  if (seq == "shared")
    mode = SequentialMode::shared;
  else if (seq == "pattern_specific")
    mode = SequentialMode::pattern_specific;
  else
    throw ConfigurationError("unknown sequential mode '" + seq + "'");

  bool interacts = get_or<bool>(j, "gamma_interacts", false);
  if (j.contains("gamma")) {
    const auto g = vecs_from(j.at("gamma"), "gamma");
    if (!g.empty() && g[0].size() == dd && dd > 1) interacts = true;
  }
  WorkingModelSpec s = make_spec(*p, *d, outcome, mode, interacts);
  if (j.contains("y0")) s.y0 = vec_from(j.at("y0"), "y0");
  if (j.contains("alpha1")) s.alpha1 = vecs_from(j.at("alpha1"), "alpha1");
  if (j.contains("gamma")) s.gamma = vecs_from(j.at("gamma"), "gamma");
  if (j.contains("alpha2")) s.alpha2 = vecs_from(j.at("alpha2"), "alpha2");
  s.propensity_covariates = covariate_map_from_string(get_or<std::string>(j, "propensity_covariates", "linear"));
  s.outcome_covariates = covariate_map_from_string(get_or<std::string>(j, "outcome_covariates", "linear"));
  s.exp_scale = get_or<double>(j, "exp_scale", 1.0);
  s.validate();
  return s;
}

CsvSchema schema_from_json(const Json& j) {
  CsvSchema s;
  s.covariates = get_or<std::vector<std::string>>(j, "covariates", {});
  s.outcomes = get_or<std::vector<std::string>>(j, "outcomes", {});
  s.missing_tokens = get_or<std::vector<std::string>>(j, "missing_tokens", s.missing_tokens);
  return s;
}

EstimationOptions options_from_json(const Json& j) {
  EstimationOptions o;
  o.min_count = get_or<std::size_t>(j, "min_count", o.min_count);
  o.min_propensity = get_or<double>(j, "min_propensity", o.min_propensity);
  o.level = get_or<double>(j, "level", o.level);
  o.quadrature.nodes = get_or<std::size_t>(j, "quadrature_nodes", o.quadrature.nodes);
  o.quadrature.max_dims = get_or<std::size_t>(j, "max_quadrature_dims", o.quadrature.max_dims);
  o.solver.tol = get_or<double>(j, "tol", o.solver.tol);
  o.solver.max_iter = get_or<std::size_t>(j, "max_iter", o.solver.max_iter);
  o.start_from_spec = get_or<bool>(j, "start_from_spec", o.start_from_spec);
  if (!(o.level > 0.0 && o.level < 1.0)) throw ConfigurationError("estimation.level must be in (0, 1)");
  if (!(o.min_propensity > 0.0 && o.min_propensity < 1.0))
    throw ConfigurationError("estimation.min_propensity must be in (0, 1)");
  return o;
}

Functional functional_by_name(const std::string& name, const Json& j) {
  auto index = [&](const char* key, std::size_t fallback) {
    const std::size_t v = get_or<std::size_t>(j, key, fallback);
    if (v == 0) throw ConfigurationError(std::string("functional '") + key + "' is 1-based");
    return v - 1;
  };
  if (name == "mean") return outcome_mean(index("outcome", 1));
  if (name == "risk-diff" || name == "risk_difference")
    return risk_difference_functional(index("treat", 1), index("outcome", 2), index("stratum", 3));
  throw ConfigurationError("unknown functional '" + name + "' (expected mean or risk-diff)");
}

Functional functional_from_json(const Json& j) {
  return functional_by_name(get_or<std::string>(j, "name", "mean"), j);
}

std::vector<ScenarioConfig> scenarios_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigurationError("simulation configuration must be an object");
  ScenarioConfig base;
  if (j.contains("truth")) base.truth = spec_from_json(j.at("truth"));
  base.n = get_or<std::size_t>(j, "n", base.n);
  base.replications = get_or<std::size_t>(j, "replications", base.replications);
  base.seed = get_or<std::uint64_t>(j, "seed", base.seed);
  const std::size_t oi = get_or<std::size_t>(j, "outcome_index", 1);
  if (oi == 0) throw ConfigurationError("simulation.outcome_index is 1-based");
  base.outcome_index = oi - 1;
  base.threads = get_or<std::size_t>(j, "threads", 0);
  base.exp_scale = get_or<double>(j, "exp_scale", base.exp_scale);
  if (j.contains("estimators")) {
    base.estimators.clear();
    for (const auto& m : get_or<std::vector<std::string>>(j, "estimators", {})) base.estimators.push_back(method_from_string(m));
  }
  if (j.contains("estimation")) base.options = options_from_json(j.at("estimation"));
  std::vector<ScenarioConfig> out;
  for (const auto& s : get_or<std::vector<std::string>>(j, "scenarios", {"TT", "TF", "FT", "FF"})) {
    ScenarioConfig c = base;
    c.scenario = scenario_from_string(s);
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

Json to_json(const ValidationReport& rep, const PatternSet& ps) {
  Json j;
  j["valid"] = rep.valid();
  j["p"] = rep.p;
  j["has_complete_pattern"] = rep.has_complete_pattern;
  j["min_count"] = rep.min_count;
  j["min_propensity"] = rep.min_propensity;
  j["missing_patterns"] = Json::array();
  for (const auto& r : rep.missing_patterns) j["missing_patterns"].push_back(r.to_string());
  j["sparse_patterns"] = Json::array();
  for (const auto& [r, c] : rep.sparse_patterns) j["sparse_patterns"].push_back({{"pattern", r.to_string()}, {"count", c}});
  j["pattern_counts"] = Json::array();
  for (const auto& [code, c] : ps.counts())
    j["pattern_counts"].push_back({{"pattern", Pattern(code, ps.p()).to_string()}, {"count", c}});
  return j;
}

Json to_json(const EstimationResult& res) {
  Json j;
  j["method"] = std::string(to_string(res.method));
  j["component_names"] = res.component_names;
  j["psi_hat"] = vec_json(res.psi_hat);
  j["se"] = vec_json(res.psi_se);
  j["ci"] = Json::array();
  for (const auto& c : res.psi_ci) j["ci"].push_back({c.lower, c.upper});
  j["contrasts"] = Json::array();
  for (const auto& c : res.contrasts)
    j["contrasts"].push_back({{"name", c.name}, {"estimate", c.estimate}, {"se", c.se}, {"ci", {c.ci.lower, c.ci.upper}}});
  Json gam = Json::array(), params = Json::array();
  for (std::size_t k = 0; k < res.theta_names.size(); ++k) {
    const auto est = res.parameter(res.theta_names[k]);
    Json e{{"name", res.theta_names[k]}, {"estimate", est->first}, {"se", est->second}};
    if (res.theta_names[k].rfind("gamma[", 0) == 0) gam.push_back(e);
    params.push_back(e);
  }
  if (res.method == Method::mar)
    for (std::size_t i = 0; i < res.fitted.p; ++i)
      for (std::size_t k = 0; k < res.fitted.gamma_dim(); ++k)
        gam.push_back({{"name", gamma_name(i, k, res.fitted.gamma_dim())}, {"estimate", 0.0}, {"se", 0.0}, {"fixed", true}});
  j["gamma_hat"] = gam;
  j["parameters"] = params;
  const auto& d = res.diagnostics;
  Json dj;
  dj["converged"] = d.converged;
  dj["iterations"] = d.iterations;
  dj["residual_norm"] = d.residual_norm;
  dj["propensity_floor_hits"] = d.propensity_floor_hits;
  dj["min_fitted_propensity"] = d.min_fitted_propensity;
  dj["warnings"] = d.warnings;
  dj["patterns"] = to_json(d.validation, d.patterns);
  j["diagnostics"] = dj;
  return j;
}

Json to_json(const BootstrapResult& boot, const std::vector<std::string>& names) {
  Json j;
  j["replicates"] = boot.replicates.rows();
  j["failed"] = boot.failed.size();
  j["warnings"] = boot.warnings;
  j["percentile_ci"] = Json::array();
  for (std::size_t k = 0; k < boot.intervals.size(); ++k)
    j["percentile_ci"].push_back({{"name", k < names.size() ? names[k] : "psi[" + std::to_string(k + 1) + "]"},
                                  {"ci", {boot.intervals[k].lower, boot.intervals[k].upper}}});
  return j;
}

Json to_json(const MonteCarloReport& rep) {
  Json j;
  j["scenario"] = std::string(to_string(rep.scenario));
  j["n"] = rep.n;
  j["replications"] = rep.replications;
  j["seed"] = rep.seed;
  j["level"] = rep.level;
  j["psi_truth"] = rep.psi_truth;
  j["gamma1_truth"] = rep.gamma1_truth;
  j["estimators"] = Json::array();
  auto stat = [](const SummaryStat& s) {
    return Json{{"truth", s.truth}, {"mean_estimate", s.mean_estimate}, {"bias", s.bias}, {"mc_sd", s.mc_sd},
                {"mean_se", s.mean_se}, {"coverage", s.coverage}, {"count", s.count}};
  };
  for (const auto& e : rep.estimators)
    j["estimators"].push_back({{"method", std::string(to_string(e.method))},
                               {"attempted", e.attempted},
                               {"failed", e.failed},
                               {"flagged", e.flagged},
                               {"psi", stat(e.psi)},
                               {"gamma1", stat(e.gamma1)},
                               {"full_data_gap", e.full_data_gap},
                               {"full_data_gap_se", e.full_data_gap_se}});
  j["warnings"] = rep.warnings;
  return j;
}

std::string validation_text(const ValidationReport& rep, const PatternSet& ps) {
  std::ostringstream o;
  o << "pattern set: " << (rep.valid() ? "valid" : "INVALID") << "\n";
  std::size_t w = 7;
  for (const auto& [code, c] : ps.counts()) w = std::max(w, Pattern(code, ps.p()).to_string().size());
  o << std::left << std::setw(static_cast<int>(w)) << "pattern" << "  " << std::right << std::setw(8) << "count" << "\n";
  for (const auto& [code, c] : ps.counts())
    o << std::left << std::setw(static_cast<int>(w)) << Pattern(code, ps.p()).to_string() << "  " << std::right
      << std::setw(8) << c << "\n";
  if (!rep.has_complete_pattern) o << "error: complete pattern absent\n";
  for (const auto& r : rep.missing_patterns) o << "error: missing pattern " << r.to_string() << "\n";
  for (const auto& [r, c] : rep.sparse_patterns)
    o << "warning: pattern " << r.to_string() << " has " << c << " records (< " << rep.min_count << ")\n";
  return o.str();
}

std::string estimation_text(const EstimationResult& res) {
  std::ostringstream o;
  o << "method: " << to_string(res.method) << "\n";
  std::size_t w = 9;
  for (const auto& n : res.theta_names) w = std::max(w, n.size());
  for (const auto& c : res.contrasts) w = std::max(w, c.name.size());
  auto line = [&](const std::string& name, double est, double se, std::optional<Interval> ci) {
    o << std::left << std::setw(static_cast<int>(w)) << name << std::right << std::fixed << std::setprecision(6)
      << std::setw(14) << est << std::setw(14) << se;
    if (ci) o << "   [" << ci->lower << ", " << ci->upper << "]";
    o << "\n";
  };
  o << std::left << std::setw(static_cast<int>(w)) << "parameter" << std::right << std::setw(14) << "estimate"
    << std::setw(14) << "se" << "   ci\n";
  for (Eigen::Index k = 0; k < res.psi_hat.size(); ++k)
    line(res.component_names[static_cast<std::size_t>(k)], res.psi_hat(k), res.psi_se(k),
         res.psi_ci.empty() ? std::nullopt : std::optional<Interval>(res.psi_ci[static_cast<std::size_t>(k)]));
  for (const auto& c : res.contrasts) line(c.name, c.estimate, c.se, c.ci);
  for (const auto& n : res.theta_names)
    if (n.rfind("gamma[", 0) == 0) {
      const auto e = res.parameter(n);
      line(n, e->first, e->second, std::nullopt);
    }
  const auto& d = res.diagnostics;
  o << "converged: " << (d.converged ? "yes" : "no") << " (" << d.iterations << " iterations, residual "
    << std::scientific << std::setprecision(2) << d.residual_norm << ")\n";
  o << "propensity floor hits: " << d.propensity_floor_hits << "\n";
  for (const auto& wmsg : d.warnings) o << "warning: " << wmsg << "\n";
  return o.str();
}

}  // namespace selfcens
