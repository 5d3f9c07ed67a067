#include "selfcens/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "selfcens/errors.hpp"
#include "selfcens/io.hpp"
#include "selfcens/quadrature.hpp"
#include "selfcens/random.hpp"

namespace selfcens {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::TT: return "TT";
    case Scenario::TF: return "TF";
    case Scenario::FT: return "FT";
    case Scenario::FF: return "FF";
  }
  return "?";
}

Scenario scenario_from_string(std::string_view name) {
  if (name == "TT") return Scenario::TT;
  if (name == "TF") return Scenario::TF;
  if (name == "FT") return Scenario::FT;
  if (name == "FF") return Scenario::FF;
  throw ConfigurationError("unknown scenario '" + std::string(name) + "' (expected TT, TF, FT or FF)");
}

std::vector<PatternProbability> analytic_pattern_marginal(const WorkingModelSpec& truth,
                                                          const Eigen::VectorXd& x) {
  const PatternSet lattice = PatternSet::full_lattice(truth.p);
  const auto pats = lattice.patterns();
  std::vector<double> logs(pats.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pats.size(); ++k) {
    logs[k] = log_propensity_ratio(truth, x, truth.y0, pats[k]) +
              log_normalizing_expectation(truth, x, pats[k]);
    mx = std::max(mx, logs[k]);
  }
  double total = 0.0;
  for (double& v : logs) total += (v = std::exp(v - mx));
  std::vector<PatternProbability> out(pats.size());
  for (std::size_t k = 0; k < pats.size(); ++k) out[k] = {pats[k], logs[k] / total};
  return out;
}

namespace {

// Per-pattern sampling law of Y given (x, r) under a multinomial baseline.
std::vector<double> tilted_cell_weights(const WorkingModelSpec& truth, const Eigen::VectorXd& x,
                                        const Pattern& r) {
  const auto& tab = truth.multinomial();
  std::vector<double> w(tab.cells(), 0.0);
  for (std::size_t c = 0; c < tab.cells(); ++c)
    if (tab.probs[c] > 0.0) w[c] = tab.probs[c] * joint_odds_ratio(truth, x, tab.values(c), r);
  return w;
}

std::size_t draw_index(const std::vector<double>& weights, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k] / total;
    if (u < acc) return k;
  }
  for (std::size_t k = weights.size(); k-- > 0;)
    if (weights[k] > 0.0) return k;
  return weights.size() - 1;
}

}  // namespace

SampledData sample_dataset(const WorkingModelSpec& truth, std::size_t n, std::uint64_t seed) {
  truth.validate();
  if (n == 0) throw InputError("sample_dataset: n must be positive");
  const std::size_t p = truth.p, d = truth.d;
  Engine eng = substream(seed, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd chol;
  if (truth.is_gaussian()) chol = Eigen::LLT<Eigen::MatrixXd>(truth.gaussian().cov).matrixL();

  // Without covariates the pattern marginal and the per-pattern laws are fixed.
  std::vector<PatternProbability> fixed_marginal;
  std::vector<std::vector<double>> fixed_cells;
  if (d == 0) {
    fixed_marginal = analytic_pattern_marginal(truth, Eigen::VectorXd(0));
    if (!truth.is_gaussian())
      for (const auto& pp : fixed_marginal) fixed_cells.push_back(tilted_cell_weights(truth, Eigen::VectorXd(0), pp.pattern));
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<std::uint32_t> codes(n);
  std::vector<double> probs;
  for (std::size_t row = 0; row < n; ++row) {
    const auto rr = static_cast<Eigen::Index>(row);
    Eigen::VectorXd xv(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) xv(static_cast<Eigen::Index>(j)) = 2.0 * unif(eng) - 1.0;
    x.row(rr) = xv.transpose();

    const auto marginal = d == 0 ? fixed_marginal : analytic_pattern_marginal(truth, xv);
    probs.resize(marginal.size());
    for (std::size_t k = 0; k < marginal.size(); ++k) probs[k] = marginal[k].probability;
    const std::size_t pick = draw_index(probs, unif(eng));
    const Pattern& r = marginal[pick].pattern;
    codes[row] = r.code();

    if (truth.is_gaussian()) {
      Eigen::VectorXd t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
      for (std::size_t j = 0; j < p; ++j)
        if (!r.observed(j)) t(static_cast<Eigen::Index>(j)) = truth.tilt_slope(j, xv);
      Eigen::VectorXd z(static_cast<Eigen::Index>(p));
      for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(eng);
      y.row(rr) = (truth.baseline_mean(xv) + truth.gaussian().cov * t + chol * z).transpose();
    } else {
      const auto weights = d == 0 ? fixed_cells[pick] : tilted_cell_weights(truth, xv, r);
      y.row(rr) = truth.multinomial().values(draw_index(weights, unif(eng))).transpose();
    }
  }
  SampledData out{Dataset(x, y, codes), y};
  return out;
}

double true_outcome_mean(const WorkingModelSpec& truth, std::size_t j) {
  truth.validate();
  if (j >= truth.p) throw DimensionError("true_outcome_mean: outcome index out of range");
  const std::size_t d = truth.d;
  if (d > 4) throw ConfigurationError("true_outcome_mean integrates over at most 4 covariates");
  const QuadratureRule& rule = gauss_legendre(d <= 1 ? 64 : 20);
  auto mean_at = [&](const Eigen::VectorXd& x) {
    double s = 0.0;
    for (const auto& pp : analytic_pattern_marginal(truth, x))
      s += pp.probability * pattern_outcome_mean(truth, x, pp.pattern)(static_cast<Eigen::Index>(j));
    return s;
  };
  if (d == 0) return mean_at(Eigen::VectorXd(0));
  std::vector<std::size_t> idx(d, 0);
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      x(static_cast<Eigen::Index>(a)) = rule.nodes[idx[a]];
      w *= 0.5 * rule.weights[idx[a]];
    }
    total += w * mean_at(x);
    std::size_t a = 0;
    while (a < d && ++idx[a] == rule.nodes.size()) idx[a++] = 0;
    if (a == d) break;
  }
  return total;
}

WorkingModelSpec default_truth() {
  GaussianOutcome g;
  g.coef.resize(2, 3);
  g.coef << 0.0, 0.2, -0.2,
            1.5, 1.5, 1.5;
  g.cov = Eigen::MatrixXd::Constant(3, 3, 0.3);
  g.cov.diagonal().setOnes();
  WorkingModelSpec s = make_spec(3, 1, g);
  const double gammas[] = {0.4, -0.4, 0.3};
  for (std::size_t i = 0; i < 3; ++i) {
    s.alpha1[i] = (Eigen::VectorXd(2) << 0.7, 1.5).finished();
    s.gamma[i] = Eigen::VectorXd::Constant(1, gammas[i]);
  }
  for (auto& a : s.alpha2) a = (Eigen::VectorXd(2) << 0.2, 0.2).finished();
  return s;
}

WorkingModelSpec working_spec_for(const WorkingModelSpec& truth, Scenario scenario, double exp_scale) {
  OutcomeModel outcome;
  if (truth.is_gaussian()) {
    GaussianOutcome g;
    g.coef = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(truth.d + 1), static_cast<Eigen::Index>(truth.p));
    g.cov = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(truth.p), static_cast<Eigen::Index>(truth.p));
    outcome = g;
  } else {
    MultinomialOutcome t = truth.multinomial();
    std::fill(t.probs.begin(), t.probs.end(), 1.0 / static_cast<double>(t.probs.size()));
    outcome = t;
  }
  WorkingModelSpec s = make_spec(truth.p, truth.d, outcome, truth.sequential, truth.gamma_dim() > 1);
  s.y0 = truth.y0;
  s.exp_scale = exp_scale;
  s.propensity_covariates = (scenario == Scenario::FT || scenario == Scenario::FF) ? CovariateMap::exp : CovariateMap::linear;
  s.outcome_covariates = (scenario == Scenario::TF || scenario == Scenario::FF) ? CovariateMap::exp : CovariateMap::linear;
  return s;
}

const EstimatorSummary* MonteCarloReport::find(Method m) const {
  for (const auto& e : estimators)
    if (e.method == m) return &e;
  return nullptr;
}

namespace {

void finish_stat(SummaryStat& s, const std::vector<double>& est, const std::vector<double>& se,
                 const std::vector<bool>& covered) {
  s.count = est.size();
  if (est.empty()) {
    s.mean_estimate = s.bias = s.mc_sd = s.mean_se = s.coverage = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const auto n = static_cast<double>(est.size());
  double m = 0.0, ms = 0.0, c = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    m += est[k];
    ms += se[k];
    c += covered[k] ? 1.0 : 0.0;
  }
  m /= n;
  double v = 0.0;
  for (double e : est) v += (e - m) * (e - m);
  s.mean_estimate = m;
  s.bias = m - s.truth;
  s.mc_sd = est.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
  s.mean_se = ms / n;
  s.coverage = c / n;
}

}  // namespace

MonteCarloReport run_scenario(const ScenarioConfig& config) {
  config.truth.validate();
  if (config.n == 0 || config.replications == 0) throw ConfigurationError("n and replications must be positive");
  if (config.outcome_index >= config.truth.p) throw ConfigurationError("outcome_index out of range");
  if (config.estimators.empty()) throw ConfigurationError("no estimators configured");

  MonteCarloReport rep;
  rep.scenario = config.scenario;
  rep.n = config.n;
  rep.replications = config.replications;
  rep.seed = config.seed;
  rep.level = config.options.level;
  rep.psi_truth = true_outcome_mean(config.truth, config.outcome_index);
  rep.gamma1_truth = config.truth.gamma[0](0);

  const WorkingModelSpec working = working_spec_for(config.truth, config.scenario, config.exp_scale);
  const Functional functional = outcome_mean(config.outcome_index);
  const std::size_t E = config.estimators.size();
  const std::size_t gd = working.gamma_dim();
  rep.replicates.resize(config.replications * E);

  parallel_for(config.replications, resolve_threads(config.threads), [&](std::size_t k) {
    const SampledData sample = sample_dataset(config.truth, config.n, substream_seed(config.seed, k));
    const double full_mean = sample.y_full.col(static_cast<Eigen::Index>(config.outcome_index)).mean();
    for (std::size_t e = 0; e < E; ++e) {
      ReplicateRecord& rec = rep.replicates[k * E + e];
      rec.replicate = k;
      rec.method = config.estimators[e];
      rec.full_data_mean = full_mean;
      try {
        const EstimationResult res = estimate(rec.method, sample.data, working, functional, config.options);
        rec.psi_hat = res.psi_hat(0);
        rec.psi_se = res.psi_se(0);
        rec.psi_lower = res.psi_ci[0].lower;
        rec.psi_upper = res.psi_ci[0].upper;
        const auto g1 = res.parameter(gamma_name(0, 0, gd));
        rec.gamma1_hat = g1 ? g1->first : std::numeric_limits<double>::quiet_NaN();
        rec.gamma1_se = g1 ? g1->second : std::numeric_limits<double>::quiet_NaN();
        rec.iterations = res.diagnostics.iterations;
        rec.floor_hits = res.diagnostics.propensity_floor_hits;
        rec.ok = std::isfinite(rec.psi_hat) && std::isfinite(rec.psi_se);
        if (!rec.ok) rec.error = "non-finite estimate or standard error";
      } catch (const Error& ex) {
        rec.ok = false;
        rec.error = ex.what();
      }
    }
  });

  const double z = normal_quantile(0.5 * (1.0 + config.options.level));
  for (std::size_t e = 0; e < E; ++e) {
    EstimatorSummary s;
    s.method = config.estimators[e];
    s.attempted = config.replications;
    s.psi.truth = rep.psi_truth;
    s.gamma1.truth = rep.gamma1_truth;
    std::vector<double> pe, ps, ge, gs, gap;
    std::vector<bool> pc, gc;
    for (std::size_t k = 0; k < config.replications; ++k) {
      const ReplicateRecord& rec = rep.replicates[k * E + e];
      if (!rec.ok) {
        ++s.failed;
        continue;
      }
      pe.push_back(rec.psi_hat);
      ps.push_back(rec.psi_se);
      pc.push_back(rec.psi_lower <= rep.psi_truth && rep.psi_truth <= rec.psi_upper);
      gap.push_back(rec.psi_hat - rec.full_data_mean);
      if (std::isfinite(rec.gamma1_hat) && std::isfinite(rec.gamma1_se)) {
        ge.push_back(rec.gamma1_hat);
        gs.push_back(rec.gamma1_se);
        gc.push_back(std::abs(rec.gamma1_hat - rep.gamma1_truth) <= z * rec.gamma1_se);
      }
    }
    finish_stat(s.psi, pe, ps, pc);
    finish_stat(s.gamma1, ge, gs, gc);
    if (!gap.empty()) {
      SummaryStat g;
      finish_stat(g, gap, gap, std::vector<bool>(gap.size(), false));
      s.full_data_gap = g.mean_estimate;
      s.full_data_gap_se = g.mc_sd / std::sqrt(static_cast<double>(gap.size()));
    }
    s.flagged = s.failed * 20 > s.attempted;
    if (s.flagged)
      rep.warnings.push_back("WARNING: " + std::string(to_string(s.method)) + " failed in " + std::to_string(s.failed) +
                             " of " + std::to_string(s.attempted) + " replicates (more than 5%)");
    rep.estimators.push_back(s);
  }
  return rep;
}

std::string replicate_csv(const MonteCarloReport& report) {
  CsvTable t;
  t.header = {"scenario", "replicate", "method", "ok", "psi_hat", "psi_se", "psi_lower", "psi_upper",
              "gamma1_hat", "gamma1_se", "full_data_mean", "iterations", "floor_hits", "error"};
  for (const auto& r : report.replicates) {
    t.rows.push_back({std::string(to_string(report.scenario)), std::to_string(r.replicate),
                      std::string(to_string(r.method)), r.ok ? "1" : "0", format_double(r.psi_hat),
                      format_double(r.psi_se), format_double(r.psi_lower), format_double(r.psi_upper),
                      format_double(r.gamma1_hat), format_double(r.gamma1_se), format_double(r.full_data_mean),
                      std::to_string(r.iterations), std::to_string(r.floor_hits), r.error});
  }
  return to_csv(t);
}

CoverageTable coverage_table(const std::vector<MonteCarloReport>& reports) {
  CsvTable t;
  t.header = {"scenario", "estimator", "psi_coverage", "gamma1_coverage", "psi_bias", "psi_mc_sd",
              "psi_mean_se", "gamma1_bias", "failed", "replications"};
  for (const auto& rep : reports)
    for (const auto& s : rep.estimators)
      t.rows.push_back({std::string(to_string(rep.scenario)), std::string(to_string(s.method)),
                        format_double(s.psi.coverage), format_double(s.gamma1.coverage), format_double(s.psi.bias),
                        format_double(s.psi.mc_sd), format_double(s.psi.mean_se), format_double(s.gamma1.bias),
                        std::to_string(s.failed), std::to_string(s.attempted)});
  CoverageTable out;
  out.csv = to_csv(t);

  std::vector<std::vector<std::string>> cells{t.header};
  for (const auto& rep : reports)
    for (const auto& s : rep.estimators) {
      auto fix = [](double v, int prec) {
        std::ostringstream o;
        o << std::fixed << std::setprecision(prec) << v;
        return o.str();
      };
      cells.push_back({std::string(to_string(rep.scenario)), std::string(to_string(s.method)), fix(s.psi.coverage, 3),
                       fix(s.gamma1.coverage, 3), fix(s.psi.bias, 4), fix(s.psi.mc_sd, 4), fix(s.psi.mean_se, 4),
                       fix(s.gamma1.bias, 4), std::to_string(s.failed), std::to_string(s.attempted)});
    }
  std::vector<std::size_t> width(t.header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream text;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) text << "  ";
      if (c < 2)
        text << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else
        text << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    text << '\n';
  }
  out.text = text.str();
  return out;
}

}  // namespace selfcens
