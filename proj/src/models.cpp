#include "selfcens/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selfcens/errors.hpp"
#include "selfcens/quadrature.hpp"

namespace selfcens {

std::string_view to_string(CovariateMap map) {
  return map == CovariateMap::linear ? "linear" : "exp";
}

CovariateMap covariate_map_from_string(std::string_view name) {
  if (name == "linear" || name == "identity") return CovariateMap::linear;
  if (name == "exp") return CovariateMap::exp;
  throw ConfigurationError("unknown covariate map '" + std::string(name) + "'");
}

Eigen::VectorXd design_vector(CovariateMap map, const Eigen::VectorXd& x, double exp_scale) {
  Eigen::VectorXd z(x.size() + 1);
  z(0) = 1.0;
  if (map == CovariateMap::linear)
    z.tail(x.size()) = x;
  else
    z.tail(x.size()) = (exp_scale * x.array()).exp().matrix();
  return z;
}

// ---------------------------------------------------------------------------
// Multinomial table helpers

std::size_t MultinomialOutcome::cells() const {
  std::size_t k = 1;
  for (const auto& s : support) k *= s.size();
  return k;
}

std::size_t MultinomialOutcome::stride(std::size_t j) const {
  std::size_t s = 1;
  for (std::size_t k = 0; k < j; ++k) s *= support[k].size();
  return s;
}

std::size_t MultinomialOutcome::level(std::size_t cell, std::size_t j) const {
  return (cell / stride(j)) % support[j].size();
}

Eigen::VectorXd MultinomialOutcome::values(std::size_t cell) const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) {
    const std::size_t lev = cell % support[j].size();
    cell /= support[j].size();
    y(static_cast<Eigen::Index>(j)) = support[j][lev];
  }
  return y;
}

std::optional<std::size_t> MultinomialOutcome::level_of(std::size_t j, double v) const {
  const auto& s = support.at(j);
  for (std::size_t k = 0; k < s.size(); ++k)
    if (std::abs(s[k] - v) <= 1e-9) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sequential odds-ratio groups

bool SequentialGroup::enters(std::uint32_t r) const {
  if ((r >> item) & 1u) return false;
  const std::uint32_t mask = Pattern::full_mask(item);
  const std::uint32_t pre = r & mask;
  if (pre == mask) return false;
  return !prefix || *prefix == pre;
}

std::vector<SequentialGroup> sequential_groups(std::size_t p, SequentialMode mode) {
  std::vector<SequentialGroup> groups;
  for (std::size_t i = 1; i < p; ++i) {
    if (mode == SequentialMode::shared) {
      groups.push_back({i, std::nullopt});
    } else {
      const std::uint32_t mask = Pattern::full_mask(i);
      for (std::uint32_t pre = 0; pre < mask; ++pre) groups.push_back({i, pre});
    }
  }
  return groups;
}

// ---------------------------------------------------------------------------
// WorkingModelSpec

double WorkingModelSpec::tilt_slope(std::size_t i, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd& g = gamma[i];
  if (g.size() == 1) return g(0);
  return g(0) + g.tail(g.size() - 1).dot(x);
}

Eigen::VectorXd WorkingModelSpec::baseline_mean(const Eigen::VectorXd& x) const {
  if (is_gaussian()) return gaussian().coef.transpose() * design_vector(outcome_covariates, x, exp_scale);
  const auto& tab = multinomial();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t c = 0; c < tab.cells(); ++c) mean += tab.probs[c] * tab.values(c);
  return mean;
}

void WorkingModelSpec::validate() const {
  if (p == 0 || p > kMaxOutcomes) throw DimensionError("spec: p must be in [1, 16]");
  const auto dd = static_cast<Eigen::Index>(d + 1);
  if (static_cast<std::size_t>(y0.size()) != p) throw DimensionError("spec: y0 must have length p");
  if (!std::isfinite(exp_scale)) throw InputError("spec: exp_scale must be finite");
  if (alpha1.size() != p) throw DimensionError("spec: alpha1 needs p coefficient vectors");
  for (const auto& a : alpha1)
    if (a.size() != dd) throw DimensionError("spec: alpha1 vectors must have length d+1");
  if (gamma.size() != p) throw DimensionError("spec: gamma needs p entries");
  for (const auto& g : gamma)
    if (g.size() != 1 && g.size() != dd)
      throw DimensionError("spec: gamma entries must have length 1 or d+1");
  for (const auto& g : gamma)
    if (g.size() != gamma[0].size())
      throw DimensionError("spec: all gamma entries must share one length");
  if (alpha2.size() != groups().size())
    throw DimensionError("spec: alpha2 has " + std::to_string(alpha2.size()) +
                         " vectors, expected " + std::to_string(groups().size()));
  for (const auto& a : alpha2)
    if (a.size() != dd) throw DimensionError("spec: alpha2 vectors must have length d+1");

  if (is_gaussian()) {
    const auto& g = gaussian();
    if (g.coef.rows() != dd || static_cast<std::size_t>(g.coef.cols()) != p)
      throw DimensionError("spec: Gaussian coefficient matrix must be (d+1) x p");
    if (static_cast<std::size_t>(g.cov.rows()) != p || static_cast<std::size_t>(g.cov.cols()) != p)
      throw DimensionError("spec: covariance must be p x p");
    if (!g.cov.isApprox(g.cov.transpose(), 1e-10))
      throw ConfigurationError("spec: covariance must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
    if (llt.info() != Eigen::Success) throw ConfigurationError("spec: covariance must be positive definite");
  } else {
    const auto& t = multinomial();
    if (t.support.size() != p) throw DimensionError("spec: multinomial support needs p outcomes");
    for (const auto& s : t.support)
      if (s.empty()) throw ConfigurationError("spec: empty multinomial support");
    if (t.probs.size() != t.cells())
      throw DimensionError("spec: multinomial table has wrong number of cells");
    double total = 0.0;
    for (double v : t.probs) {
      if (!(v >= 0.0)) throw ConfigurationError("spec: multinomial probabilities must be >= 0");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigurationError("spec: multinomial probabilities must sum to 1");
  }
}

WorkingModelSpec make_spec(std::size_t p, std::size_t d, OutcomeModel outcome, SequentialMode mode,
                           bool gamma_interacts) {
  WorkingModelSpec spec;
  spec.p = p;
  spec.d = d;
  spec.y0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  const auto dd = static_cast<Eigen::Index>(d + 1);
  spec.alpha1.assign(p, Eigen::VectorXd::Zero(dd));
  spec.gamma.assign(p, Eigen::VectorXd::Zero(gamma_interacts ? dd : 1));
  spec.sequential = mode;
  spec.alpha2.assign(sequential_groups(p, mode).size(), Eigen::VectorXd::Zero(dd));
  spec.outcome = std::move(outcome);
  if (!spec.is_gaussian()) {
    const auto& t = spec.multinomial();
    for (std::size_t j = 0; j < p && j < t.support.size(); ++j)
      if (!t.support[j].empty()) spec.y0(static_cast<Eigen::Index>(j)) = t.support[j][0];
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Propensity pieces

double expit(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

namespace {

void check_item(const WorkingModelSpec& spec, std::size_t i) {
  if (i >= spec.p) throw DimensionError("outcome index out of range");
}

void check_pattern(const WorkingModelSpec& spec, const Pattern& r) {
  if (r.size() != spec.p) throw DimensionError("pattern length does not match spec");
}

double baseline_logit(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i) {
  return spec.alpha1[i].dot(design_vector(spec.propensity_covariates, x, spec.exp_scale));
}

double log_itemwise_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                               std::size_t i, double y_i) {
  return spec.tilt_slope(i, x) * (y_i - spec.y0(static_cast<Eigen::Index>(i)));
}

// Tilt vector t_j = s_j(x) (1 - r_j).
Eigen::VectorXd tilt_vector(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                            const Pattern& r) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.p));
  for (std::size_t j = 0; j < spec.p; ++j)
    if (!r.observed(j)) t(static_cast<Eigen::Index>(j)) = spec.tilt_slope(j, x);
  return t;
}

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double a : v) mx = std::max(mx, a);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

}  // namespace

double itemwise_baseline_propensity(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                    std::size_t i) {
  check_item(spec, i);
  return expit(baseline_logit(spec, x, i));
}

double itemwise_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                           double y_i) {
  check_item(spec, i);
  return std::exp(log_itemwise_odds_ratio(spec, x, i, y_i));
}

double log_odds_function(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                         double y_i) {
  check_item(spec, i);
  return -baseline_logit(spec, x, i) + log_itemwise_odds_ratio(spec, x, i, y_i);
}

double itemwise_propensity(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                           double y_i) {
  return expit(-log_odds_function(spec, x, i, y_i));
}

double odds_function(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                     double y_i) {
  return std::exp(log_odds_function(spec, x, i, y_i));
}

double sequential_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                             std::size_t i, const Pattern& r) {
  check_pattern(spec, r);
  if (i == 0 || i >= spec.p) throw DimensionError("sequential_odds_ratio: index must be in [1, p)");
  const Eigen::VectorXd z = design_vector(spec.propensity_covariates, x, spec.exp_scale);
  const auto groups = spec.groups();
  double log_eta = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (groups[g].item == i && groups[g].enters(r.code())) log_eta += spec.alpha2[g].dot(z);
  return std::exp(log_eta);
}

double log_sequential_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                 const Pattern& r) {
  check_pattern(spec, r);
  const Eigen::VectorXd z = design_vector(spec.propensity_covariates, x, spec.exp_scale);
  const auto groups = spec.groups();
  double log_eta = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (groups[g].enters(r.code())) log_eta += spec.alpha2[g].dot(z);
  return log_eta;
}

double log_propensity_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y, const Pattern& r) {
  check_pattern(spec, r);
  double lr = log_sequential_odds_ratio(spec, x, r);
  for (std::size_t j = 0; j < spec.p; ++j)
    if (!r.observed(j)) lr += log_odds_function(spec, x, j, y(static_cast<Eigen::Index>(j)));
  return lr;
}

double propensity_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, const Pattern& r) {
  return std::exp(log_propensity_ratio(spec, x, y, r));
}

std::vector<PatternProbability> full_propensity(const WorkingModelSpec& spec, const PatternSet& ps,
                                                const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& y) {
  if (ps.p() != spec.p) throw DimensionError("full_propensity: pattern set dimension mismatch");
  const auto pats = ps.patterns();
  std::vector<double> logs(pats.size());
  for (std::size_t k = 0; k < pats.size(); ++k) logs[k] = log_propensity_ratio(spec, x, y, pats[k]);
  const double lse = log_sum_exp(logs);
  std::vector<PatternProbability> out(pats.size());
  for (std::size_t k = 0; k < pats.size(); ++k) out[k] = {pats[k], std::exp(logs[k] - lse)};
  return out;
}

double log_joint_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y, const Pattern& r) {
  check_pattern(spec, r);
  double s = 0.0;
  for (std::size_t j = 0; j < spec.p; ++j)
    if (!r.observed(j)) s += log_itemwise_odds_ratio(spec, x, j, y(static_cast<Eigen::Index>(j)));
  return s;
}

double joint_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, const Pattern& r) {
  return std::exp(log_joint_odds_ratio(spec, x, y, r));
}

// ---------------------------------------------------------------------------
// Exponential tilting

double log_normalizing_expectation(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                   const Pattern& r) {
  check_pattern(spec, r);
  if (r.is_complete()) return 0.0;
  const Eigen::VectorXd t = tilt_vector(spec, x, r);
  if (spec.is_gaussian()) {
    const auto& g = spec.gaussian();
    const Eigen::VectorXd mu = spec.baseline_mean(x);
    return t.dot(mu - spec.y0) + 0.5 * t.dot(g.cov * t);
  }
  const auto& tab = spec.multinomial();
  std::vector<double> logs;
  logs.reserve(tab.cells());
  for (std::size_t c = 0; c < tab.cells(); ++c) {
    if (tab.probs[c] <= 0.0) continue;
    logs.push_back(std::log(tab.probs[c]) + t.dot(tab.values(c) - spec.y0));
  }
  return log_sum_exp(logs);
}

double normalizing_expectation(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                               const Pattern& r) {
  return std::exp(log_normalizing_expectation(spec, x, r));
}

Eigen::VectorXd pattern_outcome_mean(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                     const Pattern& r) {
  check_pattern(spec, r);
  const Eigen::VectorXd t = tilt_vector(spec, x, r);
  if (spec.is_gaussian()) return spec.baseline_mean(x) + spec.gaussian().cov * t;
  const auto& tab = spec.multinomial();
  std::vector<double> logs(tab.cells(), -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < tab.cells(); ++c)
    if (tab.probs[c] > 0.0) logs[c] = std::log(tab.probs[c]) + t.dot(tab.values(c) - spec.y0);
  const double lse = log_sum_exp(logs);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.p));
  for (std::size_t c = 0; c < tab.cells(); ++c)
    if (tab.probs[c] > 0.0) mean += std::exp(logs[c] - lse) * tab.values(c);
  return mean;
}

Eigen::VectorXd observed_part(const Eigen::VectorXd& y, const Pattern& r) {
  const auto idx = r.observed_indices();
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(idx[k]));
  return out;
}

ConditionalLaw tilted_conditional(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y_obs, const Pattern& r) {
  check_pattern(spec, r);
  const auto obs = r.observed_indices();
  const auto mis = r.missing_indices();
  if (static_cast<std::size_t>(y_obs.size()) != obs.size())
    throw DimensionError("tilted_conditional: y_obs length must equal the observed count");
  const auto no = static_cast<Eigen::Index>(obs.size());
  const auto nm = static_cast<Eigen::Index>(mis.size());

  if (spec.is_gaussian()) {
    const auto& g = spec.gaussian();
    const Eigen::VectorXd mu = spec.baseline_mean(x);
    Eigen::VectorXd mu_m(nm), mu_o(no), t_m(nm);
    Eigen::MatrixXd s_mm(nm, nm), s_mo(nm, no), s_oo(no, no);
    for (Eigen::Index a = 0; a < nm; ++a) {
      const auto ia = static_cast<Eigen::Index>(mis[static_cast<std::size_t>(a)]);
      mu_m(a) = mu(ia);
      t_m(a) = spec.tilt_slope(static_cast<std::size_t>(ia), x);
      for (Eigen::Index b = 0; b < nm; ++b)
        s_mm(a, b) = g.cov(ia, static_cast<Eigen::Index>(mis[static_cast<std::size_t>(b)]));
      for (Eigen::Index b = 0; b < no; ++b)
        s_mo(a, b) = g.cov(ia, static_cast<Eigen::Index>(obs[static_cast<std::size_t>(b)]));
    }
    for (Eigen::Index a = 0; a < no; ++a) {
      const auto ia = static_cast<Eigen::Index>(obs[static_cast<std::size_t>(a)]);
      mu_o(a) = mu(ia);
      for (Eigen::Index b = 0; b < no; ++b)
        s_oo(a, b) = g.cov(ia, static_cast<Eigen::Index>(obs[static_cast<std::size_t>(b)]));
    }
    GaussianConditional law;
    law.missing = mis;
    if (no > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(s_oo);
      if (llt.info() != Eigen::Success)
        throw NumericalError("tilted_conditional: observed-block covariance is singular");
      const Eigen::MatrixXd k = llt.solve(s_mo.transpose()).transpose();
      law.mean = mu_m + k * (y_obs - mu_o);
      law.cov = s_mm - k * s_mo.transpose();
    } else {
      law.mean = mu_m;
      law.cov = s_mm;
    }
    if (nm > 0) {
      Eigen::LLT<Eigen::MatrixXd> check(law.cov);
      if (check.info() != Eigen::Success)
        throw NumericalError("tilted_conditional: conditional covariance is singular");
    }
    law.mean += law.cov * t_m;
    return law;
  }

  const auto& tab = spec.multinomial();
  std::vector<std::size_t> obs_level(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    auto lev = tab.level_of(obs[k], y_obs(static_cast<Eigen::Index>(k)));
    if (!lev) throw InputError("tilted_conditional: observed value outside the multinomial support");
    obs_level[k] = *lev;
  }
  DiscreteConditional law;
  law.missing = mis;
  std::vector<double> logs;
  for (std::size_t c = 0; c < tab.cells(); ++c) {
    if (tab.probs[c] <= 0.0) continue;
    bool match = true;
    for (std::size_t k = 0; k < obs.size() && match; ++k) match = tab.level(c, obs[k]) == obs_level[k];
    if (!match) continue;
    const Eigen::VectorXd yc = tab.values(c);
    double lw = std::log(tab.probs[c]);
    Eigen::VectorXd ym(nm);
    for (Eigen::Index a = 0; a < nm; ++a) {
      const auto j = mis[static_cast<std::size_t>(a)];
      ym(a) = yc(static_cast<Eigen::Index>(j));
      lw += log_itemwise_odds_ratio(spec, x, j, ym(a));
    }
    law.values.push_back(ym);
    logs.push_back(lw);
  }
  if (logs.empty())
    throw NumericalError("tilted_conditional: observed values have zero baseline probability");
  const double lse = log_sum_exp(logs);
  law.probs.resize(logs.size());
  for (std::size_t k = 0; k < logs.size(); ++k) law.probs[k] = std::exp(logs[k] - lse);
  return law;
}

Eigen::VectorXd imputation_expectation(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y_obs, const Pattern& r,
                                       const Functional& functional, const Eigen::VectorXd& psi,
                                       const QuadratureOptions& quad) {
  check_pattern(spec, r);
  const auto obs = r.observed_indices();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.p));
  for (std::size_t k = 0; k < obs.size(); ++k)
    y(static_cast<Eigen::Index>(obs[k])) = y_obs(static_cast<Eigen::Index>(k));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(functional.dim));
  if (r.is_complete()) {
    functional.m(x, y, psi, out);
    return out;
  }
  if (spec.is_gaussian() && !functional.affine_in_y && r.missing_count() > quad.max_dims)
    throw ConfigurationError("imputation_expectation: " + std::to_string(r.missing_count()) +
                             " missing continuous coordinates exceed max_quadrature_dims = " +
                             std::to_string(quad.max_dims));
  const ConditionalLaw law = tilted_conditional(spec, x, y_obs, r);
  Eigen::VectorXd term(static_cast<Eigen::Index>(functional.dim));

  if (const auto* g = std::get_if<GaussianConditional>(&law)) {
    if (functional.affine_in_y) {
      for (std::size_t a = 0; a < g->missing.size(); ++a)
        y(static_cast<Eigen::Index>(g->missing[a])) = g->mean(static_cast<Eigen::Index>(a));
      functional.m(x, y, psi, out);
      return out;
    }
    const QuadratureRule rule = standard_normal_rule(quad.nodes);
    const std::size_t k = g->missing.size();
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(g->cov).matrixL();
    std::vector<std::size_t> idx(k, 0);
    Eigen::VectorXd z(static_cast<Eigen::Index>(k));
    while (true) {
      double w = 1.0;
      for (std::size_t a = 0; a < k; ++a) {
        z(static_cast<Eigen::Index>(a)) = rule.nodes[idx[a]];
        w *= rule.weights[idx[a]];
      }
      const Eigen::VectorXd ym = g->mean + chol * z;
      for (std::size_t a = 0; a < k; ++a)
        y(static_cast<Eigen::Index>(g->missing[a])) = ym(static_cast<Eigen::Index>(a));
      functional.m(x, y, psi, term);
      out += w * term;
      std::size_t a = 0;
      while (a < k && ++idx[a] == rule.nodes.size()) idx[a++] = 0;
      if (a == k) break;
    }
    return out;
  }

  const auto& dlaw = std::get<DiscreteConditional>(law);
  for (std::size_t c = 0; c < dlaw.values.size(); ++c) {
    for (std::size_t a = 0; a < dlaw.missing.size(); ++a)
      y(static_cast<Eigen::Index>(dlaw.missing[a])) = dlaw.values[c](static_cast<Eigen::Index>(a));
    functional.m(x, y, psi, term);
    out += dlaw.probs[c] * term;
  }
  return out;
}

}  // namespace selfcens
