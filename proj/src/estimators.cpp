#include "selfcens/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "selfcens/errors.hpp"
#include "selfcens/quadrature.hpp"

namespace selfcens {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::ipw: return "ipw";
    case Method::reg: return "reg";
    case Method::dr: return "dr";
    case Method::mar: return "mar";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  if (name == "ipw") return Method::ipw;
  if (name == "reg") return Method::reg;
  if (name == "dr") return Method::dr;
  if (name == "mar") return Method::mar;
  throw ConfigurationError("unknown method '" + std::string(name) + "' (expected ipw, reg, dr or mar)");
}

Eigen::VectorXd default_g(std::size_t i, const Eigen::VectorXd& x, const Eigen::VectorXd& y_minus_i,
                          bool gamma_interacts) {
  if (y_minus_i.size() == 0) throw DimensionError("default_g needs at least one other outcome");
  const Eigen::VectorXd h = default_h(i, x);
  const double ybar = y_minus_i.mean();
  Eigen::VectorXd g(h.size() + (gamma_interacts ? h.size() : 1));
  g.head(h.size()) = h;
  if (gamma_interacts)
    g.tail(h.size()) = ybar * h;
  else
    g(h.size()) = ybar;
  return g;
}

Eigen::VectorXd default_h(std::size_t, const Eigen::VectorXd& x) {
  return design_vector(CovariateMap::linear, x);
}

std::string gamma_name(std::size_t i, std::size_t k, std::size_t gamma_dim) {
  std::string s = "gamma[" + std::to_string(i + 1) + "]";
  if (gamma_dim > 1) s += "." + std::to_string(k);
  return s;
}

std::optional<std::pair<double, double>> EstimationResult::parameter(const std::string& name) const {
  for (std::size_t j = 0; j < theta_names.size(); ++j) {
    if (theta_names[j] != name) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    const double se = covariance.size() ? std::sqrt(std::max(0.0, covariance(jj, jj)))
                                        : std::numeric_limits<double>::quiet_NaN();
    return std::make_pair(theta(jj), se);
  }
  if (name.rfind("gamma[", 0) == 0 && method == Method::mar) {
    // The MAR benchmark fixes the odds ratio at 1.
    for (std::size_t i = 0; i < fitted.p; ++i)
      for (std::size_t k = 0; k < fitted.gamma_dim(); ++k)
        if (gamma_name(i, k, fitted.gamma_dim()) == name) return std::make_pair(0.0, 0.0);
  }
  return std::nullopt;
}

ValidationReport check_patterns(const PatternSet& ps, const EstimationOptions& options) {
  ValidationReport rep = validate_positivity(ps, options.min_count, options.min_propensity);
  if (!rep.has_complete_pattern)
    throw PositivityError("no complete cases: the all-observed pattern " +
                          Pattern::complete(ps.p()).to_string() + " is absent");
  if (!rep.missing_patterns.empty()) {
    std::string msg = "pattern set is not closed upward; missing patterns:";
    for (const auto& r : rep.missing_patterns) msg += " " + r.to_string();
    throw PositivityError(msg);
  }
  for (std::size_t i = 0; i < ps.p(); ++i) {
    const Pattern r = item_pattern(ps.p(), i);
    const std::size_t c = ps.count(r);
    if (c < options.min_count)
      throw PositivityError("pattern " + r.to_string() + " has " + std::to_string(c) +
                            " records (need at least " + std::to_string(options.min_count) +
                            "); the equations for outcome " + std::to_string(i + 1) + " are unusable");
  }
  return rep;
}

namespace {

constexpr std::size_t npos = static_cast<std::size_t>(-1);

// ---------------------------------------------------------------------------
// Data prepared once per estimation.

struct Prepared {
  std::size_t n = 0, p = 0, d = 0;
  std::uint32_t full = 0;
  std::vector<Eigen::VectorXd> x;
  Eigen::MatrixXd zpi, zmu;
  Eigen::MatrixXd y;
  std::vector<std::uint32_t> code;
  std::vector<Pattern> patterns;           // observed pattern set, sorted by code
  std::vector<std::size_t> pattern_index;  // per row
  std::size_t complete_index = npos;
  std::vector<std::size_t> item_index;     // per item: index of (R_i = 0, R_-i = 1)
  std::vector<SequentialGroup> groups;
  std::vector<std::vector<std::size_t>> entering;  // per pattern: groups entering it
  std::vector<std::size_t> cell;           // multinomial: cell of each complete row

  Prepared(const Dataset& data, const WorkingModelSpec& spec, const PatternSet& ps) {
    n = data.n();
    p = data.p();
    d = data.d();
    full = Pattern::full_mask(p);
    x.resize(n);
    zpi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
    zmu.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
    for (std::size_t r = 0; r < n; ++r) {
      x[r] = data.x().row(static_cast<Eigen::Index>(r)).transpose();
      zpi.row(static_cast<Eigen::Index>(r)) = design_vector(spec.propensity_covariates, x[r], spec.exp_scale).transpose();
      zmu.row(static_cast<Eigen::Index>(r)) = design_vector(spec.outcome_covariates, x[r], spec.exp_scale).transpose();
    }
    y = data.y();
    code = data.pattern_codes();
    patterns = ps.patterns();
    std::vector<std::size_t> lookup(std::size_t{1} << p, npos);
    for (std::size_t k = 0; k < patterns.size(); ++k) lookup[patterns[k].code()] = k;
    pattern_index.resize(n);
    for (std::size_t r = 0; r < n; ++r) pattern_index[r] = lookup[code[r]];
    complete_index = lookup[full];
    item_index.resize(p);
    for (std::size_t i = 0; i < p; ++i) item_index[i] = lookup[item_pattern(p, i).code()];
    groups = spec.groups();
    entering.resize(patterns.size());
    for (std::size_t k = 0; k < patterns.size(); ++k)
      for (std::size_t g = 0; g < groups.size(); ++g)
        if (groups[g].enters(patterns[k].code())) entering[k].push_back(g);

    if (!spec.is_gaussian()) {
      const auto& tab = spec.multinomial();
      cell.assign(n, npos);
      for (std::size_t r = 0; r < n; ++r) {
        if (code[r] != full) continue;
        std::size_t c = 0;
        for (std::size_t j = 0; j < p; ++j) {
          auto lev = tab.level_of(j, y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
          if (!lev)
            throw InputError("outcome " + std::to_string(j + 1) + " in row " + std::to_string(r + 1) +
                             " is outside the multinomial support");
          c += *lev * tab.stride(j);
        }
        cell[r] = c;
      }
    }
  }

  bool complete(std::size_t r) const { return code[r] == full; }
  bool others_observed(std::size_t r, std::size_t i) const { return (code[r] | (1u << i)) == full; }
  double ybar_minus(std::size_t r, std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j)
      if (j != i) s += y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
    return s / static_cast<double>(p - 1);
  }
};

// ---------------------------------------------------------------------------
// A fitted-parameter snapshot with per-pattern Gaussian conditioning caches.

struct PatternCache {
  std::vector<std::size_t> obs, mis;
  Eigen::MatrixXd gain;   // Sigma_mo Sigma_oo^{-1}
  Eigen::MatrixXd cov;    // Sigma_mm - gain Sigma_om
  Eigen::MatrixXd chol;   // lower Cholesky factor of cov
};

class Model {
 public:
  Model(const WorkingModelSpec& spec, const Prepared& prep, const QuadratureOptions& quad)
      : spec_(spec), prep_(prep), quad_(quad) {
    if (spec.is_gaussian()) {
      caches_.resize(prep.patterns.size());
      for (std::size_t k = 0; k < prep.patterns.size(); ++k) build_cache(k);
    }
  }

  const WorkingModelSpec& spec() const { return spec_; }

  double slope(std::size_t row, std::size_t j) const {
    const Eigen::VectorXd& g = spec_.gamma[j];
    if (g.size() == 1) return g(0);
    return g(0) + g.tail(g.size() - 1).dot(prep_.x[row]);
  }

  double log_odds(std::size_t row, std::size_t j, double yj) const {
    return -prep_.zpi.row(static_cast<Eigen::Index>(row)).dot(spec_.alpha1[j]) +
           slope(row, j) * (yj - spec_.y0(static_cast<Eigen::Index>(j)));
  }

  // log Pi_r / Pi_1 for pattern index k at outcome vector y (only r's missing entries read).
  double log_ratio(std::size_t row, std::size_t k, const Eigen::VectorXd& y) const {
    const Pattern& r = prep_.patterns[k];
    double lr = 0.0;
    for (std::size_t j = 0; j < prep_.p; ++j)
      if (!r.observed(j)) lr += log_odds(row, j, y(static_cast<Eigen::Index>(j)));
    for (std::size_t g : prep_.entering[k])
      lr += prep_.zpi.row(static_cast<Eigen::Index>(row)).dot(spec_.alpha2[g]);
    return lr;
  }

  Eigen::VectorXd mean(std::size_t row) const {
    return spec_.gaussian().coef.transpose() * prep_.zmu.row(static_cast<Eigen::Index>(row)).transpose();
  }

  // E(ybar_{-i} | X, R = (R_i = 0, R_-i = 1)).
  double expected_ybar_minus(std::size_t row, std::size_t i) const {
    Eigen::VectorXd m;
    if (spec_.is_gaussian()) {
      m = mean(row) + spec_.gaussian().cov.col(static_cast<Eigen::Index>(i)) * slope(row, i);
    } else {
      m = pattern_outcome_mean(spec_, prep_.x[row], item_pattern(prep_.p, i));
    }
    return (m.sum() - m(static_cast<Eigen::Index>(i))) / static_cast<double>(prep_.p - 1);
  }

  // E{m(X, Y; psi) | X, Y_(r) = y_(r), R = r}; y holds the observed entries and is used as
  // scratch for the missing ones.
  void expect_m(std::size_t row, std::size_t k, Eigen::VectorXd y, const Functional& f,
                const Eigen::VectorXd& psi, Eigen::Ref<Eigen::VectorXd> out) const {
    const Pattern& r = prep_.patterns[k];
    const Eigen::VectorXd& x = prep_.x[row];
    if (r.is_complete()) {
      f.m(x, y, psi, out);
      return;
    }
    if (!spec_.is_gaussian()) {
      out = imputation_expectation(spec_, x, observed_part(y, r), r, f, psi, quad_);
      return;
    }
    const PatternCache& c = caches_[k];
    const Eigen::VectorXd mu = mean(row);
    const auto nm = static_cast<Eigen::Index>(c.mis.size());
    Eigen::VectorXd cm(nm), tm(nm);
    for (Eigen::Index a = 0; a < nm; ++a) {
      cm(a) = mu(static_cast<Eigen::Index>(c.mis[static_cast<std::size_t>(a)]));
      tm(a) = slope(row, c.mis[static_cast<std::size_t>(a)]);
    }
    if (!c.obs.empty()) {
      Eigen::VectorXd dev(static_cast<Eigen::Index>(c.obs.size()));
      for (std::size_t b = 0; b < c.obs.size(); ++b)
        dev(static_cast<Eigen::Index>(b)) = y(static_cast<Eigen::Index>(c.obs[b])) -
                                            mu(static_cast<Eigen::Index>(c.obs[b]));
      cm += c.gain * dev;
    }
    cm += c.cov * tm;
    if (f.affine_in_y) {
      for (Eigen::Index a = 0; a < nm; ++a) y(static_cast<Eigen::Index>(c.mis[static_cast<std::size_t>(a)])) = cm(a);
      f.m(x, y, psi, out);
      return;
    }
    const QuadratureRule rule = standard_normal_rule(quad_.nodes);
    std::vector<std::size_t> idx(c.mis.size(), 0);
    Eigen::VectorXd z(nm), term(out.size());
    out.setZero();
    while (true) {
      double w = 1.0;
      for (Eigen::Index a = 0; a < nm; ++a) {
        z(a) = rule.nodes[idx[static_cast<std::size_t>(a)]];
        w *= rule.weights[idx[static_cast<std::size_t>(a)]];
      }
      const Eigen::VectorXd ym = cm + c.chol * z;
      for (Eigen::Index a = 0; a < nm; ++a) y(static_cast<Eigen::Index>(c.mis[static_cast<std::size_t>(a)])) = ym(a);
      f.m(x, y, psi, term);
      out += w * term;
      std::size_t a = 0;
      while (a < idx.size() && ++idx[a] == rule.nodes.size()) idx[a++] = 0;
      if (a == idx.size()) break;
    }
  }

 private:
  void build_cache(std::size_t k) {
    const Pattern& r = prep_.patterns[k];
    if (r.is_complete()) return;
    PatternCache& c = caches_[k];
    c.obs = r.observed_indices();
    c.mis = r.missing_indices();
    const Eigen::MatrixXd& s = spec_.gaussian().cov;
    const auto no = static_cast<Eigen::Index>(c.obs.size());
    const auto nm = static_cast<Eigen::Index>(c.mis.size());
    Eigen::MatrixXd smm(nm, nm), smo(nm, no), soo(no, no);
    auto at = [&](std::size_t a, std::size_t b) {
      return s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    };
    for (Eigen::Index a = 0; a < nm; ++a) {
      for (Eigen::Index b = 0; b < nm; ++b) smm(a, b) = at(c.mis[static_cast<std::size_t>(a)], c.mis[static_cast<std::size_t>(b)]);
      for (Eigen::Index b = 0; b < no; ++b) smo(a, b) = at(c.mis[static_cast<std::size_t>(a)], c.obs[static_cast<std::size_t>(b)]);
    }
    for (Eigen::Index a = 0; a < no; ++a)
      for (Eigen::Index b = 0; b < no; ++b) soo(a, b) = at(c.obs[static_cast<std::size_t>(a)], c.obs[static_cast<std::size_t>(b)]);
    if (no > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(soo);
      if (llt.info() != Eigen::Success) throw NumericalError("outcome covariance is not positive definite");
      c.gain = llt.solve(smo.transpose()).transpose();
      c.cov = smm - c.gain * smo.transpose();
    } else {
      c.gain.resize(nm, 0);
      c.cov = smm;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
    if (llt.info() != Eigen::Success) throw NumericalError("conditional outcome covariance is singular");
    c.chol = llt.matrixL();
  }

  const WorkingModelSpec& spec_;
  const Prepared& prep_;
  QuadratureOptions quad_;
  std::vector<PatternCache> caches_;
};

// ---------------------------------------------------------------------------
// Parameter layout of the stacked system.

std::size_t beta_size(const WorkingModelSpec& spec) {
  if (spec.is_gaussian()) return (spec.d + 1) * spec.p + spec.p * (spec.p + 1) / 2;
  return spec.multinomial().cells() - 1;
}

void pack_beta(const WorkingModelSpec& spec, Eigen::Ref<Eigen::VectorXd> out) {
  if (spec.is_gaussian()) {
    const auto& g = spec.gaussian();
    const auto nc = g.coef.size();
    out.head(nc) = g.coef.reshaped();
    Eigen::Index k = nc;
    for (Eigen::Index c = 0; c < g.cov.cols(); ++c)
      for (Eigen::Index r = c; r < g.cov.rows(); ++r) out(k++) = g.cov(r, c);
  } else {
    const auto& t = spec.multinomial();
    for (std::size_t c = 0; c + 1 < t.cells(); ++c) out(static_cast<Eigen::Index>(c)) = t.probs[c];
  }
}

void unpack_beta(const Eigen::VectorXd& theta, std::size_t off, WorkingModelSpec& spec) {
  const auto o = static_cast<Eigen::Index>(off);
  if (spec.is_gaussian()) {
    auto& g = std::get<GaussianOutcome>(spec.outcome);
    const auto rows = static_cast<Eigen::Index>(spec.d + 1), cols = static_cast<Eigen::Index>(spec.p);
    g.coef = theta.segment(o, rows * cols).reshaped(rows, cols);
    Eigen::Index k = o + rows * cols;
    g.cov.resize(cols, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = c; r < cols; ++r) g.cov(r, c) = g.cov(c, r) = theta(k++);
  } else {
    auto& t = std::get<MultinomialOutcome>(spec.outcome);
    double rest = 1.0;
    for (std::size_t c = 0; c + 1 < t.cells(); ++c) {
      t.probs[c] = theta(o + static_cast<Eigen::Index>(c));
      rest -= t.probs[c];
    }
    t.probs.back() = rest;
  }
}

std::string group_name(const SequentialGroup& g, std::size_t k) {
  std::string s = "alpha2[" + std::to_string(g.item + 1);
  if (g.prefix) s += "|" + Pattern(*g.prefix, g.item).to_string();
  return s + "]." + std::to_string(k);
}

struct Layout {
  std::optional<std::size_t> beta;
  std::vector<std::size_t> alpha1, gamma;  // npos when not estimated
  std::vector<std::size_t> alpha2_groups;
  std::optional<std::size_t> alpha2;
  std::size_t psi = 0;
  std::size_t dim = 0;

  WorkingModelSpec unpack(const WorkingModelSpec& base, const Eigen::VectorXd& theta) const {
    WorkingModelSpec s = base;
    if (beta) unpack_beta(theta, *beta, s);
    const auto dd = static_cast<Eigen::Index>(s.d + 1);
    for (std::size_t i = 0; i < s.p; ++i) {
      if (alpha1[i] != npos) s.alpha1[i] = theta.segment(static_cast<Eigen::Index>(alpha1[i]), dd);
      if (gamma[i] != npos)
        s.gamma[i] = theta.segment(static_cast<Eigen::Index>(gamma[i]), static_cast<Eigen::Index>(s.gamma_dim()));
    }
    if (alpha2)
      for (std::size_t k = 0; k < alpha2_groups.size(); ++k)
        s.alpha2[alpha2_groups[k]] = theta.segment(static_cast<Eigen::Index>(*alpha2) + static_cast<Eigen::Index>(k) * dd, dd);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Residual blocks. Each writes an n x size matrix; records outside a block's
// support contribute zero rows.

void beta_residual(const Prepared& P, const WorkingModelSpec& spec, Eigen::Ref<Eigen::MatrixXd> out) {
  out.setZero();
  if (spec.is_gaussian()) {
    const auto& g = spec.gaussian();
    const auto dd = static_cast<Eigen::Index>(P.d + 1), p = static_cast<Eigen::Index>(P.p);
    for (std::size_t row = 0; row < P.n; ++row) {
      if (!P.complete(row)) continue;
      const auto r = static_cast<Eigen::Index>(row);
      const Eigen::VectorXd z = P.zmu.row(r).transpose();
      const Eigen::VectorXd e = P.y.row(r).transpose() - g.coef.transpose() * z;
      for (Eigen::Index j = 0; j < p; ++j) out.row(r).segment(j * dd, dd) = (e(j) * z).transpose();
      Eigen::Index k = dd * p;
      for (Eigen::Index c = 0; c < p; ++c)
        for (Eigen::Index a = c; a < p; ++a) out(r, k++) = e(a) * e(c) - g.cov(a, c);
    }
  } else {
    const auto& t = spec.multinomial();
    for (std::size_t row = 0; row < P.n; ++row) {
      if (!P.complete(row)) continue;
      const auto r = static_cast<Eigen::Index>(row);
      for (std::size_t c = 0; c + 1 < t.cells(); ++c)
        out(r, static_cast<Eigen::Index>(c)) = (P.cell[row] == c ? 1.0 : 0.0) - t.probs[c];
    }
  }
}

enum class ItemForm { ipw, dr, mar };

// Propensity / odds-ratio equations for item i. Columns: z_pi weights, then (unless MAR)
// the odds-ratio columns, augmented by their conditional mean in the DR form.
void item_residual(const Prepared& P, const Model& M, std::size_t i, ItemForm form, double cap,
                   Eigen::Ref<Eigen::MatrixXd> out) {
  out.setZero();
  const auto dd = static_cast<Eigen::Index>(P.d + 1);
  const auto gd = static_cast<Eigen::Index>(M.spec().gamma_dim());
  for (std::size_t row = 0; row < P.n; ++row) {
    if (!P.others_observed(row, i)) continue;
    const auto r = static_cast<Eigen::Index>(row);
    double w = -1.0;
    if (P.complete(row)) {
      const double inv_pi = 1.0 + std::exp(M.log_odds(row, i, P.y(r, static_cast<Eigen::Index>(i))));
      w = std::min(inv_pi, cap) - 1.0;
    }
    out.row(r).head(dd) = w * P.zpi.row(r);
    if (form == ItemForm::mar) continue;
    double v = P.ybar_minus(row, i);
    if (form == ItemForm::dr) v -= M.expected_ybar_minus(row, i);
    if (gd == 1)
      out(r, dd) = w * v;
    else
      out.row(r).segment(dd, gd) = w * v * design_vector(CovariateMap::linear, P.x[row]).transpose();
  }
}

void reg_gamma_residual(const Prepared& P, const Model& M, std::size_t i, Eigen::Ref<Eigen::MatrixXd> out) {
  out.setZero();
  const auto gd = static_cast<Eigen::Index>(M.spec().gamma_dim());
  const std::uint32_t target = item_pattern(P.p, i).code();
  for (std::size_t row = 0; row < P.n; ++row) {
    if (P.code[row] != target) continue;
    const auto r = static_cast<Eigen::Index>(row);
    const double v = P.ybar_minus(row, i) - M.expected_ybar_minus(row, i);
    if (gd == 1)
      out(r, 0) = v;
    else
      out.row(r) = v * design_vector(CovariateMap::linear, P.x[row]).transpose();
  }
}

void alpha2_residual(const Prepared& P, const Model& M, const std::vector<std::size_t>& estimated,
                     Eigen::Ref<Eigen::MatrixXd> out) {
  out.setZero();
  const auto dd = static_cast<Eigen::Index>(P.d + 1);
  std::vector<std::size_t> slot(P.groups.size(), npos);
  for (std::size_t k = 0; k < estimated.size(); ++k) slot[estimated[k]] = k;
  for (std::size_t row = 0; row < P.n; ++row) {
    const auto r = static_cast<Eigen::Index>(row);
    if (P.complete(row)) {
      const Eigen::VectorXd y = P.y.row(r).transpose();
      for (std::size_t k = 0; k < P.patterns.size(); ++k) {
        if (k == P.complete_index || P.entering[k].empty()) continue;
        double ratio = -1.0;
        for (std::size_t g : P.entering[k]) {
          if (slot[g] == npos) continue;
          if (ratio < 0.0) ratio = std::exp(M.log_ratio(row, k, y));
          out.row(r).segment(static_cast<Eigen::Index>(slot[g]) * dd, dd) += ratio * P.zpi.row(r);
        }
      }
    } else {
      for (std::size_t g : P.entering[P.pattern_index[row]])
        if (slot[g] != npos) out.row(r).segment(static_cast<Eigen::Index>(slot[g]) * dd, dd) -= P.zpi.row(r);
    }
  }
}

void psi_residual(Method method, const Prepared& P, const Model& M, const Functional& f,
                  const Eigen::VectorXd& psi, double cap, Eigen::Ref<Eigen::MatrixXd> out) {
  const auto k = static_cast<Eigen::Index>(f.dim);
  Eigen::VectorXd buf(k), imp(k);
  std::vector<double> ratio(P.patterns.size());
  for (std::size_t row = 0; row < P.n; ++row) {
    const auto r = static_cast<Eigen::Index>(row);
    const Eigen::VectorXd y = P.y.row(r).transpose();
    if (!P.complete(row)) {
      if (method == Method::ipw) {
        out.row(r).setZero();
      } else {
        M.expect_m(row, P.pattern_index[row], y, f, psi, buf);
        out.row(r) = buf.transpose();
      }
      continue;
    }
    f.m(P.x[row], y, psi, buf);
    if (method == Method::reg) {
      out.row(r) = buf.transpose();
      continue;
    }
    double total = 0.0;
    for (std::size_t q = 0; q < P.patterns.size(); ++q) {
      ratio[q] = q == P.complete_index ? 1.0 : std::exp(M.log_ratio(row, q, y));
      total += ratio[q];
    }
    double scale = 1.0;
    if (total > cap) {
      scale = cap / total;
      total = cap;
    }
    Eigen::VectorXd acc = total * buf;
    if (method != Method::ipw) {
      for (std::size_t q = 0; q < P.patterns.size(); ++q) {
        if (q == P.complete_index) continue;
        M.expect_m(row, q, y, f, psi, imp);
        acc -= scale * ratio[q] * imp;
      }
    }
    out.row(r) = acc.transpose();
  }
}

// ---------------------------------------------------------------------------
// Starting values.

Eigen::VectorXd logistic_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& resp) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(z.cols());
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd eta = z * a;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
      mu(k) = expit(eta(k));
      w(k) = std::max(mu(k) * (1.0 - mu(k)), 1e-10);
    }
    const Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
    const Eigen::VectorXd step = info.ldlt().solve(z.transpose() * (resp - mu));
    if (!step.allFinite()) break;
    a += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return a;
}

WorkingModelSpec starting_spec(const Prepared& P, const WorkingModelSpec& init, Method method) {
  WorkingModelSpec s = init;
  std::vector<std::size_t> cc;
  for (std::size_t r = 0; r < P.n; ++r)
    if (P.complete(r)) cc.push_back(r);
  const auto ncc = static_cast<Eigen::Index>(cc.size());

  if (method != Method::ipw) {
    if (s.is_gaussian()) {
      Eigen::MatrixXd z(ncc, static_cast<Eigen::Index>(P.d + 1)), y(ncc, static_cast<Eigen::Index>(P.p));
      for (Eigen::Index k = 0; k < ncc; ++k) {
        z.row(k) = P.zmu.row(static_cast<Eigen::Index>(cc[static_cast<std::size_t>(k)]));
        y.row(k) = P.y.row(static_cast<Eigen::Index>(cc[static_cast<std::size_t>(k)]));
      }
      auto& g = std::get<GaussianOutcome>(s.outcome);
      g.coef = z.colPivHouseholderQr().solve(y);
      const Eigen::MatrixXd e = y - z * g.coef;
      g.cov = e.transpose() * e / static_cast<double>(ncc);
    } else {
      auto& t = std::get<MultinomialOutcome>(s.outcome);
      std::fill(t.probs.begin(), t.probs.end(), 0.0);
      for (std::size_t r : cc) t.probs[P.cell[r]] += 1.0 / static_cast<double>(ncc);
    }
  }
  for (std::size_t i = 0; i < P.p; ++i) {
    s.gamma[i].setZero();
    if (method == Method::reg) continue;
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < P.n; ++r)
      if (P.others_observed(r, i)) rows.push_back(r);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(P.d + 1));
    Eigen::VectorXd resp(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      z.row(static_cast<Eigen::Index>(k)) = P.zpi.row(static_cast<Eigen::Index>(rows[k]));
      resp(static_cast<Eigen::Index>(k)) = P.complete(rows[k]) ? 1.0 : 0.0;
    }
    s.alpha1[i] = logistic_fit(z, resp);
  }
  for (auto& a : s.alpha2) a.setZero();
  return s;
}

// ---------------------------------------------------------------------------

void check_inputs(const Dataset& data, const WorkingModelSpec& spec, const Functional& f) {
  data.validate();
  spec.validate();
  if (spec.p != data.p())
    throw DimensionError("working model has p = " + std::to_string(spec.p) + " but the data have " +
                         std::to_string(data.p()) + " outcomes");
  if (spec.d != data.d())
    throw DimensionError("working model has d = " + std::to_string(spec.d) + " but the data have " +
                         std::to_string(data.d()) + " covariates");
  if (!f.m || f.dim == 0) throw ConfigurationError("functional has no moment function");
  if (f.check) f.check(data);
}

BlockResidual guarded(BlockResidual f) {
  return [f = std::move(f)](const Eigen::VectorXd& theta, Eigen::Ref<Eigen::MatrixXd> out) {
    try {
      f(theta, out);
    } catch (const NumericalError&) {
      out.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  };
}

EstimationResult run(Method method, const Dataset& data, const WorkingModelSpec& spec_init,
                     const Functional& f, const EstimationOptions& opt) {
  check_inputs(data, spec_init, f);
  if (data.p() < 2 && method != Method::mar)
    throw ConfigurationError("estimating the odds ratio needs at least two outcomes");
  if (!(opt.min_propensity > 0.0 && opt.min_propensity < 1.0))
    throw ConfigurationError("min_propensity must be in (0, 1)");

  const PatternSet ps = enumerate_patterns(data);
  EstimationResult res;
  res.method = method;
  res.diagnostics.patterns = ps;
  res.diagnostics.validation = check_patterns(ps, opt);
  for (const auto& [r, c] : res.diagnostics.validation.sparse_patterns)
    res.diagnostics.warnings.push_back("pattern " + r.to_string() + " has only " + std::to_string(c) +
                                       " records");

  auto prep = std::make_shared<const Prepared>(data, spec_init, ps);
  const Prepared& P = *prep;
  if (spec_init.is_gaussian() && !f.affine_in_y)
    for (const auto& r : P.patterns)
      if (r.missing_count() > opt.quadrature.max_dims)
        throw ConfigurationError("pattern " + r.to_string() + " leaves " + std::to_string(r.missing_count()) +
                                 " continuous outcomes to integrate; max_quadrature_dims is " +
                                 std::to_string(opt.quadrature.max_dims));

  WorkingModelSpec base = opt.start_from_spec ? spec_init : starting_spec(P, spec_init, method);
  if (method == Method::mar)
    for (auto& g : base.gamma) g.setZero();

  const std::size_t p = P.p, dd = P.d + 1, gd = spec_init.gamma_dim();
  const double cap = 1.0 / opt.min_propensity;
  const bool uses_beta = method != Method::ipw;
  const bool uses_propensity = method != Method::reg;

  auto layout = std::make_shared<Layout>();
  Layout& L = *layout;
  L.alpha1.assign(p, npos);
  L.gamma.assign(p, npos);
  EstimatingSystem sys(P.n);
  std::vector<std::string> names;
  std::vector<std::string> item_blocks;
  auto base_ptr = std::make_shared<const WorkingModelSpec>(base);
  const QuadratureOptions quad = opt.quadrature;

  if (uses_beta) {
    const std::size_t size = beta_size(base);
    L.beta = sys.add_block("beta", size, guarded([prep, layout, base_ptr](const Eigen::VectorXd& th, Eigen::Ref<Eigen::MatrixXd> out) {
      beta_residual(*prep, layout->unpack(*base_ptr, th), out);
    }));
    if (base.is_gaussian()) {
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < dd; ++k)
          names.push_back("beta[" + std::to_string(j + 1) + "]." + std::to_string(k));
      for (std::size_t c = 0; c < p; ++c)
        for (std::size_t a = c; a < p; ++a)
          names.push_back("sigma[" + std::to_string(a + 1) + "," + std::to_string(c + 1) + "]");
    } else {
      for (std::size_t c = 0; c + 1 < base.multinomial().cells(); ++c)
        names.push_back("prob[" + std::to_string(c) + "]");
    }
  }

  for (std::size_t i = 0; i < p; ++i) {
    const std::string bname = "item[" + std::to_string(i + 1) + "]";
    if (method == Method::reg) {
      const std::size_t off = sys.add_block(bname, gd, guarded([prep, layout, base_ptr, i, quad](const Eigen::VectorXd& th, Eigen::Ref<Eigen::MatrixXd> out) {
        const WorkingModelSpec s = layout->unpack(*base_ptr, th);
        reg_gamma_residual(*prep, Model(s, *prep, quad), i, out);
      }), {"beta"});
      L.gamma[i] = off;
      for (std::size_t k = 0; k < gd; ++k) names.push_back(gamma_name(i, k, gd));
    } else {
      const ItemForm form = method == Method::ipw ? ItemForm::ipw : method == Method::dr ? ItemForm::dr : ItemForm::mar;
      const std::size_t size = dd + (form == ItemForm::mar ? 0 : gd);
      std::vector<std::string> deps;
      if (form == ItemForm::dr) deps.push_back("beta");
      const std::size_t off = sys.add_block(bname, size, guarded([prep, layout, base_ptr, i, form, cap, quad](const Eigen::VectorXd& th, Eigen::Ref<Eigen::MatrixXd> out) {
        const WorkingModelSpec s = layout->unpack(*base_ptr, th);
        item_residual(*prep, Model(s, *prep, quad), i, form, cap, out);
      }), deps);
      L.alpha1[i] = off;
      for (std::size_t k = 0; k < dd; ++k) names.push_back("alpha1[" + std::to_string(i + 1) + "]." + std::to_string(k));
      if (form != ItemForm::mar) {
        L.gamma[i] = off + dd;
        for (std::size_t k = 0; k < gd; ++k) names.push_back(gamma_name(i, k, gd));
      }
    }
    item_blocks.push_back(bname);
  }

  if (uses_propensity) {
    std::vector<bool> used(P.groups.size(), false);
    for (std::size_t k = 0; k < P.patterns.size(); ++k)
      if (k != P.complete_index)
        for (std::size_t g : P.entering[k]) used[g] = true;
    for (std::size_t g = 0; g < used.size(); ++g)
      if (used[g]) L.alpha2_groups.push_back(g);
    if (!L.alpha2_groups.empty()) {
      L.alpha2 = sys.add_block("alpha2", L.alpha2_groups.size() * dd, guarded([prep, layout, base_ptr, quad](const Eigen::VectorXd& th, Eigen::Ref<Eigen::MatrixXd> out) {
        const WorkingModelSpec s = layout->unpack(*base_ptr, th);
        alpha2_residual(*prep, Model(s, *prep, quad), layout->alpha2_groups, out);
      }), item_blocks);
      for (std::size_t g : L.alpha2_groups)
        for (std::size_t k = 0; k < dd; ++k) names.push_back(group_name(P.groups[g], k));
    }
  }

  std::vector<std::string> psi_deps = item_blocks;
  if (uses_beta) psi_deps.push_back("beta");
  if (L.alpha2) psi_deps.push_back("alpha2");
  auto fptr = std::make_shared<const Functional>(f);
  L.psi = sys.add_block("psi", f.dim, guarded([prep, layout, base_ptr, fptr, method, cap, quad](const Eigen::VectorXd& th, Eigen::Ref<Eigen::MatrixXd> out) {
    const WorkingModelSpec s = layout->unpack(*base_ptr, th);
    const Eigen::VectorXd psi = th.segment(static_cast<Eigen::Index>(layout->psi), static_cast<Eigen::Index>(fptr->dim));
    psi_residual(method, *prep, Model(s, *prep, quad), *fptr, psi, cap, out);
  }), psi_deps);
  for (std::size_t k = 0; k < f.dim; ++k)
    names.push_back(k < f.component_names.size() ? f.component_names[k] : "psi[" + std::to_string(k + 1) + "]");
  L.dim = sys.dim();

  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.dim));
  if (L.beta) pack_beta(base, theta0.segment(static_cast<Eigen::Index>(*L.beta), static_cast<Eigen::Index>(beta_size(base))));
  for (std::size_t i = 0; i < p; ++i) {
    if (L.alpha1[i] != npos) theta0.segment(static_cast<Eigen::Index>(L.alpha1[i]), static_cast<Eigen::Index>(dd)) = base.alpha1[i];
    if (L.gamma[i] != npos) theta0.segment(static_cast<Eigen::Index>(L.gamma[i]), static_cast<Eigen::Index>(gd)) = base.gamma[i];
  }
  if (L.alpha2)
    for (std::size_t k = 0; k < L.alpha2_groups.size(); ++k)
      theta0.segment(static_cast<Eigen::Index>(*L.alpha2 + k * dd), static_cast<Eigen::Index>(dd)) = base.alpha2[L.alpha2_groups[k]];

  const SolveResult sol = solve(sys, theta0, opt.solver);
  auto& diag = res.diagnostics;
  diag.converged = sol.converged;
  diag.iterations = sol.iterations;
  diag.residual_norm = sol.residual_norm;
  diag.warnings.insert(diag.warnings.end(), sol.warnings.begin(), sol.warnings.end());
  if (!sol.converged)
    throw ConvergenceError(std::string(to_string(method)) + " estimating equations did not converge (residual max-norm " +
                           std::to_string(sol.residual_norm) + " after " + std::to_string(sol.iterations) + " iterations)");

  res.theta = sol.theta_hat;
  res.theta_names = names;
  for (const auto& b : sys.blocks()) res.blocks.push_back({b.name, b.offset, b.size});
  res.fitted = L.unpack(base, res.theta);
  res.component_names.assign(names.end() - static_cast<std::ptrdiff_t>(f.dim), names.end());
  const auto po = static_cast<Eigen::Index>(L.psi), k = static_cast<Eigen::Index>(f.dim);
  res.psi_hat = res.theta.segment(po, k);

  if (uses_propensity) {
    const Model M(res.fitted, P, quad);
    for (std::size_t row = 0; row < P.n; ++row) {
      if (!P.complete(row)) continue;
      const Eigen::VectorXd y = P.y.row(static_cast<Eigen::Index>(row)).transpose();
      double total = 0.0;
      for (std::size_t q = 0; q < P.patterns.size(); ++q)
        total += q == P.complete_index ? 1.0 : std::exp(M.log_ratio(row, q, y));
      bool hit = total > cap;
      diag.min_fitted_propensity = std::min(diag.min_fitted_propensity, 1.0 / total);
      for (std::size_t i = 0; i < p; ++i) {
        const double pi = expit(-M.log_odds(row, i, y(static_cast<Eigen::Index>(i))));
        diag.min_fitted_propensity = std::min(diag.min_fitted_propensity, pi);
        hit = hit || pi < opt.min_propensity;
      }
      if (hit) ++diag.propensity_floor_hits;
    }
    if (diag.propensity_floor_hits > 0)
      diag.warnings.push_back(std::to_string(diag.propensity_floor_hits) +
                              " records had a fitted propensity below min_propensity and were floored");
  }

  if (opt.compute_covariance) {
    res.covariance = sandwich_covariance(sys, res.theta, opt.solver.fd_step);
    res.psi_covariance = res.covariance.block(po, po, k, k);
  } else {
    res.psi_covariance = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
  }
  res.psi_se = res.psi_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (opt.compute_covariance) res.psi_ci = wald_ci(res.psi_hat, res.psi_covariance, opt.level);
  const double z = normal_quantile(0.5 * (1.0 + opt.level));
  for (const auto& c : f.contrasts) {
    ContrastEstimate ce;
    ce.name = c.name;
    ce.estimate = c.weights.dot(res.psi_hat);
    ce.se = std::sqrt(std::max(0.0, c.weights.dot(res.psi_covariance * c.weights)));
    ce.ci = {ce.estimate - z * ce.se, ce.estimate + z * ce.se};
    res.contrasts.push_back(ce);
  }
  return res;
}

}  // namespace

EstimationResult estimate_ipw(const Dataset& data, const WorkingModelSpec& spec_init,
                              const Functional& functional, const EstimationOptions& options) {
  return run(Method::ipw, data, spec_init, functional, options);
}

EstimationResult estimate_reg(const Dataset& data, const WorkingModelSpec& spec_init,
                              const Functional& functional, const EstimationOptions& options) {
  return run(Method::reg, data, spec_init, functional, options);
}

EstimationResult estimate_dr(const Dataset& data, const WorkingModelSpec& spec_init,
                             const Functional& functional, const EstimationOptions& options) {
  return run(Method::dr, data, spec_init, functional, options);
}

EstimationResult estimate_mar_benchmark(const Dataset& data, const WorkingModelSpec& spec_init,
                                        const Functional& functional, const EstimationOptions& options) {
  return run(Method::mar, data, spec_init, functional, options);
}

EstimationResult estimate(Method method, const Dataset& data, const WorkingModelSpec& spec_init,
                          const Functional& functional, const EstimationOptions& options) {
  return run(method, data, spec_init, functional, options);
}

std::vector<ResidualBlock> residuals_at(const Dataset& data, const WorkingModelSpec& spec,
                                        const EstimationOptions& options) {
  data.validate();
  spec.validate();
  if (spec.p != data.p() || spec.d != data.d()) throw DimensionError("spec does not match the data");
  const PatternSet ps = enumerate_patterns(data);
  const Prepared P(data, spec, ps);
  const Model M(spec, P, options.quadrature);
  const double cap = 1.0 / options.min_propensity;
  const auto n = static_cast<Eigen::Index>(P.n);
  const auto dd = static_cast<Eigen::Index>(P.d + 1), gd = static_cast<Eigen::Index>(spec.gamma_dim());

  std::vector<ResidualBlock> out;
  ResidualBlock beta{"beta", Eigen::MatrixXd(n, static_cast<Eigen::Index>(beta_size(spec)))};
  beta_residual(P, spec, beta.values);
  out.push_back(std::move(beta));
  for (std::size_t i = 0; i < P.p && P.p > 1; ++i) {
    const std::string tag = "[" + std::to_string(i + 1) + "]";
    ResidualBlock ipw{"item_ipw" + tag, Eigen::MatrixXd(n, dd + gd)};
    item_residual(P, M, i, ItemForm::ipw, cap, ipw.values);
    ResidualBlock dr{"item_dr" + tag, Eigen::MatrixXd(n, dd + gd)};
    item_residual(P, M, i, ItemForm::dr, cap, dr.values);
    ResidualBlock reg{"reg_gamma" + tag, Eigen::MatrixXd(n, gd)};
    reg_gamma_residual(P, M, i, reg.values);
    out.push_back(std::move(ipw));
    out.push_back(std::move(dr));
    out.push_back(std::move(reg));
  }
  std::vector<std::size_t> groups;
  for (std::size_t k = 0; k < P.patterns.size(); ++k)
    if (k != P.complete_index)
      for (std::size_t g : P.entering[k])
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  std::sort(groups.begin(), groups.end());
  if (!groups.empty()) {
    ResidualBlock a2{"alpha2", Eigen::MatrixXd(n, static_cast<Eigen::Index>(groups.size()) * dd)};
    alpha2_residual(P, M, groups, a2.values);
    out.push_back(std::move(a2));
  }
  return out;
}

}  // namespace selfcens
