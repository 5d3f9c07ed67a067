#include "selfcens/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "selfcens/errors.hpp"
#include "selfcens/io.hpp"

namespace selfcens {

std::size_t DiscreteJoint::cells() const {
  std::size_t c = 1;
  for (const auto& s : y_support) c *= s.size();
  return c;
}

std::size_t DiscreteJoint::stride(std::size_t j) const {
  std::size_t s = 1;
  for (std::size_t k = 0; k < j; ++k) s *= y_support[k].size();
  return s;
}

std::size_t DiscreteJoint::level(std::size_t cell, std::size_t j) const {
  return (cell / stride(j)) % y_support[j].size();
}

Eigen::VectorXd DiscreteJoint::y_values(std::size_t cell) const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) y(static_cast<Eigen::Index>(j)) = y_support[j][level(cell, j)];
  return y;
}

Eigen::VectorXd DiscreteJoint::x_vector(std::size_t k) const {
  if (!has_covariate) return Eigen::VectorXd(0);
  return Eigen::VectorXd::Constant(1, x_levels[k]);
}

PatternSet DiscreteJoint::pattern_set() const {
  PatternSet ps(p);
  for (std::uint32_t r = 0; r < patterns(); ++r) {
    bool present = false;
    for (std::size_t k = 0; k < table.size() && !present; ++k)
      for (std::size_t c = 0; c < cells() && !present; ++c) present = at(k, c, r) > 0.0;
    if (present) ps.add(Pattern(r, p));
  }
  return ps;
}

void DiscreteJoint::validate() const {
  if (p == 0 || p > kMaxOutcomes) throw DimensionError("joint: p must be in [1, 16]");
  if (y_support.size() != p) throw DimensionError("joint: need one support per outcome");
  for (const auto& s : y_support)
    if (s.empty()) throw InputError("joint: empty outcome support");
  if (x_levels.empty() || x_weights.size() != x_levels.size() || table.size() != x_levels.size())
    throw DimensionError("joint: covariate levels, weights and tables disagree");
  for (std::size_t k = 0; k < table.size(); ++k) {
    if (table[k].size() != cells() * patterns()) throw DimensionError("joint: table has wrong size");
    double total = 0.0;
    for (double v : table[k]) {
      if (!(v >= 0.0)) throw InputError("joint: negative or NaN probability");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InputError("joint: probabilities do not sum to 1 at some x");
  }
}

// ---------------------------------------------------------------------------

std::size_t ObservedLaw::canonical(std::size_t cell, std::uint32_t r) const {
  std::size_t out = cell;
  for (std::size_t j = 0; j < law.p; ++j)
    if (!((r >> j) & 1u)) out -= law.level(cell, j) * law.stride(j);
  return out;
}

double ObservedLaw::mass(std::size_t k, std::size_t cell, std::uint32_t r) const {
  return law.at(k, canonical(cell, r), r);
}

ObservedLaw observe(const DiscreteJoint& joint) {
  ObservedLaw obs;
  obs.law = joint;
  for (auto& t : obs.law.table) std::fill(t.begin(), t.end(), 0.0);
  for (std::size_t k = 0; k < joint.table.size(); ++k)
    for (std::size_t c = 0; c < joint.cells(); ++c)
      for (std::uint32_t r = 0; r < joint.patterns(); ++r)
        obs.law.at(k, obs.canonical(c, r), r) += joint.at(k, c, r);
  return obs;
}

ObservedLaw observed_from_data(const Dataset& data, const std::vector<std::vector<double>>& y_support,
                               const std::vector<double>& x_levels) {
  if (data.empty()) throw InputError("observed_from_data: empty dataset");
  if (data.d() > 1) throw DimensionError("observed_from_data: at most one covariate is supported");
  if (y_support.size() != data.p()) throw DimensionError("observed_from_data: one support per outcome");
  ObservedLaw obs;
  DiscreteJoint& J = obs.law;
  J.p = data.p();
  J.y_support = y_support;
  J.has_covariate = data.d() == 1;
  J.x_levels = J.has_covariate ? x_levels : std::vector<double>{0.0};
  if (J.x_levels.empty()) throw InputError("observed_from_data: covariate levels required");
  J.x_weights.assign(J.x_levels.size(), 0.0);
  J.table.assign(J.x_levels.size(), std::vector<double>(J.cells() * J.patterns(), 0.0));
  auto find_level = [](const std::vector<double>& s, double v) -> std::size_t {
    for (std::size_t k = 0; k < s.size(); ++k)
      if (std::abs(s[k] - v) <= 1e-9) return k;
    throw InputError("observed_from_data: value " + std::to_string(v) + " outside the declared support");
  };
  for (std::size_t row = 0; row < data.n(); ++row) {
    const std::size_t k = J.has_covariate ? find_level(J.x_levels, data.x()(static_cast<Eigen::Index>(row), 0)) : 0;
    const std::uint32_t r = data.pattern_codes()[row];
    std::size_t cell = 0;
    for (std::size_t j = 0; j < J.p; ++j)
      if ((r >> j) & 1u)
        cell += find_level(J.y_support[j], data.y()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j))) * J.stride(j);
    J.at(k, cell, r) += 1.0;
    J.x_weights[k] += 1.0;
  }
  for (std::size_t k = 0; k < J.x_levels.size(); ++k) {
    if (J.x_weights[k] == 0.0) throw InputError("observed_from_data: a covariate level has no records");
    for (double& v : J.table[k]) v /= J.x_weights[k];
    J.x_weights[k] /= static_cast<double>(data.n());
  }
  return obs;
}

SelfCensoringCheck verify_self_censoring(const DiscreteJoint& joint, double tol) {
  SelfCensoringCheck out;
  const std::size_t p = joint.p;
  for (std::size_t k = 0; k < joint.table.size(); ++k) {
    for (std::size_t i = 0; i < p; ++i) {
      const std::uint32_t bit = 1u << i;
      for (std::uint32_t others = 0; others < joint.patterns(); ++others) {
        if (others & bit) continue;
        // Range of P(R_i = 1 | x, y, r_-i) over y_-i for each level of y_i.
        std::vector<double> lo(joint.levels(i), std::numeric_limits<double>::infinity());
        std::vector<double> hi(joint.levels(i), -std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < joint.cells(); ++c) {
          const double on = joint.at(k, c, others | bit);
          const double total = on + joint.at(k, c, others);
          if (total <= 0.0) {
            ++out.skipped_cells;
            continue;
          }
          const std::size_t l = joint.level(c, i);
          lo[l] = std::min(lo[l], on / total);
          hi[l] = std::max(hi[l], on / total);
        }
        for (std::size_t l = 0; l < lo.size(); ++l)
          if (hi[l] >= lo[l]) out.max_violation = std::max(out.max_violation, hi[l] - lo[l]);
      }
    }
  }
  out.holds = out.max_violation <= tol;
  return out;
}

DiscreteJoint construct_self_censoring_joint(const WorkingModelSpec& spec, const PatternSet& ps,
                                             const std::vector<double>& x_levels) {
  spec.validate();
  if (spec.is_gaussian()) throw ConfigurationError("construct_self_censoring_joint needs a multinomial baseline");
  if (spec.d > 1) throw DimensionError("construct_self_censoring_joint supports at most one covariate");
  if (spec.d == 0 && !x_levels.empty()) throw DimensionError("covariate levels given but the spec has d = 0");
  if (spec.d == 1 && x_levels.empty()) throw DimensionError("covariate levels required when d = 1");
  if (ps.p() != spec.p) throw DimensionError("pattern set dimension does not match the spec");
  const ValidationReport rep = validate_positivity(ps, 1);
  if (!rep.valid()) {
    std::string msg = "invalid pattern set:";
    if (!rep.has_complete_pattern) msg += " complete pattern absent;";
    for (const auto& r : rep.missing_patterns) msg += " missing " + r.to_string();
    throw PositivityError(msg);
  }

  const auto& tab = spec.multinomial();
  DiscreteJoint J;
  J.p = spec.p;
  J.y_support = tab.support;
  J.has_covariate = spec.d == 1;
  J.x_levels = J.has_covariate ? x_levels : std::vector<double>{0.0};
  J.x_weights.assign(J.x_levels.size(), 1.0 / static_cast<double>(J.x_levels.size()));
  J.table.assign(J.x_levels.size(), std::vector<double>(J.cells() * J.patterns(), 0.0));
  const auto pats = ps.patterns();
  for (std::size_t k = 0; k < J.x_levels.size(); ++k) {
    const Eigen::VectorXd x = J.x_vector(k);
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(J.cells() * J.patterns(), -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < J.cells(); ++c) {
      if (tab.probs[c] <= 0.0) continue;
      const Eigen::VectorXd y = tab.values(c);
      for (const auto& r : pats) {
        const double v = std::log(tab.probs[c]) + log_propensity_ratio(spec, x, y, r);
        logs[c * J.patterns() + r.code()] = v;
        mx = std::max(mx, v);
      }
    }
    double total = 0.0;
    for (std::size_t e = 0; e < logs.size(); ++e) {
      J.table[k][e] = std::exp(logs[e] - mx);
      total += J.table[k][e];
    }
    for (double& v : J.table[k]) v /= total;
  }
  return J;
}

// ---------------------------------------------------------------------------
// Identification

namespace {

struct Svd {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd;
  std::size_t rank = 0;
  explicit Svd(const Eigen::MatrixXd& a) : svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV) {
    const auto& s = svd.singularValues();
    if (s.size() == 0 || !(s(0) > 0.0)) return;
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (s(j) / s(0) > 1e-10) ++rank;
  }
};

// Mass of pattern r at covariate level k with Y_i at level l (observed layout).
double mass_at_level(const ObservedLaw& obs, std::size_t k, std::uint32_t r, std::size_t i, std::size_t l) {
  const DiscreteJoint& J = obs.law;
  double s = 0.0;
  for (std::size_t c = 0; c < J.cells(); ++c)
    if (J.level(c, i) == l && obs.canonical(c, r) == c) s += J.at(k, c, r);
  return s;
}

double pattern_mass(const DiscreteJoint& J, std::size_t k, std::uint32_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < J.cells(); ++c) s += J.at(k, c, r);
  return s;
}

}  // namespace

OddsTable solve_odds_function(const ObservedLaw& observed, std::size_t i) {
  const DiscreteJoint& J = observed.law;
  if (i >= J.p) throw DimensionError("solve_odds_function: outcome index out of range");
  const std::uint32_t full = Pattern::full_mask(J.p);
  const std::uint32_t item = full & ~(1u << i);
  const std::size_t L = J.levels(i);
  const std::size_t si = J.stride(i);

  OddsTable out;
  out.item = i;
  out.columns = L;
  out.rank = L;
  for (std::size_t k = 0; k < J.table.size(); ++k) {
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    for (std::size_t c0 = 0; c0 < J.cells(); ++c0) {
      if (J.level(c0, i) != 0) continue;
      Eigen::VectorXd a(static_cast<Eigen::Index>(L));
      double den = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        a(static_cast<Eigen::Index>(l)) = J.at(k, c0 + l * si, full);
        den += a(static_cast<Eigen::Index>(l));
      }
      const double num = J.at(k, c0, item);
      if (den <= 0.0) {
        if (num > 0.0)
          throw PositivityError("solve_odds_function: outcome " + std::to_string(i + 1) +
                                " has mass on its single-missing pattern where no complete cases occur");
        continue;
      }
      rows.push_back(a / den);
      rhs.push_back(num / den);
    }
    Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(L));
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t q = 0; q < rows.size(); ++q) {
      A.row(static_cast<Eigen::Index>(q)) = rows[q].transpose();
      b(static_cast<Eigen::Index>(q)) = rhs[q];
    }
    const Svd s(A);
    out.rank = std::min(out.rank, s.rank);
    if (s.rank < L)
      throw IdentificationError("completeness fails for outcome " + std::to_string(i + 1) +
                                    ": conditional probability matrix has rank " + std::to_string(s.rank) +
                                    " < " + std::to_string(L),
                                L - s.rank);
    const Eigen::VectorXd o = s.svd.solve(b);
    out.residual = std::max(out.residual, (A * o - b).cwiseAbs().maxCoeff());
    out.values.emplace_back(o.data(), o.data() + o.size());
  }
  return out;
}

double EtaTable::operator()(std::size_t k, std::uint32_t prefix) const {
  const std::uint32_t bit = 1u << item;
  if ((prefix & bit) || (prefix & (bit - 1)) == bit - 1) return 1.0;
  auto it = values.at(k).find(prefix);
  if (it == values[k].end())
    throw PositivityError("sequential odds ratio undefined for prefix " + Pattern(prefix, item + 1).to_string());
  return it->second;
}

EtaTable sequential_or_from_observed(const ObservedLaw& observed, const std::vector<OddsTable>& odds,
                                     std::size_t i) {
  const DiscreteJoint& J = observed.law;
  if (i == 0 || i >= J.p) throw DimensionError("sequential_or_from_observed: index must be in [1, p)");
  const OddsTable* oi = nullptr;
  for (const auto& o : odds)
    if (o.item == i) oi = &o;
  if (!oi) throw InputError("sequential_or_from_observed: odds table for the outcome is missing");

  const std::uint32_t full = Pattern::full_mask(J.p);
  const std::uint32_t low = Pattern::full_mask(i + 1);
  const std::uint32_t bit = 1u << i;
  EtaTable out;
  out.item = i;
  out.values.resize(J.table.size());
  for (std::size_t k = 0; k < J.table.size(); ++k) {
    for (std::uint32_t prefix = 0; prefix <= low; ++prefix) {
      const std::uint32_t r = prefix | (full & ~low);
      const double num = pattern_mass(J, k, r);
      if (num <= 0.0 && !(prefix & bit)) continue;
      if ((prefix & bit) || (prefix & (bit - 1)) == bit - 1) {
        out.values[k][prefix] = 1.0;
        continue;
      }
      double den = 0.0;
      for (std::size_t l = 0; l < J.levels(i); ++l)
        den += mass_at_level(observed, k, r | bit, i, l) * oi->values[k][l];
      if (!(den > 0.0))
        throw PositivityError("sequential odds ratio: zero denominator for pattern " + Pattern(r, J.p).to_string());
      out.values[k][prefix] = num / den;
    }
  }
  return out;
}

DiscreteJoint reconstruct_joint(const ObservedLaw& observed) {
  const DiscreteJoint& J = observed.law;
  J.validate();
  const PatternSet ps = J.pattern_set();
  const ValidationReport rep = validate_positivity(ps, 1);
  if (!rep.valid()) {
    std::string msg = "observed pattern set violates positivity:";
    if (!rep.has_complete_pattern) msg += " complete pattern absent;";
    for (const auto& r : rep.missing_patterns) msg += " missing " + r.to_string();
    throw PositivityError(msg);
  }
  std::vector<OddsTable> odds;
  for (std::size_t i = 0; i < J.p; ++i) odds.push_back(solve_odds_function(observed, i));
  std::vector<EtaTable> etas;
  for (std::size_t i = 1; i < J.p; ++i) etas.push_back(sequential_or_from_observed(observed, odds, i));

  const std::uint32_t full = Pattern::full_mask(J.p);
  DiscreteJoint out = J;
  for (auto& t : out.table) std::fill(t.begin(), t.end(), 0.0);
  const auto codes = ps.codes();
  for (std::size_t k = 0; k < J.table.size(); ++k) {
    for (std::size_t c = 0; c < J.cells(); ++c) {
      const double base = J.at(k, c, full);
      if (base == 0.0) continue;
      for (std::uint32_t r : codes) {
        double v = base;
        for (std::size_t j = 0; j < J.p; ++j)
          if (!((r >> j) & 1u)) v *= odds[j].values[k][J.level(c, j)];
        for (const auto& e : etas) v *= e(k, r & Pattern::full_mask(e.item + 1));
        out.at(k, c, r) = v;
      }
    }
  }
  return out;
}

double definitional_eta(const DiscreteJoint& joint, std::size_t k, std::size_t cell, std::size_t i,
                        std::uint32_t prefix) {
  if (i == 0 || i >= joint.p) throw DimensionError("definitional_eta: index must be in [1, p)");
  const std::uint32_t full = Pattern::full_mask(joint.p);
  const std::uint32_t low = Pattern::full_mask(i + 1);
  const std::uint32_t bit = 1u << i;
  const std::uint32_t high = full & ~low;
  const std::uint32_t r_a = (prefix & low) | high;
  const std::uint32_t r_c = r_a | bit;
  const std::uint32_t r_d = (prefix & bit) ? full : (full & ~bit);
  const double num = joint.at(k, cell, r_a) * joint.at(k, cell, full);
  const double den = joint.at(k, cell, r_c) * joint.at(k, cell, r_d);
  if (!(den > 0.0)) throw PositivityError("definitional_eta: zero-probability reference pattern");
  return num / den;
}

std::string to_string(RestrictionStatus s) {
  switch (s) {
    case RestrictionStatus::consistent: return "consistent";
    case RestrictionStatus::rejected: return "rejected";
    case RestrictionStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

RestrictionResult test_self_censoring_restriction(const ObservedLaw& observed, std::size_t i, double tol) {
  const DiscreteJoint& J = observed.law;
  if (i >= J.p) throw DimensionError("test_self_censoring_restriction: outcome index out of range");
  const std::uint32_t bit = 1u << i;
  const std::size_t L = J.levels(i);
  const std::size_t si = J.stride(i);
  RestrictionResult out;
  bool any_consistent = false, any_rejected = false;
  for (std::size_t k = 0; k < J.table.size(); ++k) {
    for (std::uint32_t others = 0; others < J.patterns(); ++others) {
      if (others & bit) continue;
      const double total = pattern_mass(J, k, others) + pattern_mass(J, k, others | bit);
      if (total <= 0.0) continue;
      RestrictionConfig cfg;
      cfg.x_level = k;
      cfg.others = others;
      std::vector<Eigen::VectorXd> rows;
      for (std::size_t c0 = 0; c0 < J.cells(); ++c0) {
        if (J.level(c0, i) != 0 || observed.canonical(c0, others) != c0) continue;
        Eigen::VectorXd a(static_cast<Eigen::Index>(L));
        for (std::size_t l = 0; l < L; ++l) a(static_cast<Eigen::Index>(l)) = J.at(k, c0 + l * si, others | bit);
        const double b = a.sum() + J.at(k, c0, others);
        if (b <= 0.0) continue;
        rows.push_back(a / b);
      }
      if (rows.size() >= L) {
        Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(L));
        for (std::size_t q = 0; q < rows.size(); ++q) A.row(static_cast<Eigen::Index>(q)) = rows[q].transpose();
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(A.rows());
        const Svd s(A);
        if (s.rank == L) {
          const Eigen::VectorXd u = s.svd.solve(ones);
          cfg.residual = (A * u - ones).cwiseAbs().maxCoeff();
          bool inside = cfg.residual <= tol;
          for (Eigen::Index l = 0; l < u.size(); ++l) {
            cfg.phi.push_back(1.0 / u(l));
            inside = inside && std::isfinite(u(l)) && u(l) >= 1.0 - 1e-9;
          }
          cfg.status = inside ? RestrictionStatus::consistent : RestrictionStatus::rejected;
        }
      }
      any_consistent = any_consistent || cfg.status == RestrictionStatus::consistent;
      any_rejected = any_rejected || cfg.status == RestrictionStatus::rejected;
      out.configs.push_back(std::move(cfg));
    }
  }
  out.status = any_rejected ? RestrictionStatus::rejected
                            : any_consistent ? RestrictionStatus::consistent : RestrictionStatus::inconclusive;
  return out;
}

double total_variation(const DiscreteJoint& a, const DiscreteJoint& b) {
  if (a.table.size() != b.table.size()) throw DimensionError("total_variation: layouts differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.table.size(); ++k) {
    if (a.table[k].size() != b.table[k].size()) throw DimensionError("total_variation: layouts differ");
    double s = 0.0;
    for (std::size_t e = 0; e < a.table[k].size(); ++e) s += std::abs(a.table[k][e] - b.table[k][e]);
    worst = std::max(worst, 0.5 * s);
  }
  return worst;
}

double max_abs_difference(const DiscreteJoint& a, const DiscreteJoint& b) {
  if (a.table.size() != b.table.size()) throw DimensionError("max_abs_difference: layouts differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.table.size(); ++k) {
    if (a.table[k].size() != b.table[k].size()) throw DimensionError("max_abs_difference: layouts differ");
    for (std::size_t e = 0; e < a.table[k].size(); ++e)
      worst = std::max(worst, std::abs(a.table[k][e] - b.table[k][e]));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// CSV

void write_joint_csv(const DiscreteJoint& joint, const std::string& path) {
  joint.validate();
  CsvTable t;
  t.header.push_back("x");
  for (std::size_t j = 0; j < joint.p; ++j) t.header.push_back("y" + std::to_string(j + 1));
  for (std::size_t j = 0; j < joint.p; ++j) t.header.push_back("r" + std::to_string(j + 1));
  t.header.push_back("prob");
  for (std::size_t k = 0; k < joint.table.size(); ++k) {
    for (std::size_t c = 0; c < joint.cells(); ++c) {
      for (std::uint32_t r = 0; r < joint.patterns(); ++r) {
        std::vector<std::string> row;
        row.push_back(joint.has_covariate ? format_double(joint.x_levels[k]) : "");
        const Eigen::VectorXd y = joint.y_values(c);
        for (Eigen::Index j = 0; j < y.size(); ++j) row.push_back(format_double(y(j)));
        for (std::size_t j = 0; j < joint.p; ++j) row.push_back((r >> j) & 1u ? "1" : "0");
        row.push_back(format_double(joint.x_weights[k] * joint.at(k, c, r)));
        t.rows.push_back(std::move(row));
      }
    }
  }
  write_csv_table(t, path);
}

DiscreteJoint read_joint_csv(const std::string& path) {
  const CsvTable t = read_csv_table(path);
  const std::size_t cols = t.header.size();
  if (cols < 4 || (cols - 2) % 2 != 0 || t.header.front() != "x" || t.header.back() != "prob")
    throw InputError(path + ": expected columns x, y1..yp, r1..rp, prob");
  const std::size_t p = (cols - 2) / 2;
  for (std::size_t j = 0; j < p; ++j)
    if (t.header[1 + j] != "y" + std::to_string(j + 1) || t.header[1 + p + j] != "r" + std::to_string(j + 1))
      throw InputError(path + ": expected columns x, y1..yp, r1..rp, prob");

  struct Entry {
    std::optional<double> x;
    std::vector<double> y;
    std::uint32_t r = 0;
    double prob = 0.0;
  };
  std::vector<Entry> entries;
  std::vector<std::set<double>> support(p);
  std::set<double> xs;
  bool has_x = false, missing_x = false;
  for (std::size_t q = 0; q < t.rows.size(); ++q) {
    const auto& row = t.rows[q];
    const std::string where = path + " row " + std::to_string(q + 2);
    Entry e;
    if (row[0].empty()) {
      missing_x = true;
    } else {
      e.x = parse_double(row[0], where);
      has_x = true;
      xs.insert(*e.x);
    }
    for (std::size_t j = 0; j < p; ++j) {
      e.y.push_back(parse_double(row[1 + j], where));
      support[j].insert(e.y.back());
      const std::string& rv = row[1 + p + j];
      if (rv != "0" && rv != "1") throw InputError(where + ": indicator must be 0 or 1");
      if (rv == "1") e.r |= 1u << j;
    }
    e.prob = parse_double(row.back(), where);
    entries.push_back(std::move(e));
  }
  if (has_x && missing_x) throw InputError(path + ": covariate column is partly empty");

  DiscreteJoint J;
  J.p = p;
  for (const auto& s : support) J.y_support.emplace_back(s.begin(), s.end());
  J.has_covariate = has_x;
  J.x_levels = has_x ? std::vector<double>(xs.begin(), xs.end()) : std::vector<double>{0.0};
  J.x_weights.assign(J.x_levels.size(), 0.0);
  J.table.assign(J.x_levels.size(), std::vector<double>(J.cells() * J.patterns(), 0.0));
  for (const auto& e : entries) {
    const std::size_t k = has_x ? static_cast<std::size_t>(std::lower_bound(J.x_levels.begin(), J.x_levels.end(), *e.x) - J.x_levels.begin()) : 0;
    std::size_t cell = 0;
    for (std::size_t j = 0; j < p; ++j) {
      const auto& s = J.y_support[j];
      cell += static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), e.y[j]) - s.begin()) * J.stride(j);
    }
    J.at(k, cell, e.r) += e.prob;
    J.x_weights[k] += e.prob;
  }
  for (std::size_t k = 0; k < J.x_levels.size(); ++k) {
    if (!(J.x_weights[k] > 0.0)) throw InputError(path + ": a covariate level has zero mass");
    for (double& v : J.table[k]) v /= J.x_weights[k];
  }
  double total = 0.0;
  for (double w : J.x_weights) total += w;
  for (double& w : J.x_weights) w /= total;
  J.validate();
  return J;
}

}  // namespace selfcens
