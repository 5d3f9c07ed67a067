#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "selfcens/dataset.hpp"
#include "selfcens/models.hpp"
#include "selfcens/patterns.hpp"

namespace selfcens {

// Finite-support law f(y, r | x) over a scalar covariate with finitely many levels
// (a single level when there is no covariate). Outcome cells are mixed-radix with
// outcome 0 varying fastest; table[k][cell * 2^p + r] = f(y = cell, r | x = x_levels[k]).
struct DiscreteJoint {
  std::size_t p = 0;
  std::vector<std::vector<double>> y_support;
  bool has_covariate = false;
  std::vector<double> x_levels;
  std::vector<double> x_weights;
  std::vector<std::vector<double>> table;

  std::size_t cells() const;
  std::size_t patterns() const { return std::size_t{1} << p; }
  std::size_t levels(std::size_t j) const { return y_support[j].size(); }
  std::size_t level(std::size_t cell, std::size_t j) const;
  std::size_t stride(std::size_t j) const;
  Eigen::VectorXd y_values(std::size_t cell) const;
  Eigen::VectorXd x_vector(std::size_t k) const;

  double& at(std::size_t k, std::size_t cell, std::uint32_t r) { return table[k][cell * patterns() + r]; }
  double at(std::size_t k, std::size_t cell, std::uint32_t r) const { return table[k][cell * patterns() + r]; }

  // Patterns with positive mass at some covariate level.
  PatternSet pattern_set() const;

  // Nonnegative entries summing to 1 per covariate level; throws InputError.
  void validate() const;
};

// Observed-data law: the same layout, with the mass of each pattern stored in the
// canonical cell whose unobserved coordinates are at level 0.
struct ObservedLaw {
  DiscreteJoint law;

  // f(y_(r), r | x) for the observed coordinates of `cell` under r.
  double mass(std::size_t k, std::size_t cell, std::uint32_t r) const;
  std::size_t canonical(std::size_t cell, std::uint32_t r) const;
};

ObservedLaw observe(const DiscreteJoint& joint);

// Empirical observed law of a dataset on the given supports. The covariate (d <= 1)
// must take values in x_levels (ignored when d = 0).
ObservedLaw observed_from_data(const Dataset& data, const std::vector<std::vector<double>>& y_support,
                               const std::vector<double>& x_levels = {});

struct SelfCensoringCheck {
  bool holds = false;
  double max_violation = 0.0;
  std::size_t skipped_cells = 0;  // zero-probability conditioning cells
};

// R_i independent of Y_-i given (X, Y_i, R_-i), for every i.
SelfCensoringCheck verify_self_censoring(const DiscreteJoint& joint, double tol = 1e-10);

// f(y, r | x) proportional to f(y | r = 1, x) Pi_r / Pi_1 on the multinomial support of spec,
// for r in ps. The spec must have a multinomial baseline and d <= 1; with d = 0 x_levels
// must be empty.
DiscreteJoint construct_self_censoring_joint(const WorkingModelSpec& spec, const PatternSet& ps,
                                             const std::vector<double>& x_levels = {});

struct OddsTable {
  std::size_t item = 0;
  std::vector<std::vector<double>> values;  // [x level][level of y_i]
  std::size_t rank = 0;
  std::size_t columns = 0;
  double residual = 0.0;  // max abs residual of the (least-squares) solution
};

// Solves E{O_i(x, Y_i) | x, y_-i, r = 1} = f(x, y_-i, r_i = 0, r_-i = 1) / f(x, y_-i, r = 1).
// Rank deficiency (sigma_min / sigma_max <= 1e-10) throws IdentificationError.
OddsTable solve_odds_function(const ObservedLaw& observed, std::size_t i);

// eta_i(r_i, r_<i, x) keyed by the code of r_<=i (i + 1 bits); entries exist for every
// prefix whose completion (r_<=i, 1, ..., 1) has positive mass.
struct EtaTable {
  std::size_t item = 0;
  std::vector<std::map<std::uint32_t, double>> values;  // [x level]

  double operator()(std::size_t k, std::uint32_t prefix) const;
};

EtaTable sequential_or_from_observed(const ObservedLaw& observed, const std::vector<OddsTable>& odds,
                                     std::size_t i);

// Identifies f(y, r | x) from the observed law. Invalid pattern sets throw PositivityError
// before any system is solved.
DiscreteJoint reconstruct_joint(const ObservedLaw& observed);

// Sequential odds ratio computed directly from a full law at outcome cell `cell`:
// the odds ratio between R_i and R_<i with R_>i = 1.
double definitional_eta(const DiscreteJoint& joint, std::size_t k, std::size_t cell, std::size_t i,
                        std::uint32_t prefix);

enum class RestrictionStatus { consistent, rejected, inconclusive };

std::string to_string(RestrictionStatus s);

struct RestrictionConfig {
  std::size_t x_level = 0;
  std::uint32_t others = 0;  // pattern of R_-i (bit i cleared)
  RestrictionStatus status = RestrictionStatus::inconclusive;
  std::vector<double> phi;   // solution per level of Y_i, when one exists
  double residual = 0.0;
};

struct RestrictionResult {
  RestrictionStatus status = RestrictionStatus::inconclusive;
  bool holds() const { return status == RestrictionStatus::consistent; }
  std::vector<RestrictionConfig> configs;
};

// Solves E{R_i / phi(X, Y_i) | X, Y_-i^o, R_-i} = 1 for phi separately per covariate level and
// configuration of R_-i. A configuration rejects when no solution exists or the solution
// leaves (0, 1]; underdetermined or rank-deficient configurations are inconclusive.
// tol bounds the max residual of the row-normalised system.
RestrictionResult test_self_censoring_restriction(const ObservedLaw& observed, std::size_t i,
                                                  double tol = 1e-8);

// Max over covariate levels of the total variation distance between two laws on one layout.
double total_variation(const DiscreteJoint& a, const DiscreteJoint& b);
double max_abs_difference(const DiscreteJoint& a, const DiscreteJoint& b);

// CSV with columns x, y1..yp, r1..rp, prob (prob is the joint mass including x).
void write_joint_csv(const DiscreteJoint& joint, const std::string& path);
DiscreteJoint read_joint_csv(const std::string& path);

}  // namespace selfcens
