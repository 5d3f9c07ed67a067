#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "selfcens/functional.hpp"
#include "selfcens/patterns.hpp"

namespace selfcens {

// Covariate features entering a working model: (1, x) or (1, exp(x)).
enum class CovariateMap { linear, exp };

std::string_view to_string(CovariateMap map);
CovariateMap covariate_map_from_string(std::string_view name);

// (1, x) or (1, exp(exp_scale * x)).
Eigen::VectorXd design_vector(CovariateMap map, const Eigen::VectorXd& x, double exp_scale = 1.0);

// f(y | x, r = 1) = Normal(coef^T (1, x), cov).
struct GaussianOutcome {
  Eigen::MatrixXd coef;  // (d+1) x p
  Eigen::MatrixXd cov;   // p x p, symmetric positive definite
};

// Covariate-free probability table over the product support of Y.
// Cells are indexed mixed-radix with outcome 0 varying fastest.
struct MultinomialOutcome {
  std::vector<std::vector<double>> support;
  std::vector<double> probs;

  std::size_t cells() const;
  std::size_t stride(std::size_t j) const;
  std::size_t level(std::size_t cell, std::size_t j) const;
  double value(std::size_t cell, std::size_t j) const { return support[j][level(cell, j)]; }
  Eigen::VectorXd values(std::size_t cell) const;
  // Level of v on outcome j, matched within 1e-9.
  std::optional<std::size_t> level_of(std::size_t j, double v) const;
};

using OutcomeModel = std::variant<GaussianOutcome, MultinomialOutcome>;

// shared: one alpha2 vector per item i >= 2 used for every r_{<i} != 1.
// pattern_specific: one alpha2 vector per (i, r_{<i}) with r_{<i} != 1.
enum class SequentialMode { shared, pattern_specific };

struct SequentialGroup {
  std::size_t item = 0;                 // 0-based, >= 1
  std::optional<std::uint32_t> prefix;  // code of r_{<i}; empty for shared

  // Whether this group's coefficient enters eta_item at pattern r.
  bool enters(std::uint32_t r) const;
};

std::vector<SequentialGroup> sequential_groups(std::size_t p, SequentialMode mode);

struct WorkingModelSpec {
  std::size_t p = 0;
  std::size_t d = 0;
  Eigen::VectorXd y0;                  // reference outcome value
  std::vector<Eigen::VectorXd> alpha1;  // p vectors of length d+1
  std::vector<Eigen::VectorXd> gamma;   // p vectors of length 1, or d+1 for covariate interaction
  SequentialMode sequential = SequentialMode::shared;
  std::vector<Eigen::VectorXd> alpha2;  // one per sequential_groups(p, sequential)
  OutcomeModel outcome;
  CovariateMap propensity_covariates = CovariateMap::linear;
  CovariateMap outcome_covariates = CovariateMap::linear;
  double exp_scale = 1.0;

  bool is_gaussian() const { return std::holds_alternative<GaussianOutcome>(outcome); }
  const GaussianOutcome& gaussian() const { return std::get<GaussianOutcome>(outcome); }
  const MultinomialOutcome& multinomial() const { return std::get<MultinomialOutcome>(outcome); }
  std::size_t gamma_dim() const { return gamma.empty() ? 1 : static_cast<std::size_t>(gamma[0].size()); }
  std::vector<SequentialGroup> groups() const { return sequential_groups(p, sequential); }

  // Coefficient of (y_i - y0_i) in log Gamma_i: gamma_i or gamma_i^T (1, x).
  double tilt_slope(std::size_t i, const Eigen::VectorXd& x) const;
  // Baseline mean E(Y | x, r = 1).
  Eigen::VectorXd baseline_mean(const Eigen::VectorXd& x) const;

  // Throws ConfigurationError / DimensionError.
  void validate() const;
};

// Zero-initialised spec with the given structure.
WorkingModelSpec make_spec(std::size_t p, std::size_t d, OutcomeModel outcome,
                           SequentialMode mode = SequentialMode::shared,
                           bool gamma_interacts = false);

double expit(double t);

// Outcome indices below are 0-based.
double itemwise_baseline_propensity(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                    std::size_t i);
double itemwise_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                           double y_i);
double itemwise_propensity(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                           double y_i);
double odds_function(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                     double y_i);
double log_odds_function(const WorkingModelSpec& spec, const Eigen::VectorXd& x, std::size_t i,
                         double y_i);
// eta_i(r_i, r_{<i}, x); requires 1 <= i < p.
double sequential_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                             std::size_t i, const Pattern& r);
double log_sequential_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                 const Pattern& r);

// Pi_r / Pi_1 = prod_{j: r_j = 0} O_j(x, y_j) * prod_i eta_i.
double log_propensity_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y, const Pattern& r);
double propensity_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, const Pattern& r);

struct PatternProbability {
  Pattern pattern;
  double probability = 0.0;
};

// Pi_r(x, y) for every r in ps, normalised in log space.
std::vector<PatternProbability> full_propensity(const WorkingModelSpec& spec, const PatternSet& ps,
                                                const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& y);

// OR(y, r | x) = prod_i Gamma_i(x, y_i)^{1 - r_i}.
double joint_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, const Pattern& r);
double log_joint_odds_ratio(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y, const Pattern& r);

struct GaussianConditional {
  std::vector<std::size_t> missing;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct DiscreteConditional {
  std::vector<std::size_t> missing;
  std::vector<Eigen::VectorXd> values;  // values of Y_miss per support point
  std::vector<double> probs;
};

using ConditionalLaw = std::variant<GaussianConditional, DiscreteConditional>;

// Law of Y_miss given (X = x, Y_(r) = y_obs, R = r). y_obs lists the observed
// components in increasing index order. Throws NumericalError if the baseline
// conditional covariance is singular.
ConditionalLaw tilted_conditional(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y_obs, const Pattern& r);

struct QuadratureOptions {
  std::size_t nodes = 16;
  std::size_t max_dims = 4;
};

// E{m(X, Y; psi) | x, y_obs, R = r}. Affine functionals are exact; otherwise tensor
// Gauss-Hermite over the missing coordinates (ConfigurationError beyond max_dims).
Eigen::VectorXd imputation_expectation(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y_obs, const Pattern& r,
                                       const Functional& functional, const Eigen::VectorXd& psi,
                                       const QuadratureOptions& quad = {});

// E{OR(Y, r | x) | x, r = 1}.
double normalizing_expectation(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                               const Pattern& r);
double log_normalizing_expectation(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                   const Pattern& r);

// E(Y | x, R = r) under the tilted law (not conditioning on observed outcomes).
Eigen::VectorXd pattern_outcome_mean(const WorkingModelSpec& spec, const Eigen::VectorXd& x,
                                     const Pattern& r);

// Selects the components of y observed under r.
Eigen::VectorXd observed_part(const Eigen::VectorXd& y, const Pattern& r);

}  // namespace selfcens
