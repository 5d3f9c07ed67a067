#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "selfcens/dataset.hpp"
#include "selfcens/eesolve.hpp"
#include "selfcens/functional.hpp"
#include "selfcens/models.hpp"
#include "selfcens/patterns.hpp"

namespace selfcens {

enum class Method { ipw, reg, dr, mar };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

// g_i(x, y_{-i}) = ((1, x), ybar_{-i}) for scalar gamma, ((1, x), ybar_{-i} (1, x)) otherwise.
// Outcome index is 0-based; y_minus_i holds the other p - 1 outcomes.
Eigen::VectorXd default_g(std::size_t i, const Eigen::VectorXd& x, const Eigen::VectorXd& y_minus_i,
                          bool gamma_interacts = false);
// h_i(x) = (1, x).
Eigen::VectorXd default_h(std::size_t i, const Eigen::VectorXd& x);

struct EstimationOptions {
  SolveOptions solver;
  std::size_t min_count = 5;
  double min_propensity = 1e-3;
  QuadratureOptions quadrature;
  double level = 0.95;
  // Start from the values in spec_init instead of the default starting fits.
  bool start_from_spec = false;
  // Skip the sandwich covariance (point estimates only, e.g. inside a bootstrap).
  bool compute_covariance = true;
};

struct ParameterBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ContrastEstimate {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  Interval ci;
};

struct Diagnostics {
  bool converged = false;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
  // Records whose fitted propensity fell below min_propensity and was floored.
  std::size_t propensity_floor_hits = 0;
  double min_fitted_propensity = 1.0;
  std::vector<std::string> warnings;
  PatternSet patterns;
  ValidationReport validation;
};

struct EstimationResult {
  Method method = Method::dr;
  std::vector<std::string> component_names;
  Eigen::VectorXd psi_hat;
  Eigen::VectorXd psi_se;
  Eigen::MatrixXd psi_covariance;
  std::vector<Interval> psi_ci;
  std::vector<ContrastEstimate> contrasts;

  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;  // empty when not computed
  std::vector<std::string> theta_names;
  std::vector<ParameterBlock> blocks;
  WorkingModelSpec fitted;
  Diagnostics diagnostics;

  // Estimate and standard error (NaN if no covariance) of a named parameter.
  std::optional<std::pair<double, double>> parameter(const std::string& name) const;
};

// Name of the odds-ratio parameter of item i (0-based) and covariate term k.
std::string gamma_name(std::size_t i, std::size_t k, std::size_t gamma_dim);

// Pattern checks shared by all pipelines: valid upward-closed set, complete pattern, and
// every (R_i = 0, R_-i = 1) pattern present with at least min_count records.
ValidationReport check_patterns(const PatternSet& ps, const EstimationOptions& options);

EstimationResult estimate_ipw(const Dataset& data, const WorkingModelSpec& spec_init,
                              const Functional& functional, const EstimationOptions& options = {});
EstimationResult estimate_reg(const Dataset& data, const WorkingModelSpec& spec_init,
                              const Functional& functional, const EstimationOptions& options = {});
EstimationResult estimate_dr(const Dataset& data, const WorkingModelSpec& spec_init,
                             const Functional& functional, const EstimationOptions& options = {});
// Doubly robust estimator with the odds ratio fixed at 1 (missing at random).
EstimationResult estimate_mar_benchmark(const Dataset& data, const WorkingModelSpec& spec_init,
                                        const Functional& functional,
                                        const EstimationOptions& options = {});

EstimationResult estimate(Method method, const Dataset& data, const WorkingModelSpec& spec_init,
                          const Functional& functional, const EstimationOptions& options = {});

// Per-record residual blocks of the estimating equations evaluated at fixed parameters.
// Used to check unbiasedness at the truth. Names: "beta", "item[i]" (propensity/odds-ratio
// equations, IPW and DR forms), "reg_gamma[i]", "alpha2".
struct ResidualBlock {
  std::string name;
  Eigen::MatrixXd values;  // n x block size
};

std::vector<ResidualBlock> residuals_at(const Dataset& data, const WorkingModelSpec& spec,
                                        const EstimationOptions& options = {});

}  // namespace selfcens
