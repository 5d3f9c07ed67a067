#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "selfcens/dataset.hpp"
#include "selfcens/estimators.hpp"
#include "selfcens/functional.hpp"
#include "selfcens/models.hpp"

namespace selfcens {

// First letter: baseline propensity model correct (T) or fitted on exp(x) (F).
// Second letter: the same for the baseline outcome model.
enum class Scenario { TT, TF, FT, FF };

std::string_view to_string(Scenario s);
Scenario scenario_from_string(std::string_view name);

struct SampledData {
  Dataset data;
  Eigen::MatrixXd y_full;  // unmasked outcomes, kept for bias computation
};

// x ~ Uniform(-1, 1)^d, R ~ p(r | x) over the full pattern lattice, then
// Y ~ f(y | x, R) from the tilted baseline; masked cells are hidden in the dataset.
SampledData sample_dataset(const WorkingModelSpec& truth, std::size_t n, std::uint64_t seed);

// p(r | x) over the full pattern lattice, sorted by pattern code.
std::vector<PatternProbability> analytic_pattern_marginal(const WorkingModelSpec& truth,
                                                          const Eigen::VectorXd& x);

// E(Y_j) under the generating law, integrating x over Uniform(-1, 1)^d.
double true_outcome_mean(const WorkingModelSpec& truth, std::size_t j);

// p = 3, d = 1 Gaussian truth used by the coverage study.
WorkingModelSpec default_truth();

// Scale of the misspecified covariate exp(scale * x) in the coverage study.
inline constexpr double kDefaultMisspecificationScale = 2.0;

// Working-model structure for a scenario: same families as the truth, with exp(scale * x)
// substituted for x in the misspecified baseline model(s).
WorkingModelSpec working_spec_for(const WorkingModelSpec& truth, Scenario scenario,
                                  double exp_scale = kDefaultMisspecificationScale);

struct ScenarioConfig {
  WorkingModelSpec truth = default_truth();
  Scenario scenario = Scenario::TT;
  std::size_t n = 3000;
  std::size_t replications = 200;
  std::uint64_t seed = 20240601;
  // Target: mean of this outcome (0-based).
  std::size_t outcome_index = 0;
  std::vector<Method> estimators{Method::ipw, Method::reg, Method::dr, Method::mar};
  double exp_scale = kDefaultMisspecificationScale;
  EstimationOptions options;
  std::size_t threads = 0;
};

struct SummaryStat {
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double mc_sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  std::size_t count = 0;
};

struct EstimatorSummary {
  Method method = Method::dr;
  std::size_t attempted = 0;
  std::size_t failed = 0;
  bool flagged = false;  // more than 5% of replicates failed
  SummaryStat psi;
  SummaryStat gamma1;
  // Mean and MC standard error of psi_hat minus the full-data sample mean.
  double full_data_gap = 0.0;
  double full_data_gap_se = 0.0;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  Method method = Method::dr;
  bool ok = false;
  double psi_hat = 0.0, psi_se = 0.0, psi_lower = 0.0, psi_upper = 0.0;
  double gamma1_hat = 0.0, gamma1_se = 0.0;
  double full_data_mean = 0.0;
  std::size_t iterations = 0;
  std::size_t floor_hits = 0;
  std::string error;
};

struct MonteCarloReport {
  Scenario scenario = Scenario::TT;
  std::size_t n = 0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  double psi_truth = 0.0;
  double gamma1_truth = 0.0;
  std::vector<EstimatorSummary> estimators;
  std::vector<ReplicateRecord> replicates;  // replicate-major, estimator order within
  std::vector<std::string> warnings;

  const EstimatorSummary* find(Method m) const;
};

// Replicate k uses dataset seed substream_seed(seed, k) whatever the scenario, so all
// scenarios share their datasets. Deterministic for a given config and any thread count.
MonteCarloReport run_scenario(const ScenarioConfig& config);

std::string replicate_csv(const MonteCarloReport& report);

struct CoverageTable {
  std::string text;
  std::string csv;
};

CoverageTable coverage_table(const std::vector<MonteCarloReport>& reports);

}  // namespace selfcens
