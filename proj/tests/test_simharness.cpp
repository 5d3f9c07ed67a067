#include <doctest.h>

#include <cmath>

#include "selfcens/errors.hpp"
#include "selfcens/oracle.hpp"
#include "selfcens/simharness.hpp"

using namespace selfcens;

TEST_CASE("scenario names round-trip") {
  for (auto s : {Scenario::TT, Scenario::TF, Scenario::FT, Scenario::FF}) CHECK(scenario_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(scenario_from_string("XX"), InputError);
}

TEST_CASE("default truth: every pattern has mass and complete cases are common") {
  const auto truth = default_truth();
  CHECK_NOTHROW(truth.validate());
  std::vector<double> mass(8, 0.0);
  const int grid = 200;
  for (int k = 0; k < grid; ++k) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, -1.0 + 2.0 * (k + 0.5) / grid);
    double total = 0.0;
    for (const auto& pp : analytic_pattern_marginal(truth, x)) {
      mass[pp.pattern.code()] += pp.probability / grid;
      total += pp.probability;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (double m : mass) CHECK(m >= 0.02);
  CHECK(mass[7] >= 0.25);
}

TEST_CASE("working specs change only the documented covariate maps") {
  const auto truth = default_truth();
  const auto tt = working_spec_for(truth, Scenario::TT);
  const auto tf = working_spec_for(truth, Scenario::TF);
  const auto ft = working_spec_for(truth, Scenario::FT);
  const auto ff = working_spec_for(truth, Scenario::FF);
  CHECK(tt.propensity_covariates == CovariateMap::linear);
  CHECK(tt.outcome_covariates == CovariateMap::linear);
  CHECK(tf.propensity_covariates == CovariateMap::linear);
  CHECK(tf.outcome_covariates == CovariateMap::exp);
  CHECK(ft.propensity_covariates == CovariateMap::exp);
  CHECK(ft.outcome_covariates == CovariateMap::linear);
  CHECK(ff.propensity_covariates == CovariateMap::exp);
  CHECK(ff.outcome_covariates == CovariateMap::exp);
  for (const auto* s : {&tt, &tf, &ft, &ff}) {
    CHECK(s->p == truth.p);
    CHECK(s->d == truth.d);
    CHECK(s->sequential == truth.sequential);
    CHECK(s->gamma_dim() == truth.gamma_dim());
    CHECK(s->is_gaussian());
  }
}

TEST_CASE("sampling is deterministic and masks by pattern") {
  const auto truth = default_truth();
  const auto a = sample_dataset(truth, 500, 5);
  const auto b = sample_dataset(truth, 500, 5);
  CHECK(a.data.pattern_codes() == b.data.pattern_codes());
  CHECK(a.y_full == b.y_full);
  for (std::size_t r = 0; r < a.data.n(); ++r)
    for (std::size_t j = 0; j < 3; ++j) {
      const double v = a.data.y()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      if (a.data.observed(r, j))
        CHECK(v == a.y_full(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
      else
        CHECK(std::isnan(v));
    }
  CHECK((a.data.x().array().abs() <= 1.0).all());
}

TEST_CASE("full-data mean of the sampler matches the integrated truth") {
  const auto truth = default_truth();
  const auto s = sample_dataset(truth, 100000, 6);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto col = s.y_full.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double se = std::sqrt((col.array() - mean).square().mean() / static_cast<double>(col.size()));
    CHECK(std::abs(mean - true_outcome_mean(truth, j)) <= 4.0 * se);
  }
}

TEST_CASE("true outcome mean matches a direct mixture integral") {
  // E(Y_j) = E_x sum_r p(r | x) E(Y_j | x, r), with E(Y | x, r) = mu(x) + Sigma t_r.
  const auto truth = default_truth();
  double direct = 0.0;
  const int grid = 4000;
  for (int k = 0; k < grid; ++k) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, -1.0 + 2.0 * (k + 0.5) / grid);
    for (const auto& pp : analytic_pattern_marginal(truth, x))
      direct += pp.probability * pattern_outcome_mean(truth, x, pp.pattern)(0) / grid;
  }
  CHECK(true_outcome_mean(truth, 0) == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("binary sampler matches the constructed joint") {
  MultinomialOutcome tab;
  tab.support.assign(2, {0.0, 1.0});
  tab.probs = {0.3, 0.2, 0.15, 0.35};
  WorkingModelSpec s = make_spec(2, 0, tab);
  s.alpha1 = {Eigen::VectorXd::Constant(1, 0.4), Eigen::VectorXd::Constant(1, 0.9)};
  s.gamma = {Eigen::VectorXd::Constant(1, 0.7), Eigen::VectorXd::Constant(1, -0.6)};
  s.alpha2 = {Eigen::VectorXd::Constant(1, 0.3)};
  const auto J = construct_self_censoring_joint(s, PatternSet::full_lattice(2));
  const auto sample = sample_dataset(s, 200000, 7);
  std::vector<double> emp(J.cells() * J.patterns(), 0.0);
  for (std::size_t r = 0; r < sample.data.n(); ++r) {
    std::size_t cell = 0;
    for (std::size_t j = 0; j < 2; ++j)
      cell += static_cast<std::size_t>(sample.y_full(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j))) * J.stride(j);
    emp[cell * J.patterns() + sample.data.pattern_codes()[r]] += 1.0 / static_cast<double>(sample.data.n());
  }
  double tv = 0.0;
  for (std::size_t e = 0; e < emp.size(); ++e) tv += 0.5 * std::abs(emp[e] - J.table[0][e]);
  CHECK(tv < 0.01);
}

TEST_CASE("run_scenario is deterministic and independent of the worker count") {
  ScenarioConfig c;
  c.n = 800;
  c.replications = 4;
  c.estimators = {Method::ipw, Method::dr};
  c.threads = 1;
  const auto a = run_scenario(c);
  c.threads = 3;
  const auto b = run_scenario(c);
  CHECK(replicate_csv(a) == replicate_csv(b));
  REQUIRE(a.replicates.size() == 8);
  CHECK(a.find(Method::dr) != nullptr);
  CHECK(a.find(Method::reg) == nullptr);
  const auto* dr = a.find(Method::dr);
  CHECK(dr->attempted == 4);
  CHECK(dr->psi.count + dr->failed == 4);
  CHECK(dr->psi.coverage >= 0.0);
  CHECK(dr->psi.coverage <= 1.0);
}

TEST_CASE("scenarios share datasets replicate by replicate") {
  ScenarioConfig c;
  c.n = 600;
  c.replications = 2;
  c.estimators = {Method::reg};
  const auto a = run_scenario(c);
  c.scenario = Scenario::FT;
  const auto b = run_scenario(c);
  // REG does not use the propensity model, so TT and FT give identical fits.
  for (std::size_t k = 0; k < a.replicates.size(); ++k) {
    CHECK(a.replicates[k].psi_hat == b.replicates[k].psi_hat);
    CHECK(a.replicates[k].psi_se == b.replicates[k].psi_se);
  }
  CHECK(a.replicates[0].full_data_mean == b.replicates[0].full_data_mean);
}

TEST_CASE("coverage table lists every scenario and estimator") {
  ScenarioConfig c;
  c.n = 600;
  c.replications = 2;
  c.estimators = {Method::dr, Method::mar};
  std::vector<MonteCarloReport> reps{run_scenario(c)};
  c.scenario = Scenario::TF;
  reps.push_back(run_scenario(c));
  const auto t = coverage_table(reps);
  std::size_t lines = 0;
  for (char ch : t.csv) lines += ch == '\n';
  CHECK(lines == 1 + 4);
  CHECK(t.text.find("TF") != std::string::npos);
  CHECK(t.text.find("mar") != std::string::npos);
}
