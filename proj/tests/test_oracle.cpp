#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "selfcens/errors.hpp"
#include "selfcens/oracle.hpp"
#include "selfcens/simharness.hpp"

using namespace selfcens;

namespace {

WorkingModelSpec random_multinomial_spec(std::size_t p, std::size_t levels, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 1.0), g(-0.8, 0.8);
  MultinomialOutcome tab;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> s;
    for (std::size_t l = 0; l < levels; ++l) s.push_back(static_cast<double>(l));
    tab.support.push_back(s);
  }
  tab.probs.resize(tab.cells());
  double total = 0.0;
  for (auto& q : tab.probs) total += (q = u(rng));
  for (auto& q : tab.probs) q /= total;
  WorkingModelSpec s = make_spec(p, d, tab);
  for (auto& a : s.alpha1)
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = g(rng) + (k == 0 ? 0.5 : 0.0);
  for (auto& c : s.gamma) c(0) = g(rng);
  for (auto& a : s.alpha2)
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = 0.5 * g(rng);
  return s;
}

// f(y) prod_j pi_j(y)^{r_j} (1 - pi_j(y))^{1 - r_j} on binary Y with pi_1 depending on
// (y_1, y_2) through `leak`; leak = 0 gives a self-censoring law.
DiscreteJoint item_independent_law(const std::vector<double>& fy, double leak, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  DiscreteJoint J;
  J.p = 3;
  J.y_support.assign(3, {0.0, 1.0});
  J.x_levels = {0.0};
  J.x_weights = {1.0};
  J.table.assign(1, std::vector<double>(J.cells() * J.patterns(), 0.0));
  double a[3], b[3];
  for (int j = 0; j < 3; ++j) {
    a[j] = 0.8 + u(rng);
    b[j] = 2.0 * u(rng);
  }
  for (std::size_t c = 0; c < J.cells(); ++c) {
    const auto y = J.y_values(c);
    double pi[3];
    for (int j = 0; j < 3; ++j) {
      double t = a[j] + b[j] * y(j);
      if (j == 0) t += leak * y(1);
      pi[j] = 1.0 / (1.0 + std::exp(-t));
    }
    for (std::uint32_t r = 0; r < 8; ++r) {
      double v = fy[c];
      for (int j = 0; j < 3; ++j) v *= (r >> j & 1u) ? pi[j] : 1.0 - pi[j];
      J.at(0, c, r) = v;
    }
  }
  return J;
}

}  // namespace

TEST_CASE("constructed joints are normalised self-censoring laws") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto spec = random_multinomial_spec(3, 2, 0, rng);
    const auto J = construct_self_censoring_joint(spec, PatternSet::full_lattice(3));
    CHECK_NOTHROW(J.validate());
    const auto chk = verify_self_censoring(J);
    CHECK(chk.holds);
    CHECK(chk.max_violation < 1e-12);
  }
}

TEST_CASE("a law where R_1 depends on Y_2 is not self-censoring") {
  std::mt19937_64 rng(2);
  const std::vector<double> fy{0.1, 0.15, 0.12, 0.13, 0.1, 0.14, 0.11, 0.15};
  CHECK(verify_self_censoring(item_independent_law(fy, 0.0, rng)).holds);
  CHECK_FALSE(verify_self_censoring(item_independent_law(fy, 1.5, rng)).holds);
}

TEST_CASE("identification round trip on binary and ternary laws with a covariate") {
  std::mt19937_64 rng(3);
  for (std::size_t levels : {2u, 3u}) {
    const auto spec = random_multinomial_spec(levels == 2 ? 3 : 2, levels, 1, rng);
    const auto J = construct_self_censoring_joint(spec, PatternSet::full_lattice(spec.p), {-0.5, 0.5});
    const auto rec = reconstruct_joint(observe(J));
    CHECK(max_abs_difference(rec, J) < 1e-10);
    CHECK(total_variation(rec, J) < 1e-10);
  }
}

TEST_CASE("round trip on a restricted, upward-closed pattern set") {
  std::mt19937_64 rng(4);
  const auto spec = random_multinomial_spec(3, 2, 0, rng);
  const std::uint32_t codes[] = {7u, 6u, 5u, 3u, 4u};
  const auto ps = PatternSet::from_patterns(3, codes);
  const auto J = construct_self_censoring_joint(spec, ps);
  CHECK(max_abs_difference(reconstruct_joint(observe(J)), J) < 1e-10);
}

TEST_CASE("odds function solution reproduces the model odds") {
  std::mt19937_64 rng(5);
  const auto spec = random_multinomial_spec(3, 2, 0, rng);
  const auto J = construct_self_censoring_joint(spec, PatternSet::full_lattice(3));
  const auto obs = observe(J);
  const Eigen::VectorXd x(0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto odds = solve_odds_function(obs, i);
    CHECK(odds.rank == 2);
    for (std::size_t l = 0; l < 2; ++l)
      CHECK(odds.values[0][l] == doctest::Approx(odds_function(spec, x, i, static_cast<double>(l))).epsilon(1e-10));
  }
}

TEST_CASE("sequential odds ratios: definition, observed-law formula and model agree") {
  std::mt19937_64 rng(6);
  const auto spec = random_multinomial_spec(3, 2, 0, rng);
  const auto J = construct_self_censoring_joint(spec, PatternSet::full_lattice(3));
  const auto obs = observe(J);
  std::vector<OddsTable> odds;
  for (std::size_t i = 0; i < 3; ++i) odds.push_back(solve_odds_function(obs, i));
  const Eigen::VectorXd x(0);
  for (std::size_t i = 1; i < 3; ++i) {
    const auto eta = sequential_or_from_observed(obs, odds, i);
    for (std::uint32_t prefix = 0; prefix < (1u << (i + 1)); ++prefix) {
      const double model = sequential_odds_ratio(spec, x, i, Pattern(prefix | (~0u << (i + 1) & 7u), 3));
      CHECK(eta(0, prefix) == doctest::Approx(model).epsilon(1e-10));
      for (std::size_t c = 0; c < J.cells(); ++c)
        CHECK(definitional_eta(J, 0, c, i, prefix) == doctest::Approx(model).epsilon(1e-10));
    }
  }
}

TEST_CASE("rank-deficient completeness matrix raises IdentificationError") {
  // Y_2 independent of Y_1 with identical marginals: the shadow variable carries no information.
  MultinomialOutcome tab;
  tab.support.assign(2, {0.0, 1.0});
  tab.probs = {0.25, 0.25, 0.25, 0.25};
  WorkingModelSpec s = make_spec(2, 0, tab);
  s.gamma = {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 0.5)};
  const auto J = construct_self_censoring_joint(s, PatternSet::full_lattice(2));
  try {
    (void)solve_odds_function(observe(J), 0);
    FAIL("expected IdentificationError");
  } catch (const IdentificationError& e) {
    CHECK(e.null_space_dim() >= 1);
  }
}

TEST_CASE("restriction test separates self-censoring from leaking laws") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  int consistent = 0, rejected = 0;
  for (int t = 0; t < 10; ++t) {
    std::vector<double> fy(8);
    double total = 0.0;
    for (auto& v : fy) total += (v = u(rng));
    for (auto& v : fy) v /= total;
    consistent += test_self_censoring_restriction(observe(item_independent_law(fy, 0.0, rng)), 0).holds();
    rejected += test_self_censoring_restriction(observe(item_independent_law(fy, 2.0, rng)), 0).status ==
                RestrictionStatus::rejected;
  }
  CHECK(consistent == 10);
  CHECK(rejected == 10);
}

TEST_CASE("joint CSV round trip is exact") {
  std::mt19937_64 rng(8);
  const auto spec = random_multinomial_spec(2, 3, 1, rng);
  const auto J = construct_self_censoring_joint(spec, PatternSet::full_lattice(2), {-1.0, 0.25, 1.0});
  const auto path = (std::filesystem::temp_directory_path() / "selfcens_joint_roundtrip.csv").string();
  write_joint_csv(J, path);
  const auto back = read_joint_csv(path);
  std::filesystem::remove(path);
  CHECK(back.p == J.p);
  CHECK(back.x_levels == J.x_levels);
  CHECK(max_abs_difference(back, J) < 1e-15);
}

TEST_CASE("empirical observed law from a large sample reconstructs the joint approximately") {
  std::mt19937_64 rng(9);
  const auto spec = random_multinomial_spec(3, 2, 0, rng);
  const auto J = construct_self_censoring_joint(spec, PatternSet::full_lattice(3));
  const auto sample = sample_dataset(spec, 200000, 10);
  const auto obs = observed_from_data(sample.data, spec.multinomial().support);
  CHECK(total_variation(obs.law, observe(J).law) < 0.01);
  CHECK(total_variation(reconstruct_joint(obs), J) < 0.03);
}

TEST_CASE("invalid pattern sets are refused before solving") {
  std::mt19937_64 rng(10);
  const auto spec = random_multinomial_spec(2, 2, 0, rng);
  const std::uint32_t codes[] = {3u, 0u};
  CHECK_THROWS_AS(construct_self_censoring_joint(spec, PatternSet::from_patterns(2, codes)), PositivityError);
}
