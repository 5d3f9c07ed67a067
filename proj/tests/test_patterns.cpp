#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "selfcens/dataset.hpp"
#include "selfcens/errors.hpp"
#include "selfcens/patterns.hpp"
#include "selfcens/quadrature.hpp"
#include "selfcens/random.hpp"

using namespace selfcens;

namespace {

PatternSet set_of(std::size_t p, std::initializer_list<std::uint32_t> codes) {
  std::vector<std::uint32_t> v(codes);
  return PatternSet::from_patterns(p, v);
}

std::uint32_t code_of(std::initializer_list<int> bits) {
  std::vector<int> b(bits);
  return Pattern::from_bits(b).code();
}

}  // namespace

TEST_CASE("pattern encoding uses bit i for r_{i+1}") {
  const int bits[] = {1, 0, 1};
  const Pattern r = Pattern::from_bits(bits);
  CHECK(r.code() == 0b101u);
  CHECK(r.to_string() == "(1,0,1)");
  CHECK(r.observed(0));
  CHECK_FALSE(r.observed(1));
  CHECK(r.missing_count() == 1);
  CHECK(r.missing_indices() == std::vector<std::size_t>{1});
  CHECK(r.observed_indices() == std::vector<std::size_t>{0, 2});
  CHECK(Pattern::complete(3).code() == 7u);
  CHECK(item_pattern(3, 1) == r);
  CHECK(r.with(1, true).is_complete());
}

TEST_CASE("prefix helpers") {
  const Pattern r(0b011u, 3);
  CHECK(r.prefix_complete(0));
  CHECK(r.prefix_complete(2));
  const Pattern s(0b110u, 3);
  CHECK_FALSE(s.prefix_complete(1));
  CHECK(s.prefix_code(2) == 0b10u);
}

TEST_CASE("pattern_leq is componentwise and checks lengths") {
  CHECK(pattern_leq(Pattern(0b001u, 3), Pattern(0b011u, 3)));
  CHECK_FALSE(pattern_leq(Pattern(0b100u, 3), Pattern(0b011u, 3)));
  CHECK_THROWS_AS(pattern_leq(Pattern(1u, 2), Pattern(1u, 3)), DimensionError);
}

TEST_CASE("validate_positivity on an upward-closed set") {
  // {(1,1,1), (0,1,1), (1,0,1)}: every pattern above an observed one is present.
  const auto ps = set_of(3, {7u, 6u, 5u});
  const auto rep = validate_positivity(ps, 1);
  CHECK(rep.valid());
  CHECK(rep.missing_patterns.empty());
}

TEST_CASE("validate_positivity flags the missing intermediate pattern") {
  // (1,0,0) present but (1,1,0) and (1,0,1) absent.
  const auto ps = set_of(3, {7u, 1u});
  const auto rep = validate_positivity(ps, 1);
  CHECK_FALSE(rep.valid());
  std::set<std::uint32_t> missing;
  for (const auto& r : rep.missing_patterns) missing.insert(r.code());
  CHECK(missing == std::set<std::uint32_t>{code_of({1, 1, 0}), code_of({1, 0, 1})});
}

TEST_CASE("validate_positivity requires the complete pattern") {
  const auto rep = validate_positivity(set_of(2, {1u, 2u}), 1);
  CHECK_FALSE(rep.has_complete_pattern);
  CHECK_FALSE(rep.valid());
}

TEST_CASE("sparse patterns are warnings, not failures") {
  PatternSet ps(2);
  ps.add(Pattern(3u, 2), 100);
  ps.add(Pattern(1u, 2), 2);
  const auto rep = validate_positivity(ps, 5);
  CHECK(rep.valid());
  CHECK(rep.has_warnings());
  REQUIRE(rep.sparse_patterns.size() == 1);
  CHECK(rep.sparse_patterns[0].second == 2);
}

TEST_CASE("property: every downward subset of the full lattice with the complete pattern is valid iff upward closed") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t p = 2 + trial % 3;
    const std::uint32_t full = Pattern::full_mask(p);
    std::vector<std::uint32_t> codes{full};
    for (std::uint32_t c = 0; c < full; ++c)
      if (rng() % 2) codes.push_back(c);
    const auto ps = PatternSet::from_patterns(p, codes);
    bool closed = true;
    for (auto a : codes)
      for (std::uint32_t b = 0; b <= full; ++b)
        if ((a & b) == a && !ps.contains(b)) closed = false;
    CHECK(validate_positivity(ps, 1).valid() == closed);
  }
}

TEST_CASE("full lattice enumerates 2^p patterns") {
  const auto ps = PatternSet::full_lattice(4);
  CHECK(ps.size() == 16);
  CHECK(validate_positivity(ps, 1).valid());
}

TEST_CASE("dataset masks unobserved cells and enumerates patterns") {
  Eigen::MatrixXd x(3, 1), y(3, 2);
  x << 0.1, 0.2, 0.3;
  y << 1, 2, 3, 4, 5, 6;
  const Dataset d(x, y, {3u, 1u, 3u});
  CHECK(std::isnan(d.y()(1, 1)));
  CHECK(d.y()(1, 0) == 3.0);
  CHECK(d.complete(0));
  CHECK_FALSE(d.complete(1));
  const auto ps = enumerate_patterns(d);
  CHECK(ps.count(Pattern(3u, 2)) == 2);
  CHECK(ps.count(Pattern(1u, 2)) == 1);
  const auto r = d.r_matrix();
  CHECK(r(1, 0) == 1);
  CHECK(r(1, 1) == 0);
}

TEST_CASE("dataset rejects non-finite covariates") {
  Eigen::MatrixXd x(1, 1), y(1, 1);
  x << std::nan("");
  y << 1.0;
  CHECK_THROWS_AS(Dataset(x, y, {1u}).validate(), InputError);
}

TEST_CASE("subset keeps rows in order") {
  Eigen::MatrixXd x(3, 0), y(3, 1);
  y << 1, 2, 3;
  const Dataset d(x, y, {1u, 1u, 0u});
  const std::size_t rows[] = {2, 0};
  const Dataset s = d.subset(rows);
  CHECK(s.n() == 2);
  CHECK_FALSE(s.observed(0, 0));
  CHECK(s.y()(1, 0) == 1.0);
}

TEST_CASE("Gauss-Hermite moments of the standard normal are exact") {
  const auto rule = standard_normal_rule(16);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0, m3 = 0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double z = rule.nodes[k], w = rule.weights[k];
    m0 += w;
    m2 += w * z * z;
    m3 += w * z * z * z;
    m4 += w * std::pow(z, 4);
    m6 += w * std::pow(z, 6);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(std::abs(m3) < 1e-12);
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m6 == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("Gauss-Hermite integrates the normal MGF accurately") {
  const auto rule = standard_normal_rule(16);
  double mgf = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) mgf += rule.weights[k] * std::exp(0.7 * rule.nodes[k]);
  CHECK(mgf == doctest::Approx(std::exp(0.245)).epsilon(1e-12));
}

TEST_CASE("Gauss-Legendre integrates polynomials on [-1, 1]") {
  const auto& rule = gauss_legendre(8);
  double i0 = 0, i2 = 0, i14 = 0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    i0 += rule.weights[k];
    i2 += rule.weights[k] * rule.nodes[k] * rule.nodes[k];
    i14 += rule.weights[k] * std::pow(rule.nodes[k], 14);
  }
  CHECK(i0 == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(i2 == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
  CHECK(i14 == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("substreams depend only on root and counter") {
  CHECK(substream_seed(1, 2) == substream_seed(1, 2));
  CHECK(substream_seed(1, 2) != substream_seed(1, 3));
  CHECK(substream_seed(1, 2) != substream_seed(2, 2));
  auto a = substream(5, 9), b = substream(5, 9);
  for (int k = 0; k < 10; ++k) CHECK(a() == b());
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t k) {
                                 if (k == 7) throw InputError("boom");
                               }),
                  InputError);
}
