#pragma once

#include <cstddef>
#include <vector>

namespace selfcens {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Physicists' Gauss-Hermite rule: integral of f(t) exp(-t^2) dt over the real line.
// Exact for polynomials of degree <= 2n - 1.
const QuadratureRule& gauss_hermite(std::size_t n);

// Gauss-Legendre rule on [-1, 1].
const QuadratureRule& gauss_legendre(std::size_t n);

// Nodes z_k and weights w_k with sum_k w_k f(z_k) ~= E f(Z), Z ~ N(0, 1).
QuadratureRule standard_normal_rule(std::size_t n);

}  // namespace selfcens
