#include "selfcens/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Dense>

#include "selfcens/errors.hpp"

namespace selfcens {
namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights
// mu0 times the squared first component of each eigenvector.
QuadratureRule golub_welsch(const Eigen::VectorXd& off_diagonal, double mu0) {
  const Eigen::Index n = off_diagonal.size() + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    jacobi(k, k + 1) = off_diagonal(k);
    jacobi(k + 1, k) = off_diagonal(k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    rule.nodes[static_cast<std::size_t>(k)] = eig.eigenvalues()(k);
    const double v0 = eig.eigenvectors()(0, k);
    rule.weights[static_cast<std::size_t>(k)] = mu0 * v0 * v0;
  }
  return rule;
}

QuadratureRule make_hermite(std::size_t n) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(n - 1));
  for (std::size_t k = 1; k < n; ++k) b(static_cast<Eigen::Index>(k - 1)) = std::sqrt(k / 2.0);
  return golub_welsch(b, std::sqrt(std::numbers::pi));
}

QuadratureRule make_legendre(std::size_t n) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(n - 1));
  for (std::size_t k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    b(static_cast<Eigen::Index>(k - 1)) = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  return golub_welsch(b, 2.0);
}

template <class Make>
const QuadratureRule& cached(std::map<std::size_t, QuadratureRule>& cache, std::mutex& mu,
                             std::size_t n, Make make) {
  if (n < 2 || n > 256) throw ConfigurationError("quadrature order must be in [2, 256]");
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make(n)).first;
  return it->second;
}

}  // namespace

const QuadratureRule& gauss_hermite(std::size_t n) {
  static std::map<std::size_t, QuadratureRule> cache;
  static std::mutex mu;
  return cached(cache, mu, n, make_hermite);
}

const QuadratureRule& gauss_legendre(std::size_t n) {
  static std::map<std::size_t, QuadratureRule> cache;
  static std::mutex mu;
  return cached(cache, mu, n, make_legendre);
}

QuadratureRule standard_normal_rule(std::size_t n) {
  QuadratureRule rule = gauss_hermite(n);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    rule.nodes[k] *= std::numbers::sqrt2;
    rule.weights[k] /= std::sqrt(std::numbers::pi);
  }
  return rule;
}

}  // namespace selfcens
