#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace selfcens {

class Dataset;

// Linear combination of psi reported alongside the estimate (e.g. a risk difference).
struct Contrast {
  std::string name;
  Eigen::VectorXd weights;
};

// Full-data target psi defined as the root of E{m(X, Y; psi)} = 0.
struct Functional {
  using Moment = std::function<void(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& psi, Eigen::Ref<Eigen::VectorXd> out)>;

  std::size_t dim = 1;
  std::string description;
  Moment m;
  // m affine in y for fixed (x, psi): conditional expectations reduce to plugging in E(Y).
  bool affine_in_y = false;
  std::vector<Contrast> contrasts;
  std::vector<std::string> component_names;
  // Optional data check run before estimation; throws InputError.
  std::function<void(const Dataset&)> check;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& psi) const;
};

// m(x, y; psi) = y_j - psi. Outcome index is 0-based.
Functional outcome_mean(std::size_t j);

// Cell means psi_{a,g} = E(Y_o | Y_t = a, Y_s = g) for a, g in {0, 1}, ordered
// (a,g) = (0,0), (1,0), (0,1), (1,1); contrasts RD_g = psi_{1,g} - psi_{0,g}.
// Indices are 0-based outcome columns.
Functional risk_difference_functional(std::size_t treat_index, std::size_t outcome_index,
                                      std::size_t stratum_index);

}  // namespace selfcens
