#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "selfcens/patterns.hpp"

namespace selfcens {

// n records of fully observed covariates x (n x d), outcomes y (n x p) and
// missingness indicators. A y cell is present iff the matching r bit is 1;
// absent cells hold NaN.
class Dataset {
 public:
  Dataset() = default;
  // y_full may hold arbitrary values in masked cells; they are replaced by NaN.
  Dataset(Eigen::MatrixXd x, const Eigen::MatrixXd& y_full, std::vector<std::uint32_t> patterns,
          std::vector<std::string> covariate_names = {},
          std::vector<std::string> outcome_names = {});

  std::size_t n() const noexcept { return static_cast<std::size_t>(y_.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(y_.cols()); }
  bool empty() const noexcept { return n() == 0; }

  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const Eigen::MatrixXd& y() const noexcept { return y_; }
  const std::vector<std::uint32_t>& pattern_codes() const noexcept { return r_; }
  Pattern pattern(std::size_t row) const { return Pattern(r_[row], p()); }
  bool observed(std::size_t row, std::size_t j) const { return (r_[row] >> j) & 1u; }
  bool complete(std::size_t row) const { return r_[row] == Pattern::full_mask(p()); }
  // n x p 0/1 matrix view of the indicators.
  Eigen::MatrixXi r_matrix() const;

  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const std::vector<std::string>& outcome_names() const noexcept { return outcome_names_; }

  Dataset subset(std::span<const std::size_t> rows) const;

  // Throws InputError if an invariant is broken.
  void validate() const;

 private:
  Eigen::MatrixXd x_;
  Eigen::MatrixXd y_;
  std::vector<std::uint32_t> r_;
  std::vector<std::string> covariate_names_;
  std::vector<std::string> outcome_names_;
};

}  // namespace selfcens
