#include "selfcens/dataset.hpp"

#include <cmath>
#include <limits>

#include "selfcens/errors.hpp"

namespace selfcens {

Dataset::Dataset(Eigen::MatrixXd x, const Eigen::MatrixXd& y_full,
                 std::vector<std::uint32_t> patterns, std::vector<std::string> covariate_names,
                 std::vector<std::string> outcome_names)
    : x_(std::move(x)),
      y_(y_full),
      r_(std::move(patterns)),
      covariate_names_(std::move(covariate_names)),
      outcome_names_(std::move(outcome_names)) {
  const auto n = static_cast<std::size_t>(y_.rows());
  if (static_cast<std::size_t>(x_.rows()) != n || r_.size() != n)
    throw DimensionError("dataset: x, y and patterns must have the same number of rows");
  if (p() == 0 || p() > kMaxOutcomes) throw DimensionError("dataset: outcome count out of range");
  if (covariate_names_.empty())
    for (std::size_t j = 0; j < d(); ++j) covariate_names_.push_back("x" + std::to_string(j + 1));
  if (outcome_names_.empty())
    for (std::size_t j = 0; j < p(); ++j) outcome_names_.push_back("y" + std::to_string(j + 1));
  if (covariate_names_.size() != d() || outcome_names_.size() != p())
    throw DimensionError("dataset: column name count mismatch");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p(); ++j)
      if (!observed(i, j)) y_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = nan;
  validate();
}

Eigen::MatrixXi Dataset::r_matrix() const {
  Eigen::MatrixXi r(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(p()));
  for (std::size_t i = 0; i < n(); ++i)
    for (std::size_t j = 0; j < p(); ++j)
      r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = observed(i, j) ? 1 : 0;
  return r;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x_.resize(static_cast<Eigen::Index>(rows.size()), x_.cols());
  out.y_.resize(static_cast<Eigen::Index>(rows.size()), y_.cols());
  out.r_.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = static_cast<Eigen::Index>(rows[k]);
    const auto dst = static_cast<Eigen::Index>(k);
    out.x_.row(dst) = x_.row(src);
    out.y_.row(dst) = y_.row(src);
    out.r_[k] = r_[rows[k]];
  }
  out.covariate_names_ = covariate_names_;
  out.outcome_names_ = outcome_names_;
  return out;
}

void Dataset::validate() const {
  const std::uint32_t full = Pattern::full_mask(p());
  for (std::size_t i = 0; i < n(); ++i) {
    if ((r_[i] & ~full) != 0) throw InputError("dataset: pattern code out of range");
    for (std::size_t j = 0; j < d(); ++j)
      if (!std::isfinite(x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))))
        throw InputError("dataset: non-finite covariate at row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < p(); ++j) {
      const double v = y_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (observed(i, j) != std::isfinite(v))
        throw InputError("dataset: outcome presence disagrees with indicator at row " +
                         std::to_string(i + 1));
    }
  }
}

}  // namespace selfcens
