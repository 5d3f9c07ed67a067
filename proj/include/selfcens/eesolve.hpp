#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace selfcens {

class Dataset;

// Fills out (n_records x block size) with the per-record residuals of one block.
using BlockResidual = std::function<void(const Eigen::VectorXd& theta, Eigen::Ref<Eigen::MatrixXd> out)>;
// Per-record form: fills out (block size) for record `row`.
using RecordResidual =
    std::function<void(std::size_t row, const Eigen::VectorXd& theta, Eigen::Ref<Eigen::VectorXd> out)>;

struct BlockInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  // Indices of earlier blocks whose parameters this block's residual reads.
  std::vector<std::size_t> depends_on;
};

// Stacked estimating equations G(theta) = (G_1, ..., G_B). Block b may read its own
// parameters and those of the blocks it declares; blocks are added in solve order.
class EstimatingSystem {
 public:
  explicit EstimatingSystem(std::size_t n_records);

  // Returns the parameter offset of the new block. Unknown dependency names throw
  // ConfigurationError.
  std::size_t add_block(std::string name, std::size_t size, BlockResidual residual,
                        const std::vector<std::string>& depends_on = {});
  std::size_t add_record_block(std::string name, std::size_t size, RecordResidual residual,
                               const std::vector<std::string>& depends_on = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_records() const noexcept { return n_; }
  const std::vector<BlockInfo>& blocks() const noexcept { return info_; }
  std::optional<std::size_t> find_block(const std::string& name) const;

  Eigen::MatrixXd residuals(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd block_residuals(const Eigen::VectorXd& theta, std::size_t block) const;
  Eigen::VectorXd mean_residual(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd block_mean(const Eigen::VectorXd& theta, std::size_t block) const;

  // Central-difference Jacobian of the mean residual, step fd_step * max(1, |theta_j|).
  // Only blocks that can read a perturbed parameter are re-evaluated.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, double fd_step = 1e-6) const;

 private:
  bool reads(std::size_t block, std::size_t param_block) const;

  std::size_t n_;
  std::size_t dim_ = 0;
  std::vector<BlockInfo> info_;
  std::vector<BlockResidual> residual_;
};

struct SolveOptions {
  double tol = 1e-8;          // max-norm of the mean residual
  std::size_t max_iter = 100;  // Newton iterations per stage
  double fd_step = 1e-6;
  double ridge = 1e-8;
  std::size_t max_halvings = 30;
  bool sequential = true;      // solve blocks in order before the joint pass
};

struct SolveResult {
  Eigen::VectorXd theta_hat;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::optional<Eigen::MatrixXd> covariance;
  std::vector<std::string> warnings;
};

SolveResult solve(const EstimatingSystem& system, const Eigen::VectorXd& theta0,
                  const SolveOptions& options = {});

// (1/n) A^{-1} B A^{-T}, A = mean Jacobian, B = mean outer product of residuals.
// Singular A throws NumericalError reporting the condition number.
Eigen::MatrixXd sandwich_covariance(const EstimatingSystem& system, const Eigen::VectorXd& theta_hat,
                                    double fd_step = 1e-6);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

double normal_quantile(double prob);

std::vector<Interval> wald_ci(const Eigen::VectorXd& theta_hat, const Eigen::MatrixXd& covariance,
                              double level = 0.95);

using Pipeline = std::function<Eigen::VectorXd(const Dataset&)>;

struct BootstrapResult {
  Eigen::MatrixXd replicates;  // B x k; failed replicates are NaN rows
  std::vector<Interval> intervals;
  std::vector<std::size_t> failed;
  std::vector<std::string> warnings;
};

// Nonparametric row bootstrap with percentile intervals. Replicate b resamples with
// substream (seed, b), so results do not depend on the worker count. More than 20%
// failed replicates throws ConvergenceError.
BootstrapResult bootstrap(const Dataset& data, const Pipeline& pipeline, std::size_t replicates,
                          std::uint64_t seed, double level = 0.95, std::size_t threads = 0);

// Type-7 sample quantile of the finite entries of v.
double empirical_quantile(std::vector<double> v, double prob);

}  // namespace selfcens
