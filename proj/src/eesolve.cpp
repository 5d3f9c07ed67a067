#include "selfcens/eesolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "selfcens/dataset.hpp"
#include "selfcens/errors.hpp"
#include "selfcens/random.hpp"

namespace selfcens {

EstimatingSystem::EstimatingSystem(std::size_t n_records) : n_(n_records) {
  if (n_records == 0) throw InputError("estimating system needs at least one record");
}

std::size_t EstimatingSystem::add_block(std::string name, std::size_t size, BlockResidual residual,
                                        const std::vector<std::string>& depends_on) {
  if (size == 0) throw ConfigurationError("block '" + name + "' has no parameters");
  if (find_block(name)) throw ConfigurationError("duplicate block name '" + name + "'");
  BlockInfo info{std::move(name), dim_, size, {}};
  for (const auto& dep : depends_on) {
    auto idx = find_block(dep);
    if (!idx) throw ConfigurationError("block '" + info.name + "' depends on unknown block '" + dep + "'");
    info.depends_on.push_back(*idx);
  }
  std::sort(info.depends_on.begin(), info.depends_on.end());
  info.depends_on.erase(std::unique(info.depends_on.begin(), info.depends_on.end()),
                        info.depends_on.end());
  dim_ += size;
  info_.push_back(std::move(info));
  residual_.push_back(std::move(residual));
  return info_.back().offset;
}

std::size_t EstimatingSystem::add_record_block(std::string name, std::size_t size,
                                               RecordResidual residual,
                                               const std::vector<std::string>& depends_on) {
  BlockResidual wrapped = [n = n_, size, f = std::move(residual)](
                              const Eigen::VectorXd& theta, Eigen::Ref<Eigen::MatrixXd> out) {
    Eigen::VectorXd row(static_cast<Eigen::Index>(size));
    for (std::size_t i = 0; i < n; ++i) {
      f(i, theta, row);
      out.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
  };
  return add_block(std::move(name), size, std::move(wrapped), depends_on);
}

std::optional<std::size_t> EstimatingSystem::find_block(const std::string& name) const {
  for (std::size_t b = 0; b < info_.size(); ++b)
    if (info_[b].name == name) return b;
  return std::nullopt;
}

Eigen::MatrixXd EstimatingSystem::block_residuals(const Eigen::VectorXd& theta,
                                                  std::size_t block) const {
  const auto& info = info_.at(block);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_),
                                              static_cast<Eigen::Index>(info.size));
  residual_[block](theta, out);
  return out;
}

Eigen::MatrixXd EstimatingSystem::residuals(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim_)
    throw DimensionError("theta has length " + std::to_string(theta.size()) + ", expected " +
                         std::to_string(dim_));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(dim_));
  for (std::size_t b = 0; b < info_.size(); ++b)
    out.middleCols(static_cast<Eigen::Index>(info_[b].offset), static_cast<Eigen::Index>(info_[b].size)) =
        block_residuals(theta, b);
  return out;
}

Eigen::VectorXd EstimatingSystem::block_mean(const Eigen::VectorXd& theta, std::size_t block) const {
  return block_residuals(theta, block).colwise().mean().transpose();
}

Eigen::VectorXd EstimatingSystem::mean_residual(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim_)
    throw DimensionError("theta has length " + std::to_string(theta.size()) + ", expected " +
                         std::to_string(dim_));
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim_));
  for (std::size_t b = 0; b < info_.size(); ++b)
    out.segment(static_cast<Eigen::Index>(info_[b].offset), static_cast<Eigen::Index>(info_[b].size)) =
        block_mean(theta, b);
  return out;
}

bool EstimatingSystem::reads(std::size_t block, std::size_t param_block) const {
  if (block == param_block) return true;
  const auto& deps = info_[block].depends_on;
  return std::binary_search(deps.begin(), deps.end(), param_block);
}

namespace {

double fd_width(double step, double value) { return step * std::max(1.0, std::abs(value)); }

}  // namespace

Eigen::MatrixXd EstimatingSystem::jacobian(const Eigen::VectorXd& theta, double fd_step) const {
  const auto q = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd work = theta;
  for (std::size_t pb = 0; pb < info_.size(); ++pb) {
    for (std::size_t k = 0; k < info_[pb].size; ++k) {
      const auto j = static_cast<Eigen::Index>(info_[pb].offset + k);
      const double h = fd_width(fd_step, theta(j));
      for (std::size_t b = 0; b < info_.size(); ++b) {
        if (!reads(b, pb)) continue;
        work(j) = theta(j) + h;
        const Eigen::VectorXd plus = block_mean(work, b);
        work(j) = theta(j) - h;
        const Eigen::VectorXd minus = block_mean(work, b);
        work(j) = theta(j);
        jac.block(static_cast<Eigen::Index>(info_[b].offset), j,
                  static_cast<Eigen::Index>(info_[b].size), 1) = (plus - minus) / (2.0 * h);
      }
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Damped Newton

namespace {

struct Stage {
  std::vector<Eigen::Index> params;  // indices into theta being solved
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;  // residual restricted to the stage
};

double max_norm(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  if (!v.allFinite()) return std::numeric_limits<double>::infinity();
  return v.cwiseAbs().maxCoeff();
}

struct StageOutcome {
  bool converged = false;
  std::size_t iterations = 0;
  double norm = 0.0;
};

StageOutcome newton(const Stage& stage, Eigen::VectorXd& theta, const SolveOptions& opt,
                    const std::string& label, std::vector<std::string>& warnings) {
  StageOutcome res;
  const auto k = static_cast<Eigen::Index>(stage.params.size());
  Eigen::VectorXd g = stage.eval(theta);
  res.norm = max_norm(g);
  bool ridge_warned = false;
  while (true) {
    if (res.norm <= opt.tol) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= opt.max_iter || !std::isfinite(res.norm)) return res;
    ++res.iterations;

    Eigen::MatrixXd jac(g.size(), k);
    Eigen::VectorXd work = theta;
    for (Eigen::Index c = 0; c < k; ++c) {
      const Eigen::Index j = stage.params[static_cast<std::size_t>(c)];
      const double h = fd_width(opt.fd_step, theta(j));
      work(j) = theta(j) + h;
      const Eigen::VectorXd plus = stage.eval(work);
      work(j) = theta(j) - h;
      const Eigen::VectorXd minus = stage.eval(work);
      work(j) = theta(j);
      jac.col(c) = (plus - minus) / (2.0 * h);
    }
    if (!jac.allFinite()) return res;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
    Eigen::VectorXd delta;
    if (smax > 0.0 && smin / smax > 1e-12 && jac.rows() == jac.cols()) {
      delta = svd.solve(-g);
    } else {
      if (!ridge_warned) {
        warnings.push_back(label + ": singular Jacobian, ridge-regularised step used");
        ridge_warned = true;
      }
      const double lambda = opt.ridge * std::max(1.0, smax * smax);
      Eigen::MatrixXd normal = jac.transpose() * jac;
      normal.diagonal().array() += lambda;
      delta = normal.ldlt().solve(-jac.transpose() * g);
    }
    if (!delta.allFinite()) return res;

    const double base = g.squaredNorm();
    double t = 1.0;
    bool accepted = false;
    for (std::size_t h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      Eigen::VectorXd trial = theta;
      for (Eigen::Index c = 0; c < k; ++c) trial(stage.params[static_cast<std::size_t>(c)]) += t * delta(c);
      Eigen::VectorXd gt = stage.eval(trial);
      if (gt.allFinite() && gt.squaredNorm() < base) {
        theta = std::move(trial);
        g = std::move(gt);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Levenberg-Marquardt fallback: increasingly damped Gauss-Newton steps.
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtg = jac.transpose() * g;
      const double scale = std::max(1e-300, jtj.diagonal().maxCoeff());
      for (double mu = 1e-6; mu <= 1e6 && !accepted; mu *= 10.0) {
        Eigen::MatrixXd normal = jtj;
        normal.diagonal().array() += mu * scale;
        const Eigen::VectorXd step = normal.ldlt().solve(-jtg);
        if (!step.allFinite()) continue;
        Eigen::VectorXd trial = theta;
        for (Eigen::Index c = 0; c < k; ++c) trial(stage.params[static_cast<std::size_t>(c)]) += step(c);
        Eigen::VectorXd gt = stage.eval(trial);
        if (gt.allFinite() && gt.squaredNorm() < base) {
          theta = std::move(trial);
          g = std::move(gt);
          accepted = true;
        }
      }
    }
    res.norm = max_norm(g);
    if (!accepted) {
      if (res.norm <= opt.tol) res.converged = true;
      return res;
    }
  }
}

}  // namespace

SolveResult solve(const EstimatingSystem& system, const Eigen::VectorXd& theta0,
                  const SolveOptions& options) {
  if (static_cast<std::size_t>(theta0.size()) != system.dim())
    throw DimensionError("theta0 has length " + std::to_string(theta0.size()) + ", expected " +
                         std::to_string(system.dim()));
  if (!theta0.allFinite()) throw InputError("theta0 must be finite");

  SolveResult out;
  Eigen::VectorXd theta = theta0;
  const auto& blocks = system.blocks();

  if (options.sequential && blocks.size() > 1) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Stage stage;
      for (std::size_t k = 0; k < blocks[b].size; ++k)
        stage.params.push_back(static_cast<Eigen::Index>(blocks[b].offset + k));
      stage.eval = [&system, b](const Eigen::VectorXd& th) { return system.block_mean(th, b); };
      const StageOutcome r = newton(stage, theta, options, blocks[b].name, out.warnings);
      out.iterations += r.iterations;
      if (!r.converged)
        out.warnings.push_back("block '" + blocks[b].name + "' did not converge in the sequential pass");
    }
  }

  Stage joint;
  for (std::size_t j = 0; j < system.dim(); ++j) joint.params.push_back(static_cast<Eigen::Index>(j));
  joint.eval = [&system](const Eigen::VectorXd& th) { return system.mean_residual(th); };
  const StageOutcome r = newton(joint, theta, options, "joint", out.warnings);
  out.iterations += r.iterations;
  out.converged = r.converged;
  out.residual_norm = r.norm;
  out.theta_hat = std::move(theta);
  return out;
}

Eigen::MatrixXd sandwich_covariance(const EstimatingSystem& system, const Eigen::VectorXd& theta_hat,
                                    double fd_step) {
  const Eigen::MatrixXd a = system.jacobian(theta_hat, fd_step);
  const Eigen::MatrixXd g = system.residuals(theta_hat);
  const double n = static_cast<double>(system.n_records());
  const Eigen::MatrixXd b = g.transpose() * g / n;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smax > 0.0) || !(smin / smax > 1e-13)) {
    std::ostringstream msg;
    msg << "sandwich covariance: Jacobian is singular (condition number "
        << (smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity()) << ")";
    throw NumericalError(msg.str());
  }
  const Eigen::MatrixXd ainv = svd.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  Eigen::MatrixXd cov = ainv * b * ainv.transpose() / n;
  return 0.5 * (cov + cov.transpose());
}

// ---------------------------------------------------------------------------
// Intervals

double normal_quantile(double prob) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, prob);
}

std::vector<Interval> wald_ci(const Eigen::VectorXd& theta_hat, const Eigen::MatrixXd& covariance,
                              double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigurationError("confidence level must be in (0, 1)");
  if (covariance.rows() != theta_hat.size() || covariance.cols() != theta_hat.size())
    throw DimensionError("wald_ci: covariance does not match theta");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<Interval> out(static_cast<std::size_t>(theta_hat.size()));
  for (Eigen::Index j = 0; j < theta_hat.size(); ++j) {
    const double se = std::sqrt(std::max(0.0, covariance(j, j)));
    out[static_cast<std::size_t>(j)] = {theta_hat(j) - z * se, theta_hat(j) + z * se};
  }
  return out;
}

double empirical_quantile(std::vector<double> v, double prob) {
  std::erase_if(v, [](double a) { return !std::isfinite(a); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

BootstrapResult bootstrap(const Dataset& data, const Pipeline& pipeline, std::size_t replicates,
                          std::uint64_t seed, double level, std::size_t threads) {
  if (replicates < 2) throw ConfigurationError("bootstrap needs at least 2 replicates");
  if (!(level > 0.0 && level < 1.0)) throw ConfigurationError("confidence level must be in (0, 1)");
  if (data.empty()) throw InputError("bootstrap: empty dataset");

  const std::size_t n = data.n();
  std::vector<std::optional<Eigen::VectorXd>> results(replicates);
  std::vector<std::string> errors(replicates);
  parallel_for(replicates, resolve_threads(threads), [&](std::size_t b) {
    Engine eng = substream(seed, b);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = pick(eng);
    try {
      results[b] = pipeline(data.subset(rows));
    } catch (const Error& e) {
      errors[b] = e.what();
    }
  });

  BootstrapResult out;
  Eigen::Index k = -1;
  for (std::size_t b = 0; b < replicates; ++b) {
    if (!results[b]) {
      out.failed.push_back(b);
    } else if (k < 0) {
      k = results[b]->size();
    } else if (results[b]->size() != k) {
      throw DimensionError("bootstrap: pipeline returned vectors of differing length");
    }
  }
  if (out.failed.size() * 5 > replicates) {
    std::string msg = "bootstrap: " + std::to_string(out.failed.size()) + " of " +
                      std::to_string(replicates) + " replicates failed";
    if (!out.failed.empty()) msg += " (first: " + errors[out.failed.front()] + ")";
    throw ConvergenceError(msg);
  }
  if (!out.failed.empty())
    out.warnings.push_back(std::to_string(out.failed.size()) + " bootstrap replicates failed and were excluded");

  out.replicates = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(replicates), k,
                                             std::numeric_limits<double>::quiet_NaN());
  for (std::size_t b = 0; b < replicates; ++b)
    if (results[b]) out.replicates.row(static_cast<Eigen::Index>(b)) = results[b]->transpose();

  const double lo = 0.5 * (1.0 - level);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> col(out.replicates.col(j).data(), out.replicates.col(j).data() + replicates);
    out.intervals.push_back({empirical_quantile(col, lo), empirical_quantile(col, 1.0 - lo)});
  }
  return out;
}

}  // namespace selfcens
