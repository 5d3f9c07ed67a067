#include "selfcens/functional.hpp"

#include <cmath>

#include "selfcens/dataset.hpp"
#include "selfcens/errors.hpp"

namespace selfcens {

Eigen::VectorXd Functional::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& psi) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim));
  m(x, y, psi, out);
  return out;
}

Functional outcome_mean(std::size_t j) {
  Functional f;
  f.dim = 1;
  f.description = "mean of outcome " + std::to_string(j + 1);
  f.affine_in_y = true;
  f.component_names = {"mean[y" + std::to_string(j + 1) + "]"};
  const auto jj = static_cast<Eigen::Index>(j);
  f.m = [jj](const Eigen::VectorXd&, const Eigen::VectorXd& y, const Eigen::VectorXd& psi,
             Eigen::Ref<Eigen::VectorXd> out) { out(0) = y(jj) - psi(0); };
  f.check = [j](const Dataset& data) {
    if (j >= data.p()) throw DimensionError("outcome_mean: outcome index out of range");
  };
  return f;
}

Functional risk_difference_functional(std::size_t treat_index, std::size_t outcome_index,
                                      std::size_t stratum_index) {
  if (treat_index == outcome_index || treat_index == stratum_index ||
      outcome_index == stratum_index)
    throw InputError("risk_difference_functional: indices must be distinct");
  Functional f;
  f.dim = 4;
  f.description = "risk difference of outcome " + std::to_string(outcome_index + 1) +
                  " by treatment " + std::to_string(treat_index + 1) + " within stratum " +
                  std::to_string(stratum_index + 1);
  f.affine_in_y = false;
  f.component_names = {"psi[a=0,g=0]", "psi[a=1,g=0]", "psi[a=0,g=1]", "psi[a=1,g=1]"};
  const auto t = static_cast<Eigen::Index>(treat_index);
  const auto o = static_cast<Eigen::Index>(outcome_index);
  const auto s = static_cast<Eigen::Index>(stratum_index);
  f.m = [t, o, s](const Eigen::VectorXd&, const Eigen::VectorXd& y, const Eigen::VectorXd& psi,
                  Eigen::Ref<Eigen::VectorXd> out) {
    out.setZero();
    const int a = y(t) > 0.5 ? 1 : 0;
    const int g = y(s) > 0.5 ? 1 : 0;
    const int k = a + 2 * g;
    out(k) = y(o) - psi(k);
  };
  for (int g = 0; g < 2; ++g) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
    w(2 * g + 1) = 1.0;
    w(2 * g) = -1.0;
    f.contrasts.push_back({"RD[stratum=" + std::to_string(g) + "]", w});
  }
  f.check = [treat_index, outcome_index, stratum_index](const Dataset& data) {
    const std::size_t p = data.p();
    if (treat_index >= p || outcome_index >= p || stratum_index >= p)
      throw DimensionError("risk_difference_functional: outcome index out of range");
    for (std::size_t col : {treat_index, outcome_index, stratum_index}) {
      for (std::size_t i = 0; i < data.n(); ++i) {
        if (!data.observed(i, col)) continue;
        const double v = data.y()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
        if (v != 0.0 && v != 1.0)
          throw InputError("risk difference requires binary outcomes; column " +
                           data.outcome_names()[col] + " has value " + std::to_string(v));
      }
    }
    std::size_t cell_counts[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (!data.complete(i)) continue;
      const auto row = static_cast<Eigen::Index>(i);
      const int a = data.y()(row, static_cast<Eigen::Index>(treat_index)) > 0.5 ? 1 : 0;
      const int g = data.y()(row, static_cast<Eigen::Index>(stratum_index)) > 0.5 ? 1 : 0;
      ++cell_counts[a + 2 * g];
    }
    for (int k = 0; k < 4; ++k)
      if (cell_counts[k] == 0)
        throw InputError("risk difference cell (treat=" + std::to_string(k % 2) +
                         ", stratum=" + std::to_string(k / 2) + ") has no complete cases");
  };
  return f;
}

}  // namespace selfcens
