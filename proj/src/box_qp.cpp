#include "eqtrend/box_qp.hpp"

#include "eqtrend/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace eqtrend {
namespace {

enum class Bound : signed char { Free = 0, Lower = -1, Upper = 1 };

}  // namespace

BoxQpResult solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi) {
  const Eigen::Index p = g.size();
  if (H.rows() != p || H.cols() != p || lo.size() != p || hi.size() != p)
    throw ValidationError("box QP: dimension mismatch");
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(lo[j] <= hi[j])) throw ValidationError("box QP: empty box");

  std::vector<Bound> state(static_cast<std::size_t>(p), Bound::Free);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p).cwiseMax(lo).cwiseMin(hi);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (lo[j] == hi[j]) state[static_cast<std::size_t>(j)] = Bound::Lower;
  }

  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale * std::max(1.0, hi.cwiseAbs().maxCoeff() + lo.cwiseAbs().maxCoeff());
  const int max_iter = static_cast<int>(20 * p + 50);

  BoxQpResult res;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < p; ++j)
      if (state[static_cast<std::size_t>(j)] == Bound::Free) free.push_back(j);

    // Minimizer over the free coordinates with the others held at their bounds.
    Eigen::VectorXd target = x;
    if (!free.empty()) {
      const auto k = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hff(k, k);
      Eigen::VectorXd rhs(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        rhs[a] = g[free[a]];
        for (Eigen::Index b = 0; b < p; ++b) {
          if (state[static_cast<std::size_t>(b)] != Bound::Free) rhs[a] -= H(free[a], b) * x[b];
        }
        for (Eigen::Index b = 0; b < k; ++b) hff(a, b) = H(free[a], free[b]);
      }
      const auto llt = hff.llt();
      if (llt.info() != Eigen::Success) throw RankError("box QP: reduced Hessian is not positive definite");
      const Eigen::VectorXd sol = llt.solve(rhs);
      for (Eigen::Index a = 0; a < k; ++a) target[free[a]] = sol[a];
    }

    // Step toward the target until the first bound blocks.
    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index j : free) {
      const double d = target[j] - x[j];
      if (d > 0 && target[j] > hi[j]) {
        const double s = (hi[j] - x[j]) / d;
        if (s < step) step = s, blocking = j;
      } else if (d < 0 && target[j] < lo[j]) {
        const double s = (lo[j] - x[j]) / d;
        if (s < step) step = s, blocking = j;
      }
    }
    x += step * (target - x);
    if (blocking >= 0) {
      const bool upper = target[blocking] > hi[blocking];
      x[blocking] = upper ? hi[blocking] : lo[blocking];
      state[static_cast<std::size_t>(blocking)] = upper ? Bound::Upper : Bound::Lower;
      continue;
    }

    // Free subproblem solved: check the multipliers of the active bounds.
    const Eigen::VectorXd grad = H * x - g;
    Eigen::Index release = -1;
    double worst = tol;
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto s = state[static_cast<std::size_t>(j)];
      if (s == Bound::Free || lo[j] == hi[j]) continue;
      const double violation = s == Bound::Lower ? -grad[j] : grad[j];
      if (violation > worst) worst = violation, release = j;
    }
    if (release < 0) {
      res.x = x;
      res.objective = 0.5 * x.dot(H * x) - g.dot(x);
      return res;
    }
    state[static_cast<std::size_t>(release)] = Bound::Free;
  }
  throw Error("box QP: active-set iteration did not converge");
}

}  // namespace eqtrend
