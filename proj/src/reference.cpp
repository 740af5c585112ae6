// Serial reference implementations used to check the parallel kernels.

#include "eqtrend/covariance.hpp"
#include "eqtrend/equivalence.hpp"
#include "eqtrend/rng.hpp"

#include <algorithm>
#include <cmath>

namespace eqtrend {

std::vector<double> MaxBootstrap::max_norms_reference(double delta) const {
  const Eigen::VectorXd c = center(delta);
  const auto& dm = fit_->demeaned;
  const int n = fit_->n();
  const int P = fit_->periods();
  const auto llt = fit_->gram.llt();
  const bool wild = cfg_.variant == BootstrapVariant::WildCluster;
  const double sigma = wild ? 0.0 : std::sqrt(spherical_sigma(*fit_, c));

  std::vector<Eigen::VectorXd> fitted(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> resid(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    fitted[static_cast<std::size_t>(i)] = dm.unit_block(i) * c;
    resid[static_cast<std::size_t>(i)] = dm.ddY.row(i).transpose() - fitted[static_cast<std::size_t>(i)];
  }

  std::vector<double> norms;
  norms.reserve(cfg_.B);
  for (std::size_t b = 0; b < cfg_.B; ++b) {
    Engine eng = make_engine(cfg_.seed, {0x6A55ULL, b});
    std::normal_distribution<double> normal(0.0, sigma > 0.0 ? sigma : 1.0);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(fit_->dim());
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd y = fitted[static_cast<std::size_t>(i)];
      if (wild) {
        y += draws_(static_cast<Eigen::Index>(b), i) * resid[static_cast<std::size_t>(i)];
      } else {
        for (int t = 0; t < P; ++t) y[t] += sigma > 0.0 ? normal(eng) : 0.0;
      }
      xty += dm.unit_block(i).transpose() * y;
    }
    const Eigen::VectorXd beta = llt.solve(xty / static_cast<double>(n));
    norms.push_back(beta.cwiseAbs().maxCoeff());
  }
  std::sort(norms.begin(), norms.end());
  return norms;
}

}  // namespace eqtrend
