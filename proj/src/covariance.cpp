#include "eqtrend/covariance.hpp"

#include "eqtrend/errors.hpp"

namespace eqtrend {

Eigen::MatrixXd unit_scores(const PretrendFit& fit, const Eigen::VectorXd& beta_ref) {
  if (beta_ref.size() != fit.dim()) throw ValidationError("reference vector has the wrong dimension");
  const auto& dm = fit.demeaned;
  Eigen::MatrixXd scores(fit.n(), fit.dim());
  for (int i = 0; i < fit.n(); ++i) {
    const auto w = dm.unit_block(i);
    const Eigen::VectorXd resid = dm.ddY.row(i).transpose() - w * beta_ref;
    scores.row(i) = (w.transpose() * resid).transpose();
  }
  return scores;
}

CovEstimate cluster_robust_cov(const PretrendFit& fit) {
  const auto llt = fit.gram.llt();
  if (llt.info() != Eigen::Success) throw RankError("singular Gram matrix");
  const Eigen::MatrixXd gram_inv = llt.solve(Eigen::MatrixXd::Identity(fit.dim(), fit.dim()));

  // Scores at β̂ are Ẅ_i'ü_i with the stored residuals.
  const auto& dm = fit.demeaned;
  Eigen::MatrixXd scores(fit.n(), fit.dim());
  for (int i = 0; i < fit.n(); ++i)
    scores.row(i) = (dm.unit_block(i).transpose() * fit.residuals.row(i).transpose()).transpose();
  const Eigen::MatrixXd meat = (scores.transpose() * scores) / static_cast<double>(fit.n());

  CovEstimate cov;
  cov.sigma_hat = gram_inv * meat * gram_inv;
  cov.sigma_hat = 0.5 * (cov.sigma_hat + cov.sigma_hat.transpose()).eval();
  cov.flavor = CovFlavor::ClusterRobust;
  return cov;
}

double spherical_sigma(const PretrendFit& fit, const Eigen::VectorXd& beta_ref) {
  if (beta_ref.size() != fit.dim()) throw ValidationError("reference vector has the wrong dimension");
  const auto& dm = fit.demeaned;
  double ssr = 0.0;
  for (int i = 0; i < fit.n(); ++i)
    ssr += (dm.ddY.row(i).transpose() - dm.unit_block(i) * beta_ref).squaredNorm();
  const double dof = static_cast<double>(fit.n() - 1) * static_cast<double>(fit.periods() - 1);
  if (dof <= 0) throw ValidationError("spherical variance needs n > 1 and at least two periods");
  return ssr / dof;
}

CovEstimate spherical_cov(const PretrendFit& fit) {
  CovEstimate cov;
  cov.sigma_hat = spherical_sigma(fit, fit.beta_hat) *
                  fit.gram.llt().solve(Eigen::MatrixXd::Identity(fit.dim(), fit.dim()));
  cov.flavor = CovFlavor::Spherical;
  return cov;
}

}  // namespace eqtrend
