#pragma once

#include "eqtrend/panel.hpp"

#include <Eigen/Dense>

namespace eqtrend {

enum class CovFlavor { ClusterRobust, Spherical };

// Estimate of Σ, the asymptotic covariance of √n(β̂ − β).
struct CovEstimate {
  Eigen::MatrixXd sigma_hat;
  CovFlavor flavor = CovFlavor::ClusterRobust;
  // False when β̂ depends on estimated cohort covariate means whose sampling
  // variation is not propagated (staggered designs with covariates).
  bool adjusted_for_estimated_means = true;
};

// Per-unit scores Ẅ_i'(Ÿ_i − Ẅ_i β_ref), one row per unit (n x p).
Eigen::MatrixXd unit_scores(const PretrendFit& fit, const Eigen::VectorXd& beta_ref);

// Σ̂ = Γ̂⁻¹ [(1/n) Σ_i s_i s_i'] Γ̂⁻¹ with s_i the unit scores at β̂.
// No degrees-of-freedom correction is applied.
CovEstimate cluster_robust_cov(const PretrendFit& fit);

// (1/((n−1)T)) Σ_i Σ_t (Ÿ_it − Ẅ_it'β_ref)², T = periods − 1.
double spherical_sigma(const PretrendFit& fit, const Eigen::VectorXd& beta_ref);

// σ̂ Γ̂⁻¹ at β̂.
CovEstimate spherical_cov(const PretrendFit& fit);

}  // namespace eqtrend
