#pragma once

#include "eqtrend/panel.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace oracle {

// Random canonical panel: unit and time effects, N(0, 1) noise, group
// pattern with at least one unit in each arm.
eqtrend::PanelDataset random_panel(std::mt19937_64& rng, int n, int periods, const std::vector<double>& beta,
                                   double noise = 1.0);

// β̂ from least squares on explicit unit dummies, time dummies and the
// placebo columns G·D_l, via dense normal equations.
Eigen::VectorXd lsdv_beta(const eqtrend::PanelDataset& ds);

// Σ̂ = Γ⁻¹WΓ⁻¹ computed with explicit loops over units and periods.
Eigen::MatrixXd loop_sandwich(const eqtrend::PretrendFit& fit);

double normal_cdf(double x);

}  // namespace oracle
