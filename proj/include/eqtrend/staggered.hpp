#pragma once

#include "eqtrend/covariance.hpp"
#include "eqtrend/panel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eqtrend {

// A (cohort, period) cell; both are 1-based period indices.
struct PlaceboCell {
  int cohort = 0;
  int period = 0;
  friend bool operator==(const PlaceboCell&, const PlaceboCell&) = default;
};

enum class ColumnRole { Placebo, Treatment, CovariateTime, PlaceboSlope, TreatmentSlope };

struct DesignColumn {
  ColumnRole role = ColumnRole::Placebo;
  int cohort = 0;      // 0 for covariate-by-time columns
  int period = 0;
  int covariate = -1;  // -1 for cell dummies
  std::string label;
};

// Saturated staggered-adoption design after absorbing unit and time effects.
// Time-invariant terms (covariate main effects, cohort-by-covariate terms) are
// swept out by the within transformation and carry no columns.
struct StaggeredDesign {
  std::vector<int> cohorts;  // finite adoption periods, ascending
  int base_period = 0;
  std::vector<DesignColumn> columns;
  std::vector<Eigen::MatrixXd> raw;  // one units x periods matrix per column
  std::vector<int> placebo_index;    // positions of the placebo cells in `columns`
  std::vector<PlaceboCell> placebo_cells;
  Eigen::MatrixXd cohort_means;      // cohorts x covariates
  std::vector<PlaceboCell> pooled;   // placebo cells removed by the pooling mask
  std::vector<int> subset;

  int dim() const { return static_cast<int>(columns.size()); }
};

// Builds the design over `subset` (all units when empty). Cells listed in
// `pooling_mask` lose their placebo dummy and slope columns, which turns them
// into controls.
StaggeredDesign build_staggered_design(const PanelDataset& ds, std::span<const PlaceboCell> pooling_mask = {},
                                       std::span<const int> subset = {});

// Fit restricted to the placebo cells: nuisance columns are partialled out, so
// beta_hat, residuals and the cluster covariance match the full regression.
struct StaggeredFit {
  PretrendFit placebo;
  std::vector<PlaceboCell> cells;
  bool has_covariates = false;
};

StaggeredFit extract_placebo_vector(const PanelDataset& ds, const StaggeredDesign& design);

// Same partialling for an arbitrary set of design columns.
PretrendFit fit_design_columns(const PanelDataset& ds, const StaggeredDesign& design, std::span<const int> target);

// Cluster covariance of the placebo vector; flags the missing correction for
// estimated cohort covariate means.
CovEstimate staggered_cluster_cov(const StaggeredFit& fit);

SequentialPath staggered_rms_path(const PanelDataset& ds, std::span<const PlaceboCell> pooling_mask,
                                  std::span<const double> grid, std::uint64_t seed);

// Human-readable description of the control pool implied by the mask.
std::string describe_controls(const PanelDataset& ds, const StaggeredDesign& design);

}  // namespace eqtrend
