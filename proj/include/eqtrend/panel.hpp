#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eqtrend {

inline constexpr int kNeverTreated = std::numeric_limits<int>::max();

// Balanced long panel pivoted to units x periods. Periods are re-indexed
// 1..periods() internally; row/column 0 of `outcomes` is period 1.
//
// Canonical designs carry a 0/1 `group` per unit. Staggered designs carry a
// `cohort` per unit instead: the (1-based) period of first adoption, or
// kNeverTreated.
struct PanelDataset {
  Eigen::MatrixXd outcomes;
  std::vector<int> group;
  std::vector<int> cohort;
  Eigen::MatrixXd covariates;  // units x k, time-invariant
  std::vector<std::string> covariate_names;
  std::vector<long long> unit_labels;
  std::vector<long long> time_labels;
  int base_period = 0;  // last pre-treatment period (T+1), 1-based

  int units() const { return static_cast<int>(outcomes.rows()); }
  int periods() const { return static_cast<int>(outcomes.cols()); }
  bool staggered() const { return !cohort.empty(); }
  // Number of placebo periods T in the canonical design.
  int placebo_periods() const { return base_period - 1; }
};

// Throws ValidationError when an invariant of PanelDataset does not hold.
void validate(const PanelDataset& ds);

// Column names of the long-format CSV. A non-empty `cohort` selects the
// staggered layout; `covariates` lists extra time-invariant columns.
struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::string group = "group";
  std::string cohort;
  std::vector<std::string> covariates;
  // Time label of the base period; the last period when unset.
  std::optional<long long> base_time;

  bool staggered() const { return !cohort.empty(); }
};

// Parses "unit=id,time=month,outcome=y,group=treat" style mappings.
CsvSchema parse_schema(const std::string& mapping);

PanelDataset load_panel(std::istream& in, const CsvSchema& schema);
PanelDataset load_panel_file(const std::string& path, const CsvSchema& schema);

// Keeps the listed periods (by time label, in the given order, which must be
// increasing). The last listed period becomes the base period.
PanelDataset restrict_periods(const PanelDataset& ds, std::span<const long long> time_labels);

// Y - row means - column means + grand mean.
Eigen::MatrixXd two_way_demean(const Eigen::MatrixXd& m);

// Double-demeaned outcomes and regressors over a unit subset.
//
// ddW stacks each unit's (periods x p) regressor block, unit-major;
// unit_block(ddW, i) is the transposed Ẅ_i of the pooled regression.
struct DemeanedPanel {
  Eigen::MatrixXd ddY;  // |subset| x periods
  Eigen::MatrixXd ddW;  // (|subset| * periods) x p
  std::vector<int> subset;
  int periods = 0;

  int units() const { return static_cast<int>(ddY.rows()); }
  int dim() const { return static_cast<int>(ddW.cols()); }
  auto unit_block(int i) const { return ddW.middleRows(static_cast<Eigen::Index>(i) * periods, periods); }
};

// Canonical placebo design G_i D_l(t), l = 1..periods-1, demeaned over
// `subset` using periods 1..periods. `periods` must not exceed the base period.
DemeanedPanel double_demean(const PanelDataset& ds, std::span<const int> subset, int periods);

// Demeans arbitrary raw regressor columns (each units x periods) together with
// the outcomes. Used by the staggered design builder.
DemeanedPanel double_demean_columns(const Eigen::MatrixXd& outcomes,
                                    std::span<const Eigen::MatrixXd> raw_columns,
                                    std::vector<int> subset);

// Pooled OLS on double-demeaned data.
struct PretrendFit {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd residuals;  // n x periods
  Eigen::MatrixXd gram;       // (1/n) Σ Ẅ_i Ẅ_i'
  DemeanedPanel demeaned;
  std::vector<std::string> labels;  // one per coefficient

  int n() const { return demeaned.units(); }
  int dim() const { return static_cast<int>(beta_hat.size()); }
  int periods() const { return demeaned.periods; }
};

// Fits on an already demeaned design. Throws RankError naming the offending
// coefficient label when the Gram matrix is singular.
PretrendFit fit_demeaned(DemeanedPanel demeaned, std::vector<std::string> labels);

// Canonical placebo fit on periods 1..base_period.
PretrendFit fit_pretrend(const PanelDataset& ds);
PretrendFit fit_pretrend(const PanelDataset& ds, std::span<const int> subset);

// Canonical fit over every period: G·D_l for each l ≠ base. Post-base
// coefficients are labelled "effect[...]".
PretrendFit fit_event_study(const PanelDataset& ds);

// β̂²_RMS(λ) on nested random prefixes of the units.
struct SequentialPath {
  std::vector<double> grid;
  std::vector<double> rms_sq;
  double rms_sq_full = 0.0;
  double v_hat = 0.0;
  std::uint64_t permutation_seed = 0;
};

std::vector<double> default_grid();
void validate_grid(std::span<const double> grid);

// Fits β on the given (sorted) unit subset.
using SubsetFitter = std::function<Eigen::VectorXd(std::span<const int>)>;

// Generic path: permutes 0..n_units-1 once by `seed`, fits each prefix of size
// floor(n λ). Prefixes are sorted before fitting.
SequentialPath sequential_rms_path(int n_units, std::span<const double> grid, std::uint64_t seed,
                                   const SubsetFitter& fit, int min_prefix);

SequentialPath sequential_rms_path(const PanelDataset& ds, std::span<const double> grid,
                                   std::uint64_t seed);

}  // namespace eqtrend
