#include "eqtrend/staggered.hpp"

#include "eqtrend/errors.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace eqtrend {
namespace {

std::string time_label(const PanelDataset& ds, int period) {
  return std::to_string(ds.time_labels[static_cast<std::size_t>(period - 1)]);
}

std::string cell_label(const PanelDataset& ds, const char* role, int cohort, int period) {
  return std::string(role) + "[c=" + time_label(ds, cohort) + ",t=" + time_label(ds, period) + "]";
}

}  // namespace

StaggeredDesign build_staggered_design(const PanelDataset& ds, std::span<const PlaceboCell> pooling_mask,
                                       std::span<const int> subset) {
  if (!ds.staggered()) throw ValidationError("staggered design needs a cohort per unit");
  validate(ds);
  const int n = ds.units();
  const int P = ds.periods();
  const int base = ds.base_period;
  const auto k = static_cast<int>(ds.covariates.cols());

  StaggeredDesign d;
  d.base_period = base;
  if (subset.empty()) {
    d.subset.resize(static_cast<std::size_t>(n));
    std::iota(d.subset.begin(), d.subset.end(), 0);
  } else {
    d.subset.assign(subset.begin(), subset.end());
    for (int i : d.subset)
      if (i < 0 || i >= n) throw ValidationError("unit index out of range");
  }

  for (int c : ds.cohort)
    if (c != kNeverTreated) d.cohorts.push_back(c);
  std::sort(d.cohorts.begin(), d.cohorts.end());
  d.cohorts.erase(std::unique(d.cohorts.begin(), d.cohorts.end()), d.cohorts.end());

  for (const auto& cell : pooling_mask) {
    if (std::find(d.cohorts.begin(), d.cohorts.end(), cell.cohort) == d.cohorts.end())
      throw ValidationError("pooling mask names an unknown cohort");
    if (cell.period >= cell.cohort || cell.period == base || cell.period < 1)
      throw ValidationError("pooling mask entry is not a placebo cell");
  }

  // Cohort covariate means over the subset, and the centred covariates.
  const auto n_cohorts = static_cast<Eigen::Index>(d.cohorts.size());
  d.cohort_means = Eigen::MatrixXd::Zero(n_cohorts, k);
  Eigen::MatrixXd xdot = Eigen::MatrixXd::Zero(n, k);
  if (k > 0) {
    for (Eigen::Index c = 0; c < n_cohorts; ++c) {
      int count = 0;
      for (int i : d.subset)
        if (ds.cohort[static_cast<std::size_t>(i)] == d.cohorts[static_cast<std::size_t>(c)]) {
          d.cohort_means.row(c) += ds.covariates.row(i);
          ++count;
        }
      if (count < 2)
        throw ValidationError("cohort " + time_label(ds, d.cohorts[static_cast<std::size_t>(c)]) + " has " +
                              std::to_string(count) + " unit(s); covariate centering needs at least two");
      d.cohort_means.row(c) /= count;
    }
    for (int i = 0; i < n; ++i) {
      auto it = std::find(d.cohorts.begin(), d.cohorts.end(), ds.cohort[static_cast<std::size_t>(i)]);
      if (it != d.cohorts.end()) xdot.row(i) = ds.covariates.row(i) - d.cohort_means.row(it - d.cohorts.begin());
    }
  }

  auto cell_column = [&](int cohort, int period, int covariate) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, P);
    for (int i = 0; i < n; ++i) {
      if (ds.cohort[static_cast<std::size_t>(i)] != cohort) continue;
      w(i, period - 1) = covariate < 0 ? 1.0 : xdot(i, covariate);
    }
    return w;
  };
  auto add = [&](DesignColumn col, Eigen::MatrixXd raw) {
    d.columns.push_back(std::move(col));
    d.raw.push_back(std::move(raw));
  };
  auto pooled = [&](int m, int t) {
    return std::find(pooling_mask.begin(), pooling_mask.end(), PlaceboCell{m, t}) != pooling_mask.end();
  };

  for (int m : d.cohorts)
    for (int t = 1; t < m; ++t) {
      if (t == base) continue;
      if (pooled(m, t)) {
        d.pooled.push_back({m, t});
        continue;
      }
      d.placebo_index.push_back(d.dim());
      d.placebo_cells.push_back({m, t});
      add({ColumnRole::Placebo, m, t, -1, cell_label(ds, "placebo", m, t)}, cell_column(m, t, -1));
    }
  for (int r : d.cohorts)
    for (int s = r; s <= P; ++s) add({ColumnRole::Treatment, r, s, -1, cell_label(ds, "effect", r, s)}, cell_column(r, s, -1));
  for (int j = 0; j < k; ++j) {
    const std::string& name = ds.covariate_names[static_cast<std::size_t>(j)];
    for (int s = 1; s <= P; ++s) {
      if (s == base) continue;
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, P);
      w.col(s - 1) = ds.covariates.col(j);
      add({ColumnRole::CovariateTime, 0, s, j, "iota[" + name + ",t=" + time_label(ds, s) + "]"}, std::move(w));
    }
    for (const auto& cell : d.placebo_cells)
      add({ColumnRole::PlaceboSlope, cell.cohort, cell.period, j,
           "rho~[" + name + ",c=" + time_label(ds, cell.cohort) + ",t=" + time_label(ds, cell.period) + "]"},
          cell_column(cell.cohort, cell.period, j));
    for (int r : d.cohorts)
      for (int s = r; s <= P; ++s)
        add({ColumnRole::TreatmentSlope, r, s, j,
             "rho[" + name + ",c=" + time_label(ds, r) + ",t=" + time_label(ds, s) + "]"},
            cell_column(r, s, j));
  }
  if (d.placebo_index.empty()) throw ValidationError("no placebo cells left to test");
  return d;
}

PretrendFit fit_design_columns(const PanelDataset& ds, const StaggeredDesign& design, std::span<const int> target) {
  if (target.empty()) throw ValidationError("no target columns");
  DemeanedPanel dm = double_demean_columns(ds.outcomes, design.raw, design.subset);
  const int m = dm.units();
  const int P = dm.periods;

  std::vector<int> nuisance;
  for (int c = 0; c < design.dim(); ++c)
    if (std::find(target.begin(), target.end(), c) == target.end()) nuisance.push_back(c);

  Eigen::MatrixXd a(dm.ddW.rows(), static_cast<Eigen::Index>(target.size()));
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < target.size(); ++j) {
    a.col(static_cast<Eigen::Index>(j)) = dm.ddW.col(target[j]);
    labels.push_back(design.columns[static_cast<std::size_t>(target[j])].label);
  }
  Eigen::VectorXd y(dm.ddW.rows());
  for (int i = 0; i < m; ++i) y.segment(static_cast<Eigen::Index>(i) * P, P) = dm.ddY.row(i).transpose();

  if (!nuisance.empty()) {
    Eigen::MatrixXd nm(dm.ddW.rows(), static_cast<Eigen::Index>(nuisance.size()));
    for (std::size_t j = 0; j < nuisance.size(); ++j) nm.col(static_cast<Eigen::Index>(j)) = dm.ddW.col(nuisance[j]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(nm);
    qr.setThreshold(1e-10);
    if (qr.rank() < nm.cols()) {
      const auto worst = qr.colsPermutation().indices()[qr.rank()];
      throw RankError("singular design: " + design.columns[static_cast<std::size_t>(nuisance[worst])].label +
                      " is collinear with the other regressors");
    }
    a -= nm * qr.solve(a);
    y -= nm * qr.solve(y);
  }

  DemeanedPanel part;
  part.periods = P;
  part.subset = dm.subset;
  part.ddW = std::move(a);
  part.ddY.resize(m, P);
  for (int i = 0; i < m; ++i) part.ddY.row(i) = y.segment(static_cast<Eigen::Index>(i) * P, P).transpose();
  return fit_demeaned(std::move(part), std::move(labels));
}

StaggeredFit extract_placebo_vector(const PanelDataset& ds, const StaggeredDesign& design) {
  StaggeredFit out;
  out.placebo = fit_design_columns(ds, design, design.placebo_index);
  out.cells = design.placebo_cells;
  out.has_covariates = ds.covariates.cols() > 0;
  return out;
}

CovEstimate staggered_cluster_cov(const StaggeredFit& fit) {
  CovEstimate cov = cluster_robust_cov(fit.placebo);
  cov.adjusted_for_estimated_means = !fit.has_covariates;
  return cov;
}

SequentialPath staggered_rms_path(const PanelDataset& ds, std::span<const PlaceboCell> pooling_mask,
                                  std::span<const double> grid, std::uint64_t seed) {
  const StaggeredDesign full = build_staggered_design(ds, pooling_mask);
  auto fitter = [&](std::span<const int> subset) {
    return extract_placebo_vector(ds, build_staggered_design(ds, pooling_mask, subset)).placebo.beta_hat;
  };
  return sequential_rms_path(ds.units(), grid, seed, fitter, static_cast<int>(full.placebo_index.size()) + 2);
}

std::string describe_controls(const PanelDataset& ds, const StaggeredDesign& design) {
  std::ostringstream os;
  int never = 0;
  for (int i : design.subset) never += ds.cohort[static_cast<std::size_t>(i)] == kNeverTreated;
  os << "never-treated units (" << never << ") in every period; base period " << time_label(ds, design.base_period)
     << " for every cohort";
  if (!design.pooled.empty()) {
    os << "; pooled placebo cells";
    for (const auto& c : design.pooled) os << " (c=" << time_label(ds, c.cohort) << ",t=" << time_label(ds, c.period) << ")";
  }
  return os.str();
}

}  // namespace eqtrend
