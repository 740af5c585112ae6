#include "eqtrend/panel.hpp"

#include "eqtrend/errors.hpp"
#include "eqtrend/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace eqtrend {

void validate(const PanelDataset& ds) {
  const int n = ds.units();
  const int periods = ds.periods();
  if (n == 0 || periods == 0) throw ValidationError("empty panel");
  if (static_cast<int>(ds.unit_labels.size()) != n || static_cast<int>(ds.time_labels.size()) != periods)
    throw ValidationError("label vectors do not match the outcome matrix");
  if (!ds.outcomes.allFinite()) throw ValidationError("non-finite outcome");
  if (ds.base_period < 1 || ds.base_period > periods)
    throw ValidationError("base period outside 1.." + std::to_string(periods));
  if (ds.covariates.cols() > 0 && ds.covariates.rows() != n)
    throw ValidationError("covariate matrix does not match the number of units");

  if (ds.staggered()) {
    if (static_cast<int>(ds.cohort.size()) != n) throw ValidationError("cohort vector size mismatch");
    bool never = false;
    for (int c : ds.cohort) {
      if (c == kNeverTreated) {
        never = true;
      } else if (c <= ds.base_period || c > periods) {
        throw ValidationError("cohort " + std::to_string(c) + " outside " + std::to_string(ds.base_period + 1) +
                              ".." + std::to_string(periods));
      }
    }
    if (!never) throw ValidationError("no never-treated units");
    return;
  }

  if (static_cast<int>(ds.group.size()) != n) throw ValidationError("group vector size mismatch");
  int treated = 0;
  for (int g : ds.group) {
    if (g != 0 && g != 1) throw ValidationError("group must be 0 or 1");
    treated += g;
  }
  if (treated == 0 || treated == n)
    throw ValidationError("both treatment and control groups must be non-empty");
}

PanelDataset restrict_periods(const PanelDataset& ds, std::span<const long long> time_labels) {
  if (ds.staggered()) throw ValidationError("period selection applies to canonical panels only");
  if (time_labels.size() < 2) throw ValidationError("need at least one placebo period and a base period");
  std::vector<int> cols;
  for (long long label : time_labels) {
    auto it = std::find(ds.time_labels.begin(), ds.time_labels.end(), label);
    if (it == ds.time_labels.end()) throw ValidationError("unknown period " + std::to_string(label));
    int c = static_cast<int>(it - ds.time_labels.begin());
    if (!cols.empty() && c <= cols.back()) throw ValidationError("periods must be listed in increasing order");
    cols.push_back(c);
  }
  PanelDataset out;
  out.outcomes.resize(ds.units(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.outcomes.col(static_cast<Eigen::Index>(j)) = ds.outcomes.col(cols[j]);
    out.time_labels.push_back(ds.time_labels[cols[j]]);
  }
  out.group = ds.group;
  out.unit_labels = ds.unit_labels;
  out.base_period = static_cast<int>(cols.size());
  validate(out);
  return out;
}

Eigen::MatrixXd two_way_demean(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd row_mean = m.rowwise().mean();
  const Eigen::RowVectorXd col_mean = m.colwise().mean();
  const double grand = m.mean();
  Eigen::MatrixXd out = m;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += grand;
  return out;
}

DemeanedPanel double_demean_columns(const Eigen::MatrixXd& outcomes,
                                    std::span<const Eigen::MatrixXd> raw_columns,
                                    std::vector<int> subset) {
  const auto m = static_cast<Eigen::Index>(subset.size());
  const auto periods = outcomes.cols();
  if (m == 0) throw ValidationError("empty unit subset");

  auto gather = [&](const Eigen::MatrixXd& full) {
    Eigen::MatrixXd sub(m, periods);
    for (Eigen::Index i = 0; i < m; ++i) sub.row(i) = full.row(subset[static_cast<std::size_t>(i)]);
    return sub;
  };

  DemeanedPanel out;
  out.periods = static_cast<int>(periods);
  out.ddY = two_way_demean(gather(outcomes));
  out.ddW.resize(m * periods, static_cast<Eigen::Index>(raw_columns.size()));
  for (std::size_t c = 0; c < raw_columns.size(); ++c) {
    if (raw_columns[c].cols() != periods || raw_columns[c].rows() != outcomes.rows())
      throw ValidationError("regressor column shape mismatch");
    const Eigen::MatrixXd dd = two_way_demean(gather(raw_columns[c]));
    for (Eigen::Index i = 0; i < m; ++i)
      out.ddW.col(static_cast<Eigen::Index>(c)).segment(i * periods, periods) = dd.row(i).transpose();
  }
  out.subset = std::move(subset);
  return out;
}

DemeanedPanel double_demean(const PanelDataset& ds, std::span<const int> subset, int periods) {
  if (ds.staggered()) throw ValidationError("double_demean expects a canonical panel");
  if (periods < 2) throw ValidationError("need at least two periods");
  if (periods > ds.base_period)
    throw ValidationError("period " + std::to_string(periods) + " is after the base period " +
                          std::to_string(ds.base_period));
  if (subset.empty()) throw ValidationError("empty unit subset");
  for (int i : subset)
    if (i < 0 || i >= ds.units()) throw ValidationError("unit index out of range");

  const Eigen::MatrixXd y = ds.outcomes.leftCols(periods);
  std::vector<Eigen::MatrixXd> raw;
  raw.reserve(static_cast<std::size_t>(periods - 1));
  for (int l = 0; l < periods - 1; ++l) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ds.units(), periods);
    for (int i = 0; i < ds.units(); ++i) w(i, l) = ds.group[static_cast<std::size_t>(i)];
    raw.push_back(std::move(w));
  }
  return double_demean_columns(y, raw, std::vector<int>(subset.begin(), subset.end()));
}

PretrendFit fit_demeaned(DemeanedPanel demeaned, std::vector<std::string> labels) {
  const int m = demeaned.units();
  const int periods = demeaned.periods;
  const int p = demeaned.dim();
  if (static_cast<int>(labels.size()) != p) throw ValidationError("label count does not match design");
  if (p == 0) throw ValidationError("empty design");

  const Eigen::MatrixXd& x = demeaned.ddW;
  Eigen::VectorXd y(static_cast<Eigen::Index>(m) * periods);
  for (int i = 0; i < m; ++i) y.segment(static_cast<Eigen::Index>(i) * periods, periods) = demeaned.ddY.row(i).transpose();

  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  for (int c = 0; c < p; ++c) {
    if (x.col(c).norm() <= 1e-12 * scale)
      throw RankError("singular design: no treated/control contrast for " + labels[static_cast<std::size_t>(c)]);
  }

  PretrendFit fit;
  fit.gram = (x.transpose() * x) / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi)) {
    // Name the column that is best explained by the others.
    int worst = 0;
    double worst_ratio = std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd inv = fit.gram.completeOrthogonalDecomposition().pseudoInverse();
    for (int c = 0; c < p; ++c) {
      double r = 1.0 / (fit.gram(c, c) * std::max(inv(c, c), 1e-300));
      if (r < worst_ratio) {
        worst_ratio = r;
        worst = c;
      }
    }
    throw RankError("singular design: " + labels[static_cast<std::size_t>(worst)] +
                    " is collinear with the other regressors");
  }

  const Eigen::VectorXd xty = (x.transpose() * y) / static_cast<double>(m);
  fit.beta_hat = fit.gram.llt().solve(xty);
  const Eigen::VectorXd resid = y - x * fit.beta_hat;
  fit.residuals.resize(m, periods);
  for (int i = 0; i < m; ++i) fit.residuals.row(i) = resid.segment(static_cast<Eigen::Index>(i) * periods, periods).transpose();
  fit.demeaned = std::move(demeaned);
  fit.labels = std::move(labels);
  return fit;
}

PretrendFit fit_pretrend(const PanelDataset& ds, std::span<const int> subset) {
  if (ds.staggered()) throw ValidationError("fit_pretrend expects a canonical panel; use the staggered design");
  if (ds.base_period < 2) throw ValidationError("need at least one placebo period before the base period");
  std::vector<std::string> labels;
  for (int l = 0; l < ds.base_period - 1; ++l)
    labels.push_back("beta[" + std::to_string(ds.time_labels[static_cast<std::size_t>(l)]) + "]");
  return fit_demeaned(double_demean(ds, subset, ds.base_period), std::move(labels));
}

PretrendFit fit_pretrend(const PanelDataset& ds) {
  std::vector<int> all(static_cast<std::size_t>(ds.units()));
  std::iota(all.begin(), all.end(), 0);
  return fit_pretrend(ds, all);
}

PretrendFit fit_event_study(const PanelDataset& ds) {
  if (ds.staggered()) throw ValidationError("fit_event_study expects a canonical panel");
  std::vector<Eigen::MatrixXd> raw;
  std::vector<std::string> labels;
  for (int l = 1; l <= ds.periods(); ++l) {
    if (l == ds.base_period) continue;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ds.units(), ds.periods());
    for (int i = 0; i < ds.units(); ++i) w(i, l - 1) = ds.group[static_cast<std::size_t>(i)];
    raw.push_back(std::move(w));
    labels.push_back(std::string(l < ds.base_period ? "beta[" : "effect[") +
                     std::to_string(ds.time_labels[static_cast<std::size_t>(l - 1)]) + "]");
  }
  if (raw.empty()) throw ValidationError("need at least two periods");
  std::vector<int> all(static_cast<std::size_t>(ds.units()));
  std::iota(all.begin(), all.end(), 0);
  return fit_demeaned(double_demean_columns(ds.outcomes, raw, std::move(all)), std::move(labels));
}

std::vector<double> default_grid() { return {0.2, 0.4, 0.6, 0.8, 1.0}; }

void validate_grid(std::span<const double> grid) {
  if (grid.size() < 2) throw ValidationError("grid needs at least one point below 1 and the point 1");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0 && grid[k] <= 1.0)) throw ValidationError("grid values must lie in (0, 1]");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw ValidationError("grid must be strictly increasing");
  }
  if (grid.back() != 1.0) throw ValidationError("last grid point must be 1");
}

SequentialPath sequential_rms_path(int n_units, std::span<const double> grid, std::uint64_t seed,
                                   const SubsetFitter& fit, int min_prefix) {
  validate_grid(grid);
  std::vector<int> order(static_cast<std::size_t>(n_units));
  std::iota(order.begin(), order.end(), 0);
  Engine eng = make_engine(seed, {0x5e9a7ULL});
  std::shuffle(order.begin(), order.end(), eng);

  SequentialPath path;
  path.grid.assign(grid.begin(), grid.end());
  path.permutation_seed = seed;
  for (double lambda : grid) {
    const int size = static_cast<int>(std::floor(static_cast<double>(n_units) * lambda + 1e-9));
    if (size < min_prefix)
      throw ValidationError("subsample of " + std::to_string(size) + " units at lambda=" + std::to_string(lambda) +
                            " is too small (need " + std::to_string(min_prefix) + ")");
    std::vector<int> prefix(order.begin(), order.begin() + size);
    std::sort(prefix.begin(), prefix.end());
    const Eigen::VectorXd b = fit(prefix);
    path.rms_sq.push_back(b.squaredNorm() / static_cast<double>(b.size()));
  }
  path.rms_sq_full = path.rms_sq.back();
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < path.rms_sq.size(); ++k) {
    const double d = path.rms_sq[k] - path.rms_sq_full;
    acc += d * d;
  }
  path.v_hat = std::sqrt(acc / static_cast<double>(path.rms_sq.size() - 1));
  return path;
}

SequentialPath sequential_rms_path(const PanelDataset& ds, std::span<const double> grid, std::uint64_t seed) {
  auto fitter = [&ds](std::span<const int> subset) { return fit_pretrend(ds, subset).beta_hat; };
  return sequential_rms_path(ds.units(), grid, seed, fitter, ds.placebo_periods() + 2);
}

}  // namespace eqtrend
