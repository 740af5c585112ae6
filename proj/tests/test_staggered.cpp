#include "oracles.hpp"

#include "eqtrend/errors.hpp"
#include "eqtrend/staggered.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace eqtrend;

namespace {

using Effect = std::function<double(int cohort, int period)>;

// Cohorts cycle through `pattern`; kNeverTreated marks controls.
PanelDataset staggered_panel(std::mt19937_64& rng, int n, int P, const std::vector<int>& pattern, const Effect& effect,
                             double noise, int covariates = 0) {
  std::normal_distribution<double> z;
  PanelDataset ds;
  ds.outcomes.resize(n, P);
  ds.covariates.resize(n, covariates);
  for (int j = 0; j < covariates; ++j) ds.covariate_names.push_back("x" + std::to_string(j + 1));
  std::vector<double> lambda(static_cast<std::size_t>(P));
  for (auto& l : lambda) l = z(rng);
  int first = kNeverTreated;
  for (int i = 0; i < n; ++i) {
    const int c = pattern[static_cast<std::size_t>(i) % pattern.size()];
    first = std::min(first, c);
    ds.cohort.push_back(c);
    for (int j = 0; j < covariates; ++j) ds.covariates(i, j) = z(rng);
    const double a = z(rng);
    for (int t = 1; t <= P; ++t) {
      double y = a + lambda[static_cast<std::size_t>(t - 1)] + noise * z(rng);
      for (int j = 0; j < covariates; ++j) y += 0.3 * t * (j + 1) * ds.covariates(i, j);
      if (c != kNeverTreated) y += effect(c, t);
      ds.outcomes(i, t - 1) = y;
    }
    ds.unit_labels.push_back(i + 1);
  }
  for (int t = 1; t <= P; ++t) ds.time_labels.push_back(2000 + t);
  ds.base_period = first - 1;
  return ds;
}

constexpr int kNever = kNeverTreated;

double truth(int c, int t) {
  if (t >= c) return 1.0 + 0.5 * c + 0.25 * t;  // heterogeneous effects
  if (t == c - 1 || t == 3) return 0.0;         // base period
  return 0.1 * c - 0.05 * t;
}

}  // namespace

TEST_CASE("placebo cells for cohorts {4, 5}, six periods, base 3") {
  std::mt19937_64 rng(31);
  auto ds = staggered_panel(rng, 30, 6, {4, 5, kNever}, truth, 1.0);
  const auto d = build_staggered_design(ds);
  CHECK(d.base_period == 3);
  CHECK(d.cohorts == std::vector<int>{4, 5});
  const std::vector<PlaceboCell> expected{{4, 1}, {4, 2}, {5, 1}, {5, 2}, {5, 4}};
  CHECK(d.placebo_cells == expected);
  CHECK(d.columns[0].label == "placebo[c=2004,t=2001]");
  CHECK(d.columns[static_cast<std::size_t>(d.placebo_index.size())].label == "effect[c=2004,t=2004]");
  // 5 placebo + 3 + 2 treatment cells.
  CHECK(d.dim() == 10);
}

TEST_CASE("single cohort collapses to the event-study regression") {
  std::mt19937_64 rng(32);
  auto ds = staggered_panel(rng, 50, 6, {5, kNever}, truth, 1.0);
  const auto sf = extract_placebo_vector(ds, build_staggered_design(ds));
  PanelDataset canon = ds;
  canon.cohort.clear();
  for (int c : ds.cohort) canon.group.push_back(c == kNever ? 0 : 1);
  const auto ev = fit_event_study(canon);
  REQUIRE(sf.placebo.dim() == 3);
  CHECK((sf.placebo.beta_hat - ev.beta_hat.head(3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("noiseless data recover every placebo cell") {
  std::mt19937_64 rng(33);
  for (int k : {0, 2}) {
    auto ds = staggered_panel(rng, 60, 6, {4, 5, kNever, 4, 5, kNever}, truth, 0.0, k);
    const auto d = build_staggered_design(ds);
    const auto sf = extract_placebo_vector(ds, d);
    CHECK(sf.has_covariates == (k > 0));
    for (std::size_t j = 0; j < sf.cells.size(); ++j)
      CHECK(sf.placebo.beta_hat[static_cast<Eigen::Index>(j)] ==
            doctest::Approx(truth(sf.cells[j].cohort, sf.cells[j].period)).epsilon(1e-9));
    CHECK(sf.placebo.residuals.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("treatment effects do not leak into placebo estimates") {
  std::mt19937_64 a(34), b(34);
  auto small = staggered_panel(a, 80, 6, {4, 5, kNever}, [](int c, int t) { return t >= c ? 0.1 : 0.0; }, 1.0, 1);
  auto large = staggered_panel(b, 80, 6, {4, 5, kNever}, [](int c, int t) { return t >= c ? 50.0 * t - c : 0.0; },
                               1.0, 1);
  const auto sa = extract_placebo_vector(small, build_staggered_design(small));
  const auto sb = extract_placebo_vector(large, build_staggered_design(large));
  CHECK((sa.placebo.beta_hat - sb.placebo.beta_hat).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("covariate shifts leave placebo estimates unchanged") {
  std::mt19937_64 rng(35);
  auto ds = staggered_panel(rng, 90, 6, {4, 5, kNever}, truth, 1.0, 2);
  auto shifted = ds;
  shifted.covariates.array() += 7.0;
  const auto a = extract_placebo_vector(ds, build_staggered_design(ds));
  const auto b = extract_placebo_vector(shifted, build_staggered_design(shifted));
  CHECK((a.placebo.beta_hat - b.placebo.beta_hat).cwiseAbs().maxCoeff() < 1e-9);
  const auto d = build_staggered_design(ds);
  CHECK(d.cohort_means.rows() == 2);
  CHECK(d.columns.back().label == "rho[x2,c=2005,t=2006]");
}

TEST_CASE("pooling mask turns cells into controls") {
  std::mt19937_64 rng(36);
  auto ds = staggered_panel(rng, 60, 6, {4, 5, kNever}, [](int c, int t) { return t >= c ? 1.0 : 0.0; }, 0.0);
  const std::vector<PlaceboCell> mask{{5, 4}};
  const auto d = build_staggered_design(ds, mask);
  CHECK(d.pooled == mask);
  CHECK(d.placebo_cells.size() == 4);
  const auto sf = extract_placebo_vector(ds, d);
  CHECK(sf.placebo.beta_hat.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(describe_controls(ds, d).find("(c=2005,t=2004)") != std::string::npos);

  CHECK_THROWS_AS(build_staggered_design(ds, std::vector<PlaceboCell>{{5, 5}}), ValidationError);
  CHECK_THROWS_AS(build_staggered_design(ds, std::vector<PlaceboCell>{{6, 1}}), ValidationError);
  CHECK_THROWS_AS(build_staggered_design(ds, std::vector<PlaceboCell>{{5, 3}}), ValidationError);
  const std::vector<PlaceboCell> all{{4, 1}, {4, 2}, {5, 1}, {5, 2}, {5, 4}};
  CHECK_THROWS_AS(build_staggered_design(ds, all), ValidationError);
}

TEST_CASE("placebo estimates are unbiased under parallel trends") {
  std::mt19937_64 rng(37);
  const int reps = 300;
  Eigen::MatrixXd est(reps, 5);
  for (int r = 0; r < reps; ++r) {
    auto ds = staggered_panel(rng, 120, 6, {4, 5, kNever}, truth, 1.0, 1);
    est.row(r) = extract_placebo_vector(ds, build_staggered_design(ds)).placebo.beta_hat.transpose();
  }
  const std::vector<PlaceboCell> cells{{4, 1}, {4, 2}, {5, 1}, {5, 2}, {5, 4}};
  for (int j = 0; j < 5; ++j) {
    const double mean = est.col(j).mean();
    const double sd = std::sqrt((est.col(j).array() - mean).square().sum() / (reps - 1));
    CHECK(std::abs(mean - truth(cells[static_cast<std::size_t>(j)].cohort, cells[static_cast<std::size_t>(j)].period)) <
          4 * sd / std::sqrt(reps));
  }
}

TEST_CASE("covariance flag and errors") {
  std::mt19937_64 rng(38);
  auto with_x = staggered_panel(rng, 60, 6, {4, 5, kNever}, truth, 1.0, 1);
  CHECK_FALSE(staggered_cluster_cov(extract_placebo_vector(with_x, build_staggered_design(with_x)))
                  .adjusted_for_estimated_means);
  auto without = staggered_panel(rng, 60, 6, {4, 5, kNever}, truth, 1.0);
  const auto cov = staggered_cluster_cov(extract_placebo_vector(without, build_staggered_design(without)));
  CHECK(cov.adjusted_for_estimated_means);
  CHECK(cov.sigma_hat.rows() == 5);

  std::vector<int> lone(40, kNever);
  lone[0] = 4;
  for (int i = 1; i < 20; ++i) lone[static_cast<std::size_t>(i)] = 5;
  auto single = staggered_panel(rng, 40, 6, lone, truth, 1.0, 1);
  CHECK_THROWS_AS(build_staggered_design(single), ValidationError);
  auto single_nox = staggered_panel(rng, 40, 6, lone, truth, 1.0);
  CHECK_NOTHROW(build_staggered_design(single_nox));

  PanelDataset canon;
  canon.outcomes = Eigen::MatrixXd::Zero(4, 3);
  canon.group = {0, 1, 0, 1};
  canon.unit_labels = {1, 2, 3, 4};
  canon.time_labels = {1, 2, 3};
  canon.base_period = 3;
  CHECK_THROWS_AS(build_staggered_design(canon), ValidationError);
}

TEST_CASE("staggered RMS path") {
  std::mt19937_64 rng(39);
  auto ds = staggered_panel(rng, 200, 6, {4, 5, kNever}, truth, 1.0);
  const auto path = staggered_rms_path(ds, {}, default_grid(), 4);
  const auto sf = extract_placebo_vector(ds, build_staggered_design(ds));
  CHECK(path.rms_sq_full == doctest::Approx(sf.placebo.beta_hat.squaredNorm() / 5).epsilon(1e-10));
  CHECK(path.rms_sq.size() == default_grid().size());
  CHECK(path.v_hat > 0.0);
  CHECK(staggered_rms_path(ds, {}, default_grid(), 4).rms_sq == path.rms_sq);
}
