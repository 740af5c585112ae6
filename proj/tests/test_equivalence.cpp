#include "oracles.hpp"

#include "eqtrend/box_qp.hpp"
#include "eqtrend/equivalence.hpp"
#include "eqtrend/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace eqtrend;

namespace {

const WQuantileTable& small_table() {
  static const WQuantileTable t = simulate_w_quantile(default_grid(), default_w_levels(), 20000, 7);
  return t;
}

SequentialPath make_path(double rms_sq, double v) {
  SequentialPath p;
  p.grid = default_grid();
  p.rms_sq.assign(p.grid.size(), rms_sq);
  p.rms_sq_full = rms_sq;
  p.v_hat = v;
  return p;
}

double quad(const Eigen::MatrixXd& h, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  return (x - b).dot(h * (x - b));
}

}  // namespace

TEST_CASE("test names round trip") {
  for (auto k : {TestKind::IuMax, TestKind::BootMax, TestKind::ClusterBootMax, TestKind::Mean, TestKind::Rms})
    CHECK(parse_test_kind(to_string(k)) == k);
  CHECK(parse_bootstrap_variant("wild") == BootstrapVariant::WildCluster);
  CHECK(parse_bootstrap_variant("gaussian") == BootstrapVariant::Gaussian);
  CHECK_THROWS_AS(parse_test_kind("max"), ValidationError);
}

TEST_CASE("one placebo period: IU and mean tests coincide") {
  std::mt19937_64 rng(11);
  for (int r = 0; r < 20; ++r) {
    auto ds = oracle::random_panel(rng, 60, 2, {0.2});
    const auto fit = fit_pretrend(ds);
    const auto cov = cluster_robust_cov(fit);
    for (double thr : {0.1, 0.3, 1.0}) {
      const auto iu = iu_max_test(fit, cov, thr, 0.05);
      const auto mean = mean_test(fit, cov, thr, 0.05);
      CHECK(iu.reject == mean.reject);
      CHECK(iu.critical_value == doctest::Approx(mean.critical_value).epsilon(1e-12));
      CHECK(*iu.minimal_threshold == doctest::Approx(*mean.minimal_threshold).epsilon(1e-12));
    }
  }
}

TEST_CASE("minimal thresholds separate acceptance from rejection") {
  std::mt19937_64 rng(12);
  const auto& w = small_table();
  for (int r = 0; r < 20; ++r) {
    auto ds = oracle::random_panel(rng, 200, 4, {0.05 * r, -0.02, 0.1});
    const auto fit = fit_pretrend(ds);
    const auto cov = cluster_robust_cov(fit);
    const auto path = sequential_rms_path(ds, default_grid(), 3);
    TestInputs in{&fit, &cov, &path, &w, nullptr};
    for (auto kind : {TestKind::IuMax, TestKind::Mean, TestKind::Rms}) {
      const double d = minimal_threshold(kind, in, 0.05);
      CHECK(test_rejects(kind, in, d + 1e-6, 0.05));
      if (d > 1e-6) CHECK_FALSE(test_rejects(kind, in, d - 1e-6, 0.05));
    }
  }
}

TEST_CASE("folded minimal threshold: zero and degenerate cases") {
  // x = 0 lies below every positive critical value.
  CHECK(folded_minimal_threshold(0.0, 0.1, 0.05) == 0.0);
  CHECK(folded_minimal_threshold(0.7, 0.0, 0.05) == 0.7);
  CHECK(folded_critical_value(0.0, 0.4, 0.05) == 0.4);
  // Far from zero the lower tail dominates: d* ≈ |x| + z_{0.95} sd.
  const double d = folded_minimal_threshold(-1.0, 0.1, 0.05);
  CHECK(d == doctest::Approx(1.0 + 0.1 * 1.6448536269514722).epsilon(1e-9));
  CHECK(folded_normal_cdf(1.0, d, 0.1) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("ζ* agrees with bisection on the RMS decision") {
  const auto& w = small_table();
  for (auto [rms, v] : {std::pair{0.2, 0.05}, std::pair{0.01, 0.002}, std::pair{1.5, 0.4}}) {
    const auto path = make_path(rms, v);
    const double closed = rms_minimal_threshold(path, 0.05, w);
    const double bis = bisect_threshold([&](double z) { return rms_test(path, z, 0.05, w).reject; }, 0.0, 1.0,
                                        SearchConfig{1e-10, 60});
    CHECK(std::abs(closed - bis) < 1e-8);
  }
  CHECK(rms_minimal_threshold(make_path(0.0, 0.0), 0.05, w) == 0.0);
}

TEST_CASE("minimal thresholds are scale equivariant") {
  std::mt19937_64 rng(13);
  auto ds = oracle::random_panel(rng, 300, 5, {0.1, 0.2, -0.1, 0.05});
  auto scaled = ds;
  scaled.outcomes *= 2.5;
  const auto& w = small_table();
  auto thresholds = [&](const PanelDataset& d) {
    const auto fit = fit_pretrend(d);
    const auto cov = cluster_robust_cov(fit);
    const auto path = sequential_rms_path(d, default_grid(), 5);
    TestInputs in{&fit, &cov, &path, &w, nullptr};
    return std::array{minimal_threshold(TestKind::IuMax, in, 0.05), minimal_threshold(TestKind::Mean, in, 0.05),
                      minimal_threshold(TestKind::Rms, in, 0.05)};
  };
  const auto a = thresholds(ds);
  const auto b = thresholds(scaled);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k] == doctest::Approx(2.5 * a[k]).epsilon(1e-8));
}

TEST_CASE("|mean| <= RMS <= max norm on the full sample") {
  std::mt19937_64 rng(14);
  for (int r = 0; r < 50; ++r) {
    auto ds = oracle::random_panel(rng, 40, 5, {0.3, -0.2, 0.1, 0.0});
    const auto fit = fit_pretrend(ds);
    const auto path = sequential_rms_path(ds, default_grid(), static_cast<std::uint64_t>(r));
    const double rms = std::sqrt(path.rms_sq_full);
    CHECK(path.rms_sq_full == doctest::Approx(fit.beta_hat.squaredNorm() / fit.dim()).epsilon(1e-12));
    CHECK(std::abs(fit.beta_hat.mean()) <= rms + 1e-14);
    CHECK(rms <= fit.beta_hat.cwiseAbs().maxCoeff() + 1e-14);
  }
}

TEST_CASE("RMS confidence interval") {
  const auto& w = small_table();
  const auto degenerate = rms_confidence_interval(make_path(0.3, 0.0), 0.05, w);
  CHECK(degenerate.lower == 0.3);
  CHECK(degenerate.upper == 0.3);

  const auto a = rms_confidence_interval(make_path(0.5, 0.01), 0.05, w);
  const auto b = rms_confidence_interval(make_path(0.5, 0.03), 0.05, w);
  const double width = w.quantile(0.975) - w.quantile(0.025);
  CHECK(a.upper - a.lower == doctest::Approx(0.01 * width).epsilon(1e-10));
  CHECK(b.upper - b.lower == doctest::Approx(3 * (a.upper - a.lower)).epsilon(1e-10));

  const auto clipped = rms_confidence_interval(make_path(0.01, 1.0), 0.05, w);
  CHECK(clipped.lower == 0.0);
  CHECK(clipped.lower_raw < 0.0);
}

TEST_CASE("argument validation") {
  std::mt19937_64 rng(15);
  auto ds = oracle::random_panel(rng, 30, 3, {});
  const auto fit = fit_pretrend(ds);
  const auto cov = cluster_robust_cov(fit);
  CHECK_THROWS_AS(iu_max_test(fit, cov, 0.0, 0.05), ValidationError);
  CHECK_THROWS_AS(iu_max_test(fit, cov, 1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(mean_test(fit, cov, -1.0, 0.05), ValidationError);
  auto path = make_path(0.1, 0.1);
  CHECK_THROWS_AS(rms_test(path, 0.0, 0.05, small_table()), ValidationError);
  path.grid = {0.5, 1.0};
  CHECK_THROWS_AS(rms_test(path, 1.0, 0.05, small_table()), ValidationError);
  CHECK_THROWS_AS(test_rejects(TestKind::BootMax, TestInputs{&fit, &cov}, 1.0, 0.05), ValidationError);
}

TEST_CASE("bisect_threshold reports non-monotone decisions") {
  CHECK_THROWS_AS(bisect_threshold([](double d) { return d < 0.5 || d > 2.0; }, 0.1, 1.0), NonMonotoneError);
  CHECK_THROWS_AS(bisect_threshold([](double) { return false; }, 0.0, 1.0, SearchConfig{1e-4, 10}), NonMonotoneError);
  const double d = bisect_threshold([](double x) { return x > 0.3; }, 0.0, 1.0, SearchConfig{1e-9, 60});
  CHECK(d == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("box QP matches enumeration of active sets") {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> z;
  for (int p = 1; p <= 5; ++p) {
    for (int r = 0; r < 100; ++r) {
      Eigen::MatrixXd a(p, p);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) a(i, j) = z(rng);
      const Eigen::MatrixXd h = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(p, p);
      Eigen::VectorXd g(p);
      for (int i = 0; i < p; ++i) g[i] = 3 * z(rng);
      const Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, -1.0);
      const Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, 1.0);
      auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(h * x) - g.dot(x); };

      double best = std::numeric_limits<double>::infinity();
      int states = 1;
      for (int i = 0; i < p; ++i) states *= 3;
      for (int s = 0; s < states; ++s) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
        std::vector<int> free;
        int code = s;
        for (int i = 0; i < p; ++i, code /= 3) {
          if (code % 3 == 0) x[i] = -1.0;
          else if (code % 3 == 1) x[i] = 1.0;
          else free.push_back(i);
        }
        if (!free.empty()) {
          const auto k = static_cast<Eigen::Index>(free.size());
          Eigen::MatrixXd hf(k, k);
          Eigen::VectorXd rhs(k);
          for (Eigen::Index u = 0; u < k; ++u) {
            rhs[u] = g[free[u]];
            for (int j = 0; j < p; ++j)
              if (std::find(free.begin(), free.end(), j) == free.end()) rhs[u] -= h(free[u], j) * x[j];
            for (Eigen::Index v = 0; v < k; ++v) hf(u, v) = h(free[u], free[v]);
          }
          const Eigen::VectorXd sol = hf.ldlt().solve(rhs);
          bool ok = true;
          for (Eigen::Index u = 0; u < k; ++u) {
            if (std::abs(sol[u]) > 1.0 + 1e-12) ok = false;
            x[free[u]] = sol[u];
          }
          if (!ok) continue;
        }
        best = std::min(best, f(x));
      }
      const auto res = solve_box_qp(h, g, lo, hi);
      CHECK(res.x.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
      CHECK(res.objective == doctest::Approx(best).epsilon(1e-9));
      CHECK(f(res.x) == doctest::Approx(res.objective).epsilon(1e-12));
    }
  }
}

TEST_CASE("constrained estimate against a grid search on the boundary") {
  std::mt19937_64 rng(17);
  const int steps = 20000;
  for (int r = 0; r < 30; ++r) {
    auto ds = oracle::random_panel(rng, 8, 3, {0.3, -0.4});
    const auto fit = fit_pretrend(ds);
    const double u = fit.beta_hat.cwiseAbs().maxCoeff();
    for (double delta : {0.5 * u, 0.9 * u, 1.5 * u, 3.0 * u}) {
      const Eigen::VectorXd c = constrained_estimate(fit, delta);
      CHECK(c.cwiseAbs().maxCoeff() == doctest::Approx(delta).epsilon(1e-12));
      double grid_min = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= steps; ++k) {
        const double s = -delta + 2.0 * delta * k / steps;
        for (auto x : {Eigen::Vector2d(delta, s), Eigen::Vector2d(-delta, s), Eigen::Vector2d(s, delta),
                       Eigen::Vector2d(s, -delta)})
          grid_min = std::min(grid_min, quad(fit.gram, fit.beta_hat, x));
      }
      const double obj = quad(fit.gram, fit.beta_hat, c);
      CHECK(obj <= grid_min + 1e-12 * std::max(1.0, grid_min));
      CHECK(obj >= grid_min - 1e-4 * std::max(1.0, grid_min));
    }
  }
  Eigen::VectorXd b(2);
  b << 0.5, -0.2;
  CHECK(constrained_estimate(Eigen::MatrixXd::Identity(2, 2), b, 0.5) == b);
  CHECK_THROWS_AS(constrained_estimate(Eigen::MatrixXd::Identity(3, 3), b, 0.5), ValidationError);
}
