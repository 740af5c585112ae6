#include "oracles.hpp"

#include "eqtrend/equivalence.hpp"
#include "eqtrend/errors.hpp"

#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>

using namespace eqtrend;

namespace {

double ks_distance(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("wild bootstrap: linear update equals the refit loop") {
  std::mt19937_64 rng(21);
  auto ds = oracle::random_panel(rng, 40, 4, {0.2, -0.1, 0.3});
  const auto fit = fit_pretrend(ds);
  const MaxBootstrap boot(fit, {500, BootstrapVariant::WildCluster, 9});
  const double u = fit.beta_hat.cwiseAbs().maxCoeff();
  for (double delta : {0.5 * u, u, 2.0 * u}) {
    const auto fast = boot.max_norms(delta);
    const auto slow = boot.max_norms_reference(delta);
    REQUIRE(fast.size() == slow.size());
    double diff = 0.0;
    for (std::size_t b = 0; b < fast.size(); ++b) diff = std::max(diff, std::abs(fast[b] - slow[b]));
    CHECK(diff < 1e-10);
  }
}

TEST_CASE("Gaussian bootstrap: shortcut matches the refit loop in distribution") {
  std::mt19937_64 rng(22);
  auto ds = oracle::random_panel(rng, 200, 4, {0.05, 0.0, -0.05});
  const auto fit = fit_pretrend(ds);
  const MaxBootstrap boot(fit, {2000, BootstrapVariant::Gaussian, 4});
  for (double delta : {0.05, 0.3}) {
    const auto fast = boot.max_norms(delta);
    const auto slow = boot.max_norms_reference(delta);
    CHECK(ks_distance(fast, slow) < 0.06);
  }
}

TEST_CASE("bootstrap draws do not depend on the thread count") {
  std::mt19937_64 rng(23);
  auto ds = oracle::random_panel(rng, 150, 4, {0.1, 0.1, 0.1});
  const auto fit = fit_pretrend(ds);
  for (auto variant : {BootstrapVariant::WildCluster, BootstrapVariant::Gaussian}) {
    omp_set_num_threads(1);
    const MaxBootstrap a(fit, {1000, variant, 5});
    const auto na = a.max_norms(0.4);
    omp_set_num_threads(4);
    const MaxBootstrap b(fit, {1000, variant, 5});
    const auto nb = b.max_norms(0.4);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(na == nb);
    CHECK(a.minimal_threshold(0.05) == b.minimal_threshold(0.05));
  }
}

TEST_CASE("bootstrap minimal threshold brackets the decision") {
  std::mt19937_64 rng(24);
  for (int r = 0; r < 10; ++r) {
    auto ds = oracle::random_panel(rng, 300, 4, {0.02 * r, 0.0, 0.05});
    const auto fit = fit_pretrend(ds);
    const double u = fit.beta_hat.cwiseAbs().maxCoeff();
    for (auto variant : {BootstrapVariant::WildCluster, BootstrapVariant::Gaussian}) {
      const MaxBootstrap boot(fit, {500, variant, static_cast<std::uint64_t>(r)});
      const double d = boot.minimal_threshold(0.05);
      if (d == 0.0) {
        // Rejection already at ‖β̂‖_∞, and the decision is flat below it.
        CHECK(boot.rejects(u, 0.05));
        CHECK(boot.rejects(0.1 * u, 0.05));
        continue;
      }
      CHECK(d >= u);
      CHECK(boot.rejects(d, 0.05));
      CHECK_FALSE(boot.rejects(u, 0.05));
      CHECK_FALSE(boot.rejects(d - 1e-4, 0.05));
      for (double f : {1.1, 1.5, 2.0, 4.0}) CHECK(boot.rejects(f * d, 0.05));
      const auto res = bootstrap_max_test(fit, d, 0.05, {500, variant, static_cast<std::uint64_t>(r)}, true);
      CHECK(res.reject);
      CHECK(*res.minimal_threshold == d);
      CHECK(res.bootstrap_b == 500);
    }
  }
}

TEST_CASE("bootstrap critical value grows with the threshold") {
  std::mt19937_64 rng(25);
  auto ds = oracle::random_panel(rng, 200, 5, {0.1, -0.1, 0.0, 0.1});
  const auto fit = fit_pretrend(ds);
  const MaxBootstrap boot(fit, {1000, BootstrapVariant::WildCluster, 3});
  double prev = 0.0;
  for (double delta = 0.05; delta < 2.0; delta += 0.05) {
    const double crit = boot.test(delta, 0.05).critical_value;
    CHECK(crit >= prev - 1e-12);
    prev = crit;
  }
}

TEST_CASE("bootstrap validation") {
  std::mt19937_64 rng(26);
  auto ds = oracle::random_panel(rng, 30, 3, {});
  const auto fit = fit_pretrend(ds);
  CHECK_THROWS_AS(MaxBootstrap(fit, {100, BootstrapVariant::WildCluster, 1}), ValidationError);
  const MaxBootstrap boot(fit, {500, BootstrapVariant::WildCluster, 1});
  CHECK_THROWS_AS(boot.test(1.0, 0.5), ValidationError);
  CHECK_THROWS_AS(boot.test(0.0, 0.05), ValidationError);
}

TEST_CASE("bootstrap test has power far from the boundary") {
  std::mt19937_64 rng(27);
  int rejections = 0;
  for (int r = 0; r < 20; ++r) {
    auto ds = oracle::random_panel(rng, 500, 4, {});
    const auto fit = fit_pretrend(ds);
    rejections += bootstrap_max_test(fit, 1.0, 0.05, {500, BootstrapVariant::WildCluster, 1}).reject;
  }
  CHECK(rejections == 20);
}
