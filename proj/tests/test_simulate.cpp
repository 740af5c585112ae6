#include "eqtrend/errors.hpp"
#include "eqtrend/simulate.hpp"

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <sstream>

using namespace eqtrend;

namespace {

const WQuantileTable& table() {
  static const WQuantileTable t = simulate_w_quantile(default_grid(), default_w_levels(), 20000, 3);
  return t;
}

// Mean over units in `arm` of y_t − y_{t−lag}, and its variance, for period t (1-based).
std::pair<double, double> diff_moments(const PanelDataset& ds, int arm, int t, int lag) {
  double s = 0.0, s2 = 0.0;
  int count = 0;
  for (int i = 0; i < ds.units(); ++i) {
    if (ds.group[static_cast<std::size_t>(i)] != arm) continue;
    const double d = ds.outcomes(i, t - 1) - ds.outcomes(i, t - 1 - lag);
    s += d;
    s2 += d * d;
    ++count;
  }
  const double mean = s / count;
  return {mean, s2 / count - mean * mean};
}

}  // namespace

TEST_CASE("generate: shape, determinism and betas") {
  SimulationScenario s;
  s.n = 50;
  s.T = 3;
  s.beta_pattern = BetaPattern::FirstAt;
  s.beta_value = 0.5;
  CHECK(s.beta() == std::vector<double>{0.5, 0.0, 0.0});
  s.beta_pattern = BetaPattern::AllAt;
  CHECK(s.beta() == std::vector<double>{0.5, 0.5, 0.5});
  const auto a = generate(s, 3);
  const auto b = generate(s, 3);
  const auto c = generate(s, 4);
  CHECK(a.outcomes.rows() == 50);
  CHECK(a.periods() == 5);
  CHECK(a.base_period == 4);
  CHECK(a.outcomes == b.outcomes);
  CHECK(a.outcomes != c.outcomes);
  int treated = 0;
  for (int g : a.group) treated += g;
  CHECK(treated > 0);
  CHECK(treated < 50);
}

TEST_CASE("generate: AR(3) errors match the Yule-Walker moments") {
  SimulationScenario s;
  s.n = 20000;
  s.T = 4;
  s.errors = ErrorProcess::Ar3;
  // Autocorrelations of u_t = 0.5 u_{t−1} + 0.3 u_{t−2} + 0.1 u_{t−3} + e_t.
  const double rho1 = 0.828125, rho2 = 0.796875;
  double v1c = 0, v1t = 0, v2c = 0;
  const int reps = 4;
  for (int r = 0; r < reps; ++r) {
    const auto ds = generate(s, static_cast<std::size_t>(r));
    // Period differences cancel α_i; λ_t is common within an arm and drops from the variance.
    v1c += diff_moments(ds, 0, 3, 1).second / reps;
    v1t += diff_moments(ds, 1, 3, 1).second / reps;
    v2c += diff_moments(ds, 0, 5, 2).second / reps;
  }
  CHECK(v1c == doctest::Approx(2 * (1 - rho1)).epsilon(0.05));
  CHECK(v1t == doctest::Approx(4 * 2 * (1 - rho1)).epsilon(0.05));
  CHECK(v2c == doctest::Approx(2 * (1 - rho2)).epsilon(0.05));

  s.phi = {0.5, 0.3, 0.3};
  CHECK_THROWS_AS(validate(s), ValidationError);
}

TEST_CASE("generate: violations shift the placebo coefficients") {
  SimulationScenario s;
  s.n = 4000;
  s.T = 3;
  s.violation = Violation::Ashenfelter;
  s.violation_param = 0.4;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (int r = 0; r < 10; ++r) mean += fit_pretrend(generate(s, static_cast<std::size_t>(r))).beta_hat / 10;
  for (int l = 0; l < 3; ++l) CHECK(mean[l] == doctest::Approx(-0.4).epsilon(0.1));

  s.violation = Violation::LinearTrend;
  s.violation_param = 0.2;
  mean.setZero();
  for (int r = 0; r < 10; ++r) mean += fit_pretrend(generate(s, static_cast<std::size_t>(r))).beta_hat / 10;
  for (int l = 0; l < 3; ++l) CHECK(mean[l] == doctest::Approx(0.2 * (l + 1 - 4)).epsilon(0.1));
}

TEST_CASE("replications estimate the effect") {
  SimulationScenario s;
  s.n = 500;
  s.T = 3;
  s.pi_att = 1.0;
  s.M = 60;
  s.bootstrap_b = 500;
  s.tests = {TestKind::IuMax, TestKind::Mean, TestKind::Rms};
  s.minimal_thresholds = true;
  const auto rep = run_study(s, table());
  CHECK(rep.pi_hat.mean == doctest::Approx(1.0).epsilon(0.05));
  CHECK(rep.ci_coverage.mean > 0.8);
  CHECK(rep.ran[static_cast<std::size_t>(TestKind::IuMax)]);
  CHECK_FALSE(rep.ran[static_cast<std::size_t>(TestKind::BootMax)]);
  CHECK(std::isnan(rep.rejection[static_cast<std::size_t>(TestKind::BootMax)].mean));
  CHECK(rep.rejection[static_cast<std::size_t>(TestKind::IuMax)].mean > 0.9);
  CHECK(rep.minimal[static_cast<std::size_t>(TestKind::Mean)].mean > 0.0);
  CHECK(rep.wtable_hash == table().hash());
}

TEST_CASE("run_study: serial reference and thread counts agree exactly") {
  SimulationScenario s;
  s.n = 200;
  s.T = 3;
  s.M = 12;
  s.bootstrap_b = 500;
  s.errors = ErrorProcess::Ar3;
  const auto serial = to_json(run_study_serial(s, table())).dump();
  omp_set_num_threads(1);
  const auto one = to_json(run_study(s, table())).dump();
  omp_set_num_threads(4);
  const auto four = to_json(run_study(s, table())).dump();
  omp_set_num_threads(omp_get_num_procs());
  CHECK(one == serial);
  CHECK(four == serial);
}

TEST_CASE("scenario files") {
  std::istringstream in(R"(# defaults
n = 300
T = 2
M = 5
B = 500
errors = ar3

[size]
beta = all:0, all:0.5
threshold = 1, 2

[trend]
name = linear trend
violation = trend:0.1
tests = iu mean
)");
  const auto s = parse_scenarios(in);
  REQUIRE(s.size() == 5);
  CHECK(s[0].name == "size [beta=all:0, threshold=1]");
  CHECK(s[3].name == "size [beta=all:0.5, threshold=2]");
  CHECK(s[3].beta_value == 0.5);
  CHECK(s[3].delta == 2.0);
  CHECK(s[3].tau == 2.0);
  CHECK(s[3].errors == ErrorProcess::Ar3);
  CHECK(s[4].name == "linear trend");
  CHECK(s[4].violation == Violation::LinearTrend);
  CHECK(s[4].tests.size() == 2);

  std::istringstream bad("n = 5\n");
  CHECK_THROWS_AS(parse_scenarios(bad), ValidationError);
  std::istringstream unknown("color = red\n");
  CHECK_THROWS_AS(parse_scenarios(unknown), ValidationError);
  CHECK_THROWS_AS(load_scenario_file("/nonexistent/file.scn"), IoError);
}

TEST_CASE("report rendering") {
  SimulationScenario s;
  s.n = 100;
  s.T = 2;
  s.M = 4;
  s.bootstrap_b = 500;
  s.minimal_thresholds = false;
  const auto rep = run_study(s, table());
  const auto j = to_json(rep);
  CHECK(j["scenario"]["n"] == 100);
  const auto text = to_text({rep});
  CHECK(text.find("scenario") != std::string::npos);
}
