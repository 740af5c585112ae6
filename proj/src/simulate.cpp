// Synthetic DiD panels and the rejection-frequency study.

#include "eqtrend/simulate.hpp"

#include "eqtrend/covariance.hpp"
#include "eqtrend/errors.hpp"
#include "eqtrend/rng.hpp"

#include <omp.h>

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace eqtrend {
namespace {

constexpr int kBurnIn = 200;
constexpr double kZ975 = 1.959963984540054;
constexpr std::uint64_t kDataStream = 0xDA7AULL;
constexpr std::uint64_t kPathStream = 0x9A7EULL;
constexpr std::uint64_t kBootStream = 0xB0BULL;

std::size_t idx(TestKind k) { return static_cast<std::size_t>(k); }

// Stationary variance of the AR(3) process with unit innovations, from the
// Yule–Walker equations in (γ0, γ1, γ2, γ3).
double ar3_variance(const std::array<double, 3>& phi) {
  const double a = phi[0], b = phi[1], c = phi[2];
  Eigen::Matrix4d m;
  m << 1, -a, -b, -c,
      -a, 1 - b, -c, 0,
      -b, -a - c, 1, 0,
      -c, -b, -a, 1;
  Eigen::Vector4d rhs(1, 0, 0, 0);
  return m.fullPivLu().solve(rhs)[0];
}

bool ar3_stationary(const std::array<double, 3>& phi) {
  // Companion matrix eigenvalues inside the unit circle.
  Eigen::Matrix3d comp;
  comp << phi[0], phi[1], phi[2], 1, 0, 0, 0, 1, 0;
  return comp.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - 1e-12;
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream, std::size_t rep) {
  Engine eng = make_engine(seed, {stream, rep});
  return eng();
}

Cell proportion(double hits, double m) {
  const double p = hits / m;
  return {p, std::sqrt(std::max(0.0, p * (1 - p)) / m)};
}

}  // namespace

std::vector<double> SimulationScenario::beta() const {
  std::vector<double> b(static_cast<std::size_t>(T), 0.0);
  if (beta_pattern == BetaPattern::AllAt) std::fill(b.begin(), b.end(), beta_value);
  if (beta_pattern == BetaPattern::FirstAt && T > 0) b[0] = beta_value;
  return b;
}

void validate(const SimulationScenario& scn) {
  if (scn.T < 1) throw ValidationError("T must be at least 1");
  if (scn.n < 10) throw ValidationError("n must be at least 10");
  if (scn.M < 1) throw ValidationError("M must be positive");
  if (!(scn.alpha > 0.0 && scn.alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
  if (!(scn.delta > 0 && scn.tau > 0 && scn.zeta > 0)) throw ValidationError("thresholds must be positive");
  validate_grid(scn.grid);
  if (static_cast<int>(std::floor(scn.n * scn.grid.front() + 1e-9)) < scn.T + 2)
    throw ValidationError("smallest subsample is too small for T = " + std::to_string(scn.T));
  if (scn.errors == ErrorProcess::Ar3 && !ar3_stationary(scn.phi))
    throw ValidationError("AR(3) coefficients are not stationary");
  for (auto k : scn.tests)
    if ((k == TestKind::BootMax || k == TestKind::ClusterBootMax) && scn.bootstrap_b < 500)
      throw ValidationError("bootstrap needs B >= 500");
}

PanelDataset generate(const SimulationScenario& scn, std::size_t rep) {
  validate(scn);
  const int n = scn.n;
  const int P = scn.T + 2;
  Engine eng = make_engine(scn.seed, {kDataStream, rep});
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);

  PanelDataset ds;
  ds.group.resize(static_cast<std::size_t>(n));
  int treated = 0;
  do {
    treated = 0;
    for (auto& g : ds.group) treated += (g = coin(eng) ? 1 : 0);
  } while (treated == 0 || treated == n);

  Eigen::VectorXd lambda(P);
  for (int t = 0; t < P; ++t) lambda[t] = normal(eng);
  const std::vector<double> beta = scn.beta();
  const double ar_sd = scn.errors == ErrorProcess::Ar3 ? std::sqrt(ar3_variance(scn.phi)) : 1.0;

  ds.outcomes.resize(n, P);
  std::vector<double> u(static_cast<std::size_t>(kBurnIn + P));
  for (int i = 0; i < n; ++i) {
    const int g = ds.group[static_cast<std::size_t>(i)];
    const double alpha_i = normal(eng);
    if (scn.errors == ErrorProcess::Ar3) {
      for (std::size_t s = 0; s < u.size(); ++s) {
        double v = normal(eng);
        for (std::size_t lag = 1; lag <= 3 && lag <= s; ++lag) v += scn.phi[lag - 1] * u[s - lag];
        u[s] = v;
      }
      for (int t = 0; t < P; ++t) u[static_cast<std::size_t>(t)] = u[static_cast<std::size_t>(kBurnIn + t)] * (1.0 + g) / ar_sd;
    } else {
      for (int t = 0; t < P; ++t) u[static_cast<std::size_t>(t)] = normal(eng);
    }
    const double v_i = scn.violation == Violation::Ashenfelter ? scn.violation_param + normal(eng) : 0.0;
    for (int t = 1; t <= P; ++t) {
      double y = alpha_i + lambda[t - 1] + u[static_cast<std::size_t>(t - 1)];
      if (g == 1) {
        if (t <= scn.T) y += beta[static_cast<std::size_t>(t - 1)];
        if (t == P) y += scn.pi_att;
        if (scn.violation == Violation::Ashenfelter && t == scn.T + 1) y += v_i;
        if (scn.violation == Violation::LinearTrend) y += scn.violation_param * t;
      }
      ds.outcomes(i, t - 1) = y;
    }
  }
  for (int i = 1; i <= n; ++i) ds.unit_labels.push_back(i);
  for (int t = 1; t <= P; ++t) ds.time_labels.push_back(t);
  ds.base_period = scn.T + 1;
  return ds;
}

ReplicationOutcome run_replication(const SimulationScenario& scn, std::size_t rep, const WQuantileTable& wtable) {
  const PanelDataset ds = generate(scn, rep);
  ReplicationOutcome out;
  out.reject.fill(-1);
  out.minimal.fill(std::numeric_limits<double>::quiet_NaN());

  const PretrendFit fit = fit_pretrend(ds);
  const CovEstimate cov = cluster_robust_cov(fit);
  TestInputs in{&fit, &cov, nullptr, &wtable, nullptr};
  SequentialPath path;
  for (auto kind : scn.tests) {
    double threshold = scn.delta;
    if (kind == TestKind::Mean) threshold = scn.tau;
    if (kind == TestKind::Rms) {
      threshold = scn.zeta;
      path = sequential_rms_path(ds, scn.grid, derived_seed(scn.seed, kPathStream, rep));
      in.path = &path;
    }
    std::optional<MaxBootstrap> boot;
    if (kind == TestKind::BootMax || kind == TestKind::ClusterBootMax) {
      BootstrapConfig cfg;
      cfg.B = scn.bootstrap_b;
      cfg.variant = kind == TestKind::BootMax ? BootstrapVariant::Gaussian : BootstrapVariant::WildCluster;
      cfg.seed = derived_seed(scn.seed, kBootStream, rep);
      boot.emplace(fit, cfg);
      in.boot = &*boot;
    }
    out.reject[idx(kind)] = test_rejects(kind, in, threshold, scn.alpha) ? 1 : 0;
    if (scn.minimal_thresholds) out.minimal[idx(kind)] = minimal_threshold(kind, in, scn.alpha);
    in.boot = nullptr;
  }

  const PretrendFit full = fit_event_study(ds);
  const CovEstimate full_cov = cluster_robust_cov(full);
  const int last = full.dim() - 1;
  out.pi_hat = full.beta_hat[last];
  const double se = std::sqrt(full_cov.sigma_hat(last, last) / full.n());
  out.ci_covers = std::abs(out.pi_hat - scn.pi_att) <= kZ975 * se;

  out.all_insignificant = true;
  for (int l = 0; l < fit.dim(); ++l) {
    const double se_l = std::sqrt(cov.sigma_hat(l, l) / fit.n());
    if (!(std::abs(fit.beta_hat[l]) < kZ975 * se_l)) out.all_insignificant = false;
  }
  return out;
}

namespace {

StudyReport aggregate(const SimulationScenario& scn, const std::vector<ReplicationOutcome>& reps,
                      const WQuantileTable& wtable) {
  StudyReport report;
  report.scenario = scn;
  report.wtable_hash = wtable.hash();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.rejection.fill({nan, nan});
  report.minimal.fill({nan, nan});
  const double m = static_cast<double>(reps.size());
  for (auto kind : scn.tests) {
    const std::size_t k = idx(kind);
    report.ran[k] = true;
    double hits = 0.0;
    for (const auto& r : reps) hits += r.reject[k];
    report.rejection[k] = proportion(hits, m);
    if (scn.minimal_thresholds) {
      double sum = 0.0, sq = 0.0;
      for (const auto& r : reps) sum += r.minimal[k];
      const double mean = sum / m;
      for (const auto& r : reps) sq += (r.minimal[k] - mean) * (r.minimal[k] - mean);
      report.minimal[k] = {mean, reps.size() > 1 ? std::sqrt(sq / (m - 1) / m) : 0.0};
    }
  }
  double sum = 0.0, sq = 0.0, covers = 0.0, insig = 0.0;
  for (const auto& r : reps) {
    sum += r.pi_hat;
    covers += r.ci_covers;
    insig += r.all_insignificant;
  }
  const double mean = sum / m;
  for (const auto& r : reps) sq += (r.pi_hat - mean) * (r.pi_hat - mean);
  report.pi_hat = {mean, reps.size() > 1 ? std::sqrt(sq / (m - 1) / m) : 0.0};
  report.ci_coverage = proportion(covers, m);
  report.insignificant = proportion(insig, m);
  return report;
}

}  // namespace

StudyReport run_study(const SimulationScenario& scn, const WQuantileTable& wtable) {
  validate(scn);
  std::vector<ReplicationOutcome> reps(static_cast<std::size_t>(scn.M));
  const long long m = scn.M;
  bool failed = false;
  std::string message;
#pragma omp parallel for schedule(dynamic, 4)
  for (long long r = 0; r < m; ++r) {
    try {
      reps[static_cast<std::size_t>(r)] = run_replication(scn, static_cast<std::size_t>(r), wtable);
    } catch (const std::exception& e) {
#pragma omp critical(eqtrend_study_error)
      if (!failed) {
        failed = true;
        message = "replication " + std::to_string(r) + ": " + e.what();
      }
    }
  }
  if (failed) throw Error(message);
  return aggregate(scn, reps, wtable);
}

StudyReport run_study_serial(const SimulationScenario& scn, const WQuantileTable& wtable) {
  validate(scn);
  std::vector<ReplicationOutcome> reps;
  reps.reserve(static_cast<std::size_t>(scn.M));
  for (int r = 0; r < scn.M; ++r) reps.push_back(run_replication(scn, static_cast<std::size_t>(r), wtable));
  return aggregate(scn, reps, wtable);
}

nlohmann::json to_json(const StudyReport& report) {
  const auto& s = report.scenario;
  nlohmann::json j;
  j["scenario"] = {{"name", s.name},
                   {"n", s.n},
                   {"T", s.T},
                   {"beta", s.beta()},
                   {"pi_att", s.pi_att},
                   {"errors", s.errors == ErrorProcess::Ar3 ? "ar3" : "iid"},
                   {"phi", s.phi},
                   {"violation", s.violation == Violation::None          ? "none"
                                 : s.violation == Violation::Ashenfelter ? "ashenfelter"
                                                                         : "linear_trend"},
                   {"violation_param", s.violation_param},
                   {"alpha", s.alpha},
                   {"delta", s.delta},
                   {"tau", s.tau},
                   {"zeta", s.zeta},
                   {"bootstrap_b", s.bootstrap_b},
                   {"grid", s.grid},
                   {"M", s.M},
                   {"seed", s.seed}};
  nlohmann::json tests = nlohmann::json::object();
  for (auto kind : s.tests) {
    const std::size_t k = idx(kind);
    nlohmann::json t = {{"rejection_rate", report.rejection[k].mean}, {"rejection_se", report.rejection[k].se}};
    if (s.minimal_thresholds) {
      t["mean_minimal_threshold"] = report.minimal[k].mean;
      t["minimal_threshold_se"] = report.minimal[k].se;
    }
    tests[std::string(to_string(kind))] = t;
  }
  j["tests"] = tests;
  j["pi_hat"] = {{"mean", report.pi_hat.mean}, {"se", report.pi_hat.se}};
  j["ci_coverage"] = {{"rate", report.ci_coverage.mean}, {"se", report.ci_coverage.se}};
  j["all_insignificant"] = {{"rate", report.insignificant.mean}, {"se", report.insignificant.se}};
  j["wtable_hash"] = report.wtable_hash;
  return j;
}

std::string to_text(const std::vector<StudyReport>& reports) {
  std::ostringstream os;
  os << std::fixed;
  for (const auto& r : reports) {
    const auto& s = r.scenario;
    os << s.name << "  (n=" << s.n << ", T=" << s.T << ", M=" << s.M << ", seed=" << s.seed << ")\n";
    os << "  " << std::left << std::setw(8) << "test" << std::right << std::setw(10) << "reject" << std::setw(10)
       << "(se)";
    if (s.minimal_thresholds) os << std::setw(12) << "min.thr" << std::setw(10) << "(se)";
    os << '\n';
    for (auto kind : s.tests) {
      const std::size_t k = idx(kind);
      os << "  " << std::left << std::setw(8) << to_string(kind) << std::right << std::setprecision(4) << std::setw(10)
         << r.rejection[k].mean << std::setw(10) << r.rejection[k].se;
      if (s.minimal_thresholds) os << std::setw(12) << r.minimal[k].mean << std::setw(10) << r.minimal[k].se;
      os << '\n';
    }
    os << "  pi_hat " << std::setprecision(4) << r.pi_hat.mean << "  CI coverage " << r.ci_coverage.mean
       << "  #insig/M " << r.insignificant.mean << "\n\n";
  }
  return os.str();
}

}  // namespace eqtrend
