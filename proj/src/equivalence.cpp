// Equivalence tests for the placebo vector and their minimal thresholds.

#include "eqtrend/equivalence.hpp"

#include "eqtrend/box_qp.hpp"
#include "eqtrend/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eqtrend {
namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
}

void check_threshold(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw ValidationError(std::string(name) + " must be a positive finite number");
}

void check_conformable(const PretrendFit& fit, const CovEstimate& cov) {
  if (cov.sigma_hat.rows() != fit.dim() || cov.sigma_hat.cols() != fit.dim())
    throw ValidationError("covariance estimate does not match the fit dimension");
}

void check_grid(const SequentialPath& path, const WQuantileTable& wtable) {
  if (path.grid.size() != wtable.grid.size())
    throw ValidationError("W table grid does not match the subsample grid");
  for (std::size_t k = 0; k < path.grid.size(); ++k)
    if (std::abs(path.grid[k] - wtable.grid[k]) > 1e-12)
      throw ValidationError("W table grid does not match the subsample grid");
}

}  // namespace

std::string_view to_string(TestKind kind) {
  switch (kind) {
    case TestKind::IuMax: return "iu";
    case TestKind::BootMax: return "boot";
    case TestKind::ClusterBootMax: return "cboot";
    case TestKind::Mean: return "mean";
    case TestKind::Rms: return "rms";
  }
  return "?";
}

TestKind parse_test_kind(std::string_view name) {
  for (auto k : {TestKind::IuMax, TestKind::BootMax, TestKind::ClusterBootMax, TestKind::Mean, TestKind::Rms})
    if (to_string(k) == name) return k;
  throw ValidationError("unknown test '" + std::string(name) + "' (expected iu, boot, cboot, mean or rms)");
}

std::string_view to_string(BootstrapVariant v) {
  return v == BootstrapVariant::Gaussian ? "gaussian" : "wild_cluster";
}

BootstrapVariant parse_bootstrap_variant(std::string_view name) {
  if (name == "gaussian") return BootstrapVariant::Gaussian;
  if (name == "wild_cluster" || name == "wild" || name == "cluster") return BootstrapVariant::WildCluster;
  throw ValidationError("unknown bootstrap variant '" + std::string(name) + "' (expected gaussian or wild_cluster)");
}

double bisect_threshold(const std::function<bool(double)>& rejects, double lo, double hi, const SearchConfig& cfg) {
  if (!(cfg.tolerance > 0.0)) throw ValidationError("search tolerance must be positive");
  if (!(hi > lo)) throw ValidationError("search bracket must satisfy lo < hi");
  if (lo > 0.0 && rejects(lo))
    throw NonMonotoneError("rejection at the lower end of the search bracket; the decision is not monotone in the "
                           "threshold (reuse one seed for every threshold)");
  int doublings = 0;
  while (!rejects(hi)) {
    if (++doublings > cfg.max_doublings) throw NonMonotoneError("no rejecting threshold found");
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > cfg.tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (rejects(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

double folded_critical_value(double sd, double threshold, double alpha) {
  if (sd < 0.0 || !std::isfinite(sd)) throw ValidationError("standard error must be finite and non-negative");
  if (sd == 0.0) return threshold;
  return folded_normal_quantile(threshold, sd, alpha);
}

bool folded_rejects(double x, double sd, double threshold, double alpha) {
  return std::abs(x) < folded_critical_value(sd, threshold, alpha);
}

double folded_minimal_threshold(double x, double sd, double alpha) {
  check_alpha(alpha);
  const double ax = std::abs(x);
  if (sd == 0.0) return ax;
  // P(|N(d, sd²)| <= |x|) falls in d; the test rejects where it is below α.
  auto mass = [&](double d) { return folded_normal_cdf(ax, d, sd); };
  if (mass(0.0) < alpha) return 0.0;
  double lo = 0.0;
  double hi = ax + sd;
  while (mass(hi) >= alpha) hi *= 2.0;
  const double tol = 1e-12 * (ax + sd);
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) < alpha)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

TestResult iu_max_test(const PretrendFit& fit, const CovEstimate& cov, double delta, double alpha) {
  check_threshold(delta, "delta");
  check_alpha(alpha);
  check_conformable(fit, cov);
  TestResult r;
  r.kind = TestKind::IuMax;
  r.threshold = delta;
  r.alpha = alpha;
  r.statistic = fit.beta_hat.cwiseAbs().maxCoeff();
  r.reject = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  double minimal = 0.0;
  for (int t = 0; t < fit.dim(); ++t) {
    const double sd = std::sqrt(std::max(0.0, cov.sigma_hat(t, t)) / fit.n());
    const double crit = folded_critical_value(sd, delta, alpha);
    const double margin = crit - std::abs(fit.beta_hat[t]);
    r.critical_values.push_back(crit);
    r.margins.push_back(margin);
    if (!(margin > 0.0)) r.reject = false;
    if (margin < worst_margin) {
      worst_margin = margin;
      r.critical_value = crit;
    }
    minimal = std::max(minimal, folded_minimal_threshold(fit.beta_hat[t], sd, alpha));
  }
  r.minimal_threshold = minimal;
  return r;
}

double mean_sd(const PretrendFit& fit, const CovEstimate& cov) {
  check_conformable(fit, cov);
  const double T = fit.dim();
  return std::sqrt(std::max(0.0, cov.sigma_hat.sum()) / (T * T * fit.n()));
}

TestResult mean_test(const PretrendFit& fit, const CovEstimate& cov, double tau, double alpha) {
  check_threshold(tau, "tau");
  check_alpha(alpha);
  const double sd = mean_sd(fit, cov);
  TestResult r;
  r.kind = TestKind::Mean;
  r.threshold = tau;
  r.alpha = alpha;
  r.statistic = fit.beta_hat.mean();
  r.critical_value = folded_critical_value(sd, tau, alpha);
  r.reject = std::abs(r.statistic) < r.critical_value;
  r.minimal_threshold = folded_minimal_threshold(r.statistic, sd, alpha);
  return r;
}

double rms_minimal_threshold(const SequentialPath& path, double alpha, const WQuantileTable& wtable) {
  check_grid(path, wtable);
  const double radicand = path.rms_sq_full - wtable.quantile(alpha) * path.v_hat;
  return std::sqrt(std::max(0.0, radicand));
}

TestResult rms_test(const SequentialPath& path, double zeta, double alpha, const WQuantileTable& wtable) {
  check_threshold(zeta, "zeta");
  check_alpha(alpha);
  check_grid(path, wtable);
  TestResult r;
  r.kind = TestKind::Rms;
  r.threshold = zeta;
  r.alpha = alpha;
  r.statistic = path.rms_sq_full;
  r.critical_value = zeta * zeta + wtable.quantile(alpha) * path.v_hat;
  r.reject = path.rms_sq_full < r.critical_value;
  r.minimal_threshold = rms_minimal_threshold(path, alpha, wtable);
  r.wtable_hash = wtable.hash();
  return r;
}

RmsInterval rms_confidence_interval(const SequentialPath& path, double alpha, const WQuantileTable& wtable) {
  check_alpha(alpha);
  check_grid(path, wtable);
  RmsInterval ci;
  ci.lower_raw = path.rms_sq_full + wtable.quantile(alpha / 2) * path.v_hat;
  ci.upper = path.rms_sq_full + wtable.quantile(1 - alpha / 2) * path.v_hat;
  ci.lower = std::max(0.0, ci.lower_raw);
  return ci;
}

Eigen::VectorXd constrained_estimate(const Eigen::MatrixXd& gram, const Eigen::VectorXd& beta_u, double delta) {
  check_threshold(delta, "delta");
  const Eigen::Index p = beta_u.size();
  if (gram.rows() != p || gram.cols() != p) throw ValidationError("Gram matrix does not match the estimate");
  const double norm = beta_u.cwiseAbs().maxCoeff();
  if (norm == delta) return beta_u;

  const Eigen::VectorXd g = gram * beta_u;
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, -delta);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, delta);
  if (norm > delta) return solve_box_qp(gram, g, lo, hi).x;

  // Interior box optimum: the equality constraint binds on some face.
  auto objective = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(gram * x) - g.dot(x); };
  Eigen::VectorXd best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (Eigen::Index l = 0; l < p; ++l) {
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd x(p);
      x[l] = sign * delta;
      if (p > 1) {
        std::vector<Eigen::Index> rest;
        for (Eigen::Index j = 0; j < p; ++j)
          if (j != l) rest.push_back(j);
        const auto k = static_cast<Eigen::Index>(rest.size());
        Eigen::MatrixXd h(k, k);
        Eigen::VectorXd rhs(k);
        for (Eigen::Index a = 0; a < k; ++a) {
          rhs[a] = g[rest[a]] - gram(rest[a], l) * x[l];
          for (Eigen::Index b = 0; b < k; ++b) h(a, b) = gram(rest[a], rest[b]);
        }
        const Eigen::VectorXd sub = solve_box_qp(h, rhs, lo.head(k), hi.head(k)).x;
        for (Eigen::Index a = 0; a < k; ++a) x[rest[a]] = sub[a];
      }
      const double obj = objective(x);
      if (best.size() == 0 || obj < best_obj - 1e-12 * std::max(1.0, std::abs(best_obj))) {
        best_obj = obj;
        best = std::move(x);
      }
    }
  }
  return best;
}

Eigen::VectorXd constrained_estimate(const PretrendFit& fit, double delta) {
  return constrained_estimate(fit.gram, fit.beta_hat, delta);
}

TestResult bootstrap_max_test(const PretrendFit& fit, double delta, double alpha, const BootstrapConfig& cfg,
                              bool with_minimal_threshold) {
  MaxBootstrap boot(fit, cfg);
  TestResult r = boot.test(delta, alpha);
  if (with_minimal_threshold) r.minimal_threshold = boot.minimal_threshold(alpha);
  return r;
}

bool test_rejects(TestKind kind, const TestInputs& in, double threshold, double alpha) {
  switch (kind) {
    case TestKind::IuMax:
      if (!in.fit || !in.cov) throw ValidationError("IU test needs a fit and a covariance estimate");
      return iu_max_test(*in.fit, *in.cov, threshold, alpha).reject;
    case TestKind::Mean:
      if (!in.fit || !in.cov) throw ValidationError("mean test needs a fit and a covariance estimate");
      return mean_test(*in.fit, *in.cov, threshold, alpha).reject;
    case TestKind::Rms:
      if (!in.path || !in.wtable) throw ValidationError("RMS test needs a subsample path and a W table");
      return rms_test(*in.path, threshold, alpha, *in.wtable).reject;
    case TestKind::BootMax:
    case TestKind::ClusterBootMax:
      if (!in.boot) throw ValidationError("bootstrap test needs prepared bootstrap draws");
      return in.boot->rejects(threshold, alpha);
  }
  return false;
}

double minimal_threshold(TestKind kind, const TestInputs& in, double alpha, const SearchConfig& cfg) {
  switch (kind) {
    case TestKind::IuMax: {
      if (!in.fit || !in.cov) throw ValidationError("IU test needs a fit and a covariance estimate");
      double m = 0.0;
      for (int t = 0; t < in.fit->dim(); ++t) {
        const double sd = std::sqrt(std::max(0.0, in.cov->sigma_hat(t, t)) / in.fit->n());
        m = std::max(m, folded_minimal_threshold(in.fit->beta_hat[t], sd, alpha));
      }
      return m;
    }
    case TestKind::Mean:
      if (!in.fit || !in.cov) throw ValidationError("mean test needs a fit and a covariance estimate");
      return folded_minimal_threshold(in.fit->beta_hat.mean(), mean_sd(*in.fit, *in.cov), alpha);
    case TestKind::Rms:
      if (!in.path || !in.wtable) throw ValidationError("RMS test needs a subsample path and a W table");
      return rms_minimal_threshold(*in.path, alpha, *in.wtable);
    case TestKind::BootMax:
    case TestKind::ClusterBootMax:
      if (!in.boot) throw ValidationError("bootstrap test needs prepared bootstrap draws");
      return in.boot->minimal_threshold(alpha, cfg);
  }
  return 0.0;
}

}  // namespace eqtrend
