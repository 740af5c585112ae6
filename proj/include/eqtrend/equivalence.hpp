#pragma once

#include "eqtrend/covariance.hpp"
#include "eqtrend/dist.hpp"
#include "eqtrend/panel.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eqtrend {

enum class TestKind { IuMax, BootMax, ClusterBootMax, Mean, Rms };

std::string_view to_string(TestKind kind);
// Accepts "iu", "boot", "cboot", "mean", "rms".
TestKind parse_test_kind(std::string_view name);

enum class BootstrapVariant { Gaussian, WildCluster };

std::string_view to_string(BootstrapVariant v);
BootstrapVariant parse_bootstrap_variant(std::string_view name);

struct TestResult {
  TestKind kind = TestKind::IuMax;
  double statistic = 0.0;
  double critical_value = 0.0;
  std::vector<double> critical_values;  // per coordinate, IU test only
  double threshold = 0.0;
  double alpha = 0.05;
  bool reject = false;
  std::optional<double> minimal_threshold;

  std::size_t bootstrap_b = 0;
  std::uint64_t seed = 0;
  std::string wtable_hash;
  std::vector<double> margins;  // critical value minus |β̂_l|, IU test only
};

struct SearchConfig {
  double tolerance = 1e-4;
  int max_doublings = 60;
};

// Smallest threshold at which `rejects` turns true, by bisection on
// [lo, hi] after doubling hi until it rejects. `lo` must not reject.
double bisect_threshold(const std::function<bool(double)>& rejects, double lo, double hi,
                        const SearchConfig& cfg = {});

// Folded-normal decision |x| < Q_{N_F(threshold, sd²)}(α); sd may be 0.
bool folded_rejects(double x, double sd, double threshold, double alpha);
double folded_critical_value(double sd, double threshold, double alpha);
// Smallest threshold with folded_rejects(x, sd, ·, α); 0 when every positive
// threshold rejects.
double folded_minimal_threshold(double x, double sd, double alpha);

TestResult iu_max_test(const PretrendFit& fit, const CovEstimate& cov, double delta, double alpha);
TestResult mean_test(const PretrendFit& fit, const CovEstimate& cov, double tau, double alpha);
// Standard deviation of β̄̂ = 1'β̂/T, i.e. sqrt(1'Σ̂1 / (T² n)).
double mean_sd(const PretrendFit& fit, const CovEstimate& cov);

TestResult rms_test(const SequentialPath& path, double zeta, double alpha, const WQuantileTable& wtable);
double rms_minimal_threshold(const SequentialPath& path, double alpha, const WQuantileTable& wtable);

struct RmsInterval {
  double lower = 0.0;  // clipped at 0
  double upper = 0.0;
  double lower_raw = 0.0;
};
RmsInterval rms_confidence_interval(const SequentialPath& path, double alpha, const WQuantileTable& wtable);

// argmin over ‖β‖_∞ = δ of (β − β̂)'Γ̂(β − β̂).
Eigen::VectorXd constrained_estimate(const PretrendFit& fit, double delta);
Eigen::VectorXd constrained_estimate(const Eigen::MatrixXd& gram, const Eigen::VectorXd& beta_u, double delta);

struct BootstrapConfig {
  std::size_t B = 1000;
  BootstrapVariant variant = BootstrapVariant::WildCluster;
  std::uint64_t seed = 1;
};

// Bootstrap max test. Draws are fixed at construction and shared by every
// threshold.
class MaxBootstrap {
 public:
  MaxBootstrap(const PretrendFit& fit, BootstrapConfig cfg);

  // Sorted bootstrap max-norms ‖β̂⁽ᵇ⁾‖_∞ for threshold δ.
  std::vector<double> max_norms(double delta) const;
  // Same draws, literal regenerate-and-refit loop. The wild variant agrees
  // with max_norms to rounding; the Gaussian variant uses its own
  // observation-level draws and agrees only in distribution.
  std::vector<double> max_norms_reference(double delta) const;

  Eigen::VectorXd center(double delta) const;
  TestResult test(double delta, double alpha) const;
  bool rejects(double delta, double alpha) const;
  double minimal_threshold(double alpha, const SearchConfig& cfg = {}) const;

  const BootstrapConfig& config() const { return cfg_; }

 private:
  const PretrendFit* fit_;
  BootstrapConfig cfg_;
  Eigen::MatrixXd gram_inv_n_;  // (nΓ̂)⁻¹
  Eigen::MatrixXd draws_;       // B x n Rademacher signs, or B x p Gaussian directions
  double unrestricted_norm_ = 0.0;
};

TestResult bootstrap_max_test(const PretrendFit& fit, double delta, double alpha, const BootstrapConfig& cfg,
                              bool with_minimal_threshold = false);

// Decision for `kind` at `threshold` on fixed inputs. `boot` is required for
// the bootstrap kinds and `path`/`wtable` for the RMS test.
struct TestInputs {
  const PretrendFit* fit = nullptr;
  const CovEstimate* cov = nullptr;
  const SequentialPath* path = nullptr;
  const WQuantileTable* wtable = nullptr;
  const MaxBootstrap* boot = nullptr;
};
bool test_rejects(TestKind kind, const TestInputs& in, double threshold, double alpha);
double minimal_threshold(TestKind kind, const TestInputs& in, double alpha, const SearchConfig& cfg = {});

}  // namespace eqtrend
