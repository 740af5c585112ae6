// Max-norm bootstrap. Each replicate is an exact linear update of the centre:
// β⁽ᵇ⁾ = β̂̂_c + (nΓ̂)⁻¹ Σ_i R_bi Ẅ_i'ü_{i,c} for the wild variant and
// β̂̂_c + σ̂̂_c^{1/2} chol((nΓ̂)⁻¹) z_b for the Gaussian one.

#include "eqtrend/covariance.hpp"
#include "eqtrend/equivalence.hpp"
#include "eqtrend/errors.hpp"
#include "eqtrend/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace eqtrend {
namespace {

constexpr Eigen::Index kBootBlock = 64;
constexpr std::uint64_t kWildStream = 0xB0075ULL;
constexpr std::uint64_t kGaussStream = 0xB0076ULL;

Eigen::Index block_count(Eigen::Index rows) { return (rows + kBootBlock - 1) / kBootBlock; }

}  // namespace

MaxBootstrap::MaxBootstrap(const PretrendFit& fit, BootstrapConfig cfg) : fit_(&fit), cfg_(cfg) {
  if (cfg_.B < 500) throw ValidationError("bootstrap needs B >= 500, got " + std::to_string(cfg_.B));
  const int p = fit.dim();
  const auto llt = fit.gram.llt();
  if (llt.info() != Eigen::Success) throw RankError("singular Gram matrix");
  gram_inv_n_ = llt.solve(Eigen::MatrixXd::Identity(p, p)) / static_cast<double>(fit.n());
  unrestricted_norm_ = fit.beta_hat.cwiseAbs().maxCoeff();

  const auto B = static_cast<Eigen::Index>(cfg_.B);
  const bool wild = cfg_.variant == BootstrapVariant::WildCluster;
  const Eigen::Index cols = wild ? fit.n() : p;
  draws_.resize(B, cols);
  Eigen::MatrixXd chol_t;
  if (!wild) {
    chol_t = gram_inv_n_.llt().matrixL().transpose();
  }
  const Eigen::Index blocks = block_count(B);
  const std::uint64_t seed = cfg_.seed;
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index begin = blk * kBootBlock;
    const Eigen::Index len = std::min(kBootBlock, B - begin);
    Engine eng = make_engine(seed, {wild ? kWildStream : kGaussStream, static_cast<std::uint64_t>(blk)});
    if (wild) {
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index b = begin; b < begin + len; ++b)
        for (Eigen::Index i = 0; i < cols; ++i) draws_(b, i) = coin(eng) ? 1.0 : -1.0;
    } else {
      std::normal_distribution<double> normal;
      Eigen::MatrixXd z(len, cols);
      for (Eigen::Index b = 0; b < len; ++b)
        for (Eigen::Index j = 0; j < cols; ++j) z(b, j) = normal(eng);
      draws_.middleRows(begin, len) = z * chol_t;
    }
  }
}

Eigen::VectorXd MaxBootstrap::center(double delta) const {
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  if (unrestricted_norm_ >= delta) return fit_->beta_hat;
  return constrained_estimate(*fit_, delta);
}

std::vector<double> MaxBootstrap::max_norms(double delta) const {
  const Eigen::VectorXd c = center(delta);
  const auto B = static_cast<Eigen::Index>(cfg_.B);
  // Rows of `shift` are β⁽ᵇ⁾ − c after multiplication by the draws.
  Eigen::MatrixXd shift;
  if (cfg_.variant == BootstrapVariant::WildCluster) {
    shift = unit_scores(*fit_, c) * gram_inv_n_;
  } else {
    shift = Eigen::MatrixXd::Identity(fit_->dim(), fit_->dim()) * std::sqrt(spherical_sigma(*fit_, c));
  }
  std::vector<double> norms(cfg_.B);
  const Eigen::Index blocks = block_count(B);
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index begin = blk * kBootBlock;
    const Eigen::Index len = std::min(kBootBlock, B - begin);
    Eigen::MatrixXd beta = draws_.middleRows(begin, len) * shift;
    beta.rowwise() += c.transpose();
    for (Eigen::Index b = 0; b < len; ++b)
      norms[static_cast<std::size_t>(begin + b)] = beta.row(b).cwiseAbs().maxCoeff();
  }
  std::sort(norms.begin(), norms.end());
  return norms;
}

bool MaxBootstrap::rejects(double delta, double alpha) const {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("bootstrap max test needs alpha in (0, 0.5)");
  return unrestricted_norm_ < empirical_quantile(max_norms(delta), alpha);
}

TestResult MaxBootstrap::test(double delta, double alpha) const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("delta must be a positive finite number");
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("bootstrap max test needs alpha in (0, 0.5)");
  TestResult r;
  r.kind = cfg_.variant == BootstrapVariant::WildCluster ? TestKind::ClusterBootMax : TestKind::BootMax;
  r.statistic = unrestricted_norm_;
  r.critical_value = empirical_quantile(max_norms(delta), alpha);
  r.threshold = delta;
  r.alpha = alpha;
  r.reject = r.statistic < r.critical_value;
  r.bootstrap_b = cfg_.B;
  r.seed = cfg_.seed;
  return r;
}

double MaxBootstrap::minimal_threshold(double alpha, const SearchConfig& cfg) const {
  const double u = unrestricted_norm_;
  // Flat decision for δ ≤ ‖β̂‖_∞: the center is β̂ itself.
  if (u > 0.0 && rejects(u, alpha)) return 0.0;
  const double hi = u > 0.0 ? 2.0 * u : std::max(cfg.tolerance, std::sqrt(gram_inv_n_.diagonal().maxCoeff()));
  return bisect_threshold([&](double d) { return rejects(d, alpha); }, u, hi, cfg);
}

}  // namespace eqtrend
