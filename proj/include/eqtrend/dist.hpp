#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace eqtrend {

double normal_cdf(double x);

// P(|X| <= x) for X ~ N(mu, sigma²); sigma is the standard deviation.
double folded_normal_cdf(double x, double mu, double sigma);

// Smallest x >= 0 with folded_normal_cdf(x, mu, sigma) >= alpha, by bisection
// to an absolute tolerance of 1e-10 (tighter when sigma < 1).
double folded_normal_quantile(double mu, double sigma, double alpha);

// Rejection probability of |β̂₁| < Q_{N_F(δ, se²)}(α) when β̂₁ ~ N(beta1, se²).
double folded_test_power(double beta1, double se, double delta, double alpha);

// Monte-Carlo quantiles of 𝕎 = 𝔹(1) / (∫(𝔹(λ)/λ − 𝔹(1))² ν(dλ))^{1/2} with ν
// uniform on grid \ {1}.
struct WQuantileTable {
  static constexpr int kFormatVersion = 1;

  std::vector<double> grid;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<double, double>> quantiles;  // (level, value), increasing level

  // Throws ValidationError when `level` was not tabulated.
  double quantile(double level) const;
  bool has_level(double level) const;
  // SHA-256 of the canonical JSON form.
  std::string hash() const;
};

inline constexpr std::size_t kDefaultWReps = 1'000'000;
inline constexpr std::uint64_t kDefaultWSeed = 20240917;
inline constexpr std::size_t kMinWReps = 1'000;

std::vector<double> default_w_levels();

// Parallel kernel: fixed-size blocks of replications, one engine per block.
std::vector<double> simulate_w_sample(std::span<const double> grid, std::size_t reps, std::uint64_t seed);

// Reference loop over the same streams; must equal simulate_w_sample exactly.
std::vector<double> simulate_w_sample_serial(std::span<const double> grid, std::size_t reps, std::uint64_t seed);

// Order statistic ⌈level·R⌉ of a sorted sample.
double empirical_quantile(std::span<const double> sorted, double level);

WQuantileTable simulate_w_quantile(std::span<const double> grid, std::vector<double> levels, std::size_t reps,
                                   std::uint64_t seed);

nlohmann::json to_json(const WQuantileTable& table);
WQuantileTable w_table_from_json(const nlohmann::json& j);
void save_w_table(const WQuantileTable& table, const std::filesystem::path& path);
WQuantileTable load_w_table(const std::filesystem::path& path);

// $EQTREND_CACHE_DIR, else $XDG_CACHE_HOME/eqtrend, else ~/.cache/eqtrend.
std::filesystem::path w_cache_dir();
std::filesystem::path w_cache_path(std::span<const double> grid, const std::vector<double>& levels,
                                   std::size_t reps, std::uint64_t seed);

// Loads the table from the cache or simulates and stores it.
WQuantileTable cached_w_quantile(std::span<const double> grid, std::vector<double> levels, std::size_t reps,
                                 std::uint64_t seed, bool* from_cache = nullptr);

}  // namespace eqtrend
