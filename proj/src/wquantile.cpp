// Monte-Carlo quantiles of the self-normalized limit 𝕎 and their JSON cache.

#include "eqtrend/dist.hpp"
#include "eqtrend/digest.hpp"
#include "eqtrend/errors.hpp"
#include "eqtrend/panel.hpp"
#include "eqtrend/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace eqtrend {
namespace {

constexpr std::size_t kBlock = 4096;
constexpr std::uint64_t kWStream = 0x57ULL;

// Fills out[begin, end) with draws of 𝕎 from the engine of one block.
void fill_block(std::span<const double> grid, std::size_t block, std::uint64_t seed, std::span<double> out) {
  Engine eng = make_engine(seed, {kWStream, block});
  std::normal_distribution<double> normal;
  const std::size_t k = grid.size();
  std::vector<double> step_sd(k);
  for (std::size_t j = 0; j < k; ++j) step_sd[j] = std::sqrt(grid[j] - (j ? grid[j - 1] : 0.0));
  std::vector<double> b(k);
  for (double& w : out) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      acc += step_sd[j] * normal(eng);
      b[j] = acc;
    }
    const double b1 = b[k - 1];
    double den = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double d = b[j] / grid[j] - b1;
      den += d * d;
    }
    w = b1 / std::sqrt(den / static_cast<double>(k - 1));
  }
}

void check_reps(std::size_t reps) {
  if (reps < kMinWReps)
    throw ValidationError("reps = " + std::to_string(reps) + " is too small for stable tail quantiles; use at least " +
                          std::to_string(kMinWReps) + " (10^6 recommended)");
}

}  // namespace

std::vector<double> default_w_levels() {
  return {0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99, 0.995};
}

std::vector<double> simulate_w_sample(std::span<const double> grid, std::size_t reps, std::uint64_t seed) {
  validate_grid(grid);
  check_reps(reps);
  std::vector<double> out(reps);
  const auto blocks = static_cast<long long>((reps + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (long long b = 0; b < blocks; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * kBlock;
    const std::size_t len = std::min(kBlock, reps - begin);
    fill_block(grid, static_cast<std::size_t>(b), seed, std::span<double>(out.data() + begin, len));
  }
  return out;
}

std::vector<double> simulate_w_sample_serial(std::span<const double> grid, std::size_t reps, std::uint64_t seed) {
  validate_grid(grid);
  check_reps(reps);
  std::vector<double> out(reps);
  for (std::size_t begin = 0, b = 0; begin < reps; begin += kBlock, ++b)
    fill_block(grid, b, seed, std::span<double>(out.data() + begin, std::min(kBlock, reps - begin)));
  return out;
}

double empirical_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw ValidationError("empty sample");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("quantile level must lie in (0, 1)");
  auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(sorted.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

WQuantileTable simulate_w_quantile(std::span<const double> grid, std::vector<double> levels, std::size_t reps,
                                   std::uint64_t seed) {
  std::vector<double> sample = simulate_w_sample(grid, reps, seed);
  std::sort(sample.begin(), sample.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  WQuantileTable table;
  table.grid.assign(grid.begin(), grid.end());
  table.reps = reps;
  table.seed = seed;
  for (double level : levels) table.quantiles.emplace_back(level, empirical_quantile(sample, level));
  return table;
}

bool WQuantileTable::has_level(double level) const {
  return std::any_of(quantiles.begin(), quantiles.end(),
                     [&](const auto& q) { return std::abs(q.first - level) <= 1e-12; });
}

double WQuantileTable::quantile(double level) const {
  for (const auto& [l, v] : quantiles)
    if (std::abs(l - level) <= 1e-12) return v;
  throw ValidationError("quantile level " + std::to_string(level) + " is not in the W table");
}

std::string WQuantileTable::hash() const { return sha256_hex(to_json(*this).dump()); }

nlohmann::json to_json(const WQuantileTable& table) {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& [level, value] : table.quantiles) q.push_back({{"level", level}, {"value", value}});
  return {{"format", "eqtrend-wquantiles"},
          {"version", WQuantileTable::kFormatVersion},
          {"grid", table.grid},
          {"reps", table.reps},
          {"seed", table.seed},
          {"quantiles", q}};
}

WQuantileTable w_table_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "eqtrend-wquantiles") throw ValidationError("not a W quantile table");
    if (j.at("version").get<int>() != WQuantileTable::kFormatVersion)
      throw ValidationError("unsupported W table version " + j.at("version").dump());
    WQuantileTable t;
    t.grid = j.at("grid").get<std::vector<double>>();
    t.reps = j.at("reps").get<std::size_t>();
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& q : j.at("quantiles")) t.quantiles.emplace_back(q.at("level").get<double>(), q.at("value").get<double>());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed W table: ") + e.what());
  }
}

void save_w_table(const WQuantileTable& table, const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << to_json(table).dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move W table into place at '" + path.string() + "': " + ec.message());
}

WQuantileTable load_w_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed W table '" + path.string() + "': " + e.what());
  }
  return w_table_from_json(j);
}

std::filesystem::path w_cache_dir() {
  if (const char* dir = std::getenv("EQTREND_CACHE_DIR"); dir && *dir) return dir;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "eqtrend";
  if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".cache" / "eqtrend";
  return std::filesystem::path(".eqtrend-cache");
}

std::filesystem::path w_cache_path(std::span<const double> grid, const std::vector<double>& levels,
                                   std::size_t reps, std::uint64_t seed) {
  std::vector<double> lv = levels;
  std::sort(lv.begin(), lv.end());
  lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
  nlohmann::json key = {{"grid", std::vector<double>(grid.begin(), grid.end())},
                        {"levels", lv},
                        {"reps", reps},
                        {"seed", seed},
                        {"version", WQuantileTable::kFormatVersion}};
  return w_cache_dir() / ("wq-" + sha256_hex(key.dump()).substr(0, 16) + ".json");
}

WQuantileTable cached_w_quantile(std::span<const double> grid, std::vector<double> levels, std::size_t reps,
                                 std::uint64_t seed, bool* from_cache) {
  const auto path = w_cache_path(grid, levels, reps, seed);
  if (std::filesystem::exists(path)) {
    try {
      auto t = load_w_table(path);
      if (from_cache) *from_cache = true;
      return t;
    } catch (const Error&) {
      // Corrupt cache entry: fall through and rebuild it.
    }
  }
  auto table = simulate_w_quantile(grid, std::move(levels), reps, seed);
  try {
    save_w_table(table, path);
  } catch (const IoError&) {
    // Read-only cache location; the table is still usable.
  }
  if (from_cache) *from_cache = false;
  return table;
}

}  // namespace eqtrend
