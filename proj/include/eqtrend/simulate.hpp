#pragma once

#include "eqtrend/dist.hpp"
#include "eqtrend/equivalence.hpp"
#include "eqtrend/panel.hpp"

#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace eqtrend {

enum class BetaPattern { Zero, AllAt, FirstAt };
enum class ErrorProcess { IidNormal, Ar3 };
enum class Violation { None, Ashenfelter, LinearTrend };

struct SimulationScenario {
  std::string name = "scenario";
  int n = 1000;
  int T = 4;
  BetaPattern beta_pattern = BetaPattern::Zero;
  double beta_value = 0.0;
  double pi_att = 0.0;
  ErrorProcess errors = ErrorProcess::IidNormal;
  std::array<double, 3> phi{0.5, 0.3, 0.1};
  Violation violation = Violation::None;
  double violation_param = 0.0;  // μ for Ashenfelter's dip, ψ for the linear trend
  double alpha = 0.05;
  double delta = 1.0;
  double tau = 1.0;
  double zeta = 1.0;
  std::size_t bootstrap_b = 1000;
  std::vector<double> grid = default_grid();
  int M = 2000;
  std::uint64_t seed = 1;
  std::vector<TestKind> tests{TestKind::IuMax, TestKind::BootMax, TestKind::ClusterBootMax, TestKind::Mean,
                              TestKind::Rms};
  bool minimal_thresholds = true;

  std::vector<double> beta() const;
};

// Throws ValidationError on inconsistent settings or non-stationary AR terms.
void validate(const SimulationScenario& scn);

// Replication `rep` of the scenario; T + 2 periods, base period T + 1.
PanelDataset generate(const SimulationScenario& scn, std::size_t rep);

// Per-replication record; NaN where a quantity was not computed.
struct ReplicationOutcome {
  std::array<int, 5> reject{};  // indexed by TestKind
  std::array<double, 5> minimal{};
  double pi_hat = 0.0;
  bool ci_covers = false;
  bool all_insignificant = false;
};

ReplicationOutcome run_replication(const SimulationScenario& scn, std::size_t rep, const WQuantileTable& wtable);

struct Cell {
  double mean = 0.0;
  double se = 0.0;
};

struct StudyReport {
  SimulationScenario scenario;
  std::array<bool, 5> ran{};
  std::array<Cell, 5> rejection{};  // frequency and binomial SE
  std::array<Cell, 5> minimal{};    // mean minimal threshold and its SE
  Cell pi_hat;
  Cell ci_coverage;
  Cell insignificant;  // share of replications with every β̂_l insignificant at 5%
  std::string wtable_hash;
};

// Replications run concurrently; results are identical for any thread count.
StudyReport run_study(const SimulationScenario& scn, const WQuantileTable& wtable);
StudyReport run_study_serial(const SimulationScenario& scn, const WQuantileTable& wtable);

nlohmann::json to_json(const StudyReport& report);
std::string to_text(const std::vector<StudyReport>& reports);

// key = value lines; '#' starts a comment; "[name]" opens a new scenario that
// inherits the keys set before the first section. Comma-separated values
// expand into the cartesian product.
std::vector<SimulationScenario> parse_scenarios(std::istream& in);
std::vector<SimulationScenario> load_scenario_file(const std::string& path);

}  // namespace eqtrend
