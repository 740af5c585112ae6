#include "cli.hpp"

#include "eqtrend/covariance.hpp"
#include "eqtrend/digest.hpp"
#include "eqtrend/dist.hpp"
#include "eqtrend/equivalence.hpp"
#include "eqtrend/errors.hpp"
#include "eqtrend/panel.hpp"
#include "eqtrend/simulate.hpp"
#include "eqtrend/staggered.hpp"
#include "eqtrend/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>

namespace eqtrend::cli {
namespace {

using nlohmann::json;

struct Options {
  std::string input;
  std::string schema;
  std::string periods;
  std::string tests = "iu,cboot,mean,rms";
  std::string variant = "gaussian";
  std::string grid;
  std::string out;
  std::string format = "text";
  std::string exclude;
  double alpha = 0.05;
  std::optional<double> delta, tau, zeta;
  std::size_t bootstrap_b = 1000;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::size_t w_reps = kDefaultWReps;
  std::uint64_t w_seed = kDefaultWSeed;
  std::string scenario;
  std::optional<int> replications;
  std::string levels;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& s, const char* what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError(std::string(what) + ": '" + s + "' is not a number");
  return v;
}

long long parse_integer(const std::string& s, const char* what) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError(std::string(what) + ": '" + s + "' is not an integer");
  return v;
}

std::vector<double> parse_grid(const std::string& s) {
  if (s.empty()) return default_grid();
  std::vector<double> g;
  for (const auto& item : split_list(s)) g.push_back(parse_number(item, "grid"));
  validate_grid(g);
  return g;
}

std::vector<double> w_levels(double alpha) {
  std::vector<double> levels = default_w_levels();
  for (double l : {alpha, alpha / 2, 1 - alpha / 2}) levels.push_back(l);
  return levels;
}

void emit(const Options& opt, const std::string& text, const json& report, std::ostream& out) {
  const std::string body = opt.format == "json" ? report.dump(2) + "\n" : text;
  if (opt.out.empty()) {
    out << body;
    return;
  }
  std::ofstream f(opt.out);
  if (!f) throw IoError("cannot write '" + opt.out + "'");
  f << body;
  if (!f) throw IoError("write failed for '" + opt.out + "'");
  out << "report written to " << opt.out << '\n';
}

struct Estimate {
  std::string label;
  double value = 0.0;
  double se = 0.0;
};

// Everything the test and thresholds subcommands report on.
struct Analysis {
  PanelDataset data;
  bool staggered = false;
  PretrendFit fit;
  CovEstimate cov;
  std::optional<Estimate> effect;
  std::string controls;
};

std::vector<PlaceboCell> parse_exclusions(const PanelDataset& ds, const std::string& s) {
  std::vector<PlaceboCell> cells;
  auto period_of = [&](long long label) {
    auto it = std::find(ds.time_labels.begin(), ds.time_labels.end(), label);
    if (it == ds.time_labels.end()) throw ValidationError("unknown period " + std::to_string(label));
    return static_cast<int>(it - ds.time_labels.begin()) + 1;
  };
  for (const auto& item : split_list(s)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ValidationError("--exclude-placebo expects cohort:period pairs");
    cells.push_back({period_of(parse_integer(item.substr(0, colon), "cohort")),
                     period_of(parse_integer(item.substr(colon + 1), "period"))});
  }
  return cells;
}

Estimate estimate_of(const PretrendFit& fit, const CovEstimate& cov, int k) {
  return {fit.labels[static_cast<std::size_t>(k)], fit.beta_hat[k], std::sqrt(std::max(0.0, cov.sigma_hat(k, k)) / fit.n())};
}

Analysis analyse(const Options& opt, const PanelDataset& loaded, std::span<const PlaceboCell> mask) {
  Analysis a;
  a.staggered = loaded.staggered();
  if (!a.staggered) {
    a.data = loaded;
    std::optional<long long> next;
    if (!opt.periods.empty()) {
      std::vector<long long> labels;
      for (const auto& p : split_list(opt.periods)) labels.push_back(parse_integer(p, "period"));
      a.data = restrict_periods(loaded, labels);
      auto it = std::find(loaded.time_labels.begin(), loaded.time_labels.end(), labels.back());
      if (it + 1 != loaded.time_labels.end()) next = *(it + 1);
      if (next) {
        labels.push_back(*next);
        PanelDataset eff = restrict_periods(loaded, labels);
        eff.base_period = static_cast<int>(labels.size()) - 1;
        const PretrendFit ef = fit_event_study(eff);
        a.effect = estimate_of(ef, cluster_robust_cov(ef), ef.dim() - 1);
      }
    } else if (loaded.periods() > loaded.base_period) {
      const PretrendFit ef = fit_event_study(loaded);
      a.effect = estimate_of(ef, cluster_robust_cov(ef), loaded.base_period - 1);
    }
    if (a.data.periods() > a.data.base_period) {
      // Tests only see the pre-treatment block.
      std::vector<long long> pre(a.data.time_labels.begin(), a.data.time_labels.begin() + a.data.base_period);
      a.data = restrict_periods(a.data, pre);
    }
    a.fit = fit_pretrend(a.data);
    a.cov = cluster_robust_cov(a.fit);
    return a;
  }
  if (!opt.periods.empty()) throw ValidationError("--periods applies to canonical panels only");
  a.data = loaded;
  const StaggeredDesign design = build_staggered_design(loaded, mask);
  StaggeredFit sf = extract_placebo_vector(loaded, design);
  a.cov = staggered_cluster_cov(sf);
  a.fit = std::move(sf.placebo);
  a.controls = describe_controls(loaded, design);
  for (int c = 0; c < design.dim(); ++c)
    if (design.columns[static_cast<std::size_t>(c)].role == ColumnRole::Treatment) {
      const int target[] = {c};
      const PretrendFit ef = fit_design_columns(loaded, design, target);
      a.effect = estimate_of(ef, cluster_robust_cov(ef), 0);
      break;
    }
  return a;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

json result_json(const TestResult& r) {
  json j = {{"test", std::string(to_string(r.kind))},
            {"statistic", r.statistic},
            {"critical_value", r.critical_value},
            {"threshold", r.threshold},
            {"alpha", r.alpha},
            {"reject", r.reject},
            {"minimal_threshold", r.minimal_threshold ? json(*r.minimal_threshold) : json(nullptr)}};
  if (!r.critical_values.empty()) {
    j["critical_values"] = r.critical_values;
    j["margins"] = r.margins;
  }
  if (r.bootstrap_b) {
    j["bootstrap_b"] = r.bootstrap_b;
    j["seed"] = r.seed;
  }
  if (!r.wtable_hash.empty()) j["wtable_hash"] = r.wtable_hash;
  return j;
}

const char* threshold_symbol(TestKind k) {
  switch (k) {
    case TestKind::IuMax: return "delta*_IU";
    case TestKind::BootMax: return "delta*_Boot";
    case TestKind::ClusterBootMax: return "delta*_cBoot";
    case TestKind::Mean: return "tau*";
    case TestKind::Rms: return "zeta*";
  }
  return "?";
}

int cmd_test(const Options& opt, bool decisions, std::ostream& out) {
  if (opt.input.empty()) throw ValidationError("--input is required");
  if (opt.format != "json" && opt.format != "text") throw ValidationError("--format must be json or text");
  if (!(opt.alpha > 0.0 && opt.alpha < 0.5)) throw ValidationError("--alpha must lie in (0, 0.5)");
  const CsvSchema schema = opt.schema.empty() ? CsvSchema{} : parse_schema(opt.schema);
  const std::string input_hash = sha256_file_hex(opt.input);
  const PanelDataset loaded = load_panel_file(opt.input, schema);
  const std::vector<PlaceboCell> mask = opt.exclude.empty() ? std::vector<PlaceboCell>{} : parse_exclusions(loaded, opt.exclude);
  if (!mask.empty() && !loaded.staggered()) throw ValidationError("--exclude-placebo applies to staggered panels only");

  std::vector<TestKind> kinds;
  for (const auto& t : split_list(opt.tests)) kinds.push_back(parse_test_kind(t));
  if (kinds.empty()) throw ValidationError("--tests selects no test");
  const BootstrapVariant boot_variant = parse_bootstrap_variant(opt.variant);
  const std::uint64_t seed = opt.seed ? *opt.seed : std::random_device{}();
  const std::vector<double> grid = parse_grid(opt.grid);

  Analysis a = analyse(opt, loaded, mask);

  std::optional<WQuantileTable> wtable;
  std::optional<SequentialPath> path;
  bool wtable_cached = false;
  const bool wants_rms = std::find(kinds.begin(), kinds.end(), TestKind::Rms) != kinds.end();
  if (wants_rms) {
    wtable = cached_w_quantile(grid, w_levels(opt.alpha), opt.w_reps, opt.w_seed, &wtable_cached);
    path = a.staggered ? staggered_rms_path(a.data, mask, grid, seed) : sequential_rms_path(a.data, grid, seed);
  }

  json tests = json::array();
  std::ostringstream text;
  text << "eqtrend " << kVersion << (decisions ? "  equivalence tests\n" : "  minimal equivalence thresholds\n");
  text << "input   " << opt.input << "  (sha256 " << input_hash.substr(0, 16) << "...)\n";
  text << "design  " << (a.staggered ? "staggered" : "canonical") << ", n = " << a.fit.n() << " units, "
       << a.fit.dim() << " placebo coefficient(s), base period "
       << a.data.time_labels[static_cast<std::size_t>(a.data.base_period - 1)] << "\n";
  if (a.staggered) text << "controls " << a.controls << "\n";
  if (!a.cov.adjusted_for_estimated_means)
    text << "note    standard errors ignore the sampling variation of the cohort covariate means\n";
  text << "seed    " << seed << (opt.seed ? "" : " (generated)") << "\n\n";
  text << "placebo estimates (cluster-robust se)\n";
  json estimates = json::array();
  for (int k = 0; k < a.fit.dim(); ++k) {
    const Estimate e = estimate_of(a.fit, a.cov, k);
    estimates.push_back({{"label", e.label}, {"estimate", e.value}, {"se", e.se}});
    text << "  " << std::left << std::setw(28) << e.label << std::right << std::setw(12) << fmt(e.value)
         << "  (" << fmt(e.se) << ")\n";
  }
  if (a.effect)
    text << "\neffect estimate " << a.effect->label << " = " << fmt(a.effect->value) << "  (se " << fmt(a.effect->se)
         << ")\n";
  text << "\n";
  if (decisions) {
    text << "  " << std::left << std::setw(7) << "test" << std::right << std::setw(12) << "statistic" << std::setw(12)
         << "critical" << std::setw(11) << "threshold" << std::setw(10) << "decision" << std::setw(12) << "minimal"
         << "\n";
  } else {
    text << "  " << std::left << std::setw(7) << "test" << std::setw(14) << "threshold" << std::right << std::setw(12)
         << "minimal" << "\n";
  }

  std::vector<std::pair<TestKind, double>> minima;
  for (TestKind kind : kinds) {
    std::optional<double> threshold;
    if (kind == TestKind::Mean) {
      threshold = opt.tau;
    } else if (kind == TestKind::Rms) {
      threshold = opt.zeta;
    } else {
      threshold = opt.delta;
    }
    if (decisions && !threshold)
      throw ValidationError(std::string("test '") + std::string(to_string(kind)) + "' needs its threshold (" +
                            (kind == TestKind::Mean ? "--tau" : kind == TestKind::Rms ? "--zeta" : "--delta") + ")");
    TestResult r;
    if (kind == TestKind::IuMax) {
      r = iu_max_test(a.fit, a.cov, threshold.value_or(1.0), opt.alpha);
    } else if (kind == TestKind::Mean) {
      r = mean_test(a.fit, a.cov, threshold.value_or(1.0), opt.alpha);
    } else if (kind == TestKind::Rms) {
      r = rms_test(*path, threshold.value_or(1.0), opt.alpha, *wtable);
    } else {
      BootstrapConfig cfg;
      cfg.B = opt.bootstrap_b;
      cfg.seed = seed;
      cfg.variant = kind == TestKind::ClusterBootMax ? BootstrapVariant::WildCluster : boot_variant;
      MaxBootstrap boot(a.fit, cfg);
      r = boot.test(threshold.value_or(1.0), opt.alpha);
      r.minimal_threshold = boot.minimal_threshold(opt.alpha);
      if (cfg.variant == BootstrapVariant::WildCluster) r.kind = TestKind::ClusterBootMax;
    }
    json j = result_json(r);
    if (kind == TestKind::BootMax) j["bootstrap_variant"] = std::string(to_string(boot_variant));
    if (kind == TestKind::Rms) {
      const RmsInterval ci = rms_confidence_interval(*path, opt.alpha, *wtable);
      j["rms_sq"] = path->rms_sq_full;
      j["v_hat"] = path->v_hat;
      j["path"] = path->rms_sq;
      j["confidence_interval"] = {{"lower", ci.lower}, {"upper", ci.upper}, {"lower_raw", ci.lower_raw},
                                  {"level", 1 - opt.alpha}};
    }
    if (!decisions) {
      for (const char* key : {"critical_value", "threshold", "reject", "critical_values", "margins"}) j.erase(key);
    }
    tests.push_back(j);
    minima.emplace_back(kind, r.minimal_threshold.value_or(std::nan("")));
    if (decisions) {
      text << "  " << std::left << std::setw(7) << to_string(kind) << std::right << std::setw(12) << fmt(r.statistic)
           << std::setw(12) << fmt(r.critical_value) << std::setw(11) << fmt(r.threshold, 3) << std::setw(10)
           << (r.reject ? "reject" : "retain") << std::setw(12) << fmt(*r.minimal_threshold) << "\n";
    } else {
      text << "  " << std::left << std::setw(7) << to_string(kind) << std::setw(14) << threshold_symbol(kind)
           << std::right << std::setw(12) << fmt(*r.minimal_threshold) << "\n";
    }
  }
  if (decisions) text << "  (reject = equivalence concluded at level " << opt.alpha << ")\n";

  if (a.effect) {
    const double eff = std::abs(a.effect->value);
    text << "\nminimal thresholds relative to |" << a.effect->label << "| = " << fmt(eff) << "\n";
    for (const auto& [kind, m] : minima) {
      text << "  " << std::left << std::setw(14) << threshold_symbol(kind) << std::right << std::setw(10) << fmt(m);
      if (eff > 0) text << "   " << std::setw(8) << fmt(m / eff, 2) << " x effect";
      text << "\n";
    }
  }
  if (wants_rms) text << "\nW table " << wtable->hash().substr(0, 16) << "... (" << wtable->reps << " reps"
                      << (wtable_cached ? ", cached" : "") << ")\n";

  json report;
  report["command"] = decisions ? "test" : "thresholds";
  report["provenance"] = {{"version", kVersion},
                          {"seed", seed},
                          {"seed_generated", !opt.seed},
                          {"bootstrap_b", opt.bootstrap_b},
                          {"bootstrap_variant", opt.variant},
                          {"grid", grid},
                          {"alpha", opt.alpha},
                          {"input", opt.input},
                          {"input_sha256", input_hash},
                          {"schema", opt.schema},
                          {"periods", opt.periods},
                          {"exclude_placebo", opt.exclude}};
  if (wants_rms)
    report["provenance"]["wtable"] = {{"hash", wtable->hash()}, {"reps", wtable->reps}, {"seed", wtable->seed}};
  report["design"] = {{"kind", a.staggered ? "staggered" : "canonical"},
                      {"units", a.fit.n()},
                      {"placebo_dim", a.fit.dim()},
                      {"base_period", a.data.time_labels[static_cast<std::size_t>(a.data.base_period - 1)]},
                      {"covariance", "cluster_robust"},
                      {"adjusted_for_estimated_means", a.cov.adjusted_for_estimated_means}};
  if (a.staggered) report["design"]["controls"] = a.controls;
  report["placebo_estimates"] = estimates;
  report["effect"] = a.effect ? json{{"label", a.effect->label}, {"estimate", a.effect->value}, {"se", a.effect->se}}
                              : json(nullptr);
  report["tests"] = tests;
  emit(opt, text.str(), report, out);
  return 0;
}

int cmd_simulate(const Options& opt, std::ostream& out) {
  if (opt.scenario.empty()) throw ValidationError("--scenario is required");
  if (opt.format != "json" && opt.format != "text") throw ValidationError("--format must be json or text");
  std::vector<SimulationScenario> scenarios = load_scenario_file(opt.scenario);
  std::vector<StudyReport> reports;
  json all = json::array();
  for (auto& scn : scenarios) {
    if (opt.seed) scn.seed = *opt.seed;
    if (opt.replications) scn.M = *opt.replications;
    if (!opt.grid.empty()) scn.grid = parse_grid(opt.grid);
    validate(scn);
    WQuantileTable w = cached_w_quantile(scn.grid, w_levels(scn.alpha), opt.w_reps, opt.w_seed);
    reports.push_back(run_study(scn, w));
    all.push_back(to_json(reports.back()));
  }
  json report = {{"command", "simulate"},
                 {"provenance",
                  {{"version", kVersion}, {"scenario_file", opt.scenario}, {"scenario_sha256", sha256_file_hex(opt.scenario)}}},
                 {"studies", all}};
  emit(opt, to_text(reports), report, out);
  return 0;
}

int cmd_wquantiles(const Options& opt, std::ostream& out) {
  const std::vector<double> grid = parse_grid(opt.grid);
  std::vector<double> levels;
  if (opt.levels.empty()) {
    levels = w_levels(opt.alpha);
  } else {
    for (const auto& l : split_list(opt.levels)) levels.push_back(parse_number(l, "level"));
  }
  if (std::find(levels.begin(), levels.end(), 0.05) == levels.end()) levels.push_back(0.05);
  const WQuantileTable table = simulate_w_quantile(grid, levels, opt.w_reps, opt.w_seed);
  const auto path = opt.out.empty() ? w_cache_path(grid, levels, opt.w_reps, opt.w_seed) : std::filesystem::path(opt.out);
  save_w_table(table, path);
  out << "Q(0.05) = " << std::setprecision(6) << table.quantile(0.05) << "\n";
  out << "table " << path.string() << "\nhash " << table.hash() << "\n";
  return 0;
}

void add_common(CLI::App* app, Options& opt) {
  app->add_option("--input", opt.input, "long-format CSV panel");
  app->add_option("--schema", opt.schema, "column mapping, e.g. unit=id,time=month,outcome=y,group=treat");
  app->add_option("--periods", opt.periods, "comma-separated time labels to keep; the last one is the base period");
  app->add_option("--alpha", opt.alpha, "significance level");
  app->add_option("--tests", opt.tests, "comma-separated subset of iu,boot,cboot,mean,rms");
  app->add_option("--bootstrap-b", opt.bootstrap_b, "bootstrap replications");
  app->add_option("--bootstrap-variant", opt.variant, "variant used by 'boot': gaussian or wild_cluster");
  app->add_option("--grid", opt.grid, "subsample fractions, comma-separated, ending in 1");
  app->add_option("--seed", opt.seed, "random seed (generated and reported when omitted)");
  app->add_option("--out", opt.out, "write the report to this file");
  app->add_option("--format", opt.format, "json or text");
  app->add_option("--threads", opt.threads, "worker threads (results do not depend on it)");
  app->add_option("--exclude-placebo", opt.exclude, "staggered only: cohort:period cells to pool into the controls");
  app->add_option("--w-reps", opt.w_reps, "Monte-Carlo paths for the W quantiles");
  app->add_option("--w-seed", opt.w_seed, "seed for the W quantiles");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Equivalence tests for pre-treatment trends in difference-in-differences designs", "eqtrend"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto* test = app.add_subcommand("test", "run equivalence tests at given thresholds");
  add_common(test, opt);
  test->add_option("--delta", opt.delta, "threshold for the max tests");
  test->add_option("--tau", opt.tau, "threshold for the mean test");
  test->add_option("--zeta", opt.zeta, "threshold for the RMS test");

  auto* thresholds = app.add_subcommand("thresholds", "report minimal equivalence thresholds");
  add_common(thresholds, opt);

  auto* simulate = app.add_subcommand("simulate", "run a simulation study from a scenario file");
  simulate->add_option("--scenario", opt.scenario, "scenario file")->required();
  simulate->add_option("--seed", opt.seed, "override the scenario seed");
  simulate->add_option("-M,--replications", opt.replications, "override the replication count");
  simulate->add_option("--grid", opt.grid, "subsample fractions");
  simulate->add_option("--out", opt.out, "write the report to this file");
  simulate->add_option("--format", opt.format, "json or text");
  simulate->add_option("--threads", opt.threads, "worker threads");
  simulate->add_option("--w-reps", opt.w_reps, "Monte-Carlo paths for the W quantiles");
  simulate->add_option("--w-seed", opt.w_seed, "seed for the W quantiles");

  auto* wq = app.add_subcommand("wquantiles", "simulate and cache quantiles of W");
  wq->add_option("--grid", opt.grid, "subsample fractions");
  wq->add_option("--reps", opt.w_reps, "Monte-Carlo paths");
  wq->add_option("--seed", opt.w_seed, "random seed");
  wq->add_option("--levels", opt.levels, "comma-separated probability levels");
  wq->add_option("--alpha", opt.alpha, "significance level whose quantiles are added");
  wq->add_option("--out", opt.out, "table path (default: the cache directory)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(std::move(rev));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (opt.threads < 0) throw ValidationError("--threads must be non-negative");
    if (opt.threads > 0) omp_set_num_threads(opt.threads);
    if (test->parsed()) return cmd_test(opt, true, out);
    if (thresholds->parsed()) return cmd_test(opt, false, out);
    if (simulate->parsed()) return cmd_simulate(opt, out);
    return cmd_wquantiles(opt, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const RankError& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const NonMonotoneError& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace eqtrend::cli
