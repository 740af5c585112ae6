// Scenario files for the simulation study.

#include "eqtrend/errors.hpp"
#include "eqtrend/simulate.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace eqtrend {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": '" + v + "' is not a number");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": '" + v + "' is not an integer");
  return x;
}

std::pair<std::string, double> tagged(const std::string& key, const std::string& v) {
  const auto colon = v.find(':');
  if (colon == std::string::npos) return {v, 0.0};
  return {v.substr(0, colon), to_double(key, v.substr(colon + 1))};
}

void apply(SimulationScenario& s, const std::string& key, const std::string& v) {
  if (key == "name") {
    s.name = v;
  } else if (key == "n") {
    s.n = static_cast<int>(to_int(key, v));
  } else if (key == "T") {
    s.T = static_cast<int>(to_int(key, v));
  } else if (key == "M") {
    s.M = static_cast<int>(to_int(key, v));
  } else if (key == "seed") {
    s.seed = static_cast<std::uint64_t>(to_int(key, v));
  } else if (key == "alpha") {
    s.alpha = to_double(key, v);
  } else if (key == "delta") {
    s.delta = to_double(key, v);
  } else if (key == "tau") {
    s.tau = to_double(key, v);
  } else if (key == "zeta") {
    s.zeta = to_double(key, v);
  } else if (key == "threshold") {
    s.delta = s.tau = s.zeta = to_double(key, v);
  } else if (key == "B") {
    s.bootstrap_b = static_cast<std::size_t>(to_int(key, v));
  } else if (key == "pi_att") {
    s.pi_att = to_double(key, v);
  } else if (key == "grid") {
    s.grid.clear();
    for (const auto& w : words(v)) s.grid.push_back(to_double(key, w));
  } else if (key == "beta") {
    auto [kind, value] = tagged(key, v);
    if (kind == "zero") {
      s.beta_pattern = BetaPattern::Zero;
    } else if (kind == "all") {
      s.beta_pattern = BetaPattern::AllAt;
    } else if (kind == "first") {
      s.beta_pattern = BetaPattern::FirstAt;
    } else {
      throw ValidationError("beta: expected zero, all:<c> or first:<c>");
    }
    s.beta_value = value;
  } else if (key == "errors") {
    if (v == "iid") {
      s.errors = ErrorProcess::IidNormal;
    } else if (v == "ar3") {
      s.errors = ErrorProcess::Ar3;
    } else {
      throw ValidationError("errors: expected iid or ar3");
    }
  } else if (key == "phi") {
    const auto w = words(v);
    if (w.size() != 3) throw ValidationError("phi: expected three coefficients");
    for (std::size_t k = 0; k < 3; ++k) s.phi[k] = to_double(key, w[k]);
  } else if (key == "violation") {
    auto [kind, value] = tagged(key, v);
    if (kind == "none") {
      s.violation = Violation::None;
    } else if (kind == "ashenfelter") {
      s.violation = Violation::Ashenfelter;
    } else if (kind == "trend") {
      s.violation = Violation::LinearTrend;
    } else {
      throw ValidationError("violation: expected none, ashenfelter:<mu> or trend:<psi>");
    }
    s.violation_param = value;
  } else if (key == "tests") {
    s.tests.clear();
    for (const auto& w : words(v)) s.tests.push_back(parse_test_kind(w));
  } else if (key == "minimal_thresholds") {
    if (v != "true" && v != "false") throw ValidationError("minimal_thresholds: expected true or false");
    s.minimal_thresholds = v == "true";
  } else {
    throw ValidationError("unknown scenario key '" + key + "'");
  }
}

using Entries = std::vector<std::pair<std::string, std::string>>;

void expand(const std::string& name, const Entries& entries, std::size_t pos, SimulationScenario current,
            std::string suffix, std::vector<SimulationScenario>& out) {
  if (pos == entries.size()) {
    current.name = suffix.empty() ? name : name + " [" + suffix + "]";
    validate(current);
    out.push_back(std::move(current));
    return;
  }
  const auto& [key, value] = entries[pos];
  const auto options = key == "name" ? std::vector<std::string>{value} : split(value, ',');
  if (options.empty()) throw ValidationError("empty value for '" + key + "'");
  for (const auto& opt : options) {
    SimulationScenario next = current;
    apply(next, key, opt);
    std::string tag = suffix;
    if (options.size() > 1) tag += (tag.empty() ? "" : ", ") + key + "=" + opt;
    expand(name, entries, pos + 1, next, tag, out);
  }
}

}  // namespace

std::vector<SimulationScenario> parse_scenarios(std::istream& in) {
  Entries globals;
  std::vector<std::pair<std::string, Entries>> sections;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError("line " + std::to_string(line_no) + ": unterminated section");
      sections.emplace_back(trim(line.substr(1, line.size() - 2)), Entries{});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("line " + std::to_string(line_no) + ": expected key = value");
    auto entry = std::make_pair(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    (sections.empty() ? globals : sections.back().second).push_back(std::move(entry));
  }

  std::vector<SimulationScenario> out;
  if (sections.empty()) sections.emplace_back("", Entries{});
  for (auto& [name, entries] : sections) {
    Entries all = globals;
    all.insert(all.end(), entries.begin(), entries.end());
    std::string base = name;
    for (const auto& [k, v] : (name.empty() ? globals : entries))
      if (k == "name") base = v;
    if (base.empty()) base = "scenario";
    expand(base, all, 0, SimulationScenario{}, "", out);
  }
  return out;
}

std::vector<SimulationScenario> load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_scenarios(in);
}

}  // namespace eqtrend
