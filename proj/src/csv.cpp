// Long-format CSV ingestion for canonical and staggered panels.

#include "eqtrend/errors.hpp"
#include "eqtrend/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace eqtrend {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

long long parse_int(std::string_view s, std::size_t line_no, std::string_view what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("line " + std::to_string(line_no) + ": " + std::string(what) + " '" + std::string(s) +
                          "' is not an integer");
  return v;
}

double parse_double(std::string_view s, std::size_t line_no, std::string_view what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ValidationError("line " + std::to_string(line_no) + ": " + std::string(what) + " '" + std::string(s) +
                          "' is not a finite number");
  return v;
}

bool is_never(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "inf" || lower == "never";
}

struct Row {
  long long unit;
  long long time;
  double outcome;
  long long group_or_cohort;  // cohort: LLONG_MAX for never treated
  std::vector<double> x;
};

constexpr long long kNeverLabel = std::numeric_limits<long long>::max();

}  // namespace

CsvSchema parse_schema(const std::string& mapping) {
  CsvSchema schema;
  bool group_set = false;
  for (auto item : split(mapping, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ValidationError("schema entry '" + std::string(item) + "' lacks '='");
    const std::string key(trim(item.substr(0, eq)));
    const std::string value(trim(item.substr(eq + 1)));
    if (key == "unit") {
      schema.unit = value;
    } else if (key == "time") {
      schema.time = value;
    } else if (key == "outcome") {
      schema.outcome = value;
    } else if (key == "group") {
      schema.group = value;
      group_set = true;
    } else if (key == "cohort") {
      schema.cohort = value;
    } else if (key == "x" || key == "covariates") {
      for (auto c : split(value, ';'))
        if (!c.empty()) schema.covariates.emplace_back(c);
    } else if (key == "base") {
      schema.base_time = parse_int(value, 0, "base period");
    } else {
      throw ValidationError("unknown schema key '" + key + "'");
    }
  }
  if (group_set && schema.staggered()) throw ValidationError("schema cannot map both group and cohort");
  return schema;
}

PanelDataset load_panel(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split(line, ',');
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), std::string_view(name));
    if (it == header.end()) throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_unit = column(schema.unit);
  const std::size_t c_time = column(schema.time);
  const std::size_t c_out = column(schema.outcome);
  const std::size_t c_grp = column(schema.staggered() ? schema.cohort : schema.group);
  std::vector<std::size_t> c_x;
  for (const auto& name : schema.covariates) c_x.push_back(column(name));
  if (!schema.staggered() && !c_x.empty()) throw ValidationError("covariates are supported for staggered panels only");

  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(f.size()));
    Row r;
    r.unit = parse_int(f[c_unit], line_no, "unit");
    r.time = parse_int(f[c_time], line_no, "time");
    r.outcome = parse_double(f[c_out], line_no, "outcome");
    if (schema.staggered()) {
      r.group_or_cohort = is_never(f[c_grp]) ? kNeverLabel : parse_int(f[c_grp], line_no, "cohort");
    } else {
      r.group_or_cohort = parse_int(f[c_grp], line_no, "group");
      if (r.group_or_cohort != 0 && r.group_or_cohort != 1)
        throw ValidationError("line " + std::to_string(line_no) + ": group must be 0 or 1, got " +
                              std::string(f[c_grp]));
    }
    for (auto c : c_x) r.x.push_back(parse_double(f[c], line_no, "covariate"));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError("no data rows");

  std::vector<long long> units, times;
  for (const auto& r : rows) {
    units.push_back(r.unit);
    times.push_back(r.time);
  }
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::unordered_map<long long, int> unit_idx, time_idx;
  for (std::size_t i = 0; i < units.size(); ++i) unit_idx[units[i]] = static_cast<int>(i);
  for (std::size_t t = 0; t < times.size(); ++t) time_idx[times[t]] = static_cast<int>(t);

  const auto n = static_cast<Eigen::Index>(units.size());
  const auto periods = static_cast<Eigen::Index>(times.size());
  PanelDataset ds;
  ds.outcomes = Eigen::MatrixXd::Constant(n, periods, std::numeric_limits<double>::quiet_NaN());
  ds.unit_labels = units;
  ds.time_labels = times;
  std::vector<long long> attr(units.size(), std::numeric_limits<long long>::min());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(c_x.size()));
  std::vector<bool> seen(units.size(), false);

  for (const auto& r : rows) {
    const int i = unit_idx[r.unit];
    const int t = time_idx[r.time];
    if (!std::isnan(ds.outcomes(i, t)))
      throw ValidationError("duplicate row: unit " + std::to_string(r.unit) + " time " + std::to_string(r.time));
    ds.outcomes(i, t) = r.outcome;
    if (!seen[static_cast<std::size_t>(i)]) {
      seen[static_cast<std::size_t>(i)] = true;
      attr[static_cast<std::size_t>(i)] = r.group_or_cohort;
      for (std::size_t k = 0; k < r.x.size(); ++k) x(i, static_cast<Eigen::Index>(k)) = r.x[k];
    } else {
      if (attr[static_cast<std::size_t>(i)] != r.group_or_cohort)
        throw ValidationError(std::string(schema.staggered() ? "cohort" : "group") + " varies over time for unit " +
                              std::to_string(r.unit));
      for (std::size_t k = 0; k < r.x.size(); ++k)
        if (x(i, static_cast<Eigen::Index>(k)) != r.x[k])
          throw ValidationError("time-varying covariate '" + schema.covariates[k] + "' for unit " +
                                std::to_string(r.unit));
    }
  }

  std::ostringstream missing;
  int n_missing = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < periods; ++t)
      if (std::isnan(ds.outcomes(i, t))) {
        if (n_missing < 10)
          missing << (n_missing ? "; " : "") << "unit " << units[static_cast<std::size_t>(i)] << " missing time "
                  << times[static_cast<std::size_t>(t)];
        ++n_missing;
      }
  if (n_missing > 0) {
    if (n_missing > 10) missing << "; ... (" << n_missing << " cells missing)";
    throw ValidationError("unbalanced: " + missing.str());
  }

  if (schema.staggered()) {
    int first_adoption = kNeverTreated;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (attr[i] == kNeverLabel) {
        ds.cohort.push_back(kNeverTreated);
        continue;
      }
      auto it = time_idx.find(attr[i]);
      if (it == time_idx.end())
        throw ValidationError("unknown cohort label " + std::to_string(attr[i]) + " for unit " +
                              std::to_string(units[i]));
      ds.cohort.push_back(it->second + 1);
      first_adoption = std::min(first_adoption, it->second + 1);
    }
    if (first_adoption == kNeverTreated) throw ValidationError("no treated cohort");
    ds.base_period = first_adoption - 1;
    if (schema.base_time && *schema.base_time != times[static_cast<std::size_t>(ds.base_period - 1)])
      throw ValidationError("base period must be the period before the first adoption");
    ds.covariates = std::move(x);
    ds.covariate_names = schema.covariates;
  } else {
    for (auto g : attr) ds.group.push_back(static_cast<int>(g));
    if (schema.base_time) {
      auto it = time_idx.find(*schema.base_time);
      if (it == time_idx.end()) throw ValidationError("unknown base period " + std::to_string(*schema.base_time));
      ds.base_period = it->second + 1;
    } else {
      ds.base_period = static_cast<int>(periods);
    }
  }
  validate(ds);
  return ds;
}

PanelDataset load_panel_file(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_panel(in, schema);
}

}  // namespace eqtrend
