#include "esk/panel.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace esk {

const char* errc_name(errc code) {
  switch (code) {
    case errc::missing_cell: return "MissingCell";
    case errc::duplicate_cell: return "DuplicateCell";
    case errc::event_time_out_of_range: return "EventTimeOutOfRange";
    case errc::non_numeric_outcome: return "NonNumericOutcome";
    case errc::inconsistent_event_time: return "InconsistentEventTime";
    case errc::bad_config: return "BadConfig";
    case errc::rank_deficient_design: return "RankDeficientDesign";
    case errc::no_treatment_variation: return "NoTreatmentVariation";
    case errc::singular_bread: return "SingularBread";
    case errc::sample_mismatch: return "SampleMismatch";
    case errc::singular_restriction_covariance: return "SingularRestrictionCovariance";
    case errc::no_lead_coefficients: return "NoLeadCoefficients";
    case errc::empty_control_set: return "EmptyControlSet";
    case errc::invalid_base_period: return "InvalidBasePeriod";
    case errc::not_yet_treated_violated: return "NotYetTreatedViolated";
    case errc::empty_cohort: return "EmptyCohort";
    case errc::no_estimable_cells: return "NoEstimableCells";
    case errc::overlap_violation: return "OverlapViolation";
    case errc::fold_degenerate: return "FoldDegenerate";
  }
  return "UnknownError";
}

Eigen::MatrixXd Panel::treatment_matrix() const {
  const int n = n_units();
  const int T = t_max();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, T + 1);
  for (int i = 0; i < n; ++i) {
    if (event_times[i] == kNever) continue;
    for (int t = event_times[i]; t <= T; ++t) d(i, t) = 1.0;
  }
  return d;
}

void Panel::validate() const {
  const int n = n_units();
  const int T = t_max();
  if (n == 0 || T < 1) {
    throw DataError(errc::bad_config, "panel needs >=1 unit and >=2 periods");
  }
  if (outcomes.rows() != n || outcomes.cols() != T + 1) {
    throw DataError(errc::missing_cell, "outcome matrix does not match unit/time grid");
  }
  if (static_cast<int>(event_times.size()) != n) {
    throw DataError(errc::bad_config, "event_times length must equal unit count");
  }
  for (int i = 0; i < n; ++i) {
    const int e = event_times[i];
    if (e != kNever && (e < 1 || e > T)) {
      throw DataError(errc::event_time_out_of_range,
                      "unit " + unit_ids[i] + " has event time outside 1.." + std::to_string(T));
    }
  }
  for (int t = 1; t <= T; ++t) {
    if (raw_times[t] <= raw_times[t - 1]) {
      throw DataError(errc::bad_config, "time labels must be strictly increasing");
    }
  }
}

CohortLayout CohortLayout::from_panel(const Panel& panel) {
  std::map<int, int> counts;
  int never = 0;
  for (int e : panel.event_times) {
    if (e == kNever) {
      ++never;
    } else {
      ++counts[e];
    }
  }
  CohortLayout layout;
  layout.never_treated_size = never;
  layout.t_max = panel.t_max();
  for (const auto& [e, n] : counts) {
    layout.cohorts.push_back(e);
    layout.sizes.push_back(n);
  }
  return layout;
}

int CohortLayout::size_of(int cohort) const {
  auto it = std::lower_bound(cohorts.begin(), cohorts.end(), cohort);
  if (it == cohorts.end() || *it != cohort) return 0;
  return sizes[static_cast<std::size_t>(it - cohorts.begin())];
}

bool CohortLayout::has(int cohort) const { return size_of(cohort) > 0; }

std::pair<int, int> CohortLayout::relative_time_range(int cohort) const {
  return {-cohort, t_max - cohort};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

bool parse_int(const std::string& s, long long& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

bool is_never_token(const std::string& s) {
  std::string t = trim(s);
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return t.empty() || t == "inf";
}

struct RawRow {
  std::string unit;
  long long time;
  double outcome;
  bool never;
  long long event;  // valid when !never
  std::vector<double> extra;
};

}  // namespace

Panel load_panel(std::istream& in, const PanelSchema& schema) {
  std::vector<Eigen::MatrixXd> unused;
  return load_panel(in, schema, {}, unused);
}

Panel load_panel(std::istream& in, const PanelSchema& schema,
                 const std::vector<std::string>& extra_columns,
                 std::vector<Eigen::MatrixXd>& extra_out) {
  std::string header;
  if (!std::getline(in, header)) {
    throw DataError(errc::bad_config, "empty input, expected a CSV header row");
  }
  const auto names = split_csv_line(header);
  int c_unit = -1, c_time = -1, c_out = -1, c_event = -1;
  std::vector<int> c_extra(extra_columns.size(), -1);
  for (int j = 0; j < static_cast<int>(names.size()); ++j) {
    const std::string name = trim(names[j]);
    if (name == schema.unit) c_unit = j;
    if (name == schema.time) c_time = j;
    if (name == schema.outcome) c_out = j;
    if (name == schema.event) c_event = j;
    for (std::size_t q = 0; q < extra_columns.size(); ++q) {
      if (name == extra_columns[q]) c_extra[q] = j;
    }
  }
  if (c_unit < 0 || c_time < 0 || c_out < 0 || c_event < 0) {
    throw DataError(errc::bad_config,
                    "header must contain columns '" + schema.unit + "', '" + schema.time +
                        "', '" + schema.outcome + "', '" + schema.event + "'");
  }
  for (std::size_t q = 0; q < extra_columns.size(); ++q) {
    if (c_extra[q] < 0) {
      throw DataError(errc::bad_config, "header is missing column '" + extra_columns[q] + "'");
    }
  }

  std::vector<RawRow> rows;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const int needed = std::max(std::max(c_unit, c_time), std::max(c_out, c_event));
    if (static_cast<int>(fields.size()) <= needed) {
      throw DataError(errc::bad_config, "line " + std::to_string(lineno) + " has too few fields");
    }
    RawRow row;
    row.unit = trim(fields[c_unit]);
    if (row.unit.empty()) {
      throw DataError(errc::bad_config, "line " + std::to_string(lineno) + " has an empty unit id");
    }
    if (!parse_int(fields[c_time], row.time)) {
      throw DataError(errc::bad_config,
                      "line " + std::to_string(lineno) + " has a non-integer time");
    }
    if (!parse_double(fields[c_out], row.outcome)) {
      throw DataError(errc::non_numeric_outcome,
                      "line " + std::to_string(lineno) + " (unit " + row.unit + ", time " +
                          std::to_string(row.time) + ")");
    }
    row.never = is_never_token(fields[c_event]);
    if (!row.never && !parse_int(fields[c_event], row.event)) {
      throw DataError(errc::event_time_out_of_range,
                      "line " + std::to_string(lineno) + " has an unparsable event time");
    }
    row.extra.resize(extra_columns.size());
    for (std::size_t q = 0; q < extra_columns.size(); ++q) {
      if (static_cast<int>(fields.size()) <= c_extra[q] ||
          !parse_double(fields[c_extra[q]], row.extra[q])) {
        throw DataError(errc::non_numeric_outcome,
                        "line " + std::to_string(lineno) + ", column '" + extra_columns[q] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(errc::bad_config, "no data rows");

  std::set<std::string> unit_set;
  std::set<long long> time_set;
  for (const auto& r : rows) {
    unit_set.insert(r.unit);
    time_set.insert(r.time);
  }
  std::vector<std::string> units(unit_set.begin(), unit_set.end());
  std::vector<long long> times(time_set.begin(), time_set.end());
  std::map<std::string, int> unit_index;
  std::map<long long, int> time_index;
  for (int i = 0; i < static_cast<int>(units.size()); ++i) unit_index[units[i]] = i;
  for (int t = 0; t < static_cast<int>(times.size()); ++t) time_index[times[t]] = t;

  const int n = static_cast<int>(units.size());
  const int n_periods = static_cast<int>(times.size());
  if (n_periods < 2) throw DataError(errc::bad_config, "panel needs >=2 time periods");

  Eigen::MatrixXd y(n, n_periods);
  extra_out.assign(extra_columns.size(), Eigen::MatrixXd::Zero(n, n_periods));
  std::vector<char> seen(static_cast<std::size_t>(n) * n_periods, 0);
  // kNever - 1 marks "no event row seen yet" for this unit.
  std::vector<long long> raw_event(n, std::numeric_limits<long long>::min());
  std::vector<char> never_flag(n, 0);
  std::vector<char> event_seen(n, 0);

  for (const auto& r : rows) {
    const int i = unit_index[r.unit];
    const int t = time_index[r.time];
    const std::size_t cell = static_cast<std::size_t>(i) * n_periods + t;
    if (seen[cell]) {
      throw DataError(errc::duplicate_cell,
                      "unit " + r.unit + ", time " + std::to_string(r.time));
    }
    seen[cell] = 1;
    y(i, t) = r.outcome;
    for (std::size_t q = 0; q < r.extra.size(); ++q) extra_out[q](i, t) = r.extra[q];
    if (event_seen[i]) {
      const bool same = r.never ? never_flag[i] : (!never_flag[i] && raw_event[i] == r.event);
      if (!same) {
        throw DataError(errc::inconsistent_event_time, "unit " + r.unit);
      }
    } else {
      event_seen[i] = 1;
      never_flag[i] = r.never ? 1 : 0;
      if (!r.never) raw_event[i] = r.event;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < n_periods; ++t) {
      if (!seen[static_cast<std::size_t>(i) * n_periods + t]) {
        throw DataError(errc::missing_cell,
                        "unit " + units[i] + ", time " + std::to_string(times[t]));
      }
    }
  }

  Panel panel;
  panel.unit_ids = std::move(units);
  panel.raw_times.assign(times.begin(), times.end());
  panel.outcomes = std::move(y);
  panel.event_times.resize(n);
  const int T = n_periods - 1;
  for (int i = 0; i < n; ++i) {
    if (never_flag[i]) {
      panel.event_times[i] = kNever;
      continue;
    }
    auto it = time_index.find(raw_event[i]);
    if (it == time_index.end() || it->second < 1 || it->second > T) {
      throw DataError(errc::event_time_out_of_range,
                      "unit " + panel.unit_ids[i] + " has event time " +
                          std::to_string(raw_event[i]) +
                          "; must be one of the observed periods after the first");
    }
    panel.event_times[i] = it->second;
  }
  panel.validate();
  return panel;
}

Panel load_panel_file(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(errc::bad_config, "cannot open input file " + path);
  return load_panel(in, schema);
}

Panel make_panel(Eigen::MatrixXd outcomes, std::vector<int> event_times) {
  Panel panel;
  const int n = static_cast<int>(outcomes.rows());
  const int n_periods = static_cast<int>(outcomes.cols());
  panel.unit_ids.reserve(n);
  char buf[16];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "u%06d", i + 1);
    panel.unit_ids.emplace_back(buf);
  }
  panel.raw_times.resize(n_periods);
  for (int t = 0; t < n_periods; ++t) panel.raw_times[t] = t;
  panel.outcomes = std::move(outcomes);
  panel.event_times = std::move(event_times);
  panel.validate();
  return panel;
}

}  // namespace esk
