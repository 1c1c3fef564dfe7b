#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "esk/error.hpp"

namespace esk {

// Event time of units that are never treated within the panel.
inline constexpr int kNever = std::numeric_limits<int>::max();

// A balanced unit-by-time panel. Times are normalized to 0..T; the original
// time labels are kept for output. Units are sorted by id, so construction is
// deterministic. Immutable after construction.
struct Panel {
  std::vector<std::string> unit_ids;  // length N, sorted
  std::vector<int> raw_times;        // length T+1, sorted original labels
  Eigen::MatrixXd outcomes;          // N x (T+1)
  std::vector<int> event_times;      // length N; 1..T or kNever

  int n_units() const { return static_cast<int>(unit_ids.size()); }
  int t_max() const { return static_cast<int>(raw_times.size()) - 1; }

  bool treated(int i, int t) const {
    return event_times[i] != kNever && t >= event_times[i];
  }

  // Treatment-status indicator matrix D, N x (T+1).
  Eigen::MatrixXd treatment_matrix() const;

  // Checks balance, event-time range, and shape; throws DataError.
  void validate() const;
};

// Cohort structure: sorted distinct finite event times with counts.
struct CohortLayout {
  std::vector<int> cohorts;  // sorted distinct finite event times
  std::vector<int> sizes;    // N_e, aligned with cohorts
  int never_treated_size = 0;
  int t_max = 0;

  static CohortLayout from_panel(const Panel& panel);

  int size_of(int cohort) const;
  bool has(int cohort) const;
  // Observable relative times for a cohort: [-e, T-e].
  std::pair<int, int> relative_time_range(int cohort) const;
};

// Column-name map for CSV ingestion.
struct PanelSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::string event = "event_time";
};

// Reads a long-format CSV (one row per unit-time cell) into a balanced
// Panel. Never-treated units carry an empty event field or the literal
// "inf". Throws DataError naming the offending cell.
Panel load_panel(std::istream& in, const PanelSchema& schema = {});
Panel load_panel_file(const std::string& path, const PanelSchema& schema = {});

// Same parse, additionally extracting named numeric columns (covariates)
// aligned to the unit-by-time grid.
Panel load_panel(std::istream& in, const PanelSchema& schema,
                 const std::vector<std::string>& extra_columns,
                 std::vector<Eigen::MatrixXd>& extra_out);

// Builds a panel directly from arrays; used by simulators and tests.
// outcomes is N x (T+1); event_times holds 1..T or kNever.
Panel make_panel(Eigen::MatrixXd outcomes, std::vector<int> event_times);

}  // namespace esk
