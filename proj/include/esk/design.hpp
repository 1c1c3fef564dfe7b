#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "esk/panel.hpp"

namespace esk {

// Result of the two-way within transform X - Xbar_i. - Xbar_.t + Xbar over a
// set of estimation times. Column w of `values` corresponds to times[w].
struct DemeanedMatrix {
  Eigen::MatrixXd values;      // N x W
  Eigen::VectorXd unit_means;  // N
  Eigen::VectorXd time_means;  // W
  double grand_mean = 0.0;
  std::vector<int> times;
};

DemeanedMatrix demean_two_way(const Eigen::MatrixXd& matrix, const std::vector<int>& times);

// Contiguous range helper: {t0, t0+1, ..., t1}.
std::vector<int> time_range(int t0, int t1);

struct DesignColumn {
  enum class Kind { treatment, relative_time, interaction };
  Kind kind;
  int rel = 0;     // l, for relative_time and interaction columns
  int cohort = 0;  // e, for interaction columns
  std::string label;
};

struct DesignConfig {
  enum class Mode { fixed_effects_static, dynamic, saturated };
  Mode mode = Mode::dynamic;

  // Dynamic mode: either an explicit set of relative times, or a
  // leads/lags range. When neither is given, all observable relative times
  // are included except l = -1 and the most negative lead.
  std::optional<std::vector<int>> include_rel;
  std::optional<int> leads;  // include l in [-leads, lags]
  std::optional<int> lags;
  std::vector<int> exclude_rel;  // removed from the included set

  // Estimation window [first, last] in normalized time. Defaults: 0..T for
  // static/dynamic, 0..T-1 for saturated (the last period is dropped because
  // its cohort-time cells have no not-yet-treated comparison).
  std::optional<std::pair<int, int>> window;
};

// Indicator design over an estimation window, ready for within-OLS. The
// design stores its own copy of the event times so it stays valid and
// immutable independently of the panel it was built from.
struct RelativeTimeDesign {
  DesignConfig::Mode mode = DesignConfig::Mode::dynamic;
  std::vector<int> estimation_times;
  std::vector<DesignColumn> columns;    // retained, in deterministic order
  std::vector<int> included_rel;        // dynamic designs
  std::vector<int> excluded_rel;        // observable l values not included
  std::vector<DesignColumn> pruned;     // empty-cell columns dropped, with warning
  int n_units = 0;
  int t_max = 0;
  std::vector<int> event_times;

  int n_columns() const { return static_cast<int>(columns.size()); }
  // Raw 0/1 indicator for column j, N x W over the estimation window.
  Eigen::MatrixXd column_matrix(int j) const;
  std::vector<std::string> labels() const;
};

RelativeTimeDesign build_design(const Panel& panel, const DesignConfig& config);

// Indices of columns that are linearly dependent on earlier columns
// (relative tolerance on the residual norm). Later columns are dropped
// first, so the report is deterministic.
std::vector<int> dependent_columns(const Eigen::MatrixXd& x, double tol = 1e-10);

}  // namespace esk
