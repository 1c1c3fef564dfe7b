#include "esk/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace esk {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string cell_label(int e, int l) {
  return "delta[" + std::to_string(e) + "," + std::to_string(l) + "]";
}

}  // namespace

const CattCell* CattTable::find(int cohort, int rel) const {
  for (const auto& c : cells) {
    if (c.cohort == cohort && c.rel == rel) return &c;
  }
  return nullptr;
}

std::vector<const CattCell*> CattTable::estimated_at(int rel) const {
  std::vector<const CattCell*> out;
  for (const auto& c : cells) {
    if (c.rel == rel && c.status == CellStatus::estimated) out.push_back(&c);
  }
  return out;
}

double IWResult::nu_at(int rel) const {
  for (std::size_t k = 0; k < rel_times.size(); ++k) {
    if (rel_times[k] == rel) return nu[k];
  }
  throw EstimationError(errc::no_estimable_cells,
                        "no aggregate at relative time " + std::to_string(rel));
}

EstimateSet static_fe(const Panel& panel, const RegressionOptions& options) {
  DesignConfig config;
  config.mode = DesignConfig::Mode::fixed_effects_static;
  // The demeaned treatment column is identically zero when no unit (or every
  // unit in lockstep) changes status inside the window.
  const DemeanedMatrix dd =
      demean_two_way(panel.treatment_matrix(), time_range(0, panel.t_max()));
  if (dd.values.cwiseAbs().maxCoeff() < 1e-12) {
    throw EstimationError(errc::no_treatment_variation,
                          "treatment indicator has no within variation");
  }
  return within_ols(panel, build_design(panel, config), options);
}

EstimateSet dynamic_fe(const Panel& panel, const DesignConfig& config,
                       const RegressionOptions& options) {
  DesignConfig cfg = config;
  cfg.mode = DesignConfig::Mode::dynamic;
  return within_ols(panel, build_design(panel, cfg), options);
}

CattTable saturated_catt(const Panel& panel, std::optional<std::pair<int, int>> window,
                         const RegressionOptions& options) {
  DesignConfig config;
  config.mode = DesignConfig::Mode::saturated;
  config.window = window;
  const auto design = build_design(panel, config);
  const auto layout = CohortLayout::from_panel(panel);
  const int T = panel.t_max();

  CattTable table;
  table.fit = within_ols(panel, design, options);
  table.t_max = T;
  table.estimation_times = design.estimation_times;
  {
    std::ostringstream spec;
    spec << "s=0, C={" << T;
    if (layout.never_treated_size > 0) spec << ", never";
    spec << "}";
    table.control_spec = spec.str();
  }

  const int t_last = design.estimation_times.back();
  for (std::size_t k = 0; k < layout.cohorts.size(); ++k) {
    const int e = layout.cohorts[k];
    if (e > T - 1) {
      // comparison cohort: every observed cell is a normalization
      for (int t = 0; t <= t_last; ++t) {
        table.cells.push_back({e, t - e, 0.0, kNaN, CellStatus::normalized_zero});
      }
      continue;
    }
    // base period t=0 carries the cohort normalization
    table.cells.push_back({e, -e, 0.0, kNaN, CellStatus::normalized_zero});
    for (int l = 1 - e; l <= T - e; ++l) {
      const int t = e + l;
      if (t > t_last) {
        table.cells.push_back({e, l, kNaN, kNaN, CellStatus::unidentified});
        continue;
      }
      const int j = table.fit.find(cell_label(e, l));
      if (j >= 0) {
        table.cells.push_back(
            {e, l, table.fit.coefficients(j), table.fit.std_error(j), CellStatus::estimated});
      }
    }
  }
  std::sort(table.cells.begin(), table.cells.end(), [](const CattCell& a, const CattCell& b) {
    return a.cohort != b.cohort ? a.cohort < b.cohort : a.rel < b.rel;
  });
  return table;
}

DidEstimate did_catt(const Panel& panel, int cohort, int rel, int base_period,
                     const std::set<int>& control_cohorts) {
  const int T = panel.t_max();
  const int t = cohort + rel;
  if (base_period >= cohort || base_period < 0) {
    throw EstimationError(errc::invalid_base_period,
                          "base period must satisfy 0 <= s < e");
  }
  if (t < 0 || t > T) {
    throw EstimationError(errc::invalid_base_period,
                          "e+l outside the observed periods");
  }
  if (control_cohorts.empty()) {
    throw EstimationError(errc::empty_control_set, "control cohort set is empty");
  }
  for (int c : control_cohorts) {
    if (c != kNever && c <= t) {
      throw EstimationError(errc::not_yet_treated_violated,
                            "control cohort " + std::to_string(c) +
                                " is already treated by t=" + std::to_string(t));
    }
  }

  double sum_tr = 0.0, sumsq_tr = 0.0;
  double sum_ct = 0.0, sumsq_ct = 0.0;
  int n_tr = 0, n_ct = 0;
  for (int i = 0; i < panel.n_units(); ++i) {
    const double change = panel.outcomes(i, t) - panel.outcomes(i, base_period);
    if (panel.event_times[i] == cohort) {
      sum_tr += change;
      sumsq_tr += change * change;
      ++n_tr;
    } else if (control_cohorts.count(panel.event_times[i])) {
      sum_ct += change;
      sumsq_ct += change * change;
      ++n_ct;
    }
  }
  if (n_tr == 0) {
    throw EstimationError(errc::empty_cohort, "no units in cohort " + std::to_string(cohort));
  }
  if (n_ct == 0) {
    throw EstimationError(errc::empty_control_set, "no units in the control cohorts");
  }

  DidEstimate out;
  out.n_treated = n_tr;
  out.n_control = n_ct;
  const double mean_tr = sum_tr / n_tr;
  const double mean_ct = sum_ct / n_ct;
  out.estimate = mean_tr - mean_ct;
  // independent two-sample comparison of unit-level changes
  const double var_tr = n_tr > 1 ? (sumsq_tr - n_tr * mean_tr * mean_tr) / (n_tr - 1) : kNaN;
  const double var_ct = n_ct > 1 ? (sumsq_ct - n_ct * mean_ct * mean_ct) / (n_ct - 1) : kNaN;
  out.std_error = std::sqrt(var_tr / n_tr + var_ct / n_ct);
  return out;
}

IWResult iw_dynamic(const CattTable& catt, const CohortLayout& layout,
                    const std::optional<std::vector<int>>& rel_times) {
  std::vector<int> targets;
  if (rel_times) {
    targets = *rel_times;
  } else {
    std::set<int> seen;
    for (const auto& c : catt.cells) {
      if (c.status == CellStatus::estimated) seen.insert(c.rel);
    }
    targets.assign(seen.begin(), seen.end());
  }

  const int k_cells = static_cast<int>(catt.fit.coefficients.size());
  IWResult out;
  out.f_cells = Eigen::MatrixXd::Zero(k_cells, static_cast<int>(targets.size()));
  for (std::size_t k = 0; k < layout.cohorts.size(); ++k) {
    if (layout.cohorts[k] <= catt.t_max - 1) {
      out.cohorts.push_back(layout.cohorts[k]);
      out.cohort_sizes.push_back(layout.sizes[k]);
    }
  }

  const int w = static_cast<int>(catt.estimation_times.size());
  for (std::size_t idx = 0; idx < targets.size(); ++idx) {
    const int l = targets[idx];
    const auto cells = catt.estimated_at(l);
    if (cells.empty()) {
      throw EstimationError(errc::no_estimable_cells,
                            "no estimated cells at relative time " + std::to_string(l));
    }
    // shares over the cohorts actually contributing an estimate at l
    double total = 0.0;
    for (const auto* c : cells) total += layout.size_of(c->cohort);
    Eigen::VectorXd weight_on_cells = Eigen::VectorXd::Zero(k_cells);
    Eigen::MatrixXd fl = Eigen::MatrixXd::Zero(w, static_cast<int>(out.cohorts.size()));
    double value = 0.0;
    for (const auto* c : cells) {
      const double share = layout.size_of(c->cohort) / total;
      value += share * c->estimate;
      const int j = catt.fit.find(cell_label(c->cohort, c->rel));
      weight_on_cells(j) = share;
      const int t = c->cohort + c->rel;
      const auto pos = std::find(out.cohorts.begin(), out.cohorts.end(), c->cohort);
      fl(t, static_cast<int>(pos - out.cohorts.begin())) = share;
    }
    out.rel_times.push_back(l);
    out.nu.push_back(value);
    out.nu_se.push_back(
        std::sqrt(weight_on_cells.dot(catt.fit.vcov * weight_on_cells)));
    out.f_hat[l] = fl;
    out.f_cells.col(static_cast<int>(idx)) = weight_on_cells;
  }
  return out;
}

DidEstimate iw_static(const CattTable& catt, const CohortLayout& layout) {
  const int k_cells = static_cast<int>(catt.fit.coefficients.size());
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(k_cells);
  double share_total = 0.0;
  std::vector<std::pair<int, std::vector<const CattCell*>>> per_cohort;
  for (std::size_t k = 0; k < layout.cohorts.size(); ++k) {
    const int e = layout.cohorts[k];
    if (e > catt.t_max - 1) continue;
    std::vector<const CattCell*> post;
    for (const auto& c : catt.cells) {
      if (c.cohort == e && c.rel >= 0 && c.status == CellStatus::estimated) post.push_back(&c);
    }
    if (!post.empty()) {
      per_cohort.emplace_back(e, std::move(post));
      share_total += layout.sizes[k];
    }
  }
  if (per_cohort.empty()) {
    throw EstimationError(errc::no_estimable_cells, "no estimated post-treatment cells");
  }
  double value = 0.0;
  for (const auto& [e, post] : per_cohort) {
    const double share = layout.size_of(e) / share_total;
    const double inner = 1.0 / static_cast<double>(post.size());
    for (const auto* c : post) {
      value += share * inner * c->estimate;
      weight(catt.fit.find(cell_label(c->cohort, c->rel))) += share * inner;
    }
  }
  DidEstimate out;
  out.estimate = value;
  out.std_error = std::sqrt(weight.dot(catt.fit.vcov * weight));
  return out;
}

namespace {

// Relative time encoded in a label of the form "mu[l]" or "delta[e,l]".
std::optional<int> label_rel_time(const std::string& label) {
  const auto open = label.find('[');
  const auto close = label.find(']');
  if (open == std::string::npos || close == std::string::npos || close < open) return {};
  std::string inner = label.substr(open + 1, close - open - 1);
  const auto comma = inner.find(',');
  if (comma != std::string::npos) inner = inner.substr(comma + 1);
  try {
    return std::stoi(inner);
  } catch (...) {
    return {};
  }
}

}  // namespace

WaldResult pretrend_test(const EstimateSet& fit) {
  std::vector<int> lead_idx;
  std::vector<std::string> lead_labels;
  for (int j = 0; j < static_cast<int>(fit.labels.size()); ++j) {
    const auto rel = label_rel_time(fit.labels[j]);
    if (rel && *rel < 0) {
      lead_idx.push_back(j);
      lead_labels.push_back(fit.labels[j]);
    }
  }
  if (lead_idx.empty()) {
    throw EstimationError(errc::no_lead_coefficients, "fit has no lead coefficients");
  }
  Eigen::MatrixXd restriction =
      Eigen::MatrixXd::Zero(static_cast<int>(lead_idx.size()), fit.coefficients.size());
  for (int r = 0; r < static_cast<int>(lead_idx.size()); ++r) restriction(r, lead_idx[r]) = 1.0;
  return wald_test(fit, restriction,
                   Eigen::VectorXd::Zero(static_cast<int>(lead_idx.size())),
                   std::move(lead_labels));
}

WaldResult pretrend_test(const CattTable& catt) { return pretrend_test(catt.fit); }

}  // namespace esk
