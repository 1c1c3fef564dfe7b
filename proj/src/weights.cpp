#include "esk/weights.hpp"

#include <algorithm>
#include <limits>

namespace esk {

double WeightDecomposition::weight_at(int cohort, int rel) const {
  for (const auto& c : cells) {
    if (c.cohort == cohort && c.rel == rel) return c.weight;
  }
  return 0.0;
}

std::vector<const WeightCell*> WeightDecomposition::negative_cells() const {
  std::vector<const WeightCell*> out;
  for (const auto& c : cells) {
    if (c.negative) out.push_back(&c);
  }
  return out;
}

WeightDecomposition static_weights(const Panel& panel) {
  const int n = panel.n_units();
  const int T = panel.t_max();
  const auto layout = CohortLayout::from_panel(panel);
  const auto window = time_range(0, T);

  const DemeanedMatrix dd = demean_two_way(panel.treatment_matrix(), window);
  if (dd.values.cwiseAbs().maxCoeff() < 1e-12) {
    throw EstimationError(errc::no_treatment_variation,
                          "treatment indicator has no within variation");
  }
  const double denominator = dd.values.squaredNorm() / n;  // sum_t E_N[Ddot^2]

  WeightDecomposition out;
  out.is_static = true;
  out.denominator = denominator;
  out.n_units = n;
  out.estimation_times = window;

  for (std::size_t k = 0; k < layout.cohorts.size(); ++k) {
    const int e = layout.cohorts[k];
    const double p_e = static_cast<double>(layout.sizes[k]) / n;
    // Ddot is a function of the event time alone, so any unit in the cohort
    // carries the cohort's demeaned profile.
    int rep = -1;
    for (int i = 0; i < n; ++i) {
      if (panel.event_times[i] == e) {
        rep = i;
        break;
      }
    }
    for (int l = -e; l <= T - e; ++l) {
      const double w = p_e * dd.values(rep, e + l) / denominator;
      out.cells.push_back({e, l, w, w < 0.0});
      out.column_sums[l] += w;
    }
  }
  return out;
}

WeightDecomposition dynamic_weights(const Panel& panel, int target_rel,
                                    const DesignConfig& config) {
  DesignConfig cfg = config;
  cfg.mode = DesignConfig::Mode::dynamic;
  const auto design = build_design(panel, cfg);
  if (std::find(design.included_rel.begin(), design.included_rel.end(), target_rel) ==
      design.included_rel.end()) {
    throw EstimationError(errc::bad_config,
                          "target relative time " + std::to_string(target_rel) +
                              " is not an included indicator");
  }

  const int n = panel.n_units();
  const int w = static_cast<int>(design.estimation_times.size());
  const long n_obs = static_cast<long>(n) * w;
  const int k = design.n_columns();
  const auto window_index = time_range(0, w - 1);

  Eigen::MatrixXd xd(n_obs, k);
  for (int j = 0; j < k; ++j) {
    const DemeanedMatrix dm = demean_two_way(design.column_matrix(j), window_index);
    xd.col(j) = Eigen::Map<const Eigen::VectorXd>(dm.values.data(), n_obs);
  }

  // Every observed cohort-time cell gets an auxiliary regression; the
  // factorization of the design is shared across all of them.
  const auto layout = CohortLayout::from_panel(panel);
  std::vector<std::pair<int, int>> cell_ids;
  for (std::size_t idx = 0; idx < layout.cohorts.size(); ++idx) {
    const int e = layout.cohorts[idx];
    for (int t : design.estimation_times) cell_ids.emplace_back(e, t - e);
  }
  Eigen::MatrixXd responses(n_obs, static_cast<long>(cell_ids.size()));
  for (std::size_t c = 0; c < cell_ids.size(); ++c) {
    const auto [e, l] = cell_ids[c];
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, w);
    const int t = e + l;
    for (int i = 0; i < n; ++i) {
      if (panel.event_times[i] == e) b(i, t - design.estimation_times.front()) = 1.0;
    }
    const DemeanedMatrix dm = demean_two_way(b, window_index);
    responses.col(static_cast<long>(c)) = Eigen::Map<const Eigen::VectorXd>(dm.values.data(), n_obs);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xd);
  qr.setThreshold(1e-10);
  const Eigen::MatrixXd coefs = qr.solve(responses);  // k x n_cells

  int target_row = -1;
  for (int j = 0; j < k; ++j) {
    if (design.columns[j].rel == target_rel) target_row = j;
  }

  WeightDecomposition out;
  out.is_static = false;
  out.target_rel = target_rel;
  out.included_rel = design.included_rel;
  out.n_units = n;
  out.estimation_times = design.estimation_times;
  out.denominator = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < cell_ids.size(); ++c) {
    const auto [e, l] = cell_ids[c];
    const double weight = coefs(target_row, static_cast<long>(c));
    out.cells.push_back({e, l, weight, weight < 0.0});
    out.column_sums[l] += weight;
  }
  std::sort(out.cells.begin(), out.cells.end(), [](const WeightCell& a, const WeightCell& b) {
    return a.cohort != b.cohort ? a.cohort < b.cohort : a.rel < b.rel;
  });
  return out;
}

double reconstruct_fe(const WeightDecomposition& weights, const CattTable& catt) {
  if (weights.n_units != catt.fit.n_units ||
      weights.estimation_times != catt.estimation_times) {
    throw EstimationError(errc::sample_mismatch,
                          "weights and cell estimates come from different samples");
  }
  double total = 0.0;
  for (const auto& cell : catt.cells) {
    if (cell.status == CellStatus::unidentified) continue;
    total += weights.weight_at(cell.cohort, cell.rel) * cell.estimate;
  }
  return total;
}

}  // namespace esk
