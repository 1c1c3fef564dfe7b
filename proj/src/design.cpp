#include "esk/design.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace esk {

std::vector<int> time_range(int t0, int t1) {
  std::vector<int> out;
  for (int t = t0; t <= t1; ++t) out.push_back(t);
  return out;
}

DemeanedMatrix demean_two_way(const Eigen::MatrixXd& matrix, const std::vector<int>& times) {
  const int n = static_cast<int>(matrix.rows());
  const int w = static_cast<int>(times.size());
  DemeanedMatrix out;
  out.times = times;
  Eigen::MatrixXd x(n, w);
  for (int j = 0; j < w; ++j) x.col(j) = matrix.col(times[j]);
  out.unit_means = x.rowwise().mean();
  out.time_means = x.colwise().mean();
  out.grand_mean = x.mean();
  out.values = x;
  out.values.colwise() -= out.unit_means;
  out.values.rowwise() -= out.time_means.transpose();
  out.values.array() += out.grand_mean;
  return out;
}

Eigen::MatrixXd RelativeTimeDesign::column_matrix(int j) const {
  const auto& col = columns[j];
  const int w = static_cast<int>(estimation_times.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_units, w);
  for (int i = 0; i < n_units; ++i) {
    const int e = event_times[i];
    if (e == kNever) continue;
    for (int k = 0; k < w; ++k) {
      const int t = estimation_times[k];
      switch (col.kind) {
        case DesignColumn::Kind::treatment:
          if (t >= e) m(i, k) = 1.0;
          break;
        case DesignColumn::Kind::relative_time:
          if (t - e == col.rel) m(i, k) = 1.0;
          break;
        case DesignColumn::Kind::interaction:
          if (e == col.cohort && t - e == col.rel) m(i, k) = 1.0;
          break;
      }
    }
  }
  return m;
}

std::vector<std::string> RelativeTimeDesign::labels() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.label);
  return out;
}

std::vector<int> dependent_columns(const Eigen::MatrixXd& x, double tol) {
  // Incremental Gram-Schmidt with re-orthogonalization. A column whose
  // residual against the span of the retained earlier columns falls below
  // tol * (its own norm) is flagged as dependent.
  std::vector<int> dependent;
  std::vector<Eigen::VectorXd> basis;
  for (int j = 0; j < x.cols(); ++j) {
    Eigen::VectorXd v = x.col(j);
    const double norm0 = v.norm();
    if (norm0 <= 0.0) {
      dependent.push_back(j);
      continue;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) v -= q.dot(v) * q;
    }
    if (v.norm() <= tol * norm0) {
      dependent.push_back(j);
    } else {
      basis.push_back(v / v.norm());
    }
  }
  return dependent;
}

namespace {

std::string rel_label(int l) { return "mu[" + std::to_string(l) + "]"; }

std::string cell_label(int e, int l) {
  return "delta[" + std::to_string(e) + "," + std::to_string(l) + "]";
}

// All relative times observable in the window across the panel's cohorts.
std::set<int> observable_rel_times(const CohortLayout& layout, const std::vector<int>& window) {
  std::set<int> out;
  for (std::size_t k = 0; k < layout.cohorts.size(); ++k) {
    const int e = layout.cohorts[k];
    for (int t : window) out.insert(t - e);
  }
  return out;
}

bool column_observed(const RelativeTimeDesign& design, const DesignColumn& col) {
  const int w = static_cast<int>(design.estimation_times.size());
  for (int i = 0; i < design.n_units; ++i) {
    const int e = design.event_times[i];
    if (e == kNever) continue;
    for (int k = 0; k < w; ++k) {
      const int t = design.estimation_times[k];
      switch (col.kind) {
        case DesignColumn::Kind::treatment:
          if (t >= e) return true;
          break;
        case DesignColumn::Kind::relative_time:
          if (t - e == col.rel) return true;
          break;
        case DesignColumn::Kind::interaction:
          if (e == col.cohort && t - e == col.rel) return true;
          break;
      }
    }
  }
  return false;
}

void check_rank(const RelativeTimeDesign& design) {
  const int w = static_cast<int>(design.estimation_times.size());
  const long n_obs = static_cast<long>(design.n_units) * w;
  Eigen::MatrixXd xd(n_obs, design.n_columns());
  for (int j = 0; j < design.n_columns(); ++j) {
    const DemeanedMatrix dm = demean_two_way(
        design.column_matrix(j),
        time_range(0, w - 1));  // column_matrix is already windowed
    xd.col(j) = Eigen::Map<const Eigen::VectorXd>(dm.values.data(), n_obs);
  }
  const auto dep = dependent_columns(xd);
  if (!dep.empty()) {
    std::ostringstream msg;
    msg << "dependent columns after the within transform:";
    for (int j : dep) msg << " " << design.columns[j].label;
    throw EstimationError(errc::rank_deficient_design, msg.str());
  }
}

}  // namespace

RelativeTimeDesign build_design(const Panel& panel, const DesignConfig& config) {
  const int T = panel.t_max();
  const auto layout = CohortLayout::from_panel(panel);

  RelativeTimeDesign design;
  design.mode = config.mode;
  design.n_units = panel.n_units();
  design.t_max = T;
  design.event_times = panel.event_times;

  const bool saturated = config.mode == DesignConfig::Mode::saturated;
  int t0 = 0;
  int t1 = saturated ? T - 1 : T;
  if (config.window) {
    t0 = config.window->first;
    t1 = config.window->second;
  }
  if (t0 < 0 || t1 > T || t0 >= t1) {
    throw DataError(errc::bad_config, "estimation window must satisfy 0 <= t0 < t1 <= T");
  }
  design.estimation_times = time_range(t0, t1);

  switch (config.mode) {
    case DesignConfig::Mode::fixed_effects_static: {
      design.columns.push_back({DesignColumn::Kind::treatment, 0, 0, "gamma"});
      break;
    }
    case DesignConfig::Mode::dynamic: {
      const auto observable = observable_rel_times(layout, design.estimation_times);
      std::set<int> included;
      if (config.include_rel) {
        for (int l : *config.include_rel) {
          if (observable.count(l)) included.insert(l);
        }
      } else if (config.leads || config.lags) {
        const int lo = -(config.leads.value_or(0));
        const int hi = config.lags.value_or(0);
        for (int l : observable) {
          if (l >= lo && l <= hi) included.insert(l);
        }
      } else {
        included = observable;
        included.erase(-1);
        // the deepest observed lead is the second default exclusion
        if (!included.empty() && *included.begin() < 0) included.erase(*included.begin());
      }
      for (int l : config.exclude_rel) included.erase(l);
      if (included.empty()) {
        throw EstimationError(errc::rank_deficient_design, "no relative-time indicators included");
      }
      if (static_cast<int>(observable.size() - included.size()) < 2) {
        throw EstimationError(
            errc::rank_deficient_design,
            "at least two relative time indicators must be excluded; only " +
                std::to_string(observable.size() - included.size()) + " excluded");
      }
      for (int l : included) {
        DesignColumn col{DesignColumn::Kind::relative_time, l, 0, rel_label(l)};
        if (column_observed(design, col)) {
          design.columns.push_back(col);
          design.included_rel.push_back(l);
        } else {
          design.pruned.push_back(col);
        }
      }
      for (int l : observable) {
        if (!std::binary_search(design.included_rel.begin(), design.included_rel.end(), l)) {
          design.excluded_rel.push_back(l);
        }
      }
      break;
    }
    case DesignConfig::Mode::saturated: {
      if (t0 != 0) {
        throw DataError(errc::bad_config,
                        "saturated designs difference against t=0; window must start at 0");
      }
      // One interaction cell per cohort and relative time, for cohorts
      // strictly before the final period. The cohort first treated at T
      // (together with any never-treated units) serves as the comparison
      // group and gets no cells.
      if (layout.size_of(T) == 0 && layout.never_treated_size == 0) {
        throw EstimationError(errc::rank_deficient_design,
                              "no comparison group: need units first treated at t=" +
                                  std::to_string(T) + " or never treated");
      }
      for (std::size_t k = 0; k < layout.cohorts.size(); ++k) {
        const int e = layout.cohorts[k];
        if (e > T - 1) continue;
        for (int l = 1 - e; l <= T - e; ++l) {
          const int t = e + l;
          DesignColumn col{DesignColumn::Kind::interaction, l, e, cell_label(e, l)};
          if (t >= t0 && t <= t1) {
            design.columns.push_back(col);
          } else {
            design.pruned.push_back(col);
          }
        }
      }
      if (design.columns.empty()) {
        throw EstimationError(errc::rank_deficient_design, "no estimable cohort-time cells");
      }
      break;
    }
  }

  check_rank(design);
  return design;
}

}  // namespace esk
