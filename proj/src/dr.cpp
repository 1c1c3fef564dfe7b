#include "esk/dr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esk/rng.hpp"

namespace esk {

Eigen::VectorXd CovariatePanel::x_at(int unit, int t) const {
  Eigen::VectorXd x(p());
  for (int j = 0; j < p(); ++j) x(j) = covariates[j](unit, t);
  return x;
}

void CovariatePanel::validate() const {
  panel.validate();
  for (const auto& slice : covariates) {
    if (slice.rows() != panel.n_units() || slice.cols() != panel.t_max() + 1) {
      throw DataError(errc::missing_cell, "covariate slice does not match the panel grid");
    }
    if (!slice.allFinite()) {
      throw DataError(errc::missing_cell, "covariates contain non-finite cells");
    }
  }
}

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

LearnerSet LearnerSet::defaults() {
  LearnerSet set;
  set.regression = [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y) -> Predictor {
    const Eigen::MatrixXd xi = with_intercept(x);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xi);
    qr.setThreshold(1e-10);
    const Eigen::VectorXd beta = qr.solve(y);
    return [beta](const Eigen::VectorXd& row) {
      double value = beta(0);
      for (int j = 0; j < row.size(); ++j) value += beta(j + 1) * row(j);
      return value;
    };
  };
  set.binary = [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y) -> Predictor {
    const Eigen::MatrixXd xi = with_intercept(x);
    const int k = static_cast<int>(xi.cols());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    for (int iter = 0; iter < 100; ++iter) {  // Newton-Raphson on the logit likelihood
      Eigen::VectorXd p(xi.rows());
      for (long r = 0; r < xi.rows(); ++r) p(r) = sigmoid(xi.row(r).dot(beta));
      const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-10);
      const Eigen::MatrixXd hess = xi.transpose() * w.asDiagonal() * xi;
      const Eigen::VectorXd grad = xi.transpose() * (y - p);
      const Eigen::VectorXd step = hess.ldlt().solve(grad);
      beta += step;
      if (step.cwiseAbs().maxCoeff() < 1e-12) break;
    }
    return [beta](const Eigen::VectorXd& row) {
      double z = beta(0);
      for (int j = 0; j < row.size(); ++j) z += beta(j + 1) * row(j);
      return sigmoid(z);
    };
  };
  return set;
}

LearnerSet LearnerSet::intercept_only() {
  LearnerSet set;
  set.regression = [](const Eigen::MatrixXd&, const Eigen::VectorXd& y) -> Predictor {
    const double mean = y.size() > 0 ? y.mean() : 0.0;
    return [mean](const Eigen::VectorXd&) { return mean; };
  };
  set.binary = [](const Eigen::MatrixXd&, const Eigen::VectorXd& y) -> Predictor {
    const double share = y.size() > 0 ? y.mean() : 0.5;
    return [share](const Eigen::VectorXd&) { return share; };
  };
  return set;
}

namespace {

struct Contrast {
  int t = 0;          // e + l
  int cohort = 0;     // e
  int n_treated = 0;  // units with E = e
  int n_control = 0;  // units with E > t
};

Contrast resolve_contrast(const Panel& panel, int cohort, int rel) {
  const int t = cohort + rel;
  if (cohort < 1 || cohort > panel.t_max()) {
    throw EstimationError(errc::empty_cohort, "cohort outside 1..T");
  }
  if (t < 0 || t > panel.t_max()) {
    throw EstimationError(errc::invalid_base_period, "e+l outside the observed periods");
  }
  Contrast c;
  c.t = t;
  c.cohort = cohort;
  for (int e : panel.event_times) {
    if (e == cohort) ++c.n_treated;
    if (e > t) ++c.n_control;  // includes never-treated
  }
  if (c.n_treated == 0) {
    throw EstimationError(errc::empty_cohort, "no units in cohort " + std::to_string(cohort));
  }
  if (c.n_control == 0) {
    throw EstimationError(errc::empty_control_set,
                          "no units untreated at t=" + std::to_string(t));
  }
  return c;
}

double clip_probability(double value, int* clipped, double* min_seen) {
  if (min_seen) *min_seen = std::min(*min_seen, value);
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw EstimationError(errc::overlap_violation,
                          "propensity evaluated to a non-positive value");
  }
  if (value < kPropensityFloor) {
    if (clipped) ++(*clipped);
    return kPropensityFloor;
  }
  return value > 1.0 ? 1.0 : value;
}

}  // namespace

double regression_adjust(const CovariatePanel& cp, int cohort, int rel, const Predictor& g_inf) {
  cp.validate();
  const auto contrast = resolve_contrast(cp.panel, cohort, rel);
  double sum = 0.0;
  for (int i = 0; i < cp.panel.n_units(); ++i) {
    if (cp.panel.event_times[i] != cohort) continue;
    const double change = cp.panel.outcomes(i, contrast.t) - cp.panel.outcomes(i, 0);
    sum += change - g_inf(cp.x_at(i, contrast.t));
  }
  return sum / contrast.n_treated;
}

double ipw_catt(const CovariatePanel& cp, int cohort, int rel, const NuisanceSet& nuisance) {
  cp.validate();
  const auto contrast = resolve_contrast(cp.panel, cohort, rel);
  if (!(nuisance.m_scalar > 0.0)) {
    throw EstimationError(errc::overlap_violation, "cohort share m must be positive");
  }
  const int n = cp.panel.n_units();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int e = cp.panel.event_times[i];
    const double change = cp.panel.outcomes(i, contrast.t) - cp.panel.outcomes(i, 0);
    if (e == cohort) {
      total += change / nuisance.m_scalar;
    } else if (e > contrast.t) {
      const Eigen::VectorXd x = cp.x_at(i, contrast.t);
      const double mx = clip_probability(nuisance.m_x(x), nullptr, nullptr);
      const double nx = clip_probability(nuisance.n_x(x), nullptr, nullptr);
      total -= mx / (nuisance.m_scalar * nx) * change;
    }
  }
  return total / n;
}

double dr_score(double y_t, double y_0, const Eigen::VectorXd& x, int event_time, int cohort,
                int t, double theta, const NuisanceSet& nuisance) {
  const bool treated = event_time == cohort;
  const bool control = event_time > t;
  if (!treated && !control) return 0.0;
  const double change = y_t - y_0;
  const double adjusted = change - nuisance.g_inf(x);
  double value = 0.0;
  if (treated) {
    value += adjusted / nuisance.m_scalar;
    value -= theta / nuisance.m_scalar;
  }
  if (control) {
    value -= nuisance.m_x(x) / (nuisance.m_scalar * nuisance.n_x(x)) * adjusted;
  }
  return value;
}

namespace {

// Stratified fold assignment: within each event-time group, units are
// shuffled deterministically by the fold seed and dealt round-robin.
std::vector<int> assign_folds(const Panel& panel, int folds, std::uint64_t fold_seed) {
  std::vector<int> fold_of(panel.n_units(), -1);
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < panel.n_units(); ++i) groups[panel.event_times[i]].push_back(i);
  for (auto& [e, members] : groups) {
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      const auto ka = rng::value(fold_seed, static_cast<std::uint64_t>(e), a);
      const auto kb = rng::value(fold_seed, static_cast<std::uint64_t>(e), b);
      return ka != kb ? ka < kb : a < b;
    });
    for (std::size_t pos = 0; pos < members.size(); ++pos) {
      fold_of[members[pos]] = static_cast<int>(pos % folds);
    }
  }
  return fold_of;
}

}  // namespace

DRResult dr_estimate(const CovariatePanel& cp, int cohort, int rel, int folds,
                     const LearnerSet& learners, std::uint64_t fold_seed) {
  cp.validate();
  if (folds < 2) throw DataError(errc::bad_config, "cross-fitting needs K >= 2 folds");
  const auto contrast = resolve_contrast(cp.panel, cohort, rel);
  const int n = cp.panel.n_units();
  const int t = contrast.t;

  DRResult result;
  result.m_scalar = static_cast<double>(contrast.n_treated) / n;
  result.fold_of_unit = assign_folds(cp.panel, folds, fold_seed);

  Eigen::VectorXd change(n);
  for (int i = 0; i < n; ++i) change(i) = cp.panel.outcomes(i, t) - cp.panel.outcomes(i, 0);

  result.folds.resize(folds);
  for (int i = 0; i < n; ++i) {
    const int e = cp.panel.event_times[i];
    for (int k = 0; k < folds; ++k) {
      if (result.fold_of_unit[i] == k) {
        ++result.folds[k].n_test;
      } else {
        if (e == cohort) ++result.folds[k].n_train_cohort;
        if (e > t) ++result.folds[k].n_train_control;
      }
    }
  }

  Eigen::VectorXd g_hat(n), m_hat(n), n_hat(n);
  if (cp.p() == 0) {
    // Unconditional case: the pooled sample analogs are the exact nuisances
    // and cross-fitting has nothing to estimate out-of-fold.
    double ctl_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      if (cp.panel.event_times[i] > t) ctl_sum += change(i);
    }
    const double g0 = ctl_sum / contrast.n_control;
    const double n0 = static_cast<double>(contrast.n_control) / n;
    g_hat.setConstant(g0);
    m_hat.setConstant(result.m_scalar);
    n_hat.setConstant(n0);
  } else {
    for (int k = 0; k < folds; ++k) {
      std::vector<int> train_ctl, train_all, test;
      for (int i = 0; i < n; ++i) {
        if (result.fold_of_unit[i] == k) {
          test.push_back(i);
        } else {
          train_all.push_back(i);
          if (cp.panel.event_times[i] > t) train_ctl.push_back(i);
        }
      }
      if (test.empty() || train_ctl.empty() || result.folds[k].n_train_cohort == 0) {
        throw EstimationError(errc::fold_degenerate,
                              "fold " + std::to_string(k) +
                                  " leaves no cohort or control units to train on");
      }

      Eigen::MatrixXd x_ctl(train_ctl.size(), cp.p());
      Eigen::VectorXd y_ctl(train_ctl.size());
      for (std::size_t r = 0; r < train_ctl.size(); ++r) {
        x_ctl.row(r) = cp.x_at(train_ctl[r], t).transpose();
        y_ctl(r) = change(train_ctl[r]);
      }
      Eigen::MatrixXd x_all(train_all.size(), cp.p());
      Eigen::VectorXd y_m(train_all.size()), y_n(train_all.size());
      for (std::size_t r = 0; r < train_all.size(); ++r) {
        x_all.row(r) = cp.x_at(train_all[r], t).transpose();
        y_m(r) = cp.panel.event_times[train_all[r]] == cohort ? 1.0 : 0.0;
        y_n(r) = cp.panel.event_times[train_all[r]] > t ? 1.0 : 0.0;
      }
      const Predictor g_k = learners.regression(x_ctl, y_ctl);
      const Predictor m_k = learners.binary(x_all, y_m);
      const Predictor n_k = learners.binary(x_all, y_n);
      for (int i : test) {
        const Eigen::VectorXd x = cp.x_at(i, t);
        g_hat(i) = g_k(x);
        m_hat(i) = m_k(x);
        n_hat(i) = n_k(x);
      }
    }
  }

  // theta solves the pooled moment E_N[psi] = 0; psi is linear in theta.
  double numerator = 0.0;
  double slope = 0.0;
  for (int i = 0; i < n; ++i) {
    const int e = cp.panel.event_times[i];
    if (e == cohort) {
      numerator += (change(i) - g_hat(i)) / result.m_scalar;
      slope += 1.0 / result.m_scalar;
    } else if (e > t) {
      const double mx = clip_probability(m_hat(i), &result.clipped, &result.min_n_x);
      const double nx = clip_probability(n_hat(i), &result.clipped, &result.min_n_x);
      numerator -= mx / (result.m_scalar * nx) * (change(i) - g_hat(i));
    }
  }
  result.theta = numerator / slope;

  // influence-function plug-in standard error
  double psi_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const int e = cp.panel.event_times[i];
    if (e != cohort && e <= t) continue;
    double psi = 0.0;
    if (e == cohort) {
      psi += (change(i) - g_hat(i) - result.theta) / result.m_scalar;
    }
    if (e > t) {
      const double mx = std::max(m_hat(i), kPropensityFloor);
      const double nx = std::max(n_hat(i), kPropensityFloor);
      psi -= mx / (result.m_scalar * nx) * (change(i) - g_hat(i));
    }
    psi_sq += psi * psi;
  }
  const double mean_slope = slope / n;
  result.std_error = std::sqrt(psi_sq / n / (mean_slope * mean_slope) / n);
  return result;
}

double orthogonality_check(const CovariatePanel& cp, int cohort, int rel, double theta,
                           const NuisanceSet& nuisance, const NuisanceDirection& direction,
                           double eps, ScoreKind kind) {
  cp.validate();
  const auto contrast = resolve_contrast(cp.panel, cohort, rel);
  const int n = cp.panel.n_units();
  if (!(eps > 0.0)) throw DataError(errc::bad_config, "eps must be positive");

  auto perturbed = [&](double sign) {
    NuisanceSet eta = nuisance;
    const auto h = direction.h;
    switch (direction.component) {
      case NuisanceDirection::Component::g_inf:
        eta.g_inf = [&nuisance, h, sign, eps](const Eigen::VectorXd& x) {
          return nuisance.g_inf(x) + sign * eps * h(x);
        };
        break;
      case NuisanceDirection::Component::m_x:
        eta.m_x = [&nuisance, h, sign, eps](const Eigen::VectorXd& x) {
          return nuisance.m_x(x) + sign * eps * h(x);
        };
        break;
      case NuisanceDirection::Component::n_x:
        eta.n_x = [&nuisance, h, sign, eps](const Eigen::VectorXd& x) {
          return nuisance.n_x(x) + sign * eps * h(x);
        };
        break;
      case NuisanceDirection::Component::m_scalar:
        eta.m_scalar = nuisance.m_scalar + sign * eps;
        break;
    }
    return eta;
  };

  auto score_mean = [&](const NuisanceSet& eta) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const int e = cp.panel.event_times[i];
      const Eigen::VectorXd x = cp.x_at(i, contrast.t);
      const double y_t = cp.panel.outcomes(i, contrast.t);
      const double y_0 = cp.panel.outcomes(i, 0);
      if (kind == ScoreKind::doubly_robust) {
        total += dr_score(y_t, y_0, x, e, cohort, contrast.t, theta, eta);
      } else {
        // plain inverse-propensity moment, no trend adjustment
        if (e == cohort) {
          total += (y_t - y_0 - theta) / eta.m_scalar;
        } else if (e > contrast.t) {
          total -= eta.m_x(x) / (eta.m_scalar * eta.n_x(x)) * (y_t - y_0);
        }
      }
    }
    return total / n;
  };

  return (score_mean(perturbed(+1.0)) - score_mean(perturbed(-1.0))) / (2.0 * eps);
}

}  // namespace esk
