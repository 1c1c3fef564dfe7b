#pragma once

#include <functional>

#include "esk/estimators.hpp"

namespace esk {

// Panel augmented with time-varying covariates X_{i,t} (p slices, each
// N x (T+1)). p = 0 recovers the unconditional case.
struct CovariatePanel {
  Panel panel;
  std::vector<Eigen::MatrixXd> covariates;

  int p() const { return static_cast<int>(covariates.size()); }
  Eigen::VectorXd x_at(int unit, int t) const;
  void validate() const;
};

// Nuisance functions for the cohort-(e, l) contrast at t = e + l:
//   g_inf(x) = E[Y_t - Y_0 | X=x, not yet treated at t]
//   m_x(x)   = Pr{E = e | X=x}
//   n_x(x)   = Pr{E > t | X=x}
//   m_scalar = Pr{E = e}
struct NuisanceSet {
  std::function<double(const Eigen::VectorXd&)> g_inf;
  std::function<double(const Eigen::VectorXd&)> m_x;
  std::function<double(const Eigen::VectorXd&)> n_x;
  double m_scalar = 0.0;
};

using Predictor = std::function<double(const Eigen::VectorXd&)>;

// Pluggable learners: `regression` fits E[y|x], `binary` fits Pr{y=1|x}.
// Rows of the feature matrix are training units (no intercept column; the
// learners add their own).
struct LearnerSet {
  std::function<Predictor(const Eigen::MatrixXd&, const Eigen::VectorXd&)> regression;
  std::function<Predictor(const Eigen::MatrixXd&, const Eigen::VectorXd&)> binary;

  static LearnerSet defaults();        // OLS and Newton logistic
  static LearnerSet intercept_only();  // ignores covariates (for diagnostics)
};

struct FoldDiagnostics {
  int n_test = 0;
  int n_train_cohort = 0;   // treated-cohort units available for training
  int n_train_control = 0;  // not-yet-treated units available for training
};

struct DRResult {
  double theta = 0.0;
  double std_error = 0.0;
  std::vector<int> fold_of_unit;
  std::vector<FoldDiagnostics> folds;
  double m_scalar = 0.0;
  int clipped = 0;       // propensity evaluations raised to the floor
  double min_n_x = 1.0;  // smallest control propensity seen
};

inline constexpr double kPropensityFloor = 1e-3;
inline constexpr int kDefaultFolds = 5;

// Mean of Y_t - Y_0 - g_inf(X_t) over cohort e, the regression-adjusted
// contrast under conditional parallel trends.
double regression_adjust(const CovariatePanel& cp, int cohort, int rel, const Predictor& g_inf);

// Inverse-propensity contrast: treated changes at weight 1/m against
// not-yet-treated changes at weight m(X)/(m n(X)).
double ipw_catt(const CovariatePanel& cp, int cohort, int rel, const NuisanceSet& nuisance);

// The doubly robust score psi(W, theta, eta) for one unit; linear in theta
// with slope -1{E=e}/m.
double dr_score(double y_t, double y_0, const Eigen::VectorXd& x, int event_time, int cohort,
                int t, double theta, const NuisanceSet& nuisance);

// Cross-fit estimate of the cohort-(e,l) effect: per fold, nuisances are
// fit on the complement; theta solves the pooled sample moment. With p = 0
// the nuisances are the pooled sample analogs (there is nothing to overfit)
// and the estimate reduces exactly to the direct DID contrast.
DRResult dr_estimate(const CovariatePanel& cp, int cohort, int rel, int folds = kDefaultFolds,
                     const LearnerSet& learners = LearnerSet::defaults(),
                     std::uint64_t fold_seed = 0);

struct NuisanceDirection {
  enum class Component { g_inf, m_x, n_x, m_scalar };
  Component component = Component::g_inf;
  std::function<double(const Eigen::VectorXd&)> h;  // bounded perturbation
};

enum class ScoreKind { doubly_robust, ipw };

// Central finite-difference slope of the empirical score mean in the
// direction h at the given nuisances, d/d_eps E_N[psi(theta, eta + eps h)].
double orthogonality_check(const CovariatePanel& cp, int cohort, int rel, double theta,
                           const NuisanceSet& nuisance, const NuisanceDirection& direction,
                           double eps, ScoreKind kind = ScoreKind::doubly_robust);

}  // namespace esk
