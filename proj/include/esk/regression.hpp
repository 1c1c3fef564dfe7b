#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "esk/design.hpp"
#include "esk/panel.hpp"

namespace esk {

enum class SmallSample {
  cr0,  // raw sandwich
  cr1,  // G/(G-1) * (n-1)/(n-k), G = number of clusters
};

// Internals of a within-OLS fit, kept so covariances can be recombined
// across fits (joint FE/IW blocks) without re-estimating.
struct FitDetail {
  Eigen::MatrixXd xd;           // n_obs x k demeaned regressors
  Eigen::VectorXd residuals;    // n_obs
  Eigen::MatrixXd bread_inv;    // (xd'xd)^{-1}
  std::vector<int> unit_of_obs; // n_obs -> cluster index 0..G-1
  int n_units = 0;
  std::vector<int> estimation_times;
  SmallSample correction = SmallSample::cr1;
};

// Labeled coefficients with a cluster-robust covariance.
struct EstimateSet {
  std::vector<std::string> labels;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd vcov;
  int n_units = 0;
  long n_obs = 0;
  std::vector<std::string> dropped_columns;
  std::shared_ptr<const FitDetail> detail;  // absent for synthetic sets

  double std_error(int j) const { return std::sqrt(vcov(j, j)); }
  int find(const std::string& label) const;  // -1 when absent
};

struct WaldResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::vector<std::string> restriction_labels;
};

struct RegressionOptions {
  SmallSample correction = SmallSample::cr1;
};

// Two-way within-transformed least squares of the panel outcome on the
// design columns; unit-clustered sandwich covariance.
EstimateSet within_ols(const Panel& panel, const RelativeTimeDesign& design,
                       const RegressionOptions& options = {});

// Cluster-robust sandwich (xd'xd)^{-1} M (xd'xd)^{-1} with the meat summed
// over within-cluster score products.
Eigen::MatrixXd cluster_vcov(const Eigen::MatrixXd& xd, const Eigen::VectorXd& residuals,
                             const std::vector<int>& unit_of_obs,
                             SmallSample correction = SmallSample::cr1);

// Joint covariance of the dynamic fixed-effects coefficients and the
// interaction-weighted aggregates nu = f' delta. `f_cells` maps the k_B
// saturated coefficients into the aggregates (k_B x n_agg); `agg_labels`
// names the aggregates. Both fits must come from the same sample and window.
EstimateSet joint_fe_iw_vcov(const EstimateSet& fe_fit, const EstimateSet& iw_fit,
                             const Eigen::MatrixXd& f_cells,
                             const std::vector<std::string>& agg_labels);

// Wald test of R beta = value against the chi-square(rank R) limit.
WaldResult wald_test(const EstimateSet& est, const Eigen::MatrixXd& restriction,
                     const Eigen::VectorXd& value,
                     std::vector<std::string> restriction_labels = {});

// Upper-tail probability of the chi-square distribution.
double chi_square_upper_tail(double statistic, int df);

}  // namespace esk
