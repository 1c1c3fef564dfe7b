#pragma once

#include <map>
#include <optional>
#include <set>

#include "esk/regression.hpp"

namespace esk {

enum class CellStatus { estimated, normalized_zero, unidentified };

struct CattCell {
  int cohort = 0;
  int rel = 0;
  double estimate = 0.0;
  double std_error = 0.0;  // NaN unless estimated
  CellStatus status = CellStatus::estimated;
};

// Cohort-by-relative-time treatment effect estimates from the fully
// interacted two-way fixed-effects model. Cells for the comparison cohort
// and the t=0 base period are normalized to zero; cells observable only in
// the dropped final period are unidentified.
struct CattTable {
  std::vector<CattCell> cells;  // ordered by (cohort, rel)
  std::string control_spec;
  int t_max = 0;
  std::vector<int> estimation_times;
  EstimateSet fit;  // underlying interacted fit (labels "delta[e,l]")

  const CattCell* find(int cohort, int rel) const;
  std::vector<const CattCell*> estimated_at(int rel) const;
};

struct DidEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  int n_treated = 0;
  int n_control = 0;
};

// Interaction-weighted aggregates: cohort-share-weighted averages of the
// estimated cells at each relative time, plus the overall average.
struct IWResult {
  std::vector<int> rel_times;
  std::vector<double> nu;
  std::vector<double> nu_se;
  std::optional<double> kappa;
  std::optional<double> kappa_se;
  // Per relative time, the W x n_cohort share matrix with (t, e) entry
  // N_e / sum N_e when t - e = l and zero otherwise.
  std::map<int, Eigen::MatrixXd> f_hat;
  Eigen::MatrixXd f_cells;  // k_cells x n_rel map from cell estimates to nu
  std::vector<int> cohorts;
  std::vector<int> cohort_sizes;

  double nu_at(int rel) const;
};

// gamma-hat: within-OLS on the single treatment-status column.
EstimateSet static_fe(const Panel& panel, const RegressionOptions& options = {});

// mu-hat per included relative time.
EstimateSet dynamic_fe(const Panel& panel, const DesignConfig& config = {},
                       const RegressionOptions& options = {});

// delta-hat per cohort-time cell from the fully interacted model.
CattTable saturated_catt(const Panel& panel, std::optional<std::pair<int, int>> window = {},
                         const RegressionOptions& options = {});

// Direct difference-in-differences contrast of outcome changes from base
// period s for cohort e against the not-yet-treated control cohorts C.
DidEstimate did_catt(const Panel& panel, int cohort, int rel, int base_period,
                     const std::set<int>& control_cohorts);

IWResult iw_dynamic(const CattTable& catt, const CohortLayout& layout,
                    const std::optional<std::vector<int>>& rel_times = {});

// kappa-hat: cohort shares times equal weights over each cohort's estimated
// post-treatment cells.
DidEstimate iw_static(const CattTable& catt, const CohortLayout& layout);

// Joint Wald test that every lead (rel < 0) coefficient is zero.
WaldResult pretrend_test(const EstimateSet& fit);
WaldResult pretrend_test(const CattTable& catt);

}  // namespace esk
