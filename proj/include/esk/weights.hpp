#pragma once

#include <map>

#include "esk/estimators.hpp"

namespace esk {

struct WeightCell {
  int cohort = 0;
  int rel = 0;  // l'
  double weight = 0.0;
  bool negative = false;
};

// The implicit weights a fixed-effects estimand places on each cohort-by-
// relative-time cell. For the static target the post-treatment weights sum
// to one; for a dynamic target l they sum to one at l' = l and to zero at
// every other included l'.
struct WeightDecomposition {
  bool is_static = true;
  int target_rel = 0;             // dynamic targets only
  std::vector<WeightCell> cells;  // every observed cell, ordered by (e, l')
  std::map<int, double> column_sums;  // per l', summed over cohorts
  double denominator = 0.0;       // static: sum_t E_N[Ddot^2]
  std::vector<int> included_rel;  // dynamic design columns behind the target
  int n_units = 0;
  std::vector<int> estimation_times;

  double weight_at(int cohort, int rel) const;  // 0 when absent
  std::vector<const WeightCell*> negative_cells() const;
};

// Static decomposition: omega_{e,l} = (N_e/N) * Ddot_{e,e+l} / sum_t E_N[Ddot^2],
// computed from the explicitly demeaned treatment indicator. Cells cover all
// observed relative times; the l >= 0 block is the estimand decomposition.
WeightDecomposition static_weights(const Panel& panel);

// Dynamic decomposition for the coefficient on relative time `target_rel`:
// each cell's weight is the coefficient on the target indicator from the
// auxiliary within-OLS of that cohort-time interaction on all included
// relative-time indicators. One factorization is shared across cells.
WeightDecomposition dynamic_weights(const Panel& panel, int target_rel,
                                    const DesignConfig& config = {});

// Inner product of a weight table with the cell estimates; reproduces the
// fixed-effects point estimate when the interacted design spans the dynamic
// design on the same sample.
double reconstruct_fe(const WeightDecomposition& weights, const CattTable& catt);

}  // namespace esk
