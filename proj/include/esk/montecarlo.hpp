#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>

#include "esk/estimators.hpp"

namespace esk {

// Staggered-adoption data-generating process:
//   Y_{i,t} = alpha_i + lambda_t + sum_{e,l} delta_{e,l} 1{E_i=e} D^l_{i,t} + eps_{i,t}
// with event times drawn i.i.d. from `cohort_probs` and Gaussian noise.
struct DGPSpec {
  int n_units = 0;
  int t_max = 0;
  std::vector<std::pair<int, double>> cohort_probs;  // cohort (or kNever) -> probability
  std::map<std::pair<int, int>, double> catt;        // (e, l) -> delta; leads default to 0
  enum class Effect { index, zero };
  Effect unit_effect = Effect::index;  // alpha_i = i (1-based) or 0
  Effect time_effect = Effect::index;  // lambda_t = t or 0
  double noise_sd = 1.0;

  void validate() const;
};

// Deterministic given (spec, seed): event times from stream 0, noise from
// stream 1, one counter per variate.
Panel simulate_panel(const DGPSpec& spec, std::uint64_t seed);

// Flat key-value spec file: `n_units`, `t_max`, `noise_sd`, `unit_effect`,
// `time_effect`, repeated `cohort e prob` (prob may be a fraction like 1/3,
// e may be `never`), repeated `catt e l value`. '#' starts a comment.
DGPSpec parse_dgp_spec(std::istream& in);
DGPSpec parse_dgp_spec_file(const std::string& path);

struct StudyEstimator {
  enum class Kind { static_fe, dynamic_fe, saturated_iw };
  Kind kind = Kind::dynamic_fe;
  DesignConfig design;  // dynamic_fe only
  std::string prefix;   // label prefix in the summary, e.g. "dynamic_fe"
};

struct StudyConfig {
  std::vector<StudyEstimator> estimators;
  int histogram_bins = 30;
};

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  long count = 0;
};

struct CoefficientSummary {
  std::string name;
  int count = 0;  // replications contributing this coefficient
  double mean = 0.0;
  double sd = 0.0;
  double mc_se = 0.0;  // sd / sqrt(count)
  double frac_negative = 0.0;
  std::vector<HistogramBin> histogram;
};

struct StudySummary {
  std::uint64_t master_seed = 0;
  int replications = 0;
  int failed = 0;
  std::vector<CoefficientSummary> coefficients;

  const CoefficientSummary* find(const std::string& name) const;
};

// Runs `replications` independent draws of the DGP through the configured
// estimators. Per-replication seeds derive from (master_seed, rep), and
// per-replication results are reduced in replication order, so the summary
// is byte-identical for any thread count. Failed replications (degenerate
// draws) are counted and skipped. n_threads <= 0 picks a default, capped by
// the ESK_THREADS environment variable.
StudySummary run_study(const DGPSpec& spec, int replications, const StudyConfig& config,
                       std::uint64_t master_seed, int n_threads = 0);

}  // namespace esk
