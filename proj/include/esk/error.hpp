#pragma once

#include <stdexcept>
#include <string>

namespace esk {

// Stable error identifiers. Data errors come from malformed or inconsistent
// input (CLI exit code 2); estimation errors come from designs or samples
// that cannot support the requested computation (CLI exit code 1).
enum class errc {
  missing_cell,
  duplicate_cell,
  event_time_out_of_range,
  non_numeric_outcome,
  inconsistent_event_time,
  bad_config,
  rank_deficient_design,
  no_treatment_variation,
  singular_bread,
  sample_mismatch,
  singular_restriction_covariance,
  no_lead_coefficients,
  empty_control_set,
  invalid_base_period,
  not_yet_treated_violated,
  empty_cohort,
  no_estimable_cells,
  overlap_violation,
  fold_degenerate,
};

const char* errc_name(errc code);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

// Malformed input: unbalanced panels, unparsable files, bad configuration.
class DataError : public Error {
 public:
  using Error::Error;
};

// Valid input that cannot support the requested estimator.
class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace esk
