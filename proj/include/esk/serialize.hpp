#pragma once

#include <json.hpp>
#include <string>

#include "esk/dr.hpp"
#include "esk/montecarlo.hpp"
#include "esk/weights.hpp"

namespace esk {

using Json = nlohmann::json;

Json to_json(const EstimateSet& est, bool include_vcov = false);
Json to_json(const WaldResult& wald);
Json to_json(const CattTable& table);
Json to_json(const IWResult& iw, const CattTable& table);
Json to_json(const StudySummary& summary);
Json to_json(const DRResult& result, int cohort, int rel);

// Inverse of to_json(EstimateSet); used by round-trip checks and pipelines
// that re-ingest serialized fits.
EstimateSet estimate_set_from_json(const Json& j);

std::string estimates_to_csv(const EstimateSet& est);
std::string catt_to_csv(const CattTable& table);

// Weight tables: target_l,e,l_prime,weight,negative_flag.
std::string weights_to_csv(const WeightDecomposition& weights, bool only_negative = false);
WeightDecomposition weights_from_csv(std::istream& in);

// Histogram rows: coefficient,bin_left,bin_right,count.
std::string histograms_to_csv(const StudySummary& summary);

}  // namespace esk
