#include "esk/serialize.hpp"

#include <cmath>
#include <sstream>

namespace esk {

namespace {

Json number_or_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

const char* status_name(CellStatus status) {
  switch (status) {
    case CellStatus::estimated: return "ESTIMATED";
    case CellStatus::normalized_zero: return "NORMALIZED_ZERO";
    case CellStatus::unidentified: return "UNIDENTIFIED";
  }
  return "?";
}

}  // namespace

Json to_json(const EstimateSet& est, bool include_vcov) {
  Json j;
  j["labels"] = est.labels;
  j["coefficients"] = std::vector<double>(est.coefficients.data(),
                                          est.coefficients.data() + est.coefficients.size());
  std::vector<double> se;
  for (int i = 0; i < est.coefficients.size(); ++i) se.push_back(est.std_error(i));
  j["std_errors"] = se;
  j["n_units"] = est.n_units;
  j["n_obs"] = est.n_obs;
  j["dropped_columns"] = est.dropped_columns;
  if (include_vcov) {
    Json rows = Json::array();
    for (int r = 0; r < est.vcov.rows(); ++r) {
      Json row = Json::array();
      for (int c = 0; c < est.vcov.cols(); ++c) row.push_back(est.vcov(r, c));
      rows.push_back(row);
    }
    j["vcov"] = rows;
  }
  return j;
}

EstimateSet estimate_set_from_json(const Json& j) {
  EstimateSet est;
  est.labels = j.at("labels").get<std::vector<std::string>>();
  const auto coefs = j.at("coefficients").get<std::vector<double>>();
  est.coefficients = Eigen::Map<const Eigen::VectorXd>(coefs.data(), coefs.size());
  est.n_units = j.at("n_units").get<int>();
  est.n_obs = j.at("n_obs").get<long>();
  est.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
  const int k = static_cast<int>(coefs.size());
  est.vcov = Eigen::MatrixXd::Zero(k, k);
  if (j.contains("vcov")) {
    const auto rows = j.at("vcov");
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) est.vcov(r, c) = rows.at(r).at(c).get<double>();
    }
  } else if (j.contains("std_errors")) {
    const auto se = j.at("std_errors").get<std::vector<double>>();
    for (int i = 0; i < k; ++i) est.vcov(i, i) = se[i] * se[i];
  }
  return est;
}

Json to_json(const WaldResult& wald) {
  Json j;
  j["statistic"] = wald.statistic;
  j["df"] = wald.df;
  j["p_value"] = wald.p_value;
  j["restrictions"] = wald.restriction_labels;
  return j;
}

Json to_json(const CattTable& table) {
  Json cells = Json::array();
  for (const auto& c : table.cells) {
    Json cell;
    cell["cohort"] = c.cohort;
    cell["rel_time"] = c.rel;
    cell["status"] = status_name(c.status);
    cell["estimate"] = c.status == CellStatus::unidentified ? Json(nullptr)
                                                            : Json(c.estimate);
    cell["std_error"] = c.status == CellStatus::estimated ? number_or_null(c.std_error)
                                                          : Json(nullptr);
    cells.push_back(cell);
  }
  Json j;
  j["cells"] = cells;
  j["control_cohorts"] = table.control_spec;
  j["estimation_times"] = table.estimation_times;
  j["fit"] = to_json(table.fit);
  return j;
}

Json to_json(const IWResult& iw, const CattTable& table) {
  Json j;
  Json nus = Json::array();
  for (std::size_t k = 0; k < iw.rel_times.size(); ++k) {
    Json row;
    row["rel_time"] = iw.rel_times[k];
    row["estimate"] = iw.nu[k];
    row["std_error"] = number_or_null(iw.nu_se[k]);
    nus.push_back(row);
  }
  j["nu"] = nus;
  if (iw.kappa) {
    j["kappa"] = {{"estimate", *iw.kappa}, {"std_error", number_or_null(*iw.kappa_se)}};
  }
  j["cohorts"] = iw.cohorts;
  j["cohort_sizes"] = iw.cohort_sizes;
  Json shares;
  for (const auto& [l, f] : iw.f_hat) {
    Json rows = Json::array();
    for (int r = 0; r < f.rows(); ++r) {
      Json row = Json::array();
      for (int c = 0; c < f.cols(); ++c) row.push_back(f(r, c));
      rows.push_back(row);
    }
    shares[std::to_string(l)] = rows;
  }
  j["cohort_shares"] = shares;
  j["cells"] = to_json(table)["cells"];
  return j;
}

Json to_json(const StudySummary& summary) {
  Json j;
  j["master_seed"] = summary.master_seed;
  j["replications"] = summary.replications;
  j["failed"] = summary.failed;
  Json coefs = Json::array();
  for (const auto& c : summary.coefficients) {
    Json row;
    row["name"] = c.name;
    row["count"] = c.count;
    row["mean"] = c.mean;
    row["sd"] = c.sd;
    row["mc_se"] = c.mc_se;
    row["frac_negative"] = c.frac_negative;
    Json bins = Json::array();
    for (const auto& b : c.histogram) {
      bins.push_back({{"left", b.left}, {"right", b.right}, {"count", b.count}});
    }
    row["histogram"] = bins;
    coefs.push_back(row);
  }
  j["coefficients"] = coefs;
  return j;
}

Json to_json(const DRResult& result, int cohort, int rel) {
  Json j;
  j["cohort"] = cohort;
  j["rel_time"] = rel;
  j["theta"] = result.theta;
  j["std_error"] = result.std_error;
  j["m_scalar"] = result.m_scalar;
  j["fold_of_unit"] = result.fold_of_unit;
  Json folds = Json::array();
  for (const auto& f : result.folds) {
    folds.push_back({{"n_test", f.n_test},
                     {"n_train_cohort", f.n_train_cohort},
                     {"n_train_control", f.n_train_control}});
  }
  j["folds"] = folds;
  j["clipped_propensities"] = result.clipped;
  j["min_control_propensity"] = result.min_n_x;
  return j;
}

namespace {

void append_number(std::ostringstream& out, double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out << buf;
}

}  // namespace

std::string estimates_to_csv(const EstimateSet& est) {
  std::ostringstream out;
  out << "label,estimate,std_error\n";
  for (int j = 0; j < est.coefficients.size(); ++j) {
    out << est.labels[j] << ",";
    append_number(out, est.coefficients(j));
    out << ",";
    append_number(out, est.std_error(j));
    out << "\n";
  }
  return out.str();
}

std::string catt_to_csv(const CattTable& table) {
  std::ostringstream out;
  out << "cohort,rel_time,status,estimate,std_error\n";
  for (const auto& c : table.cells) {
    out << c.cohort << "," << c.rel << "," << status_name(c.status) << ",";
    if (c.status != CellStatus::unidentified) append_number(out, c.estimate);
    out << ",";
    if (c.status == CellStatus::estimated && !std::isnan(c.std_error)) {
      append_number(out, c.std_error);
    }
    out << "\n";
  }
  return out.str();
}

std::string weights_to_csv(const WeightDecomposition& weights, bool only_negative) {
  std::ostringstream out;
  out << "target_l,e,l_prime,weight,negative_flag\n";
  const std::string target =
      weights.is_static ? "static" : std::to_string(weights.target_rel);
  for (const auto& c : weights.cells) {
    if (only_negative && !c.negative) continue;
    out << target << "," << c.cohort << "," << c.rel << ",";
    append_number(out, c.weight);
    out << "," << (c.negative ? 1 : 0) << "\n";
  }
  return out.str();
}

WeightDecomposition weights_from_csv(std::istream& in) {
  WeightDecomposition out;
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(errc::bad_config, "empty weight table");
  }
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string target, e, lp, w, neg;
    std::getline(ss, target, ',');
    std::getline(ss, e, ',');
    std::getline(ss, lp, ',');
    std::getline(ss, w, ',');
    std::getline(ss, neg, ',');
    if (first) {
      out.is_static = target == "static";
      if (!out.is_static) out.target_rel = std::stoi(target);
      first = false;
    }
    WeightCell cell;
    cell.cohort = std::stoi(e);
    cell.rel = std::stoi(lp);
    cell.weight = std::stod(w);
    cell.negative = neg == "1";
    out.column_sums[cell.rel] += cell.weight;
    out.cells.push_back(cell);
  }
  return out;
}

std::string histograms_to_csv(const StudySummary& summary) {
  std::ostringstream out;
  out << "coefficient,bin_left,bin_right,count\n";
  for (const auto& c : summary.coefficients) {
    for (const auto& b : c.histogram) {
      out << c.name << ",";
      append_number(out, b.left);
      out << ",";
      append_number(out, b.right);
      out << "," << b.count << "\n";
    }
  }
  return out.str();
}

}  // namespace esk
