#include "esk/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "esk/rng.hpp"

namespace esk {

void DGPSpec::validate() const {
  if (n_units < 1) throw DataError(errc::bad_config, "n_units must be positive");
  if (t_max < 1) throw DataError(errc::bad_config, "t_max must be at least 1");
  if (noise_sd < 0.0) throw DataError(errc::bad_config, "noise_sd must be nonnegative");
  if (cohort_probs.empty()) throw DataError(errc::bad_config, "no cohort probabilities");
  double total = 0.0;
  for (const auto& [e, p] : cohort_probs) {
    if (p < 0.0) throw DataError(errc::bad_config, "cohort probabilities must be nonnegative");
    if (e != kNever && (e < 1 || e > t_max)) {
      throw DataError(errc::event_time_out_of_range,
                      "cohort " + std::to_string(e) + " outside 1..t_max");
    }
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw DataError(errc::bad_config, "cohort probabilities must sum to 1");
  }
  for (const auto& [cell, value] : catt) {
    const auto [e, l] = cell;
    if (e == kNever || e < 1 || e > t_max || e + l < 0 || e + l > t_max) {
      throw DataError(errc::bad_config,
                      "catt cell (" + std::to_string(e) + "," + std::to_string(l) +
                          ") outside the panel");
    }
    (void)value;
  }
}

namespace {
constexpr std::uint64_t kEventStream = 0;
constexpr std::uint64_t kNoiseStream = 1;
}  // namespace

Panel simulate_panel(const DGPSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.n_units;
  const int T = spec.t_max;

  std::vector<int> events(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng::uniform(seed, kEventStream, static_cast<std::uint64_t>(i));
    double acc = 0.0;
    events[i] = spec.cohort_probs.back().first;
    for (const auto& [e, p] : spec.cohort_probs) {
      acc += p;
      if (u <= acc) {
        events[i] = e;
        break;
      }
    }
  }

  Eigen::MatrixXd y(n, T + 1);
  for (int i = 0; i < n; ++i) {
    const double alpha = spec.unit_effect == DGPSpec::Effect::index ? i + 1.0 : 0.0;
    for (int t = 0; t <= T; ++t) {
      const double lambda = spec.time_effect == DGPSpec::Effect::index ? t : 0.0;
      double value = alpha + lambda;
      if (events[i] != kNever) {
        const auto it = spec.catt.find({events[i], t - events[i]});
        if (it != spec.catt.end()) value += it->second;
      }
      if (spec.noise_sd > 0.0) {
        const std::uint64_t counter = static_cast<std::uint64_t>(i) * (T + 1) + t;
        value += spec.noise_sd * rng::normal(seed, kNoiseStream, counter);
      }
      y(i, t) = value;
    }
  }
  return make_panel(std::move(y), std::move(events));
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_prob(const std::string& token) {
  const auto slash = token.find('/');
  try {
    if (slash != std::string::npos) {
      const double num = std::stod(token.substr(0, slash));
      const double den = std::stod(token.substr(slash + 1));
      return num / den;
    }
    return std::stod(token);
  } catch (...) {
    throw DataError(errc::bad_config, "unparsable probability '" + token + "'");
  }
}

}  // namespace

DGPSpec parse_dgp_spec(std::istream& in) {
  DGPSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    try {
      if (key == "n_units") {
        ss >> spec.n_units;
      } else if (key == "t_max") {
        ss >> spec.t_max;
      } else if (key == "noise_sd") {
        ss >> spec.noise_sd;
      } else if (key == "unit_effect" || key == "time_effect") {
        std::string rule;
        ss >> rule;
        const auto effect = rule == "index" ? DGPSpec::Effect::index : DGPSpec::Effect::zero;
        if (rule != "index" && rule != "zero") {
          throw DataError(errc::bad_config, "effect rule must be 'index' or 'zero'");
        }
        (key == "unit_effect" ? spec.unit_effect : spec.time_effect) = effect;
      } else if (key == "cohort") {
        std::string which, prob;
        ss >> which >> prob;
        const int e = which == "never" ? kNever : std::stoi(which);
        spec.cohort_probs.emplace_back(e, parse_prob(prob));
      } else if (key == "catt") {
        int e = 0, l = 0;
        double value = 0.0;
        ss >> e >> l >> value;
        spec.catt[{e, l}] = value;
      } else {
        throw DataError(errc::bad_config, "unknown key '" + key + "'");
      }
      if (ss.fail()) throw DataError(errc::bad_config, "malformed value");
    } catch (const DataError&) {
      throw;
    } catch (...) {
      throw DataError(errc::bad_config, "spec line " + std::to_string(lineno) + " is malformed");
    }
  }
  spec.validate();
  return spec;
}

DGPSpec parse_dgp_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(errc::bad_config, "cannot open spec file " + path);
  return parse_dgp_spec(in);
}

const CoefficientSummary* StudySummary::find(const std::string& name) const {
  for (const auto& c : coefficients) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

namespace {

using RepResult = std::vector<std::pair<std::string, double>>;

RepResult run_one(const DGPSpec& spec, const StudyConfig& config, std::uint64_t seed) {
  const Panel panel = simulate_panel(spec, seed);
  const auto layout = CohortLayout::from_panel(panel);
  RepResult out;
  for (const auto& estimator : config.estimators) {
    const std::string prefix = estimator.prefix.empty() ? "" : estimator.prefix + "/";
    switch (estimator.kind) {
      case StudyEstimator::Kind::static_fe: {
        const auto fit = static_fe(panel);
        out.emplace_back(prefix + fit.labels[0], fit.coefficients(0));
        break;
      }
      case StudyEstimator::Kind::dynamic_fe: {
        const auto fit = dynamic_fe(panel, estimator.design);
        for (int j = 0; j < static_cast<int>(fit.labels.size()); ++j) {
          out.emplace_back(prefix + fit.labels[j], fit.coefficients(j));
        }
        break;
      }
      case StudyEstimator::Kind::saturated_iw: {
        const auto catt = saturated_catt(panel);
        for (const auto& cell : catt.cells) {
          if (cell.status != CellStatus::estimated) continue;
          out.emplace_back(prefix + "delta[" + std::to_string(cell.cohort) + "," +
                               std::to_string(cell.rel) + "]",
                           cell.estimate);
        }
        const auto iw = iw_dynamic(catt, layout);
        for (std::size_t k = 0; k < iw.rel_times.size(); ++k) {
          out.emplace_back(prefix + "nu[" + std::to_string(iw.rel_times[k]) + "]", iw.nu[k]);
        }
        const auto overall = iw_static(catt, layout);
        out.emplace_back(prefix + "kappa", overall.estimate);
        break;
      }
    }
  }
  return out;
}

int resolve_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("ESK_THREADS")) {
    const int limit = std::atoi(cap);
    if (limit >= 1) n = std::min(n, limit);
  }
  return n;
}

}  // namespace

StudySummary run_study(const DGPSpec& spec, int replications, const StudyConfig& config,
                       std::uint64_t master_seed, int n_threads) {
  if (replications < 1) throw DataError(errc::bad_config, "replications must be >= 1");
  spec.validate();

  std::vector<RepResult> results(replications);
  std::vector<char> failed(replications, 0);
  const int workers = std::min(resolve_threads(n_threads), replications);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= replications) return;
      const std::uint64_t seed = rng::derive(master_seed, static_cast<std::uint64_t>(rep));
      try {
        results[rep] = run_one(spec, config, seed);
      } catch (const Error&) {
        failed[rep] = 1;
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Reduce in replication order regardless of which worker produced what.
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  int n_failed = 0;
  for (int rep = 0; rep < replications; ++rep) {
    if (failed[rep]) {
      ++n_failed;
      continue;
    }
    for (const auto& [name, value] : results[rep]) {
      auto [it, inserted] = values.try_emplace(name);
      if (inserted) order.push_back(name);
      it->second.push_back(value);
    }
  }

  StudySummary summary;
  summary.master_seed = master_seed;
  summary.replications = replications;
  summary.failed = n_failed;
  for (const auto& name : order) {
    const auto& xs = values[name];
    CoefficientSummary c;
    c.name = name;
    c.count = static_cast<int>(xs.size());
    double sum = 0.0;
    long neg = 0;
    for (double x : xs) {
      sum += x;
      if (x < 0.0) ++neg;
    }
    c.mean = sum / c.count;
    double ss = 0.0;
    for (double x : xs) ss += (x - c.mean) * (x - c.mean);
    c.sd = c.count > 1 ? std::sqrt(ss / (c.count - 1)) : 0.0;
    c.mc_se = c.sd / std::sqrt(static_cast<double>(c.count));
    c.frac_negative = static_cast<double>(neg) / c.count;

    double lo = *std::min_element(xs.begin(), xs.end());
    double hi = *std::max_element(xs.begin(), xs.end());
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const int bins = std::max(1, config.histogram_bins);
    const double width = (hi - lo) / bins;
    c.histogram.resize(bins);
    for (int b = 0; b < bins; ++b) {
      c.histogram[b] = {lo + b * width, lo + (b + 1) * width, 0};
    }
    for (double x : xs) {
      int b = static_cast<int>((x - lo) / width);
      if (b >= bins) b = bins - 1;
      if (b < 0) b = 0;
      ++c.histogram[b].count;
    }
    summary.coefficients.push_back(std::move(c));
  }
  return summary;
}

}  // namespace esk
