// esk: event-study estimation toolkit.
//
// Subcommands:
//   estimate  -- static/dynamic fixed-effects, interacted cell table,
//                interaction-weighted aggregates, or doubly robust contrasts
//   weights   -- implicit cell weights behind a fixed-effects coefficient
//   pretrend  -- joint Wald test that all lead coefficients are zero
//   simulate  -- replication study over a parameterized DGP
//
// Exit codes: 0 success, 1 estimation error, 2 I/O or configuration error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "esk/serialize.hpp"

namespace {

struct CommonOptions {
  std::string input;
  std::string schema;
  std::string model = "dynamic";
  std::optional<int> leads;
  std::optional<int> lags;
  std::vector<int> exclude;
  std::string window;
  std::string out;
  std::string format = "json";
  bool include_vcov = false;
  bool cr0 = false;
};

esk::PanelSchema parse_schema(const std::string& spec) {
  esk::PanelSchema schema;
  if (spec.empty()) return schema;
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw esk::DataError(esk::errc::bad_config,
                           "schema entries look like unit=colname; got '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "unit") schema.unit = value;
    else if (key == "time") schema.time = value;
    else if (key == "outcome") schema.outcome = value;
    else if (key == "event") schema.event = value;
    else throw esk::DataError(esk::errc::bad_config, "unknown schema key '" + key + "'");
  }
  return schema;
}

std::optional<std::pair<int, int>> parse_window(const std::string& spec) {
  if (spec.empty()) return {};
  const auto dots = spec.find("..");
  if (dots == std::string::npos) {
    throw esk::DataError(esk::errc::bad_config, "window looks like t0..t1; got '" + spec + "'");
  }
  try {
    return std::make_pair(std::stoi(spec.substr(0, dots)), std::stoi(spec.substr(dots + 2)));
  } catch (...) {
    throw esk::DataError(esk::errc::bad_config, "window bounds must be integers");
  }
}

esk::DesignConfig design_from(const CommonOptions& opts) {
  esk::DesignConfig config;
  config.leads = opts.leads;
  config.lags = opts.lags;
  config.exclude_rel = opts.exclude;
  config.window = parse_window(opts.window);
  return config;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) {
    throw esk::DataError(esk::errc::bad_config, "cannot write to " + out_path);
  }
  out << text;
}

std::string render(const esk::Json& j) { return j.dump(2) + "\n"; }

int run_estimate(const CommonOptions& opts, int dr_cohort, int dr_rel, int dr_folds,
                 std::uint64_t dr_fold_seed, const std::vector<std::string>& dr_covariates) {
  const auto schema = parse_schema(opts.schema);
  const esk::RegressionOptions reg{opts.cr0 ? esk::SmallSample::cr0 : esk::SmallSample::cr1};

  if (opts.model == "dr") {
    std::ifstream in(opts.input);
    if (!in) throw esk::DataError(esk::errc::bad_config, "cannot open input file " + opts.input);
    esk::CovariatePanel cp;
    cp.panel = esk::load_panel(in, schema, dr_covariates, cp.covariates);
    const auto result = esk::dr_estimate(cp, dr_cohort, dr_rel, dr_folds,
                                         esk::LearnerSet::defaults(), dr_fold_seed);
    emit(render(esk::to_json(result, dr_cohort, dr_rel)), opts.out);
    return 0;
  }

  const esk::Panel panel = esk::load_panel_file(opts.input, schema);
  const auto window = parse_window(opts.window);

  if (opts.model == "static") {
    const auto fit = esk::static_fe(panel, reg);
    emit(opts.format == "csv" ? esk::estimates_to_csv(fit)
                              : render(esk::to_json(fit, opts.include_vcov)),
         opts.out);
  } else if (opts.model == "dynamic") {
    const auto fit = esk::dynamic_fe(panel, design_from(opts), reg);
    emit(opts.format == "csv" ? esk::estimates_to_csv(fit)
                              : render(esk::to_json(fit, opts.include_vcov)),
         opts.out);
  } else if (opts.model == "saturated") {
    const auto catt = esk::saturated_catt(panel, window, reg);
    emit(opts.format == "csv" ? esk::catt_to_csv(catt) : render(esk::to_json(catt)), opts.out);
  } else if (opts.model == "iw") {
    const auto catt = esk::saturated_catt(panel, window, reg);
    const auto layout = esk::CohortLayout::from_panel(panel);
    auto iw = esk::iw_dynamic(catt, layout);
    const auto overall = esk::iw_static(catt, layout);
    iw.kappa = overall.estimate;
    iw.kappa_se = overall.std_error;
    emit(render(esk::to_json(iw, catt)), opts.out);
  } else {
    throw esk::DataError(esk::errc::bad_config, "unknown model '" + opts.model + "'");
  }
  return 0;
}

int run_weights(const CommonOptions& opts, bool static_target, int target_l, bool flag_negative) {
  const auto schema = parse_schema(opts.schema);
  const esk::Panel panel = esk::load_panel_file(opts.input, schema);
  const auto weights = static_target
                           ? esk::static_weights(panel)
                           : esk::dynamic_weights(panel, target_l, design_from(opts));
  emit(esk::weights_to_csv(weights, flag_negative), opts.out);
  return 0;
}

int run_pretrend(const CommonOptions& opts) {
  const auto schema = parse_schema(opts.schema);
  const esk::Panel panel = esk::load_panel_file(opts.input, schema);
  const esk::RegressionOptions reg{opts.cr0 ? esk::SmallSample::cr0 : esk::SmallSample::cr1};
  esk::WaldResult wald;
  if (opts.model == "saturated") {
    wald = esk::pretrend_test(esk::saturated_catt(panel, parse_window(opts.window), reg));
  } else if (opts.model == "dynamic") {
    wald = esk::pretrend_test(esk::dynamic_fe(panel, design_from(opts), reg));
  } else {
    throw esk::DataError(esk::errc::bad_config, "pretrend model must be dynamic or saturated");
  }
  emit(render(esk::to_json(wald)), opts.out);
  return 0;
}

int run_simulate(const std::string& spec_path, int reps, std::uint64_t seed,
                 const std::string& estimators, const CommonOptions& opts,
                 const std::string& hist_out) {
  const auto spec = esk::parse_dgp_spec_file(spec_path);
  esk::StudyConfig config;
  std::istringstream ss(estimators);
  std::string name;
  while (std::getline(ss, name, ',')) {
    esk::StudyEstimator est;
    if (name == "static") {
      est.kind = esk::StudyEstimator::Kind::static_fe;
      est.prefix = "static_fe";
    } else if (name == "dynamic") {
      est.kind = esk::StudyEstimator::Kind::dynamic_fe;
      est.design = design_from(opts);
      est.prefix = "dynamic_fe";
    } else if (name == "iw") {
      est.kind = esk::StudyEstimator::Kind::saturated_iw;
      est.prefix = "iw";
    } else {
      throw esk::DataError(esk::errc::bad_config, "unknown estimator '" + name + "'");
    }
    config.estimators.push_back(est);
  }
  if (config.estimators.empty()) {
    throw esk::DataError(esk::errc::bad_config, "no estimators requested");
  }
  const auto summary = esk::run_study(spec, reps, config, seed);
  emit(render(esk::to_json(summary)), opts.out);
  if (!hist_out.empty()) emit(esk::histograms_to_csv(summary), hist_out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-study estimation toolkit"};
  app.require_subcommand(1);

  CommonOptions opts;
  int target_l = 0;
  bool static_target = false;
  bool flag_negative = false;
  std::string spec_path, hist_out;
  std::string estimators = "dynamic,iw";
  int reps = 1000;
  std::uint64_t seed = 0;
  int dr_cohort = 1, dr_rel = 0, dr_folds = esk::kDefaultFolds;
  std::uint64_t dr_fold_seed = 0;
  std::vector<std::string> dr_covariates;

  auto add_common = [&](CLI::App* cmd, bool needs_input) {
    auto* input = cmd->add_option("--input", opts.input, "panel CSV in long format");
    if (needs_input) input->required();
    cmd->add_option("--schema", opts.schema, "column names, e.g. unit=id,time=wave,outcome=y,event=first");
    cmd->add_option("--leads", opts.leads, "include leads -K..-1");
    cmd->add_option("--lags", opts.lags, "include lags 0..K");
    cmd->add_option("--exclude", opts.exclude, "relative times to drop from the design")
        ->delimiter(',');
    cmd->add_option("--window", opts.window, "estimation window t0..t1 (normalized times)");
    cmd->add_option("--out", opts.out, "output path (default: stdout)");
    cmd->add_option("--format", opts.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_flag("--cr0", opts.cr0, "raw sandwich covariance (no small-sample factor)");
  };

  auto* estimate = app.add_subcommand("estimate", "fit an estimator and serialize the result");
  add_common(estimate, true);
  estimate->add_option("--model", opts.model, "static|dynamic|saturated|iw|dr")
      ->check(CLI::IsMember({"static", "dynamic", "saturated", "iw", "dr"}));
  estimate->add_flag("--vcov", opts.include_vcov, "include the full covariance matrix");
  estimate->add_option("--cohort", dr_cohort, "dr: treated cohort e");
  estimate->add_option("--rel", dr_rel, "dr: relative time l");
  estimate->add_option("--folds", dr_folds, "dr: cross-fitting folds");
  estimate->add_option("--seed", dr_fold_seed, "dr: fold assignment seed");
  estimate->add_option("--covariates", dr_covariates, "dr: covariate column names")
      ->delimiter(',');

  auto* weights = app.add_subcommand("weights", "implicit cell weights of a FE coefficient");
  add_common(weights, true);
  weights->add_option("--target-l", target_l, "dynamic coefficient to decompose");
  weights->add_flag("--static", static_target, "decompose the static coefficient instead");
  weights->add_flag("--flag-negative", flag_negative, "emit only negative-weight rows");

  auto* pretrend = app.add_subcommand("pretrend", "joint Wald test of zero lead coefficients");
  add_common(pretrend, true);
  pretrend->add_option("--model", opts.model, "dynamic|saturated")
      ->check(CLI::IsMember({"dynamic", "saturated"}));

  auto* simulate = app.add_subcommand("simulate", "replication study over a DGP spec");
  add_common(simulate, false);
  simulate->add_option("--spec", spec_path, "DGP spec file")->required();
  simulate->add_option("--reps", reps, "number of replications");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--estimators", estimators, "comma list: static,dynamic,iw");
  simulate->add_option("--hist-out", hist_out, "histogram CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (estimate->parsed()) {
      return run_estimate(opts, dr_cohort, dr_rel, dr_folds, dr_fold_seed, dr_covariates);
    }
    if (weights->parsed()) return run_weights(opts, static_target, target_l, flag_negative);
    if (pretrend->parsed()) return run_pretrend(opts);
    if (simulate->parsed()) return run_simulate(spec_path, reps, seed, estimators, opts, hist_out);
  } catch (const esk::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const esk::EstimationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
