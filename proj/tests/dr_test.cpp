#include <doctest.h>

#include <cmath>

#include "esk/dr.hpp"
#include "esk/rng.hpp"
#include "test_helpers.hpp"

using namespace esk;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Confounded two-period design: one treated cohort at t=1 against a
// not-yet-treated group, with covariate-specific trends and event timing
// driven by a logit in the scalar covariate.
struct ConfoundedDraw {
  CovariatePanel cp;
  NuisanceSet truth;
  double delta = 5.0;
};

ConfoundedDraw simulate_confounded(int n, std::uint64_t seed, double delta = 5.0) {
  constexpr double kIntercept = 0.3;
  constexpr double kSlope = 0.35;
  constexpr double kTrendBase = 1.0;
  constexpr double kTrendX = 1.0;

  Eigen::MatrixXd x(n, 2), y(n, 2);
  std::vector<int> events(n);
  for (int i = 0; i < n; ++i) {
    const double xi = -1.5 + 3.0 * rng::uniform(seed, 10, i);
    x(i, 0) = xi;
    x(i, 1) = xi;
    const double p1 = sigmoid(kIntercept + kSlope * xi);
    events[i] = rng::uniform(seed, 11, i) < p1 ? 1 : kNever;
    const double alpha = rng::normal(seed, 12, i);
    y(i, 0) = alpha + 0.5 * rng::normal(seed, 13, i);
    y(i, 1) = alpha + kTrendBase + kTrendX * xi + 0.5 * rng::normal(seed, 14, i) +
              (events[i] == 1 ? delta : 0.0);
  }
  ConfoundedDraw draw;
  draw.cp.panel = make_panel(std::move(y), std::move(events));
  draw.cp.covariates = {std::move(x)};
  draw.delta = delta;
  draw.truth.g_inf = [=](const Eigen::VectorXd& row) {
    return kTrendBase + kTrendX * row(0);
  };
  draw.truth.m_x = [=](const Eigen::VectorXd& row) {
    return sigmoid(kIntercept + kSlope * row(0));
  };
  draw.truth.n_x = [=](const Eigen::VectorXd& row) {
    return 1.0 - sigmoid(kIntercept + kSlope * row(0));
  };
  double share = 0.0;
  for (int e : draw.cp.panel.event_times) share += e == 1 ? 1.0 : 0.0;
  draw.truth.m_scalar = share / draw.cp.panel.n_units();
  return draw;
}

CovariatePanel plain_panel(std::mt19937_64& gen, int n, int t_max,
                           const std::vector<int>& cohorts) {
  CovariatePanel cp;
  cp.panel = esk::testing::random_panel_covering(gen, n, t_max, cohorts);
  return cp;  // p = 0
}

LearnerSet misspecified_g() {
  LearnerSet set = LearnerSet::defaults();
  set.regression = LearnerSet::intercept_only().regression;
  return set;
}

LearnerSet misspecified_propensity() {
  LearnerSet set = LearnerSet::defaults();
  set.binary = LearnerSet::intercept_only().binary;
  return set;
}

}  // namespace

TEST_CASE("regression adjustment: zero trend function is the raw cohort change") {
  std::mt19937_64 gen(61);
  auto cp = plain_panel(gen, 30, 3, {1, 2, 3});
  const auto zero = [](const Eigen::VectorXd&) { return 0.0; };
  const double theta = regression_adjust(cp, 1, 1, zero);
  double expected = 0.0;
  int count = 0;
  for (int i = 0; i < cp.panel.n_units(); ++i) {
    if (cp.panel.event_times[i] != 1) continue;
    expected += cp.panel.outcomes(i, 2) - cp.panel.outcomes(i, 0);
    ++count;
  }
  CHECK(theta == doctest::Approx(expected / count).epsilon(1e-12));
}

TEST_CASE("regression adjustment: true trend recovers the effect exactly at zero noise") {
  // noiseless confounded draw: outcome change is trend(x) + delta for the
  // treated cohort, so adjusting by the true trend leaves delta
  const int n = 50;
  Eigen::MatrixXd x(n, 2), y(n, 2);
  std::vector<int> events(n);
  for (int i = 0; i < n; ++i) {
    const double xi = -1.0 + 2.0 * i / (n - 1.0);
    x(i, 0) = x(i, 1) = xi;
    events[i] = i % 2 == 0 ? 1 : kNever;
    y(i, 0) = 0.3 * i;
    y(i, 1) = 0.3 * i + 1.0 + 2.0 * xi + (events[i] == 1 ? 4.0 : 0.0);
  }
  CovariatePanel cp;
  cp.panel = make_panel(std::move(y), std::move(events));
  cp.covariates = {std::move(x)};
  const double theta = regression_adjust(
      cp, 1, 0, [](const Eigen::VectorXd& row) { return 1.0 + 2.0 * row(0); });
  CHECK(theta == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("regression adjustment: raising the trend by c lowers theta by c") {
  std::mt19937_64 gen(62);
  auto cp = plain_panel(gen, 24, 3, {1, 2, kNever});
  const auto g0 = [](const Eigen::VectorXd&) { return 0.7; };
  const auto g1 = [](const Eigen::VectorXd&) { return 0.7 + 2.5; };
  CHECK(regression_adjust(cp, 1, 1, g0) - regression_adjust(cp, 1, 1, g1) ==
        doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("ipw with flat nuisances equals the direct DID contrast") {
  std::mt19937_64 gen(63);
  auto cp = plain_panel(gen, 40, 3, {1, 2, 3, kNever});
  const int t = 2;  // e=1, l=1
  int treated = 0, control = 0;
  for (int e : cp.panel.event_times) {
    treated += e == 1;
    control += e > t;
  }
  NuisanceSet flat;
  flat.m_scalar = static_cast<double>(treated) / cp.panel.n_units();
  const double n0 = static_cast<double>(control) / cp.panel.n_units();
  flat.m_x = [&flat](const Eigen::VectorXd&) { return flat.m_scalar; };
  flat.n_x = [n0](const Eigen::VectorXd&) { return n0; };
  flat.g_inf = [](const Eigen::VectorXd&) { return 0.0; };
  const double theta = ipw_catt(cp, 1, 1, flat);
  const auto did = did_catt(cp.panel, 1, 1, 0, {3, kNever});
  CHECK(theta == doctest::Approx(did.estimate).epsilon(1e-10));
}

TEST_CASE("ipw with true propensities is unbiased over replications") {
  const int reps = 120;
  double mean = 0.0;
  std::vector<double> draws;
  for (int rep = 0; rep < reps; ++rep) {
    const auto draw = simulate_confounded(1000, rng::derive(300, rep));
    NuisanceSet eta = draw.truth;
    eta.g_inf = [](const Eigen::VectorXd&) { return 0.0; };  // ipw ignores g
    const double theta = ipw_catt(draw.cp, 1, 0, eta);
    draws.push_back(theta);
    mean += theta;
  }
  mean /= reps;
  double sd = 0.0;
  for (double d : draws) sd += (d - mean) * (d - mean);
  sd = std::sqrt(sd / (reps - 1));
  CHECK(std::fabs(mean - 5.0) < 3.0 * sd / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("ipw under a null effect centers on zero") {
  const int reps = 80;
  double mean = 0.0;
  std::vector<double> draws;
  for (int rep = 0; rep < reps; ++rep) {
    const auto draw = simulate_confounded(1000, rng::derive(310, rep), /*delta=*/0.0);
    NuisanceSet eta = draw.truth;
    eta.g_inf = [](const Eigen::VectorXd&) { return 0.0; };
    const double theta = ipw_catt(draw.cp, 1, 0, eta);
    draws.push_back(theta);
    mean += theta;
  }
  mean /= reps;
  double sd = 0.0;
  for (double d : draws) sd += (d - mean) * (d - mean);
  sd = std::sqrt(sd / (reps - 1));
  CHECK(std::fabs(mean) < 3.0 * sd / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("score: units outside both groups contribute exactly zero") {
  NuisanceSet eta;
  eta.g_inf = [](const Eigen::VectorXd&) { return 0.4; };
  eta.m_x = [](const Eigen::VectorXd&) { return 0.3; };
  eta.n_x = [](const Eigen::VectorXd&) { return 0.5; };
  eta.m_scalar = 0.3;
  Eigen::VectorXd x(1);
  x << 0.2;
  // cohort e=2 at t=3: a unit with E=1 is neither in the cohort nor untreated
  CHECK(dr_score(1.0, 0.5, x, 1, 2, 3, 0.7, eta) == 0.0);
}

TEST_CASE("score linearity in theta") {
  NuisanceSet eta;
  eta.g_inf = [](const Eigen::VectorXd&) { return 0.4; };
  eta.m_x = [](const Eigen::VectorXd&) { return 0.3; };
  eta.n_x = [](const Eigen::VectorXd&) { return 0.5; };
  eta.m_scalar = 0.25;
  Eigen::VectorXd x(1);
  x << -0.3;
  const double t1 = 0.2, t2 = 1.7;
  // treated unit: slope is -1/m
  const double a = dr_score(2.0, 0.5, x, 2, 2, 3, t1, eta);
  const double b = dr_score(2.0, 0.5, x, 2, 2, 3, t2, eta);
  CHECK(b - a == doctest::Approx(-(t2 - t1) / eta.m_scalar).epsilon(1e-12));
  // control unit: no theta dependence
  const double c = dr_score(2.0, 0.5, x, kNever, 2, 3, t1, eta);
  const double d = dr_score(2.0, 0.5, x, kNever, 2, 3, t2, eta);
  CHECK(c == d);
}

TEST_CASE("cross-fitting with p=0 reduces exactly to the direct DID contrast") {
  std::mt19937_64 gen(64);
  for (int trial = 0; trial < 10; ++trial) {
    auto cp = plain_panel(gen, 30 + trial, 3, {1, 2, 3, kNever});
    for (int folds : {2, 3, 5}) {
      const auto result = dr_estimate(cp, 1, 1, folds, LearnerSet::defaults(), trial);
      const auto did = did_catt(cp.panel, 1, 1, 0, {3, kNever});
      CHECK(std::fabs(result.theta - did.estimate) < 1e-10);
    }
  }
}

TEST_CASE("cross-fitting identification: empirical score mean vanishes at theta-hat") {
  const auto draw = simulate_confounded(2000, 17);
  const auto result = dr_estimate(draw.cp, 1, 0);
  // plug the fitted theta into the score with the true nuisances: zero
  // within Monte Carlo noise of the score itself
  double total = 0.0;
  const int n = draw.cp.panel.n_units();
  for (int i = 0; i < n; ++i) {
    total += dr_score(draw.cp.panel.outcomes(i, 1), draw.cp.panel.outcomes(i, 0),
                      draw.cp.x_at(i, 1), draw.cp.panel.event_times[i], 1, 1, result.theta,
                      draw.truth);
  }
  CHECK(std::fabs(total / n) < 0.2);
}

TEST_CASE("cross-fitting determinism and fold structure") {
  const auto draw = simulate_confounded(500, 23);
  const auto a = dr_estimate(draw.cp, 1, 0, 5, LearnerSet::defaults(), 9);
  const auto b = dr_estimate(draw.cp, 1, 0, 5, LearnerSet::defaults(), 9);
  CHECK(a.theta == b.theta);
  CHECK(a.fold_of_unit == b.fold_of_unit);
  const auto c = dr_estimate(draw.cp, 1, 0, 5, LearnerSet::defaults(), 10);
  CHECK(a.fold_of_unit != c.fold_of_unit);
  // folds partition the units
  std::vector<int> counts(5, 0);
  for (int f : a.fold_of_unit) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[f];
  }
  for (int count : counts) CHECK(count > 0);
}

TEST_CASE("double robustness: one-sided misspecification stays unbiased") {
  const int reps = 150;
  const int n = 1500;
  for (const auto& [learners, tag] :
       {std::pair{misspecified_g(), "wrong trend"},
        std::pair{misspecified_propensity(), "wrong propensity"}}) {
    INFO(tag);
    std::vector<double> draws;
    double mean = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const auto draw = simulate_confounded(n, rng::derive(400, rep));
      const auto result = dr_estimate(draw.cp, 1, 0, 5, learners, rep);
      draws.push_back(result.theta);
      mean += result.theta;
    }
    mean /= reps;
    double sd = 0.0;
    for (double d : draws) sd += (d - mean) * (d - mean);
    sd = std::sqrt(sd / (reps - 1));
    const double mc_se = sd / std::sqrt(static_cast<double>(reps));
    CHECK(std::fabs(mean - 5.0) < 3.0 * mc_se);
  }
}

TEST_CASE("orthogonality: the doubly robust slope vanishes, the ipw slope does not") {
  const auto draw = simulate_confounded(300000, 31);
  NuisanceDirection dir;
  dir.component = NuisanceDirection::Component::n_x;
  dir.h = [](const Eigen::VectorXd& row) { return 0.3 + 0.2 * row(0); };

  const double dr_slope =
      orthogonality_check(draw.cp, 1, 0, draw.delta, draw.truth, dir, 1e-3);
  const double ipw_slope = orthogonality_check(draw.cp, 1, 0, draw.delta, draw.truth, dir,
                                               1e-3, ScoreKind::ipw);
  CHECK(std::fabs(dr_slope) < 0.05);
  CHECK(std::fabs(ipw_slope) > 1.0);
  // slopes from the orthogonal score are stable across the eps grid
  const double dr_slope_coarse =
      orthogonality_check(draw.cp, 1, 0, draw.delta, draw.truth, dir, 1e-2);
  CHECK(dr_slope == doctest::Approx(dr_slope_coarse).epsilon(1e-2));

  // trend direction behaves the same way
  NuisanceDirection gdir;
  gdir.component = NuisanceDirection::Component::g_inf;
  gdir.h = [](const Eigen::VectorXd& row) { return 1.0 + 0.5 * row(0); };
  CHECK(std::fabs(orthogonality_check(draw.cp, 1, 0, draw.delta, draw.truth, gdir, 1e-3)) <
        0.05);
}

TEST_CASE("fold and overlap diagnostics") {
  std::mt19937_64 gen(65);
  auto cp = plain_panel(gen, 12, 3, {1, 3});
  CHECK_THROWS_AS(dr_estimate(cp, 1, 1, 1), DataError);  // K >= 2

  // a propensity pinned to zero triggers the overlap error in ipw
  NuisanceSet eta;
  eta.m_scalar = 0.4;
  eta.g_inf = [](const Eigen::VectorXd&) { return 0.0; };
  eta.m_x = [](const Eigen::VectorXd&) { return 0.4; };
  eta.n_x = [](const Eigen::VectorXd&) { return 0.0; };
  try {
    ipw_catt(cp, 1, 1, eta);
    FAIL("expected OverlapViolation");
  } catch (const EstimationError& e) {
    CHECK(e.code() == errc::overlap_violation);
  }
}
