#include "esk/regression.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <sstream>

namespace esk {

int EstimateSet::find(const std::string& label) const {
  for (int j = 0; j < static_cast<int>(labels.size()); ++j) {
    if (labels[j] == label) return j;
  }
  return -1;
}

double chi_square_upper_tail(double statistic, int df) {
  if (statistic <= 0.0) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(df));
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

namespace {

double cr_factor(SmallSample correction, int g, long n, int k) {
  if (correction == SmallSample::cr0) return 1.0;
  if (g <= 1 || n <= k) return 1.0;
  return (static_cast<double>(g) / (g - 1)) *
         (static_cast<double>(n - 1) / static_cast<double>(n - k));
}

// Per-cluster score sums S_i = sum_t x_{it} u_{it}, stacked G x k.
Eigen::MatrixXd cluster_scores(const Eigen::MatrixXd& xd, const Eigen::VectorXd& residuals,
                               const std::vector<int>& unit_of_obs, int n_units) {
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n_units, xd.cols());
  for (long r = 0; r < xd.rows(); ++r) {
    scores.row(unit_of_obs[r]) += residuals(r) * xd.row(r);
  }
  return scores;
}

}  // namespace

Eigen::MatrixXd cluster_vcov(const Eigen::MatrixXd& xd, const Eigen::VectorXd& residuals,
                             const std::vector<int>& unit_of_obs, SmallSample correction) {
  const int k = static_cast<int>(xd.cols());
  const long n = xd.rows();
  int g = 0;
  for (int u : unit_of_obs) g = std::max(g, u + 1);

  Eigen::MatrixXd xtx = xd.transpose() * xd;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw EstimationError(errc::singular_bread, "x'x is not positive definite");
  }
  const Eigen::MatrixXd bread_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));

  const Eigen::MatrixXd scores = cluster_scores(xd, residuals, unit_of_obs, g);
  const Eigen::MatrixXd meat = scores.transpose() * scores;
  Eigen::MatrixXd v = bread_inv * meat * bread_inv;
  v *= cr_factor(correction, g, n, k);
  // enforce exact symmetry against accumulation order
  return 0.5 * (v + v.transpose());
}

EstimateSet within_ols(const Panel& panel, const RelativeTimeDesign& design,
                       const RegressionOptions& options) {
  const int w = static_cast<int>(design.estimation_times.size());
  const int n = panel.n_units();
  const long n_obs = static_cast<long>(n) * w;
  const int k = design.n_columns();
  const auto window_index = time_range(0, w - 1);

  Eigen::MatrixXd xd(n_obs, k);
  for (int j = 0; j < k; ++j) {
    const DemeanedMatrix dm = demean_two_way(design.column_matrix(j), window_index);
    xd.col(j) = Eigen::Map<const Eigen::VectorXd>(dm.values.data(), n_obs);
  }
  const DemeanedMatrix ydm = demean_two_way(panel.outcomes, design.estimation_times);
  const Eigen::VectorXd yd = Eigen::Map<const Eigen::VectorXd>(ydm.values.data(), n_obs);

  const auto dep = dependent_columns(xd);
  if (!dep.empty()) {
    std::ostringstream msg;
    msg << "dependent columns:";
    for (int j : dep) msg << " " << design.columns[j].label;
    throw EstimationError(errc::rank_deficient_design, msg.str());
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xd);
  qr.setThreshold(1e-10);
  const Eigen::VectorXd beta = qr.solve(yd);

  auto detail = std::make_shared<FitDetail>();
  detail->xd = std::move(xd);
  detail->residuals = yd - detail->xd * beta;
  detail->unit_of_obs.resize(n_obs);
  // values are stored column-major (time-major), so obs r belongs to unit r % N
  for (long r = 0; r < n_obs; ++r) detail->unit_of_obs[r] = static_cast<int>(r % n);
  detail->n_units = n;
  detail->estimation_times = design.estimation_times;
  detail->correction = options.correction;
  {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(detail->xd.transpose() * detail->xd);
    detail->bread_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  }

  EstimateSet est;
  est.labels = design.labels();
  est.coefficients = beta;
  est.vcov = cluster_vcov(detail->xd, detail->residuals, detail->unit_of_obs, options.correction);
  est.n_units = n;
  est.n_obs = n_obs;
  for (const auto& p : design.pruned) est.dropped_columns.push_back(p.label + " (empty)");
  for (int l : design.excluded_rel) {
    est.dropped_columns.push_back("mu[" + std::to_string(l) + "] (excluded)");
  }
  est.detail = std::move(detail);
  return est;
}

EstimateSet joint_fe_iw_vcov(const EstimateSet& fe_fit, const EstimateSet& iw_fit,
                             const Eigen::MatrixXd& f_cells,
                             const std::vector<std::string>& agg_labels) {
  if (!fe_fit.detail || !iw_fit.detail) {
    throw EstimationError(errc::sample_mismatch, "both fits must carry fit internals");
  }
  const auto& fd = *fe_fit.detail;
  const auto& bd = *iw_fit.detail;
  if (fd.n_units != bd.n_units || fd.xd.rows() != bd.xd.rows() ||
      fd.estimation_times != bd.estimation_times) {
    throw EstimationError(errc::sample_mismatch,
                          "fits must share the same units and estimation window");
  }
  if (f_cells.rows() != iw_fit.coefficients.size() ||
      f_cells.cols() != static_cast<long>(agg_labels.size())) {
    throw EstimationError(errc::sample_mismatch, "aggregate weight matrix shape mismatch");
  }

  const int k_fe = static_cast<int>(fe_fit.coefficients.size());
  const int k_agg = static_cast<int>(agg_labels.size());
  const int g = fd.n_units;
  const long n = fd.xd.rows();

  const Eigen::MatrixXd s_fe = cluster_scores(fd.xd, fd.residuals, fd.unit_of_obs, g);
  const Eigen::MatrixXd s_iw = cluster_scores(bd.xd, bd.residuals, bd.unit_of_obs, g);

  const double c_fe = cr_factor(fd.correction, g, n, k_fe);
  const double c_iw = cr_factor(bd.correction, g, n, static_cast<int>(iw_fit.coefficients.size()));

  const Eigen::MatrixXd sigma_fe =
      c_fe * fd.bread_inv * (s_fe.transpose() * s_fe) * fd.bread_inv;
  const Eigen::MatrixXd vcov_delta =
      c_iw * bd.bread_inv * (s_iw.transpose() * s_iw) * bd.bread_inv;
  const Eigen::MatrixXd sigma_iw = f_cells.transpose() * vcov_delta * f_cells;
  const Eigen::MatrixXd sigma_12 = std::sqrt(c_fe * c_iw) * fd.bread_inv *
                                   (s_fe.transpose() * s_iw) * bd.bread_inv * f_cells;

  EstimateSet joint;
  joint.labels = fe_fit.labels;
  joint.labels.insert(joint.labels.end(), agg_labels.begin(), agg_labels.end());
  joint.coefficients.resize(k_fe + k_agg);
  joint.coefficients.head(k_fe) = fe_fit.coefficients;
  joint.coefficients.tail(k_agg) = f_cells.transpose() * iw_fit.coefficients;
  joint.vcov.resize(k_fe + k_agg, k_fe + k_agg);
  joint.vcov.topLeftCorner(k_fe, k_fe) = sigma_fe;
  joint.vcov.topRightCorner(k_fe, k_agg) = sigma_12;
  joint.vcov.bottomLeftCorner(k_agg, k_fe) = sigma_12.transpose();
  joint.vcov.bottomRightCorner(k_agg, k_agg) = sigma_iw;
  joint.vcov = 0.5 * (joint.vcov + joint.vcov.transpose()).eval();
  joint.n_units = fe_fit.n_units;
  joint.n_obs = fe_fit.n_obs;
  return joint;
}

WaldResult wald_test(const EstimateSet& est, const Eigen::MatrixXd& restriction,
                     const Eigen::VectorXd& value, std::vector<std::string> restriction_labels) {
  const int q = static_cast<int>(restriction.rows());
  if (q == 0 || restriction.cols() != est.coefficients.size()) {
    throw EstimationError(errc::bad_config, "restriction matrix shape mismatch");
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(restriction.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < q) {
      throw EstimationError(errc::singular_restriction_covariance,
                            "restriction rows are linearly dependent");
    }
  }
  const Eigen::VectorXd gap = restriction * est.coefficients - value;
  // An exactly satisfied restriction is a zero statistic even when the fit
  // is exact and the covariance degenerates (0/0 otherwise).
  const double scale = std::max(1.0, est.coefficients.cwiseAbs().maxCoeff());
  if (gap.cwiseAbs().maxCoeff() <= 1e-10 * scale) {
    WaldResult out;
    out.statistic = 0.0;
    out.df = q;
    out.p_value = 1.0;
    out.restriction_labels = std::move(restriction_labels);
    return out;
  }
  const Eigen::MatrixXd rvr = restriction * est.vcov * restriction.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(rvr);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw EstimationError(errc::singular_restriction_covariance,
                          "restricted covariance is singular");
  }
  WaldResult out;
  out.statistic = gap.dot(lu.solve(gap));
  if (out.statistic < 0.0) out.statistic = 0.0;  // numerical guard
  out.df = q;
  out.p_value = chi_square_upper_tail(out.statistic, q);
  out.restriction_labels = std::move(restriction_labels);
  return out;
}

}  // namespace esk
