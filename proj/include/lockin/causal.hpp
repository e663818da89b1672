#ifndef LOCKIN_CAUSAL_HPP
#define LOCKIN_CAUSAL_HPP

// Regression toolkit: OLS through Householder QR, classical and HC3
// covariances, the Breusch-Pagan test, and regression kink design on a time
// series with hinge terms at a known date.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include "json.hpp"

#include "lockin/error.hpp"
#include "lockin/io.hpp"

namespace lockin::causal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct OlsFit {
  Vector beta;
  Vector residuals;
  Vector hat_diag;
  double sigma2 = 0.0;
  Matrix cov_classical;
  Matrix xtx_inv;
  std::size_t n = 0;
  std::size_t k = 0;
};

/// Least squares by Householder QR. Column j is reported as dependent when
/// its component orthogonal to columns 0..j-1 is below 1e-10 of its norm.
inline OlsFit ols(const Matrix& x, const Vector& y) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<std::size_t>(x.cols());
  if (k == 0) throw InvalidParameter("design matrix has no columns");
  if (static_cast<std::size_t>(y.size()) != n) throw InvalidParameter("design and response lengths differ");
  if (n <= k) {
    throw ValidationError("need more observations than regressors (n=" + std::to_string(n) + ", k=" + std::to_string(k) +
                          ")");
  }
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("regression data contain non-finite values");

  const Eigen::HouseholderQR<Matrix> qr(x);
  const Matrix r = qr.matrixQR().topRows(static_cast<Eigen::Index>(k)).triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < k; ++j) {
    const double norm = x.col(static_cast<Eigen::Index>(j)).norm();
    if (std::abs(r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))) <= 1e-10 * std::max(norm, 1e-300)) {
      throw ValidationError("design matrix is rank deficient: column " + std::to_string(j) +
                                " is a linear combination of earlier columns",
                            static_cast<long long>(j));
    }
  }

  OlsFit fit;
  fit.n = n;
  fit.k = k;
  const Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
  const auto upper = r.triangularView<Eigen::Upper>();
  fit.beta = upper.solve(q.transpose() * y);
  fit.residuals = y - x * fit.beta;
  fit.hat_diag = q.rowwise().squaredNorm();
  fit.sigma2 = fit.residuals.squaredNorm() / static_cast<double>(n - k);
  const Matrix r_inv = upper.solve(Matrix::Identity(x.cols(), x.cols()));
  fit.xtx_inv = r_inv * r_inv.transpose();
  fit.cov_classical = fit.sigma2 * fit.xtx_inv;
  return fit;
}

/// (X'X)^-1 X' diag(e_i^2 / (1 - h_ii)^2) X (X'X)^-1.
inline Matrix hc3_covariance(const OlsFit& fit, const Matrix& x) {
  if (static_cast<std::size_t>(x.rows()) != fit.n || static_cast<std::size_t>(x.cols()) != fit.k) {
    throw InvalidParameter("design matrix does not match the fit");
  }
  Vector w(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double h = fit.hat_diag(i);
    if (h >= 1.0 - 1e-10) {
      throw ValidationError("observation " + std::to_string(i) + " has leverage " + io::format_double(h) +
                                "; HC3 needs h < 1",
                            static_cast<long long>(i));
    }
    w(i) = fit.residuals(i) * fit.residuals(i) / ((1.0 - h) * (1.0 - h));
  }
  const Matrix meat = x.transpose() * w.asDiagonal() * x;
  Matrix cov = fit.xtx_inv * meat * fit.xtx_inv;
  return 0.5 * (cov + cov.transpose());
}

inline Vector standard_errors(const Matrix& cov) { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

inline double t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

struct BreuschPagan {
  double lm_stat = 0.0;
  double p_value = 1.0;
  double r_squared = 0.0;
  std::size_t df = 0;
};

/// Auxiliary regression of squared residuals on X; LM = n R^2 against a
/// chi-square with k - 1 degrees of freedom.
inline BreuschPagan breusch_pagan(const OlsFit& fit, const Matrix& x) {
  if (fit.k < 2) throw InvalidParameter("Breusch-Pagan needs at least one regressor besides the intercept");
  const Vector e2 = fit.residuals.array().square();
  const double mean = e2.mean();
  const double sst = (e2.array() - mean).square().sum();
  if (!(sst > 0.0)) throw ValidationError("degenerate auxiliary regression: squared residuals are constant");
  const auto aux = ols(x, e2);
  BreuschPagan out;
  out.r_squared = 1.0 - aux.residuals.squaredNorm() / sst;
  out.lm_stat = std::max(0.0, static_cast<double>(fit.n) * out.r_squared);
  out.df = fit.k - 1;
  const boost::math::chi_squared dist(static_cast<double>(out.df));
  out.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, out.lm_stat)), 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Regression kink design

struct SeriesPoint {
  double t = 0.0;
  double y = 0.0;
};

struct RkdOptions {
  int degree = 1;
  bool robust = false;
  bool level_jump = false;
};

struct KinkFit {
  double kink_time = 0.0;
  int degree = 1;
  bool robust = false;
  bool level_jump = false;
  std::size_t n = 0;
  std::vector<std::string> names;
  std::vector<double> beta;
  std::vector<double> se;
  std::vector<double> t_stats;
  std::vector<double> p_values;
  double slope_change = 0.0;
  double slope_change_se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
};

/// Columns: 1, (t-t0)^p for p = 1..degree, max(t-t0, 0)^p for p = 1..degree,
/// and an optional step 1[t >= t0].
inline Matrix rkd_design(std::span<const SeriesPoint> series, double kink_time, const RkdOptions& opts,
                         std::vector<std::string>* names = nullptr) {
  const auto d = static_cast<Eigen::Index>(opts.degree);
  const Eigen::Index k = 1 + 2 * d + (opts.level_jump ? 1 : 0);
  Matrix x(static_cast<Eigen::Index>(series.size()), k);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double dt = series[i].t - kink_time;
    const double hinge = std::max(dt, 0.0);
    x(r, 0) = 1.0;
    for (Eigen::Index p = 1; p <= d; ++p) {
      x(r, p) = std::pow(dt, static_cast<double>(p));
      x(r, d + p) = std::pow(hinge, static_cast<double>(p));
    }
    if (opts.level_jump) x(r, k - 1) = dt >= 0.0 ? 1.0 : 0.0;
  }
  if (names) {
    names->assign({"intercept"});
    for (int p = 1; p <= opts.degree; ++p) names->push_back(p == 1 ? "trend" : "trend^" + std::to_string(p));
    for (int p = 1; p <= opts.degree; ++p) names->push_back(p == 1 ? "kink" : "kink^" + std::to_string(p));
    if (opts.level_jump) names->push_back("level_jump");
  }
  return x;
}

inline KinkFit rkd(std::span<const SeriesPoint> series, double kink_time, const RkdOptions& opts = {}) {
  if (opts.degree < 1) throw InvalidParameter("RKD degree must be >= 1");
  if (!std::isfinite(kink_time)) throw InvalidParameter("kink time must be finite");
  std::size_t left = 0, right = 0;
  for (const auto& p : series) {
    if (!std::isfinite(p.t) || !std::isfinite(p.y)) throw ValidationError("series contains non-finite values");
    (p.t < kink_time ? left : right) += 1;
  }
  const auto need = static_cast<std::size_t>(opts.degree) + 2;
  if (left < need || right < need) {
    throw ValidationError("RKD needs at least " + std::to_string(need) + " points on each side of the kink (left " +
                          std::to_string(left) + ", right " + std::to_string(right) + ")");
  }

  KinkFit out;
  out.kink_time = kink_time;
  out.degree = opts.degree;
  out.robust = opts.robust;
  out.level_jump = opts.level_jump;
  out.n = series.size();
  const Matrix x = rkd_design(series, kink_time, opts, &out.names);
  Vector y(x.rows());
  for (std::size_t i = 0; i < series.size(); ++i) y(static_cast<Eigen::Index>(i)) = series[i].y;

  const auto fit = ols(x, y);
  const Matrix cov = opts.robust ? hc3_covariance(fit, x) : fit.cov_classical;
  const Vector se = standard_errors(cov);
  const double df = static_cast<double>(fit.n - fit.k);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.beta.push_back(fit.beta(j));
    out.se.push_back(se(j));
    const double t = se(j) > 0.0 ? fit.beta(j) / se(j) : (fit.beta(j) == 0.0 ? 0.0 : INFINITY);
    out.t_stats.push_back(t);
    out.p_values.push_back(t_two_sided_p(t, df));
  }
  const auto slope = static_cast<std::size_t>(opts.degree) + 1;
  out.slope_change = out.beta[slope];
  out.slope_change_se = out.se[slope];
  out.t_stat = out.t_stats[slope];
  out.p_value = out.p_values[slope];
  return out;
}

/// Series CSV with header "t,y".
inline std::vector<SeriesPoint> parse_series_csv(std::string_view text) {
  const auto rows = io::lines(text);
  if (rows.empty()) throw ValidationError("series CSV is empty");
  const auto header = io::split(rows.front(), ',');
  if (header.size() != 2 || io::trim(header[0]) != "t" || io::trim(header[1]) != "y") {
    throw ValidationError("series CSV header must be \"t,y\"");
  }
  std::vector<SeriesPoint> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = io::split(rows[i], ',');
    const std::string where = "series line " + std::to_string(i + 1);
    if (cells.size() != 2) throw ValidationError(where + " needs two columns");
    out.push_back({io::parse_double(cells[0], where), io::parse_double(cells[1], where)});
  }
  return out;
}

inline std::string kink_fit_json(const KinkFit& f) {
  nlohmann::ordered_json doc;
  doc["n"] = f.n;
  doc["degree"] = f.degree;
  doc["kink_time"] = f.kink_time;
  doc["robust"] = f.robust;
  doc["level_jump"] = f.level_jump;
  nlohmann::ordered_json coefs = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < f.beta.size(); ++j) {
    nlohmann::ordered_json c;
    c["name"] = f.names[j];
    c["estimate"] = f.beta[j];
    c["se"] = f.se[j];
    c["t"] = f.t_stats[j];
    c["p_value"] = f.p_values[j];
    coefs.push_back(std::move(c));
  }
  doc["coefficients"] = std::move(coefs);
  doc["slope_change"] = f.slope_change;
  doc["se"] = f.slope_change_se;
  doc["t_stat"] = f.t_stat;
  doc["p_value"] = f.p_value;
  return doc.dump() + "\n";
}

}  // namespace lockin::causal

#endif  // LOCKIN_CAUSAL_HPP
