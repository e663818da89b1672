#include <gtest/gtest.h>

#include <cmath>

#include "lockin/causal.hpp"
#include "lockin/rng.hpp"

using namespace lockin;
using namespace lockin::causal;

namespace {

Matrix with_intercept(const std::vector<std::vector<double>>& cols, std::size_t n) {
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size() + 1));
  x.col(0).setOnes();
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) = cols[c][i];
  return x;
}

// Kink generator: slope 0.5 left of 0, 0.5 + change right of it, t on [-1, 1].
std::vector<SeriesPoint> kink_series(std::uint64_t seed, std::size_t n, double change, double sigma) {
  Rng rng(seed);
  std::vector<SeriesPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = {t, 1.0 + 0.5 * t + change * std::max(t, 0.0) + rng.normal(0.0, sigma)};
  }
  return out;
}

}  // namespace

TEST(Ols, NoiselessLineIsExact) {
  std::vector<double> x{0, 1, 2, 3, 4.5, -2};
  Vector y(6);
  for (int i = 0; i < 6; ++i) y(i) = 2.0 + 3.0 * x[static_cast<std::size_t>(i)];
  const auto fit = ols(with_intercept({x}, 6), y);
  EXPECT_NEAR(fit.beta(0), 2.0, 1e-10);
  EXPECT_NEAR(fit.beta(1), 3.0, 1e-10);
  EXPECT_LT(fit.residuals.norm(), 1e-10);
}

TEST(Ols, InterceptOnlyIsMean) {
  Vector y(5);
  y << 1, 4, 2, 8, 5;
  const auto fit = ols(Matrix::Ones(5, 1), y);
  EXPECT_NEAR(fit.beta(0), 4.0, 1e-12);
  EXPECT_NEAR(fit.sigma2, (9 + 0 + 4 + 16 + 1) / 4.0, 1e-12);
}

TEST(Ols, RankDeficiencyNamesColumn) {
  std::vector<double> a{1, 2, 3, 4, 5}, b{2, 1, 0, 3, 3};
  std::vector<double> c(5);
  for (int i = 0; i < 5; ++i) c[static_cast<std::size_t>(i)] = 2 * a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
  try {
    ols(with_intercept({a, b, c}, 5), Vector::Ones(5));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.node(), 3);
  }
  EXPECT_THROW(ols(with_intercept({a, a}, 5), Vector::Ones(5)), ValidationError);
  EXPECT_THROW(ols(Matrix::Ones(2, 2), Vector::Ones(2)), ValidationError);
}

TEST(Ols, OrthogonalityAndLeverageTrace) {
  Rng rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + rng() % 300, k = 1 + rng() % 6;
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    Vector y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal() * 10.0;
      y(i) = rng.normal() * 100.0;
    }
    const auto fit = ols(x, y);
    EXPECT_LT((x.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-8 * y.norm());
    EXPECT_NEAR(fit.hat_diag.sum(), static_cast<double>(k), 1e-8);
    EXPECT_GE(fit.hat_diag.minCoeff(), 0.0);
    EXPECT_LT(fit.hat_diag.maxCoeff(), 1.0);
  }
}

TEST(Hc3, FourPointDirectFormula) {
  Matrix x(4, 2);
  x << 1, 0.0, 1, 1.0, 1, 2.5, 1, 4.0;
  Vector y(4);
  y << 1.0, 2.2, 2.9, 5.3;
  const auto fit = ols(x, y);
  // Independent path: normal equations, explicit inverse and hat matrix.
  const Matrix xtx_inv = (x.transpose() * x).inverse();
  const Vector beta = xtx_inv * x.transpose() * y;
  const Vector e = y - x * beta;
  const Matrix h = x * xtx_inv * x.transpose();
  Matrix omega = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) omega(i, i) = e(i) * e(i) / std::pow(1.0 - h(i, i), 2);
  const Matrix expected = xtx_inv * x.transpose() * omega * x * xtx_inv;
  const Matrix got = hc3_covariance(fit, x);
  EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-12);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fit.hat_diag(i), h(i, i), 1e-12);
  EXPECT_LT((fit.cov_classical - e.squaredNorm() / 2.0 * xtx_inv).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Hc3, SymmetricPsdAndCloseToClassicalUnderHomoscedasticity) {
  Rng rng(51);
  const std::size_t n = 10000;
  std::vector<double> a(n), b(n);
  Vector y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.uniform() * 3.0;
    y(static_cast<Eigen::Index>(i)) = 1.0 + 0.3 * a[i] - 2.0 * b[i] + rng.normal();
  }
  const Matrix x = with_intercept({a, b}, n);
  const auto fit = ols(x, y);
  const Matrix hc3 = hc3_covariance(fit, x);
  EXPECT_EQ(hc3, hc3.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(hc3);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  const Vector se_r = standard_errors(hc3), se_c = standard_errors(fit.cov_classical);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(se_r(j) / se_c(j), 1.0, 0.1);
}

TEST(Hc3, FullLeverageRejected) {
  // The last column isolates observation 0, so h_00 = 1.
  Matrix x(5, 3);
  x << 1, 0, 1, 1, 1, 0, 1, 2, 0, 1, 3, 0, 1, 4, 0;
  Vector y(5);
  y << 3, 1, 2, 4, 4;
  const auto fit = ols(x, y);
  try {
    hc3_covariance(fit, x);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.node(), 0);
  }
}

TEST(BreuschPagan, LmIsNTimesAuxiliaryRSquared) {
  Rng rng(52);
  const std::size_t n = 300;
  std::vector<double> a(n);
  Vector y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.uniform();
    y(static_cast<Eigen::Index>(i)) = a[i] + rng.normal(0.0, 0.2 + a[i]);
  }
  const Matrix x = with_intercept({a}, n);
  const auto fit = ols(x, y);
  const auto bp = breusch_pagan(fit, x);
  const Vector e2 = fit.residuals.array().square();
  const Vector g = (x.transpose() * x).ldlt().solve(x.transpose() * e2);
  const double r2 = 1.0 - (e2 - x * g).squaredNorm() / (e2.array() - e2.mean()).square().sum();
  EXPECT_NEAR(bp.r_squared, r2, 1e-10);
  EXPECT_EQ(bp.lm_stat, static_cast<double>(n) * bp.r_squared);
  EXPECT_EQ(bp.df, 1u);
}

TEST(BreuschPagan, DetectsVarianceProportionalToX) {
  Rng rng(53);
  const std::size_t n = 2000;
  std::vector<double> a(n);
  Vector y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = 0.1 + rng.uniform() * 5.0;
    y(static_cast<Eigen::Index>(i)) = 2.0 + a[i] + rng.normal(0.0, std::sqrt(a[i]));
  }
  const Matrix x = with_intercept({a}, n);
  EXPECT_LT(breusch_pagan(ols(x, y), x).p_value, 0.01);
}

TEST(BreuschPagan, SizeUnderHomoscedasticity) {
  int rejections = 0;
  const std::size_t n = 200;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed, 7, 0);
    std::vector<double> a(n);
    Vector y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      y(static_cast<Eigen::Index>(i)) = 1.0 - a[i] + rng.normal();
    }
    const Matrix x = with_intercept({a}, n);
    rejections += breusch_pagan(ols(x, y), x).p_value < 0.05;
  }
  EXPECT_NEAR(rejections / 1000.0, 0.05, 0.02);
}

TEST(BreuschPagan, Errors) {
  const Matrix x = Matrix::Ones(4, 1);
  Vector y(4);
  y << 1, 2, 3, 4;
  EXPECT_THROW(breusch_pagan(ols(x, y), x), InvalidParameter);
  Matrix x2(4, 2);
  x2 << 1, 0, 1, 1, 1, 2, 1, 3;
  Vector y3(4);
  y3 << 0, 1, 2, 3;  // exact fit, so squared residuals are constant
  EXPECT_THROW(breusch_pagan(ols(x2, y3), x2), ValidationError);
}

TEST(Rkd, RecoversKnownKink) {
  const auto s = kink_series(54, 2000, -0.8, 0.1);
  const auto fit = rkd(s, 0.0);
  EXPECT_NEAR(fit.slope_change, -0.8, 0.05);
  EXPECT_LT(fit.p_value, 0.01);
  EXPECT_EQ(fit.names, (std::vector<std::string>{"intercept", "trend", "kink"}));
  const auto robust = rkd(s, 0.0, {1, true, false});
  EXPECT_EQ(robust.slope_change, fit.slope_change);
  EXPECT_NEAR(robust.slope_change_se / fit.slope_change_se, 1.0, 0.15);
  const auto jump = rkd(s, 0.0, {1, false, true});
  EXPECT_EQ(jump.beta.size(), 4u);
  EXPECT_NEAR(jump.beta[3], 0.0, 0.05);
}

TEST(Rkd, HigherDegreeRecoversSlopeChange) {
  Rng rng(55);
  std::vector<SeriesPoint> s;
  for (int i = 0; i < 1000; ++i) {
    const double t = -2.0 + 4.0 * i / 999.0;
    const double h = std::max(t, 0.0);
    s.push_back({t, 0.3 * t * t + 0.5 * t - 0.6 * h + 0.2 * h * h + rng.normal(0.0, 0.05)});
  }
  const auto fit = rkd(s, 0.0, {2, false, false});
  EXPECT_NEAR(fit.slope_change, -0.6, 0.05);
  EXPECT_NEAR(fit.beta[4], 0.2, 0.05);
}

TEST(Rkd, SizeWithoutKink) {
  int rejections = 0, within = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto fit = rkd(kink_series(seed + 1000, 2000, 0.0, 0.1), 0.0);
    rejections += fit.p_value < 0.05;
    within += std::abs(fit.slope_change) <= 2.0 * fit.slope_change_se;
  }
  EXPECT_NEAR(rejections / 1000.0, 0.05, 0.02);
  EXPECT_GE(within, 930);
}

TEST(Rkd, Preconditions) {
  const auto s = kink_series(1, 50, 0.0, 0.1);
  EXPECT_THROW(rkd(s, 0.0, {0, false, false}), InvalidParameter);
  EXPECT_THROW(rkd(s, 0.99, {1, false, false}), ValidationError);
  EXPECT_THROW(rkd(s, -5.0, {1, false, false}), ValidationError);
}

TEST(Rkd, SeriesCsvAndJson) {
  const auto s = parse_series_csv("t,y\n0,1\n1,2.5\n2,3\n");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[1].y, 2.5);
  EXPECT_THROW(parse_series_csv("a,b\n1,2\n"), ValidationError);
  EXPECT_THROW(parse_series_csv("t,y\n1,x\n"), ValidationError);
  const auto fit = rkd(kink_series(3, 100, -0.8, 0.1), 0.0);
  const auto doc = nlohmann::json::parse(kink_fit_json(fit));
  EXPECT_EQ(doc["n"], 100);
  EXPECT_EQ(doc["coefficients"].size(), 3u);
  EXPECT_EQ(doc["slope_change"].get<double>(), fit.slope_change);
}
