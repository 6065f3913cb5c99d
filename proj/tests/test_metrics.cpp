#include <doctest.h>

#include <random>

#include "goodhart/errors.hpp"
#include "goodhart/metrics.hpp"

using namespace goodhart;

namespace {

TrainingCurve curve(std::vector<double> x, std::vector<double> f) {
  TrainingCurve c;
  c.pressures = std::move(x);
  c.true_returns = std::move(f);
  c.proxy_returns = c.true_returns;
  return c;
}

const std::vector<double> kQuarters{0.0, 0.25, 0.5, 0.75, 1.0};

double pearson_by_hand(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("rise then fall") {
    const auto c = curve(kQuarters, {0.2, 0.6, 1.0, 0.8, 0.6});
    CHECK(ndh(c) == doctest::Approx(0.4).epsilon(1e-14));
    // left area 0.1 + 0.2, right area 0.225 + 0.175
    CHECK(si(c) == doctest::Approx(0.3 * 0.4).epsilon(1e-14));
    CHECK(cacw(c) == 0.0);
    CHECK(lr(c) == 0.0);
    const auto m = compute_metrics(c);
    CHECK(m.lambda_star == 0.5);
    CHECK_FALSE(m.rwi.has_value());
  }

  TEST_CASE("monotone and constant curves") {
    const auto up = curve(kQuarters, {0.0, 0.1, 0.4, 0.4, 0.9});
    CHECK(ndh(up) == 0.0);
    CHECK(si(up) == 0.0);
    const auto flat = curve(kQuarters, {0.7, 0.7, 0.7, 0.7, 0.7});
    CHECK(argmax_index(flat.true_returns) == 0);
    CHECK(si(flat) == 0.0);
    CHECK(cacw(flat) == 0.0);
    CHECK(ndh(flat) == 0.0);
    CHECK_THROWS_AS(argmax_index({}), InvalidArgument);
    CHECK_THROWS_AS(si(curve({0.5}, {0.5})), InvalidArgument);
  }

  TEST_CASE("hand-computed trapezoids") {
    const std::vector<double> x{0.0, 0.1, 0.5, 1.0};
    const std::vector<double> y{1.0, 3.0, 2.0, 0.0};
    CHECK(trapezoid(x, y, 0, 3) == doctest::Approx(0.2 + 1.0 + 0.5).epsilon(1e-14));
    CHECK(trapezoid(x, y, 1, 1) == 0.0);
    CHECK(si(curve(x, y)) == doctest::Approx(0.2 * 1.5).epsilon(1e-14));
  }

  TEST_CASE("regression angle") {
    // slope 1 on [0, 2]; least-squares slope 1 on [2, 5] although the maximum stays at x = 2
    const auto c = curve({0, 1, 2, 3, 4, 5}, {0.0, 1.0, 2.0, -9.0, 1.5, 11.0 / 6.0});
    CHECK(lr(c) == doctest::Approx(-(M_PI / 4) * (M_PI / 4)).epsilon(1e-12));
    CHECK(lr(curve(kQuarters, {0.2, 0.6, 1.0, 0.8, 0.6})) == 0.0);
    CHECK(lr(curve(kQuarters, {0.0, 0.5, 1.0, 1.0, 0.9})) == 0.0);
  }

  TEST_CASE("weighted correlation-anticorrelation") {
    const std::vector<double> x{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    const std::vector<double> f{0.0, 1.0, 2.0, -9.0, 1.5, 11.0 / 6.0};
    const double rho1 = pearson_by_hand({0.4, 0.6, 0.8, 1.0}, {2.0, -9.0, 1.5, 11.0 / 6.0});
    REQUIRE(rho1 > 0.0);
    CHECK(cacw(curve(x, f)) == doctest::Approx(-rho1 * std::sqrt(0.4 * 0.6)).epsilon(1e-12));
    CHECK(cacw(curve(kQuarters, {1.0, 0.9, 0.8, 1.0, 0.95})) == 0.0);  // lambda* = 0
    CHECK(cacw(curve(kQuarters, {0.0, 0.5, 1.0, 1.0, 1.0})) == 0.0);   // flat tail
  }

  TEST_CASE("relative weighted integration") {
    const auto c = curve(kQuarters, {0.2, 0.6, 1.0, 0.8, 0.6});
    const auto base = curve(kQuarters, {0.2, 0.7, 1.0, 1.0, 1.0});
    // |f - f0| = 0, .1, 0, .2, .4: left 0.025, right 0.1
    CHECK(rwi(c, base) == doctest::Approx((0.5 * 0.025) * (0.1 / 0.5)).epsilon(1e-13));
    CHECK(rwi(c, c) == 0.0);
    const auto peak_last = curve(kQuarters, {0.0, 0.1, 0.2, 0.3, 0.4});
    CHECK(rwi(peak_last, base) == 0.0);
    CHECK_THROWS_AS(rwi(c, curve({0.0, 0.5, 1.0}, {0.0, 0.0, 0.0})), InvalidArgument);
    CHECK(compute_metrics(c, &base).rwi.value() == doctest::Approx(0.0025));
  }

  TEST_CASE("drop height properties on random curves") {
    std::mt19937_64 rng(81);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> f(2 + trial % 20);
      for (auto& v : f) v = trial % 3 == 0 ? std::round(4 * u(rng)) / 4 : u(rng);
      const double shift = 3.0 * u(rng) - 1.5;
      std::vector<double> g = f;
      for (auto& v : g) v += shift;
      const double d = ndh(f);
      CHECK(d >= 0.0);
      CHECK(ndh(g) == doctest::Approx(d).epsilon(1e-12).scale(1.0));
      const double top = *std::max_element(f.begin(), f.end());
      CHECK((d == 0.0) == (f.back() == top));
      CHECK(f[argmax_index(f)] == top);
    }
  }

  TEST_CASE("metric correlations") {
    std::vector<MetricsReport> same(4);
    for (auto& r : same) {
      r.lambda_star = 0.5;
      r.rwi = 0.1;
    }
    const auto flat = metric_correlations(same);
    for (int j = 0; j < 5; ++j) {
      CHECK(flat.constant_column[static_cast<std::size_t>(j)]);
      CHECK(flat.matrix[static_cast<std::size_t>(j)][static_cast<std::size_t>(j)] == 1.0);
    }
    CHECK(flat.matrix[0][1] == 0.0);

    std::mt19937_64 rng(82);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<MetricsReport> reports;
    std::vector<double> kept_ndh, kept_si;
    for (int i = 0; i < 40; ++i) {
      MetricsReport r;
      r.ndh = u(rng);
      r.si = r.ndh + 0.3 * u(rng);
      r.cacw = -u(rng);
      r.lr = -u(rng);
      r.lambda_star = u(rng);
      if (i % 5 != 0) r.rwi = u(rng);
      if (r.lambda_star > 0.3 && r.rwi) {
        kept_ndh.push_back(r.ndh);
        kept_si.push_back(r.si);
      }
      reports.push_back(r);
    }
    const auto corr = metric_correlations(reports);
    CHECK(corr.num_reports == kept_ndh.size());
    CHECK(corr.matrix[0][1] == doctest::Approx(pearson_by_hand(kept_ndh, kept_si)).epsilon(1e-12));
    CHECK(corr.matrix[1][0] == corr.matrix[0][1]);
    CHECK_THROWS_AS(metric_correlations(std::vector<MetricsReport>(1)), InvalidArgument);
  }
}
