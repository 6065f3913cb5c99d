#include "goodhart/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "goodhart/errors.hpp"
#include "goodhart/numerics.hpp"

namespace goodhart {

std::size_t argmax_index(const std::vector<double>& f) {
  if (f.empty()) throw InvalidArgument("metrics: empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < f.size(); ++i)
    if (f[i] > f[best]) best = i;
  return best;
}

double ndh(const std::vector<double>& f) { return f[argmax_index(f)] - f.back(); }

double ndh(const TrainingCurve& curve) { return ndh(curve.true_returns); }

double trapezoid(const std::vector<double>& x, const std::vector<double>& y, std::size_t lo, std::size_t hi) {
  double area = 0.0;
  for (std::size_t i = lo; i < hi; ++i) area += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return area;
}

namespace {

void check_curve(const TrainingCurve& c, std::size_t min_points) {
  if (c.pressures.size() < min_points || c.true_returns.size() != c.pressures.size())
    throw InvalidArgument("metrics: curve needs at least " + std::to_string(min_points) + " points");
}

Vector slice(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  Vector out(static_cast<Eigen::Index>(hi - lo + 1));
  for (std::size_t i = lo; i <= hi; ++i) out(static_cast<Eigen::Index>(i - lo)) = v[i];
  return out;
}

double segment_pearson(const TrainingCurve& c, std::size_t lo, std::size_t hi) {
  if (hi - lo + 1 < 3) return 0.0;
  return numerics::pearson(slice(c.pressures, lo, hi), slice(c.true_returns, lo, hi));
}

double segment_slope_angle(const TrainingCurve& c, std::size_t lo, std::size_t hi) {
  if (hi - lo + 1 < 2) return 0.0;
  const Vector x = slice(c.pressures, lo, hi);
  const Vector y = slice(c.true_returns, lo, hi);
  const Vector xc = x.array() - x.mean();
  const double sxx = xc.squaredNorm();
  if (sxx <= 0.0) return 0.0;
  return std::atan(xc.dot(y) / sxx);
}

}  // namespace

double si(const TrainingCurve& curve) {
  check_curve(curve, 2);
  const std::size_t k = argmax_index(curve.true_returns);
  const std::size_t last = curve.size() - 1;
  return trapezoid(curve.pressures, curve.true_returns, 0, k) *
         trapezoid(curve.pressures, curve.true_returns, k, last);
}

double cacw(const TrainingCurve& curve) {
  check_curve(curve, 1);
  const std::size_t k = argmax_index(curve.true_returns);
  const double ls = curve.pressures[k];
  const double rho0 = segment_pearson(curve, 0, k);
  const double rho1 = segment_pearson(curve, k, curve.size() - 1);
  const double weight = std::sqrt(std::max(0.0, ls * (1.0 - ls)));
  return -std::max(rho0, 0.0) * std::max(rho1, 0.0) * weight;
}

double lr(const TrainingCurve& curve) {
  check_curve(curve, 1);
  const std::size_t k = argmax_index(curve.true_returns);
  const double b0 = segment_slope_angle(curve, 0, k);
  const double b1 = segment_slope_angle(curve, k, curve.size() - 1);
  return -std::max(b0, 0.0) * std::max(b1, 0.0);
}

double rwi(const TrainingCurve& curve, const TrainingCurve& baseline) {
  check_curve(curve, 1);
  if (baseline.pressures != curve.pressures) throw InvalidArgument("rwi: curves use different pressure grids");
  const std::size_t k = argmax_index(curve.true_returns);
  const double ls = curve.pressures[k];
  if (ls >= 1.0) return 0.0;
  std::vector<double> diff(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i)
    diff[i] = std::abs(curve.true_returns[i] - baseline.true_returns[i]);
  const double left = trapezoid(curve.pressures, diff, 0, k);
  const double right = trapezoid(curve.pressures, diff, k, curve.size() - 1);
  return ((1.0 - ls) * left) * (right / (1.0 - ls));
}

MetricsReport compute_metrics(const TrainingCurve& curve, const TrainingCurve* baseline) {
  check_curve(curve, 1);
  MetricsReport m;
  m.ndh = ndh(curve);
  m.si = curve.size() >= 2 ? si(curve) : 0.0;
  m.cacw = cacw(curve);
  m.lr = lr(curve);
  if (baseline != nullptr) m.rwi = rwi(curve, *baseline);
  m.lambda_star = curve.pressures[argmax_index(curve.true_returns)];
  return m;
}

MetricCorrelations metric_correlations(const std::vector<MetricsReport>& reports, double min_lambda_star) {
  std::vector<const MetricsReport*> kept;
  for (const auto& r : reports)
    if (r.lambda_star > min_lambda_star && r.rwi.has_value()) kept.push_back(&r);
  MetricCorrelations out;
  out.num_reports = kept.size();
  if (kept.size() < 2) throw InvalidArgument("metric_correlations: need at least 2 reports after filtering");
  std::array<Vector, 5> cols;
  for (auto& c : cols) c.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    cols[0](row) = kept[i]->ndh;
    cols[1](row) = kept[i]->si;
    cols[2](row) = kept[i]->cacw;
    cols[3](row) = kept[i]->lr;
    cols[4](row) = *kept[i]->rwi;
  }
  for (int j = 0; j < 5; ++j) {
    const Vector centred = cols[static_cast<std::size_t>(j)].array() - cols[static_cast<std::size_t>(j)].mean();
    out.constant_column[static_cast<std::size_t>(j)] = centred.norm() <= 1e-300;
  }
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 5; ++b) {
      const auto ua = static_cast<std::size_t>(a);
      const auto ub = static_cast<std::size_t>(b);
      if (a == b) out.matrix[ua][ub] = 1.0;
      else if (out.constant_column[ua] || out.constant_column[ub]) out.matrix[ua][ub] = 0.0;
      else out.matrix[ua][ub] = numerics::pearson(cols[ua], cols[ub]);
    }
  }
  return out;
}

}  // namespace goodhart
