#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "goodhart/solvers.hpp"

namespace goodhart {

/// Goodharting metrics of one training curve f(lambda). lambda_star is the first
/// grid point attaining max f.
struct MetricsReport {
  double ndh = 0.0;
  double si = 0.0;
  double cacw = 0.0;
  double lr = 0.0;
  std::optional<double> rwi;
  double lambda_star = 0.0;
};

/// Index of the first maximum of f.
std::size_t argmax_index(const std::vector<double>& f);

/// max f - f(last), >= 0.
double ndh(const TrainingCurve& curve);
double ndh(const std::vector<double>& f);

/// Trapezoid integral of y over x[lo..hi].
double trapezoid(const std::vector<double>& x, const std::vector<double>& y, std::size_t lo, std::size_t hi);

/// (int_0^{lambda*} f)(int_{lambda*}^1 f), both on the grid.
double si(const TrainingCurve& curve);

/// -max(rho_0, 0) max(rho_1, 0) sqrt(lambda* (1 - lambda*)); a segment with fewer
/// than 3 points has rho = 0.
double cacw(const TrainingCurve& curve);

/// -max(beta_0, 0) max(beta_1, 0), beta_i = arctan of the least-squares slope; a
/// segment with fewer than 2 points has beta = 0.
double lr(const TrainingCurve& curve);

/// ((1 - lambda*) int_0^{lambda*} |f - f0|)((1 / (1 - lambda*)) int_{lambda*}^1 |f - f0|);
/// 0 when lambda* = 1. Throws when the grids differ.
double rwi(const TrainingCurve& curve, const TrainingCurve& baseline);

MetricsReport compute_metrics(const TrainingCurve& curve, const TrainingCurve* baseline = nullptr);

inline constexpr std::array<const char*, 5> kMetricNames{"ndh", "si", "cacw", "lr", "rwi"};

struct MetricCorrelations {
  std::array<std::array<double, 5>, 5> matrix{};
  std::array<bool, 5> constant_column{};
  std::size_t num_reports = 0;  // after filtering
};

/// Pearson correlations between the five metrics over reports with lambda* > min_lambda_star.
/// Reports without rwi are dropped. Constant columns correlate 0 (1 on the diagonal) and are flagged.
MetricCorrelations metric_correlations(const std::vector<MetricsReport>& reports, double min_lambda_star = 0.3);

}  // namespace goodhart
