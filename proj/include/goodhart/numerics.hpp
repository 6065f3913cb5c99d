#pragma once

#include <Eigen/Dense>

namespace goodhart::numerics {

/// Lawson-Hanson non-negative least squares: argmin_{x >= 0} ||C x - d||.
/// The residual C x - d is unique even when C is rank-deficient; x may not be.
Eigen::VectorXd nnls(const Eigen::MatrixXd& c, const Eigen::VectorXd& d, double tol = -1.0);

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
};

/// Dense two-phase simplex with Bland's rule:
///   maximise c.x  s.t.  a_eq x = b_eq,  a_ub x <= b_ub,  x >= 0.
/// Either constraint block may have zero rows.
LpResult simplex_maximize(const Eigen::VectorXd& c, const Eigen::MatrixXd& a_eq,
                          const Eigen::VectorXd& b_eq, const Eigen::MatrixXd& a_ub,
                          const Eigen::VectorXd& b_ub);

/// Sample Pearson correlation; returns 0 when either input has zero variance.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Spearman rank correlation with average ranks for ties.
double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace goodhart::numerics
