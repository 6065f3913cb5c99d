#include "goodhart/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "goodhart/errors.hpp"

namespace goodhart::numerics {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd solve_subset(const MatrixXd& c, const std::vector<Index>& cols, const VectorXd& d) {
  MatrixXd sub(c.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Index>(k)) = c.col(cols[k]);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
  return qr.solve(d);
}

}  // namespace

VectorXd nnls(const MatrixXd& c, const VectorXd& d, double tol) {
  const Index n = c.cols();
  VectorXd x = VectorXd::Zero(n);
  if (n == 0) return x;
  if (tol < 0.0) {
    tol = 10.0 * std::numeric_limits<double>::epsilon() * std::max<Index>(c.rows(), n) *
          std::max(1.0, c.cwiseAbs().maxCoeff()) * std::max(1.0, d.cwiseAbs().maxCoeff());
  }
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  VectorXd w = c.transpose() * (d - c * x);
  const int max_outer = static_cast<int>(3 * n + 30);
  for (int outer = 0; outer < max_outer; ++outer) {
    Index best = -1;
    double best_w = tol;
    for (Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) return x;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner < max_outer; ++inner) {
      std::vector<Index> cols;
      for (Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)]) cols.push_back(j);
      const VectorXd zp = solve_subset(c, cols, d);
      VectorXd z = VectorXd::Zero(n);
      for (std::size_t k = 0; k < cols.size(); ++k) z(cols[k]) = zp(static_cast<Index>(k));

      bool feasible = true;
      for (Index j : cols)
        if (z(j) <= 0.0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 1.0;
      Index blocking = -1;
      for (Index j : cols) {
        if (z(j) <= 0.0) {
          const double denom = x(j) - z(j);
          const double ratio = denom > 0.0 ? x(j) / denom : 0.0;
          if (blocking < 0 || ratio < alpha) {
            alpha = ratio;
            blocking = j;
          }
        }
      }
      x += alpha * (z - x);
      x(blocking) = 0.0;
      for (Index j : cols) {
        if (x(j) <= tol) {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
        }
      }
    }
    w = c.transpose() * (d - c * x);
  }
  throw NumericError("nnls: active-set loop did not terminate");
}

namespace {

constexpr double kPivotTol = 1e-11;

struct Tableau {
  MatrixXd t;                // (m + 1) x (cols + 1); last row is the objective, last column the rhs
  std::vector<Index> basis;  // basic column per constraint row
  Index cols = 0;

  Index rows() const { return static_cast<Index>(basis.size()); }
  double& rhs(Index i) { return t(i, cols); }

  void pivot(Index row, Index col) {
    t.row(row) /= t(row, col);
    for (Index i = 0; i < t.rows(); ++i) {
      if (i == row) continue;
      const double f = t(i, col);
      if (f != 0.0) t.row(i) -= f * t.row(row);
    }
    basis[static_cast<std::size_t>(row)] = col;
  }

  // Returns false when unbounded.
  bool optimise(const std::vector<bool>& allowed) {
    const Index obj = rows();
    const long guard = 50000L + 200L * static_cast<long>(cols + rows());
    for (long iter = 0; iter < guard; ++iter) {
      Index enter = -1;
      for (Index j = 0; j < cols; ++j) {
        if (allowed[static_cast<std::size_t>(j)] && t(obj, j) < -kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Index leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < rows(); ++i) {
        const double a = t(i, enter);
        if (a > kPivotTol) {
          const double ratio = t(i, cols) / a;
          if (ratio < best_ratio - 1e-14 ||
              (std::abs(ratio - best_ratio) <= 1e-14 && leave >= 0 &&
               basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    throw NumericError("simplex: iteration guard exceeded");
  }
};

}  // namespace

LpResult simplex_maximize(const VectorXd& c, const MatrixXd& a_eq, const VectorXd& b_eq,
                          const MatrixXd& a_ub, const VectorXd& b_ub) {
  const Index n = c.size();
  const Index m_eq = a_eq.rows();
  const Index m_ub = a_ub.rows();
  if ((m_eq > 0 && a_eq.cols() != n) || (m_ub > 0 && a_ub.cols() != n) || b_eq.size() != m_eq ||
      b_ub.size() != m_ub)
    throw InvalidArgument("simplex_maximize: inconsistent dimensions");
  const Index m = m_eq + m_ub;
  const Index slack0 = n;
  const Index art0 = n + m_ub;
  Tableau tab;
  tab.cols = n + m_ub + m;
  tab.t = MatrixXd::Zero(m + 1, tab.cols + 1);
  tab.basis.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    if (i < m_eq) {
      tab.t.row(i).head(n) = a_eq.row(i);
      tab.t(i, tab.cols) = b_eq(i);
    } else {
      const Index k = i - m_eq;
      tab.t.row(i).head(n) = a_ub.row(k);
      tab.t(i, slack0 + k) = 1.0;
      tab.t(i, tab.cols) = b_ub(k);
    }
    if (tab.t(i, tab.cols) < 0.0) tab.t.row(i) *= -1.0;
    tab.t(i, art0 + i) = 1.0;
    tab.basis[static_cast<std::size_t>(i)] = art0 + i;
  }

  // Phase 1: maximise -sum(artificials).
  const Index obj = m;
  for (Index i = 0; i < m; ++i) tab.t.row(obj) -= tab.t.row(i);
  for (Index i = 0; i < m; ++i) tab.t(obj, art0 + i) = 0.0;
  std::vector<bool> allowed(static_cast<std::size_t>(tab.cols), true);
  tab.optimise(allowed);
  const double scale = 1.0 + (m > 0 ? tab.t.col(tab.cols).head(m).cwiseAbs().maxCoeff() : 0.0);
  LpResult result;
  if (tab.t(obj, tab.cols) < -1e-9 * scale) {
    result.status = LpStatus::Infeasible;
    return result;
  }

  // Drive zero-level artificials out of the basis; drop redundant rows.
  std::vector<Index> keep;
  for (Index i = 0; i < m; ++i) {
    if (tab.basis[static_cast<std::size_t>(i)] >= art0) {
      Index col = -1;
      for (Index j = 0; j < art0; ++j) {
        if (std::abs(tab.t(i, j)) > 1e-9) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        tab.pivot(i, col);
        keep.push_back(i);
      }
    } else {
      keep.push_back(i);
    }
  }
  if (static_cast<Index>(keep.size()) != m) {
    Tableau reduced;
    reduced.cols = tab.cols;
    reduced.t = MatrixXd::Zero(static_cast<Index>(keep.size()) + 1, tab.cols + 1);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      reduced.t.row(static_cast<Index>(k)) = tab.t.row(keep[k]);
      reduced.basis.push_back(tab.basis[static_cast<std::size_t>(keep[k])]);
    }
    tab = std::move(reduced);
  }

  // Phase 2.
  const Index obj2 = tab.rows();
  tab.t.row(obj2).setZero();
  tab.t.row(obj2).head(n) = -c.transpose();
  for (Index i = 0; i < tab.rows(); ++i) {
    const Index b = tab.basis[static_cast<std::size_t>(i)];
    const double f = tab.t(obj2, b);
    if (f != 0.0) tab.t.row(obj2) -= f * tab.t.row(i);
  }
  for (Index j = art0; j < tab.cols; ++j) allowed[static_cast<std::size_t>(j)] = false;
  if (!tab.optimise(allowed)) {
    result.status = LpStatus::Unbounded;
    return result;
  }
  result.status = LpStatus::Optimal;
  result.x = VectorXd::Zero(n);
  for (Index i = 0; i < tab.rows(); ++i) {
    const Index b = tab.basis[static_cast<std::size_t>(i)];
    if (b < n) result.x(b) = std::max(0.0, tab.t(i, tab.cols));
  }
  result.objective = c.dot(result.x);
  return result;
}

double pearson(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  const VectorXd xc = x.array() - x.mean();
  const VectorXd yc = y.array() - y.mean();
  const double sx = xc.norm();
  const double sy = yc.norm();
  if (sx <= 1e-300 || sy <= 1e-300) return 0.0;
  return std::clamp(xc.dot(yc) / (sx * sy), -1.0, 1.0);
}

namespace {

VectorXd ranks(const VectorXd& v) {
  std::vector<Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) < v(b); });
  VectorXd r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v(order[j + 1]) == v(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(order[k]) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const VectorXd& x, const VectorXd& y) { return pearson(ranks(x), ranks(y)); }

}  // namespace goodhart::numerics
