#include <doctest.h>

#include <random>

#include "goodhart/numerics.hpp"
#include "oracles.hpp"

using namespace goodhart;
using namespace goodhart::numerics;

namespace {

// min ||C x - d|| over x >= 0 by trying every support set.
double brute_force_nnls_residual(const Matrix& c, const Vector& d) {
  const int n = static_cast<int>(c.cols());
  double best = d.norm();
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> cols;
    for (int j = 0; j < n; ++j)
      if (mask & (1 << j)) cols.push_back(j);
    Matrix sub(c.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = c.col(cols[k]);
    const Vector x = sub.completeOrthogonalDecomposition().solve(d);
    if (x.minCoeff() < -1e-12) continue;
    best = std::min(best, (sub * x - d).norm());
  }
  return best;
}

// max c.x over {A x <= b, x >= 0} in n dimensions by visiting every basic solution.
double brute_force_lp(const Vector& c, const Matrix& a, const Vector& b, bool& feasible) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(a.rows());
  Matrix all(m + n, n);
  Vector rhs(m + n);
  all.topRows(m) = a;
  rhs.head(m) = b;
  all.bottomRows(n) = -Matrix::Identity(n, n);
  rhs.tail(n).setZero();
  const int rows = m + n;
  double best = -1e300;
  feasible = false;
  std::vector<int> pick(static_cast<std::size_t>(n));
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Matrix sub(n, n);
      Vector sr(n);
      for (int k = 0; k < n; ++k) {
        sub.row(k) = all.row(pick[static_cast<std::size_t>(k)]);
        sr(k) = rhs(pick[static_cast<std::size_t>(k)]);
      }
      Eigen::FullPivLU<Matrix> lu(sub);
      if (lu.rank() < n) return;
      const Vector x = lu.solve(sr);
      if (((all * x - rhs).array() > 1e-9).any()) return;
      feasible = true;
      best = std::max(best, c.dot(x));
      return;
    }
    for (int i = start; i < rows; ++i) {
      pick[static_cast<std::size_t>(depth)] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("nnls matches support enumeration") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const int m = 3 + trial % 4, n = 2 + trial % 5;
      Matrix c(m, n);
      for (int j = 0; j < n; ++j) c.col(j) = oracle::random_vector(rng, m);
      if (trial % 7 == 0) c.col(n - 1) = c.col(0);  // rank deficient
      const Vector d = oracle::random_vector(rng, m);
      const Vector x = nnls(c, d);
      CHECK(x.minCoeff() >= 0.0);
      CHECK((c * x - d).norm() == doctest::Approx(brute_force_nnls_residual(c, d)).epsilon(1e-9));
    }
  }

  TEST_CASE("nnls trivial cases") {
    const Matrix c = Matrix::Identity(3, 3);
    const Vector d = (Vector(3) << 1.0, -2.0, 3.0).finished();
    const Vector x = nnls(c, d);
    CHECK(x(0) == doctest::Approx(1.0));
    CHECK(x(1) == 0.0);
    CHECK(x(2) == doctest::Approx(3.0));
    CHECK(nnls(c, -d.cwiseAbs()).isZero());
  }

  TEST_CASE("simplex matches vertex enumeration") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int solved = 0;
    for (int trial = 0; trial < 150; ++trial) {
      const int n = 2 + trial % 2, m = 2 + trial % 4;
      Matrix a(m, n);
      Vector b(m), c(n);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = u(rng);
        b(i) = u(rng) + 0.3;
      }
      // keep the region bounded
      Matrix box = Matrix::Ones(1, n);
      a.conservativeResize(m + 1, n);
      a.row(m) = box;
      b.conservativeResize(m + 1);
      b(m) = 5.0;
      for (int j = 0; j < n; ++j) c(j) = u(rng);
      bool feasible = false;
      const double expected = brute_force_lp(c, a, b, feasible);
      const auto res = simplex_maximize(c, Matrix(0, n), Vector(0), a, b);
      if (!feasible) {
        CHECK(res.status == LpStatus::Infeasible);
        continue;
      }
      REQUIRE(res.status == LpStatus::Optimal);
      CHECK(res.objective == doctest::Approx(expected).epsilon(1e-9));
      CHECK(((a * res.x - b).array() <= 1e-9).all());
      CHECK(res.x.minCoeff() >= -1e-12);
      ++solved;
    }
    CHECK(solved > 50);
  }

  TEST_CASE("simplex with equalities, infeasibility and unboundedness") {
    // max x + y s.t. x + 2y = 2, x <= 1
    Matrix aeq(1, 2);
    aeq << 1.0, 2.0;
    Matrix aub(1, 2);
    aub << 1.0, 0.0;
    const auto res = simplex_maximize((Vector(2) << 1.0, 1.0).finished(), aeq, (Vector(1) << 2.0).finished(), aub,
                                      (Vector(1) << 1.0).finished());
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.objective == doctest::Approx(1.5));

    const auto infeasible = simplex_maximize((Vector(1) << 1.0).finished(), (Matrix(1, 1) << 1.0).finished(),
                                             (Vector(1) << -1.0).finished(), Matrix(0, 1), Vector(0));
    CHECK(infeasible.status == LpStatus::Infeasible);

    const auto unbounded = simplex_maximize((Vector(2) << 1.0, 0.0).finished(), Matrix(0, 2), Vector(0),
                                            (Matrix(1, 2) << 0.0, 1.0).finished(), (Vector(1) << 1.0).finished());
    CHECK(unbounded.status == LpStatus::Unbounded);
  }

  TEST_CASE("correlations on hand-computed data") {
    const Vector x = (Vector(3) << 1.0, 2.0, 3.0).finished();
    const Vector y = (Vector(3) << 2.0, 4.0, 7.0).finished();
    CHECK(pearson(x, y) == doctest::Approx(15.0 / std::sqrt(228.0)).epsilon(1e-12));
    CHECK(pearson(x, Vector::Constant(3, 4.0)) == 0.0);
    const Vector a = (Vector(4) << 1.0, 2.0, 3.0, 4.0).finished();
    const Vector b = (Vector(4) << 1.0, 3.0, 2.0, 4.0).finished();
    CHECK(spearman(a, b) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(spearman(a, (Vector(4) << 10.0, 20.0, 20.0, 30.0).finished()) ==
          doctest::Approx(pearson(a, (Vector(4) << 1.0, 2.5, 2.5, 4.0).finished())).epsilon(1e-12));
  }
}
