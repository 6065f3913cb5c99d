#include <doctest.h>

#include "goodhart/envs.hpp"
#include "goodhart/errors.hpp"
#include "goodhart/geometry.hpp"
#include "goodhart/worked_examples.hpp"
#include "oracles.hpp"

using namespace goodhart;

namespace {

std::vector<TabularMdp> test_matrix() {
  std::vector<TabularMdp> out;
  out.push_back(make_m22());
  out.push_back(make_m32());
  for (int n = 2; n <= 4; ++n) {
    out.push_back(make_gridworld(n, 0.9).mdp);
    out.push_back(make_cliff(n, 0.5, 0.7).mdp);
  }
  for (int d = 1; d <= 3; ++d) {
    out.push_back(make_tree_mdp(2, d, TreeVariant::FirstHalfTerminal, 0.9).mdp);
    out.push_back(make_tree_mdp(2, d, TreeVariant::AlternatingTerminal, 0.5).mdp);
  }
  out.push_back(make_tree_mdp(3, 2, TreeVariant::FirstHalfTerminal, 0.8).mdp);
  for (int s : {2, 5, 9}) out.push_back(make_random_mdp(s, 3, 1, 0.9, 40 + static_cast<std::uint64_t>(s)).mdp);
  std::mt19937_64 rng(41);
  for (int k = 0; k < 5; ++k) out.push_back(oracle::random_mdp(rng, 2 + k, 2 + k % 3, 0.95));
  return out;
}

int numerical_rank(const Matrix& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  int rank = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) > tol) ++rank;
  return rank;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("projection invariants over the test matrix") {
    std::mt19937_64 rng(42);
    for (const auto& mdp : test_matrix()) {
      CAPTURE(mdp.num_states());
      CAPTURE(mdp.num_actions());
      const PolytopeModel poly(mdp);
      const Matrix& m = poly.projection();
      const Matrix a = oracle::constraint_matrix(mdp);
      CHECK((m * m - m).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((m * a.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(numerical_rank(m, 1e-8) == mdp.num_states() * (mdp.num_actions() - 1));
      CHECK(poly.dimension() == mdp.num_states() * (mdp.num_actions() - 1));
      CHECK((m - oracle::null_space_projector(a)).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(constraint_residual(mdp, occupancy_measure(mdp, uniform_policy(mdp)).values) <= 1e-8);
      for (int k = 0; k < 5; ++k) {
        const Vector f = oracle::shaping(mdp, oracle::random_vector(rng, mdp.num_states()));
        CHECK(poly.project(f).norm() <= 1e-8);
      }
    }
  }

  TEST_CASE("M22 polytope is two-dimensional") {
    const PolytopeModel poly = build_polytope(make_m22());
    CHECK(poly.dimension() == 2);
    CHECK(numerical_rank(poly.projection(), 1e-8) == 2);
    CHECK(poly.constraint_rank() == 2);
  }

  TEST_CASE("implicit projection above the dense limit") {
    std::mt19937_64 rng(43);
    const auto mdp = oracle::random_mdp(rng, 100, 41, 0.9);
    const PolytopeModel poly(mdp);
    CHECK_FALSE(poly.has_dense_projection());
    CHECK_THROWS_AS(poly.projection(), InvalidArgument);
    const Vector v = oracle::random_vector(rng, mdp.num_pairs());
    const Vector p = poly.project(v);
    CHECK((poly.project(p) - p).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((oracle::constraint_matrix(mdp) * p).cwiseAbs().maxCoeff() <= 1e-8);
    const Vector f = oracle::shaping(mdp, oracle::random_vector(rng, 100));
    CHECK(poly.project(f).norm() <= 1e-8);
    const Matrix cols = poly.projection_columns({0, 7});
    Vector e = Vector::Zero(mdp.num_pairs());
    e(7) = 1.0;
    CHECK((cols.col(1) - poly.project(e)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("projected angle basics") {
    std::mt19937_64 rng(44);
    const auto mdp = oracle::random_mdp(rng, 4, 3, 0.9);
    const PolytopeModel poly(mdp);
    const Matrix m_ref = oracle::null_space_projector(oracle::constraint_matrix(mdp));
    const RewardVector r(oracle::random_vector(rng, 12));
    CHECK(projected_angle(poly, r, r) == 0.0);
    CHECK(projected_angle(poly, r, RewardVector(2.0 * r.values)) <= 1e-12);
    CHECK(projected_angle(poly, r, RewardVector(-r.values)) == doctest::Approx(M_PI).epsilon(1e-12));
    const Vector f = oracle::shaping(mdp, oracle::random_vector(rng, 4));
    CHECK(projected_angle(poly, r, RewardVector(r.values + f)) <= 1e-7);
    CHECK_THROWS_AS(projected_angle(poly, r, RewardVector(f)), DegenerateRewardError);
    CHECK_THROWS_AS(projected_angle(poly, r, RewardVector(Vector::Zero(12))), DegenerateRewardError);
    for (int k = 0; k < 20; ++k) {
      const Vector a = oracle::random_vector(rng, 12), b = oracle::random_vector(rng, 12);
      CHECK(projected_angle(poly, RewardVector(a), RewardVector(b)) ==
            doctest::Approx(oracle::angle(m_ref * a, m_ref * b)).epsilon(1e-9));
    }
  }

  TEST_CASE("M22 angles") {
    const auto mdp = make_m22();
    const PolytopeModel poly(mdp);
    const auto rs = m22_rewards();
    const Matrix m_ref = oracle::null_space_projector(oracle::constraint_matrix(mdp));
    const double a1 = projected_angle(poly, rs[0], rs[1]);
    const double a2 = projected_angle(poly, rs[0], rs[2]);
    CHECK(a1 == doctest::Approx(oracle::angle(m_ref * rs[0].values, m_ref * rs[1].values)).epsilon(1e-9));
    CHECK(a2 == doctest::Approx(oracle::angle(m_ref * rs[0].values, m_ref * rs[2].values)).epsilon(1e-9));
    // regression values
    CHECK(a1 == doctest::Approx(0.26566369012095037).epsilon(1e-9));
    CHECK(a2 == doctest::Approx(0.6763870358123988).epsilon(1e-9));
    CHECK(a1 < a2);
  }

  TEST_CASE("return range normalisation") {
    std::mt19937_64 rng(45);
    for (int trial = 0; trial < 20; ++trial) {
      const auto mdp = oracle::random_mdp(rng, 3, 2, 0.9);
      const RewardVector r(oracle::random_vector(rng, 6));
      const RewardVector n = normalize_return_range(mdp, r);
      double lo = 1e300, hi = -1e300;
      oracle::for_each_deterministic(3, 2, [&](const std::vector<int>& acts) {
        const double j = oracle::return_by_iteration(mdp, n.values, oracle::deterministic(3, 2, acts));
        lo = std::min(lo, j);
        hi = std::max(hi, j);
      });
      CHECK(lo == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
      CHECK(hi == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(policy_return(mdp, n, value_iteration(mdp, n, {}).greedy) >= 1.0 - 2e-3);
      const RewardVector again = normalize_return_range(mdp, n);
      CHECK((again.values - n.values).cwiseAbs().maxCoeff() <= 1e-9);
      SolverConfig tight;
      tight.vi_threshold = 1e-10;
      CHECK(value_iteration(mdp, n, tight).greedy.probs == value_iteration(mdp, r, tight).greedy.probs);
    }
    const auto mdp = make_m22();
    CHECK_THROWS_AS(normalize_return_range(mdp, RewardVector(Vector::Constant(4, 0.3))), DegenerateRewardError);
  }

  TEST_CASE("starc normalisation") {
    const auto mdp = make_m32();
    const PolytopeModel poly(mdp);
    const auto r = m32_rewards()[0];
    const double m = poly.project(r).norm();
    CHECK((starc_normalize(poly, r, m).values - r.values).cwiseAbs().maxCoeff() <= 1e-12);
    const RewardVector s = starc_normalize(poly, r, 3.5);
    CHECK(poly.project(s).norm() == doctest::Approx(3.5).epsilon(1e-10));
    CHECK(projected_angle(poly, r, s) <= 1e-12);
    CHECK_THROWS_AS(starc_normalize(poly, r, 0.0), InvalidArgument);
  }

  TEST_CASE("rewards sampled at an exact angle") {
    std::mt19937_64 rng(46);
    const auto mdp = oracle::random_mdp(rng, 4, 2, 0.9);
    const PolytopeModel poly(mdp);
    const RewardVector r(oracle::random_vector(rng, 8));
    const Vector mr = poly.project(r);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const RewardVector s = sample_reward_at_angle(poly, r, 0.3, 2.0, seed);
      CHECK(std::abs(projected_angle(poly, r, s) - 0.3) <= 1e-8);
      CHECK(poly.project(s).norm() == doctest::Approx(2.0).epsilon(1e-10));
      CHECK((poly.project(s) - s.values).norm() <= 1e-9);  // no null-space part
    }
    const RewardVector zero = sample_reward_at_angle(poly, r, 0.0, mr.norm(), 7);
    CHECK((poly.project(zero) - mr).cwiseAbs().maxCoeff() <= 1e-10);
    const RewardVector right = sample_reward_at_angle(poly, r, M_PI / 2, 1.0, 7);
    CHECK(std::abs(poly.project(right).dot(mr)) <= 1e-8);
    CHECK(sample_reward_at_angle(poly, r, 1.0, 1.0, 5).values == sample_reward_at_angle(poly, r, 1.0, 1.0, 5).values);
    CHECK_THROWS_AS(sample_reward_at_angle(poly, r, -0.1, 1.0, 1), InvalidArgument);
    CHECK_THROWS_AS(sample_reward_at_angle(poly, r, 3.5, 1.0, 1), InvalidArgument);

    const TabularMdp line(1, 2, Matrix::Ones(2, 1), Vector::Ones(1), 0.9, {false});
    const PolytopeModel flat(line);
    CHECK(flat.dimension() == 1);
    CHECK_THROWS_AS(sample_reward_at_angle(flat, RewardVector(Vector::Unit(2, 0)), 0.5, 1.0, 1), InvalidArgument);
  }

  TEST_CASE("adversarial witnesses") {
    std::mt19937_64 rng(47);
    const auto mdp = oracle::random_mdp(rng, 3, 3, 0.9);
    const PolytopeModel poly(mdp);
    const RewardVector proxy(oracle::random_vector(rng, 9));
    const Vector mr = poly.project(proxy);
    for (int k = 0; k < 50; ++k) {
      const Vector d = poly.project(oracle::random_vector(rng, 9));
      // theta = pi/2: any step not exactly along M proxy has a witness
      const RewardVector w = adversarial_reward(poly, proxy, M_PI / 2, d);
      CHECK(w.values.dot(d) < 0.0);
      CHECK(std::abs(projected_angle(poly, proxy, w) - M_PI / 2) <= 1e-8);
      // theta = 0: the cone is the proxy ray
      if (mr.dot(d) < 0.0) {
        CHECK(adversarial_reward(poly, proxy, 0.0, d).values.dot(d) < 0.0);
      } else {
        CHECK_THROWS_AS(adversarial_reward(poly, proxy, 0.0, d), NoWitnessError);
      }
      const double theta = 0.05 + 1.4 * k / 50.0;
      try {
        const RewardVector v = adversarial_reward(poly, proxy, theta, d);
        CHECK(std::abs(projected_angle(poly, proxy, v) - theta) <= 1e-8);
        CHECK(poly.project(v).norm() == doctest::Approx(mr.norm()).epsilon(1e-10));
        CHECK(v.values.dot(d) < 0.0);
      } catch (const NoWitnessError&) {
        CHECK(mr.dot(d) / d.norm() >= std::sin(theta) * mr.norm() - 1e-12);
      }
    }
    CHECK_THROWS_AS(adversarial_reward(poly, proxy, 0.3, mr), NoWitnessError);
  }

  TEST_CASE("vertex enumeration") {
    const auto m22 = make_m22();
    const auto v22 = enumerate_vertices(m22, PolytopeModel(m22));
    CHECK(v22.size() == 4);
    const auto m32 = make_m32();
    const auto v32 = enumerate_vertices(m32, PolytopeModel(m32));
    CHECK(v32.size() == 8);
    CHECK(v32.front().actions == std::vector<int>{0, 0, 0});
    CHECK(v32.back().actions == std::vector<int>{1, 1, 1});
    const auto ref = oracle::vertices(m32);
    for (std::size_t i = 0; i < v32.size(); ++i) {
      CHECK(constraint_residual(m32, v32[i].eta.values) <= 1e-8);
      CHECK((v32[i].eta.values - ref[i]).cwiseAbs().maxCoeff() <= 1e-9);
    }
    CHECK_THROWS_AS(enumerate_vertices(m32, PolytopeModel(m32), 7), InvalidArgument);
    CHECK(count_deterministic_policies(m32, 1000) == 8);
    CHECK(count_deterministic_policies(make_gridworld(6, 0.9).mdp, 1000000) == -1);
  }

  TEST_CASE("returns agree on the projection") {
    std::mt19937_64 rng(48);
    const auto mdp = oracle::random_mdp(rng, 3, 2, 0.8);
    const PolytopeModel poly(mdp);
    const Vector r = oracle::random_vector(rng, 6);
    const Vector mr = poly.project(r);
    const Vector base = occupancy_measure(mdp, uniform_policy(mdp)).values;
    for (const auto& v : enumerate_vertices(mdp, poly)) CHECK(std::abs((v.eta.values - base).dot(r - mr)) <= 1e-8);
  }

  TEST_CASE("zero angle means identical policy orderings, and conversely") {
    std::mt19937_64 rng(49);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int converse_checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const int S = 2 + trial % 2;
      const auto mdp = oracle::random_mdp(rng, S, 2, 0.5 + 0.4 * unit(rng));
      const PolytopeModel poly(mdp);
      const Vector r = oracle::random_vector(rng, 2 * S);
      const Vector equivalent = (0.1 + 3.0 * unit(rng)) * r + oracle::shaping(mdp, oracle::random_vector(rng, S)) +
                                Vector::Constant(2 * S, 0.7);
      CHECK(projected_angle(poly, RewardVector(r), RewardVector(equivalent)) <= 1e-6);
      const auto verts = enumerate_vertices(mdp, poly);
      for (std::size_t i = 0; i < verts.size(); ++i)
        for (std::size_t j = 0; j < verts.size(); ++j) {
          const double d0 = (verts[i].eta.values - verts[j].eta.values).dot(r);
          const double d1 = (verts[i].eta.values - verts[j].eta.values).dot(equivalent);
          if (std::abs(d0) > 1e-9) CHECK((d0 > 0) == (d1 > 0));
        }

      const Vector other = oracle::random_vector(rng, 2 * S);
      if (projected_angle(poly, RewardVector(r), RewardVector(other)) <= 0.1) continue;
      ++converse_checked;
      // Look for two policies, mixtures of vertices, that the rewards order oppositely.
      bool found = false;
      std::vector<Vector> pts;
      for (const auto& v : verts) pts.push_back(v.eta.values);
      for (int k = 0; k < 300 && !found; ++k) {
        Vector w(static_cast<Eigen::Index>(verts.size()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = -std::log(unit(rng) + 1e-300);
        w /= w.sum();
        Vector p = Vector::Zero(2 * S);
        for (std::size_t i = 0; i < pts.size(); ++i) p += w(static_cast<Eigen::Index>(i)) * pts[i];
        pts.push_back(p);
      }
      for (std::size_t i = 0; i < pts.size() && !found; ++i)
        for (std::size_t j = 0; j < pts.size() && !found; ++j)
          found = (pts[i] - pts[j]).dot(r) > 1e-9 && (pts[i] - pts[j]).dot(other) < -1e-9;
      CHECK(found);
    }
    CHECK(converse_checked > 50);
  }
}
