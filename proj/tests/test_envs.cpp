#include <doctest.h>

#include "goodhart/envs.hpp"
#include "goodhart/errors.hpp"
#include "goodhart/geometry.hpp"
#include "oracles.hpp"

using namespace goodhart;

namespace {

int count_terminal(const TabularMdp& mdp) {
  int k = 0;
  for (int s = 0; s < mdp.num_states(); ++s) k += mdp.is_terminal(s) ? 1 : 0;
  return k;
}

double row_sum_error(const TabularMdp& mdp) {
  return (mdp.transition().rowwise().sum().array() - 1.0).abs().maxCoeff();
}

}  // namespace

TEST_SUITE("envs") {
  TEST_CASE("gridworld layout") {
    const auto env = make_gridworld(2, 0.9);
    const auto& mdp = env.mdp;
    CHECK(mdp.num_states() == 4);
    CHECK(mdp.num_actions() == 5);
    CHECK(count_terminal(mdp) == 2);
    CHECK(mdp.is_terminal(0));
    CHECK(mdp.is_terminal(3));
    for (int s : {1, 2}) CHECK(mdp.transition()(mdp.pair_index(s, kWait), s) == 1.0);
    CHECK(mdp.transition()(mdp.pair_index(1, kUp), 1) == 1.0);
    CHECK(mdp.transition()(mdp.pair_index(1, kLeft), 0) == 1.0);
    CHECK(mdp.transition()(mdp.pair_index(2, kRight), 3) == 1.0);
    CHECK(mdp.initial_dist()(1) == 0.5);
    CHECK(mdp.initial_dist()(0) == 0.0);
    CHECK_THROWS_AS(make_gridworld(1, 0.9), InvalidArgument);
    CHECK_THROWS_AS(make_gridworld(3, 1.0), InvalidArgument);
  }

  TEST_CASE("cliff layout and slip") {
    const int n = 3;
    const auto grid = make_gridworld(n, 0.9).mdp;
    const auto flat = make_cliff(n, 0.0, 0.9);
    CHECK(flat.cliff_states == std::vector<int>{6, 7});
    CHECK(flat.goal_state == 8);
    CHECK(count_terminal(flat.mdp) == 3);
    for (int s = 0; s < n * n; ++s) {
      if (grid.is_terminal(s) || flat.mdp.is_terminal(s)) continue;
      for (int a = 0; a < 5; ++a)
        CHECK(flat.mdp.transition().row(flat.mdp.pair_index(s, a)) == grid.transition().row(grid.pair_index(s, a)));
    }
    const auto steep = make_cliff(n, 1.0, 0.9);
    for (int c = 0; c + 1 < n; ++c) {
      const int s = (n - 2) * n + c;
      for (int a = 0; a < 4; ++a) CHECK(steep.mdp.transition()(steep.mdp.pair_index(s, a), (n - 1) * n + c) == 1.0);
      CHECK(steep.mdp.transition()(steep.mdp.pair_index(s, kWait), s) == 1.0);
    }
    for (double p : {0.0, 0.3, 0.5, 1.0}) {
      const auto env = make_cliff(4, p, 0.7);
      CHECK(row_sum_error(env.mdp) < 1e-12);
      CHECK(validate_mdp(env.mdp).empty());
    }
    CHECK_THROWS_AS(make_cliff(3, 1.5, 0.9), InvalidArgument);
    CHECK_THROWS_AS(make_cliff(1, 0.5, 0.9), InvalidArgument);
  }

  TEST_CASE("random MDP structure and seeding") {
    const auto env = make_random_mdp(2, 2, 1, 0.9, 3);
    CHECK(count_terminal(env.mdp) == 1);
    CHECK(row_sum_error(env.mdp) < 1e-12);
    const auto again = make_random_mdp(2, 2, 1, 0.9, 3);
    CHECK(again.mdp.transition() == env.mdp.transition());
    CHECK(again.mdp.terminal_mask() == env.mdp.terminal_mask());
    CHECK(make_random_mdp(6, 3, 2, 0.9, 4).mdp.transition() != make_random_mdp(6, 3, 2, 0.9, 5).mdp.transition());
    CHECK_THROWS_AS(make_random_mdp(3, 2, 3, 0.9, 1), InvalidArgument);
    CHECK_THROWS_AS(make_random_mdp(0, 2, 0, 0.9, 1), InvalidArgument);
  }

  TEST_CASE("random MDP rows are uniform on the simplex") {
    // Dirichlet(1, 1, 1, 1): mean 1/4, variance 3/80 per entry
    const int S = 4, samples = 10000;
    Matrix sum = Matrix::Zero(S, S);
    for (int k = 0; k < samples; ++k) sum += make_random_mdp(S, 1, 0, 0.5, 100 + static_cast<std::uint64_t>(k)).mdp.transition();
    const double se = std::sqrt(3.0 / 80.0 / samples);
    int beyond = 0;
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        const double z = std::abs(sum(i, j) / samples - 0.25) / se;
        CHECK(z <= 4.0);
        beyond += z > 3.0 ? 1 : 0;
      }
    CHECK(beyond <= 1);
  }

  TEST_CASE("tree layout") {
    const auto env = make_tree_mdp(2, 2, TreeVariant::FirstHalfTerminal, 0.9);
    const auto& mdp = env.mdp;
    CHECK(mdp.num_states() == 7);
    CHECK(count_terminal(mdp) == 2);
    CHECK(mdp.is_terminal(3));
    CHECK(mdp.is_terminal(4));
    CHECK(mdp.initial_dist()(0) == 1.0);
    for (int a = 0; a < 2; ++a) {
      CHECK(mdp.transition()(mdp.pair_index(0, a), 1 + a) == 1.0);
      CHECK(mdp.transition()(mdp.pair_index(5, a), 0) == 1.0);
      CHECK(mdp.transition()(mdp.pair_index(6, a), 0) == 1.0);
    }
    const auto alt = make_tree_mdp(2, 3, TreeVariant::AlternatingTerminal, 0.9).mdp;
    for (int k = 0; k < 8; ++k) CHECK(alt.is_terminal(7 + k) == (k % 2 == 0));
    CHECK(make_tree_mdp(3, 2, TreeVariant::FirstHalfTerminal, 0.9).mdp.num_states() == 13);
    CHECK_THROWS_AS(make_tree_mdp(1, 2, TreeVariant::FirstHalfTerminal, 0.9), InvalidArgument);
    CHECK_THROWS_AS(make_tree_mdp(2, 0, TreeVariant::FirstHalfTerminal, 0.9), InvalidArgument);
  }

  TEST_CASE("every generator produces a valid MDP") {
    std::vector<Environment> envs;
    for (int n = 2; n <= 5; ++n) {
      envs.push_back(make_gridworld(n, 0.99));
      envs.push_back(make_cliff(n, 0.5, 0.5));
    }
    for (int s = 2; s <= 8; s += 3) envs.push_back(make_random_mdp(s, 4, s / 2, 0.7, 9));
    for (int d = 1; d <= 4; ++d) envs.push_back(make_tree_mdp(2, d, TreeVariant::AlternatingTerminal, 0.9));
    for (const auto& env : envs) {
      CAPTURE(env.spec.describe());
      CHECK(validate_mdp(env.mdp).empty());
      const auto rebuilt = make_environment(env.spec);
      CHECK(rebuilt.mdp.transition() == env.mdp.transition());
    }
  }

  TEST_CASE("descriptors and names") {
    EnvSpec spec;
    spec.kind = EnvKind::Cliff;
    spec.n = 3;
    spec.slip = 0.5;
    CHECK(spec.describe() == "cliff(n=3,p=0.5,gamma=0.9)");
    CHECK(env_kind_from_string(to_string(EnvKind::Tree)) == EnvKind::Tree);
    CHECK(reward_kind_from_string("path") == RewardKind::Path);
    CHECK(tree_variant_from_string("alternating") == TreeVariant::AlternatingTerminal);
    CHECK_THROWS_AS(env_kind_from_string("maze"), InvalidArgument);
  }

  TEST_CASE("terminal rewards") {
    const auto env = make_gridworld(2, 0.9);
    const Vector r = sample_state_reward(env, RewardKind::Terminal, 1);
    for (int s = 0; s < 4; ++s) {
      if (env.mdp.is_terminal(s)) {
        CHECK(r(s) > 0.0);
        CHECK(r(s) < 1.0);
      } else {
        CHECK(r(s) > -1.0);
        CHECK(r(s) < 0.0);
      }
    }
    CHECK(sample_state_reward(env, RewardKind::Terminal, 1) == r);
    CHECK(sample_state_reward(env, RewardKind::Terminal, 2) != r);
  }

  TEST_CASE("cliff and uniform rewards") {
    const auto env = make_cliff(4, 0.5, 0.9);
    const Vector r = sample_state_reward(env, RewardKind::Cliff, 5);
    for (int s : env.cliff_states) CHECK((r(s) > -5.0 && r(s) < 0.0));
    CHECK((r(env.goal_state) > 0.0 && r(env.goal_state) < 1.0));
    CHECK(r.minCoeff() < -1.0);  // 3 cliff cells in (-5, 0)
    const Vector u = sample_state_reward(env, RewardKind::Uniform, 5);
    CHECK(u.minCoeff() >= 0.0);
    CHECK(u.maxCoeff() < 1.0);
    CHECK_THROWS_AS(sample_state_reward(make_gridworld(3, 0.9), RewardKind::Cliff, 1), InvalidArgument);
  }

  TEST_CASE("path rewards vanish on the path") {
    const auto env = make_gridworld(5, 0.9);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Vector r = sample_state_reward(env, RewardKind::Path, seed);
      const auto path = sample_path(5, seed);
      REQUIRE(path.size() == 9);
      CHECK(path.front() == 0);
      CHECK(path.back() == 24);
      for (std::size_t i = 1; i < path.size(); ++i) {
        const int step = path[i] - path[i - 1];
        CHECK((step == 1 || step == 5));
      }
      for (int s : path)
        if (!env.mdp.is_terminal(s)) CHECK(r(s) == 0.0);
      for (int s = 0; s < 25; ++s) {
        if (env.mdp.is_terminal(s)) CHECK(r(s) > 0.0);
        else if (std::find(path.begin(), path.end(), s) == path.end()) CHECK(r(s) < 0.0);
      }
    }
    CHECK_THROWS_AS(sample_state_reward(make_cliff(3, 0.5, 0.9), RewardKind::Path, 1), InvalidArgument);
  }

  TEST_CASE("state rewards compile to expected next-state rewards") {
    const auto env = make_cliff(3, 0.5, 0.9);
    const Vector rs = sample_state_reward(env, RewardKind::Cliff, 8);
    const auto r = compile_state_reward(env.mdp, rs);
    const int A = env.mdp.num_actions();
    for (int s = 0; s < env.mdp.num_states(); ++s)
      for (int a = 0; a < A; ++a) {
        double expected = 0.0;
        if (!env.mdp.is_terminal(s))
          for (int t = 0; t < env.mdp.num_states(); ++t) expected += env.mdp.transition()(s * A + a, t) * rs(t);
        CHECK(r.values(s * A + a) == doctest::Approx(expected).epsilon(1e-14));
      }
    CHECK(sample_reward(env, RewardKind::Cliff, 8).values == r.values);
    CHECK_THROWS_AS(compile_state_reward(env.mdp, Vector::Zero(3)), InvalidArgument);
  }

  TEST_CASE("sparsify") {
    std::mt19937_64 rng(71);
    const RewardVector r(oracle::random_vector(rng, 8).cwiseAbs().array() + 0.1);
    CHECK(sparsify(r, 0.0, 1).values == r.values);
    CHECK(sparsify(r, 1.0, 1).values.isZero());
    const auto half = sparsify(r, 0.5, 1);
    CHECK((half.values.array() == 0.0).count() == 4);
    CHECK(sparsify(r, 0.5, 1).values == half.values);
    CHECK((sparsify(RewardVector(Vector::Ones(10)), 0.25, 3).values.array() == 0.0).count() == 3);
    CHECK_THROWS_AS(sparsify(r, 1.5, 1), InvalidArgument);
  }

  TEST_CASE("interpolate") {
    std::mt19937_64 rng(72);
    const RewardVector a(oracle::random_vector(rng, 6)), b(oracle::random_vector(rng, 6));
    CHECK(interpolate(a, b, 0.0).values == a.values);
    CHECK(interpolate(a, b, 1.0).values == b.values);
    CHECK((interpolate(a, b, 0.5).values - 0.5 * (a.values + b.values)).norm() < 1e-15);
    CHECK_THROWS_AS(interpolate(a, RewardVector(Vector::Zero(3)), 0.5), InvalidArgument);
    CHECK_THROWS_AS(interpolate(a, b, -0.1), InvalidArgument);

    for (int trial = 0; trial < 10; ++trial) {
      const auto env = make_random_mdp(20, 4, 2, 0.9, 300 + static_cast<std::uint64_t>(trial));
      const PolytopeModel poly(env.mdp);
      const auto r0 = sample_reward(env, RewardKind::Uniform, 2 * trial);
      const auto r1 = sample_reward(env, RewardKind::Terminal, 2 * trial + 1);
      double prev = 0.0;
      for (int k = 0; k <= 20; ++k) {
        const double angle = projected_angle(poly, r0, interpolate(r0, r1, 0.05 * k));
        CHECK(angle >= prev - 1e-12);
        prev = angle;
      }
    }
  }
}
