#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "goodhart/mdp.hpp"

namespace goodhart {

enum class EnvKind { Gridworld, Cliff, RandomMdp, Tree };
enum class TreeVariant { FirstHalfTerminal, AlternatingTerminal };
enum class RewardKind { Terminal, Cliff, Path, Uniform };

std::string to_string(EnvKind kind);
std::string to_string(TreeVariant variant);
std::string to_string(RewardKind kind);
EnvKind env_kind_from_string(const std::string& name);
TreeVariant tree_variant_from_string(const std::string& name);
RewardKind reward_kind_from_string(const std::string& name);

/// Grid actions, in index order.
enum GridAction : int { kUp = 0, kRight = 1, kDown = 2, kLeft = 3, kWait = 4 };

struct EnvSpec {
  EnvKind kind = EnvKind::Gridworld;
  int n = 2;            // grid side (Gridworld, Cliff)
  double slip = 0.5;    // Cliff
  int num_states = 4;   // RandomMdp
  int num_actions = 2;  // RandomMdp
  int num_terminal = 1; // RandomMdp
  int branching = 2;    // Tree
  int depth = 2;        // Tree
  TreeVariant variant = TreeVariant::FirstHalfTerminal;
  double discount = 0.9;
  std::uint64_t seed = 0;  // RandomMdp only

  /// Short stable descriptor, e.g. "cliff(n=3,p=0.5,gamma=0.9)".
  std::string describe() const;
};

/// An MDP plus the layout information reward samplers need.
struct Environment {
  EnvSpec spec;
  TabularMdp mdp;
  int grid_size = 0;               // 0 unless Gridworld or Cliff
  std::vector<int> cliff_states;   // Cliff only
  int goal_state = -1;             // Cliff only
};

/// n x n grid, state row * n + col, actions {up, right, down, left, wait}. Moves off
/// the grid stay put. Upper-left and lower-right corners are absorbing.
Environment make_gridworld(int n, double gamma);

/// n x n grid whose bottom row, except the lower-right goal, is an absorbing cliff.
/// A move (not wait) from a cell directly above the cliff ends in the cliff cell
/// below with probability p on top of its normal outcome.
Environment make_cliff(int n, double p, double gamma);

/// Rows of non-terminal states drawn uniformly from the simplex; num_terminal
/// absorbing states chosen at random.
Environment make_random_mdp(int num_states, int num_actions, int num_terminal, double gamma,
                            std::uint64_t seed);

/// Complete tree, nodes in breadth-first order with the root at 0. Action j moves
/// an internal node to its j-th child; terminal leaves absorb, the others return to
/// the root. The episode starts at the root.
Environment make_tree_mdp(int branching, int depth, TreeVariant variant, double gamma);

Environment make_environment(const EnvSpec& spec);

/// State-level reward for the given kind. Throws InvalidArgument for incompatible pairs
/// (Cliff reward off a Cliff environment, Path off a Gridworld).
Vector sample_state_reward(const Environment& env, RewardKind kind, std::uint64_t seed);

/// R(s, a) = sum_s' tau(s, a, s') R_state(s'); absorbing states earn 0.
RewardVector compile_state_reward(const TabularMdp& mdp, const Vector& state_reward);

RewardVector sample_reward(const Environment& env, RewardKind kind, std::uint64_t seed);

/// The {right, down} random walk from the upper-left corner used by Path rewards.
std::vector<int> sample_path(int n, std::uint64_t seed);

/// Zeroes exactly round(sigma * size) entries chosen uniformly at random.
RewardVector sparsify(const RewardVector& r, double sigma, std::uint64_t seed);

/// (1 - t) r0 + t r1
RewardVector interpolate(const RewardVector& r0, const RewardVector& r1, double t);

}  // namespace goodhart
