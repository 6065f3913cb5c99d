#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace goodhart {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Finite discounted MDP without a reward.
///
/// Transitions are stored as a (|S||A|) x |S| row-stochastic matrix whose row
/// `s * |A| + a` is tau(s, a, .). Every vector over S x A in this library uses
/// the same state-major index order. Terminal states are encoded as absorbing
/// self-loops; validate_mdp() checks that the mask and the tensor agree.
class TabularMdp {
 public:
  TabularMdp(int num_states, int num_actions, Matrix transition, Vector initial_dist,
             double discount, std::vector<bool> terminal_mask);

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }
  int num_pairs() const noexcept { return num_states_ * num_actions_; }
  int pair_index(int s, int a) const noexcept { return s * num_actions_ + a; }

  const Matrix& transition() const noexcept { return transition_; }
  double transition(int s, int a, int next) const { return transition_(pair_index(s, a), next); }
  const Vector& initial_dist() const noexcept { return initial_dist_; }
  double discount() const noexcept { return discount_; }
  const std::vector<bool>& terminal_mask() const noexcept { return terminal_mask_; }
  bool is_terminal(int s) const { return terminal_mask_.at(static_cast<std::size_t>(s)); }

 private:
  int num_states_;
  int num_actions_;
  Matrix transition_;
  Vector initial_dist_;
  double discount_;
  std::vector<bool> terminal_mask_;
};

/// Reward over state-action pairs, length |S||A|.
struct RewardVector {
  Vector values;

  RewardVector() = default;
  explicit RewardVector(Vector v) : values(std::move(v)) {}
  Eigen::Index size() const noexcept { return values.size(); }
};

/// Stochastic policy; probs(s, a) = pi(a | s).
struct Policy {
  Matrix probs;

  Policy() = default;
  explicit Policy(Matrix p) : probs(std::move(p)) {}
};

/// Discounted state-action visitation vector eta, length |S||A|.
struct OccupancyMeasure {
  Vector values;

  OccupancyMeasure() = default;
  explicit OccupancyMeasure(Vector v) : values(std::move(v)) {}
};

struct Violation {
  std::string constraint;  // e.g. "transition_row_sum"
  std::string location;    // e.g. "(s=1,a=0)"
  std::string detail;
};

std::vector<Violation> validate_mdp(const TabularMdp& mdp);

/// Throws InvalidArgument naming the first violations when the MDP is malformed.
void require_valid(const TabularMdp& mdp);

void require_valid(const TabularMdp& mdp, const Policy& policy);
void require_valid(const TabularMdp& mdp, const RewardVector& reward);

Policy uniform_policy(const TabularMdp& mdp);
Policy deterministic_policy(const TabularMdp& mdp, const std::vector<int>& actions);

/// Row `s' s` of the occupancy LP: sum_a eta(s',a) - gamma sum_{s,a} tau(s,a,s') eta(s,a) = mu(s').
Matrix constraint_matrix(const TabularMdp& mdp);

/// State-to-state transition matrix P_pi(s, s') under a policy.
Matrix policy_transition(const TabularMdp& mdp, const Policy& policy);

/// Solves (I - gamma P_pi^T) x = mu and spreads x(s) over actions by pi.
OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const Policy& policy);

struct RolloutEstimate {
  OccupancyMeasure mean;
  Vector std_error;  // per-coordinate standard error of the mean
};

/// Monte-Carlo estimate of eta from truncated rollouts. Deterministic for a seed.
RolloutEstimate rollout_occupancy(const TabularMdp& mdp, const Policy& policy,
                                  std::int64_t num_traj, int horizon, std::uint64_t seed);

double policy_return(const TabularMdp& mdp, const RewardVector& reward, const Policy& policy);

/// Recovers pi(s,a) = eta(s,a) / sum_a' eta(s,a'); unvisited states get a uniform row.
/// Rejects eta whose constraint residual exceeds 1e-6.
Policy policy_from_occupancy(const TabularMdp& mdp, const OccupancyMeasure& eta);

/// max_s' |(A eta - mu)(s')|
double constraint_residual(const TabularMdp& mdp, const Vector& eta);

nlohmann::json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& doc);
nlohmann::json reward_to_json(const RewardVector& reward);
RewardVector reward_from_json(const nlohmann::json& doc);

}  // namespace goodhart
