#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "goodhart/mdp.hpp"

namespace goodhart {

enum class Method { MCE, BR };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct SolverConfig {
  double vi_threshold = 1e-3;
  int max_iterations = 100000;
  Method method = Method::MCE;
};

void validate(const SolverConfig& cfg);

struct ValueIterationResult {
  Matrix q;  // |S| x |A|
  Vector v;
  Policy greedy;
  int iterations = 0;
  double residual = 0.0;
};

/// Bellman optimality iteration until the sup-norm residual drops to cfg.vi_threshold.
ValueIterationResult value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                                     const SolverConfig& cfg);

/// Deterministic argmax per row, lowest action index on ties.
Policy greedy_policy(const Matrix& q);

/// Exactly optimal deterministic policy: value iteration followed by policy-iteration
/// sweeps with exact evaluation until no action improves.
Policy optimal_policy(const TabularMdp& mdp, const RewardVector& reward, const SolverConfig& cfg);

/// Entropy-regularised optimum via soft value iteration with temperature alpha.
Policy mce_policy(const TabularMdp& mdp, const RewardVector& reward, double alpha,
                  const SolverConfig& cfg);

/// pi(s,a) proportional to exp(q(s,a)/alpha), computed with a max shift.
Policy softmax_policy(const Matrix& q, double alpha);

Policy boltzmann_policy(const TabularMdp& mdp, const RewardVector& reward, double alpha,
                        const SolverConfig& cfg);

struct PressureGridSpec {
  int low_count = 7;
  double low_lo = 0.01;
  double low_hi = 0.75;
  int high_count = 20;
  double high_lo = 0.8;
  double high_hi = 0.99;
};

/// Sorted optimisation pressures lambda in (0,1); alpha = -ln(lambda).
class PressureSchedule {
 public:
  explicit PressureSchedule(std::vector<double> pressures);

  const std::vector<double>& pressures() const noexcept { return pressures_; }
  std::size_t size() const noexcept { return pressures_.size(); }
  double pressure(std::size_t i) const { return pressures_.at(i); }
  double alpha(std::size_t i) const;

 private:
  std::vector<double> pressures_;
};

PressureSchedule pressure_grid(const PressureGridSpec& spec);

/// `count` evenly spaced pressures on [lo, hi].
PressureSchedule linear_pressures(int count, double lo, double hi);

struct CurveMetadata {
  std::string env;
  std::string method;
  double distance = 0.0;
  std::uint64_t seed = 0;
};

struct TrainingCurve {
  std::vector<double> pressures;
  std::vector<double> true_returns;   // normalised J_true(pi_lambda)
  std::vector<double> proxy_returns;  // normalised J_proxy(pi_lambda)
  std::vector<OccupancyMeasure> occupancies;  // eta(pi_lambda); not persisted
  CurveMetadata metadata;

  std::size_t size() const noexcept { return pressures.size(); }
};

/// Throws InvalidArgument when lengths differ or normalised returns leave [-1e-6, 1+1e-6].
void validate(const TrainingCurve& curve);

/// Trains pi_lambda on the proxy at every pressure and records normalised returns.
/// Both rewards are normalised with normalize_return_range first.
TrainingCurve training_curve(const TabularMdp& mdp, const RewardVector& true_reward,
                             const RewardVector& proxy_reward, const PressureSchedule& schedule,
                             const SolverConfig& cfg);

/// Same, for rewards already normalised so that min J = 0 and max J = 1.
TrainingCurve training_curve_normalized(const TabularMdp& mdp, const RewardVector& true_norm,
                                        const RewardVector& proxy_norm,
                                        const PressureSchedule& schedule, const SolverConfig& cfg);

}  // namespace goodhart
