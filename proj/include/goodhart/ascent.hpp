#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "goodhart/geometry.hpp"
#include "goodhart/mdp.hpp"

namespace goodhart {

enum class StopReason { Optimum, EarlyStop, MaxSteps };

std::string to_string(StopReason reason);

struct AscentConfig {
  int max_steps = 10000;
  double feasibility_tol = 1e-9;
};

/// Piecewise-linear path through Omega. points[i + 1] = points[i] + lengths[i] * directions[i].
struct AscentPath {
  std::vector<Vector> points;
  std::vector<Vector> directions;
  std::vector<double> step_gains;  // directions[i] . M r
  std::vector<double> step_lengths;
  StopReason stop_reason = StopReason::MaxSteps;
  /// Unit gain of the step that was refused by early stopping, NaN otherwise.
  double refused_gain = std::numeric_limits<double>::quiet_NaN();

  std::size_t num_steps() const noexcept { return directions.size(); }
  const Vector& final_point() const { return points.back(); }
};

/// Active-constraint threshold 1e-9 / (1 - gamma).
double default_active_tol(const PolytopeModel& poly);

/// Unit vector of the tangent cone at eta maximising t . M r, or the zero vector
/// when eta is optimal for r. Coordinates with eta_i <= active_tol are treated as
/// active (pass a negative value for the default).
///
/// The cone is {d : A d = 0, d_I >= 0}; its projection of g = M r is
/// g + M E_I mu with mu = argmin_{mu >= 0} ||g + M E_I mu|| (Moreau decomposition).
Vector tangent_direction(const PolytopeModel& poly, const Vector& eta, const RewardVector& r,
                         double active_tol = -1.0);

/// Steepest ascent from the uniform policy's occupancy measure with exact ratio tests.
AscentPath steepest_ascent(const TabularMdp& mdp, const PolytopeModel& poly, const RewardVector& r,
                           const AscentConfig& cfg = {});

struct EarlyStopConfig {
  double angle_bound = 0.0;
  int max_steps = 10000;
  double feasibility_tol = 1e-9;
};

void validate(const EarlyStopConfig& cfg);

struct EarlyStopResult {
  Policy policy;
  AscentPath path;
};

/// sin(theta) ||M r||, the smallest unit gain a step may have and still be safe for
/// every reward within angle theta of r.
double stopping_threshold(const PolytopeModel& poly, const RewardVector& r, double theta);

/// Steepest ascent that refuses the first step whose unit gain is at most
/// stopping_threshold(); returns the policy of the last retained point.
EarlyStopResult early_stopping(const TabularMdp& mdp, const PolytopeModel& poly, const RewardVector& r,
                               const EarlyStopConfig& cfg);

/// The same rule applied to an arbitrary sequence of occupancy measures (for example
/// the points of a training curve). Returns the index of the last retained point.
/// Zero-length segments are always retained.
std::size_t sequence_stop_index(const PolytopeModel& poly, const std::vector<Vector>& points,
                                const RewardVector& r, double theta);

/// True iff some reward within angle theta of r strictly decreases along eta_a -> eta_b,
/// i.e. r . (eta_b - eta_a) / ||eta_b - eta_a|| < sin(theta) ||M r||.
bool stopping_certificate(const PolytopeModel& poly, const Vector& eta_a, const Vector& eta_b,
                          const RewardVector& r, double theta);

/// min over rewards R in span(Omega) with angle(R, proxy) <= theta and ||R|| = ||M proxy||
/// of eta . R. Closed form ||M proxy|| ||M eta|| cos(min(phi + theta, pi)).
double worst_case_return(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy,
                         double theta);

/// A minimiser of the above; eta . worst_case_reward(...) = worst_case_return(...).
RewardVector worst_case_reward(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy,
                               double theta);

/// ||M proxy|| cos(theta) (eta_par - tan(theta) ||eta_perp||), components of M eta
/// relative to M proxy. Agrees with worst_case_return whenever phi + theta <= pi.
double worst_case_parallel_form(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy,
                                double theta);

struct WorstCaseResult {
  Policy policy;
  OccupancyMeasure eta;
  double objective = 0.0;    // worst_case_return at eta
  double upper_bound = 0.0;  // cutting-plane bound on max over Omega
  int rays = 0;
  int cuts = 0;
};

/// Maximises worst_case_return over Omega. A linear program on num_rays rewards at
/// angle exactly theta gives the starting point; cutting planes built from the exact
/// worst-case reward at each iterate then close the gap to gap_tol.
WorstCaseResult maximize_worst_case(const TabularMdp& mdp, const PolytopeModel& poly,
                                    const RewardVector& proxy, double theta, int num_rays = 64,
                                    std::uint64_t seed = 0, double gap_tol = 1e-10, int max_cuts = 500);

/// Largest pairwise distance between vertices of Omega, or the 2 / (1 - gamma)
/// bound when there are more than max_vertices deterministic policies.
double polytope_diameter(const TabularMdp& mdp, const PolytopeModel& poly, std::int64_t max_vertices = 2048);

/// diameter(Omega) - ||eta_n - eta_0|| cos(theta).
double regret_bound(const TabularMdp& mdp, const PolytopeModel& poly, const AscentPath& path, double theta);
double regret_bound(double diameter, const AscentPath& path, double theta);

struct OracleReply {
  RewardVector reward;
  double theta = 0.0;
};

/// Called with the current reward estimate and its angle bound; returns a better one.
using RewardOracle = std::function<OracleReply(const RewardVector& current, double theta)>;

struct IterativeConfig {
  RewardVector initial_reward;  // empty: use a zero placeholder, the first oracle call replaces it
  double initial_theta = M_PI / 2;
  int max_oracle_calls = 100;
  int max_steps = 10000;
  /// At a stationary point the oracle is queried until theta drops to this value.
  double terminal_theta = 1e-6;
};

struct IterativeResult {
  Policy policy;
  OccupancyMeasure eta;
  AscentPath path;
  RewardVector final_reward;
  double final_theta = 0.0;
  int oracle_calls = 0;
  bool converged = false;
  std::string diagnostics;
};

/// Steepest ascent on the current reward estimate that asks the oracle for a better
/// estimate whenever the next step would fail the stopping rule. The oracle is called
/// once before the first step.
IterativeResult iterative_improvement(const TabularMdp& mdp, const PolytopeModel& poly,
                                      const RewardOracle& oracle, const IterativeConfig& cfg);

}  // namespace goodhart
