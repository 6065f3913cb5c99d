#include "goodhart/ascent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "goodhart/errors.hpp"
#include "goodhart/numerics.hpp"

namespace goodhart {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Optimum: return "optimum";
    case StopReason::EarlyStop: return "early_stop";
    case StopReason::MaxSteps: return "max_steps";
  }
  return "unknown";
}

double default_active_tol(const PolytopeModel& poly) { return 1e-9 / (1.0 - poly.discount()); }

namespace {

// atan2 form of the angle; zero vectors give 0 instead of throwing.
double raw_angle(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const Vector ua = a / na;
  const Vector ub = b / nb;
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm());
}

// Projection of g onto the tangent cone at eta (not normalised).
Vector cone_projection(const PolytopeModel& poly, const Vector& eta, const Vector& g, double active_tol) {
  std::vector<int> active;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    if (eta(i) <= active_tol) active.push_back(static_cast<int>(i));
  if (active.empty()) return g;
  const Matrix c = poly.projection_columns(active);
  const Vector mu = numerics::nnls(c, -g);
  Vector d = g + c * mu;
  // d lives in span(Omega); one more projection removes round-off in A d.
  return poly.project(d);
}

bool is_zero_direction(const Vector& d, const Vector& g) {
  return !(d.norm() > 1e-10 * std::max(g.norm(), 1e-300));
}

struct StepResult {
  Vector next;
  double length = 0.0;
};

// Longest feasible move along t; coordinates that hit zero are set to exactly zero.
StepResult ratio_step(const Vector& eta, const Vector& t, double active_tol) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (eta(i) <= active_tol || t(i) >= -1e-15) continue;
    best = std::min(best, eta(i) / -t(i));
  }
  if (!std::isfinite(best)) throw NumericError("steepest_ascent: ascent direction is unbounded in Omega");
  StepResult out;
  out.length = best;
  out.next = eta + best * t;
  const double cut = best * (1.0 + 1e-12) + 1e-15;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (eta(i) > active_tol && t(i) < -1e-15 && eta(i) / -t(i) <= cut) out.next(i) = 0.0;
    if (out.next(i) < 0.0) out.next(i) = 0.0;
  }
  return out;
}

enum class Gate { Continue, Stop };

// Shared driver; `gate` may refuse a step given its unit gain.
template <typename GateFn>
AscentPath run_ascent(const TabularMdp& mdp, const PolytopeModel& poly, const RewardVector& r, int max_steps,
                      GateFn gate) {
  require_valid(mdp, r);
  if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
  const double tol = default_active_tol(poly);
  const Vector g = poly.project(r);
  AscentPath path;
  path.refused_gain = std::numeric_limits<double>::quiet_NaN();
  path.points.push_back(occupancy_measure(mdp, uniform_policy(mdp)).values);
  for (int step = 0; step < max_steps; ++step) {
    const Vector& eta = path.points.back();
    const Vector d = cone_projection(poly, eta, g, tol);
    if (is_zero_direction(d, g)) {
      path.stop_reason = StopReason::Optimum;
      return path;
    }
    const Vector t = d / d.norm();
    const double gain = t.dot(g);
    if (gate(gain) == Gate::Stop) {
      path.stop_reason = StopReason::EarlyStop;
      path.refused_gain = gain;
      return path;
    }
    StepResult s = ratio_step(eta, t, tol);
    path.directions.push_back(t);
    path.step_gains.push_back(gain);
    path.step_lengths.push_back(s.length);
    path.points.push_back(std::move(s.next));
  }
  path.stop_reason = StopReason::MaxSteps;
  return path;
}

}  // namespace

Vector tangent_direction(const PolytopeModel& poly, const Vector& eta, const RewardVector& r, double active_tol) {
  if (eta.size() != poly.num_pairs() || r.size() != poly.num_pairs())
    throw InvalidArgument("tangent_direction: length mismatch");
  if (active_tol < 0.0) active_tol = default_active_tol(poly);
  const Vector g = poly.project(r);
  const Vector d = cone_projection(poly, eta, g, active_tol);
  if (is_zero_direction(d, g)) return Vector::Zero(eta.size());
  return d / d.norm();
}

AscentPath steepest_ascent(const TabularMdp& mdp, const PolytopeModel& poly, const RewardVector& r,
                           const AscentConfig& cfg) {
  return run_ascent(mdp, poly, r, cfg.max_steps, [](double) { return Gate::Continue; });
}

void validate(const EarlyStopConfig& cfg) {
  if (!(cfg.angle_bound >= 0.0 && cfg.angle_bound <= M_PI / 2))
    throw InvalidArgument("early stopping: angle bound must lie in [0, pi/2]");
  if (cfg.max_steps < 1) throw InvalidArgument("early stopping: max_steps must be >= 1");
}

double stopping_threshold(const PolytopeModel& poly, const RewardVector& r, double theta) {
  return std::sin(theta) * poly.project(r).norm();
}

EarlyStopResult early_stopping(const TabularMdp& mdp, const PolytopeModel& poly, const RewardVector& r,
                               const EarlyStopConfig& cfg) {
  validate(cfg);
  const double threshold = stopping_threshold(poly, r, cfg.angle_bound);
  EarlyStopResult out;
  // Equality is refused too: at theta = pi/2 even the interior step sits on the bound.
  out.path = run_ascent(mdp, poly, r, cfg.max_steps, [&](double gain) {
    return gain <= threshold * (1.0 + 1e-12) ? Gate::Stop : Gate::Continue;
  });
  out.policy = policy_from_occupancy(mdp, OccupancyMeasure(out.path.final_point()));
  return out;
}

std::size_t sequence_stop_index(const PolytopeModel& poly, const std::vector<Vector>& points,
                                const RewardVector& r, double theta) {
  if (points.empty()) throw InvalidArgument("sequence_stop_index: empty sequence");
  if (!(theta >= 0.0 && theta <= M_PI / 2)) throw InvalidArgument("sequence_stop_index: theta must lie in [0, pi/2]");
  const double threshold = stopping_threshold(poly, r, theta);
  const double scale = std::max(1.0, points.front().lpNorm<Eigen::Infinity>());
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const Vector step = points[i + 1] - points[i];
    const double len = step.norm();
    if (len <= 1e-14 * scale) continue;
    const double gain = r.values.dot(step) / len;
    if (gain <= threshold * (1.0 + 1e-12)) return i;
  }
  return points.size() - 1;
}

bool stopping_certificate(const PolytopeModel& poly, const Vector& eta_a, const Vector& eta_b,
                          const RewardVector& r, double theta) {
  if (!(theta >= 0.0 && theta <= M_PI / 2)) throw InvalidArgument("stopping_certificate: theta must lie in [0, pi/2]");
  const Vector step = eta_b - eta_a;
  const double len = step.norm();
  if (!(len > 0.0)) throw InvalidArgument("stopping_certificate: coincident points");
  return r.values.dot(step) / len < stopping_threshold(poly, r, theta);
}

namespace {

struct WorstCaseParts {
  Vector v;      // M eta
  Vector u;      // M proxy / ||M proxy||
  double m = 0;  // ||M proxy||
  double theta = 0;
};

WorstCaseParts worst_case_parts(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy,
                                double theta) {
  if (!(theta >= 0.0 && theta <= M_PI)) throw InvalidArgument("worst case: theta must lie in [0, pi]");
  WorstCaseParts p;
  const Vector mp = poly.project(proxy);
  p.m = mp.norm();
  if (!(p.m > 1e-10)) throw DegenerateRewardError("worst case: proxy has zero projection");
  p.u = mp / p.m;
  p.v = poly.project(eta);
  // a one-dimensional span leaves no room to rotate away from the proxy
  p.theta = poly.dimension() < 2 && theta < M_PI ? 0.0 : theta;
  return p;
}

}  // namespace

double worst_case_return(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy, double theta) {
  const auto p = worst_case_parts(poly, eta, proxy, theta);
  const double phi = raw_angle(p.v, p.u);
  return p.m * p.v.norm() * std::cos(std::min(phi + p.theta, M_PI));
}

RewardVector worst_case_reward(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy,
                               double theta) {
  const auto p = worst_case_parts(poly, eta, proxy, theta);
  const double vn = p.v.norm();
  if (vn == 0.0) return RewardVector(p.m * p.u);
  const double phi = raw_angle(p.v, p.u);
  if (phi + p.theta >= M_PI) return RewardVector(-p.m * p.v / vn);
  const Vector perp = p.v - p.v.dot(p.u) * p.u;
  Vector w;
  if (perp.norm() > 1e-12 * vn) {
    w = perp / perp.norm();
  } else if (poly.dimension() >= 2) {
    w = random_orthogonal_direction(poly, p.u, 0);
  } else {
    return RewardVector(p.m * p.u);
  }
  return RewardVector(p.m * (std::cos(p.theta) * p.u - std::sin(p.theta) * w));
}

double worst_case_parallel_form(const PolytopeModel& poly, const Vector& eta, const RewardVector& proxy,
                                double theta) {
  const auto p = worst_case_parts(poly, eta, proxy, theta);
  const double par = p.v.dot(p.u);
  const double perp = (p.v - par * p.u).norm();
  return p.m * std::cos(p.theta) * (par - std::tan(p.theta) * perp);
}

WorstCaseResult maximize_worst_case(const TabularMdp& mdp, const PolytopeModel& poly,
                                    const RewardVector& proxy, double theta, int num_rays,
                                    std::uint64_t seed, double gap_tol, int max_cuts) {
  require_valid(mdp, proxy);
  if (!(theta >= 0.0 && theta < M_PI / 2)) throw InvalidArgument("maximize_worst_case: theta must lie in [0, pi/2)");
  if (num_rays < 1) throw InvalidArgument("maximize_worst_case: num_rays must be >= 1");
  const int n = poly.num_pairs();
  const double m = poly.project(proxy).norm();
  if (!(m > 1e-10)) throw DegenerateRewardError("maximize_worst_case: proxy has zero projection");

  std::vector<Vector> cuts;
  if (poly.dimension() < 2 || theta == 0.0) {
    cuts.push_back(starc_normalize(poly, RewardVector(poly.project(proxy)), m).values);
  } else {
    for (int j = 0; j < num_rays; ++j)
      cuts.push_back(sample_reward_at_angle(poly, proxy, theta, m, seed + static_cast<std::uint64_t>(j)).values);
  }
  const int rays = static_cast<int>(cuts.size());

  // Variables (eta, z+, z-): maximise z subject to z <= eta . R_j, A eta = mu.
  Matrix a_eq = Matrix::Zero(poly.num_states(), n + 2);
  a_eq.leftCols(n) = poly.constraint_matrix();
  Vector c = Vector::Zero(n + 2);
  c(n) = 1.0;
  c(n + 1) = -1.0;

  WorstCaseResult out;
  out.rays = rays;
  Vector best_eta;
  double best = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  for (int round = 0; round <= max_cuts; ++round) {
    Matrix a_ub(static_cast<Eigen::Index>(cuts.size()), n + 2);
    for (std::size_t j = 0; j < cuts.size(); ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      a_ub.row(row).head(n) = -cuts[j].transpose();
      a_ub(row, n) = 1.0;
      a_ub(row, n + 1) = -1.0;
    }
    const Vector b_ub = Vector::Zero(static_cast<Eigen::Index>(cuts.size()));
    const auto lp = numerics::simplex_maximize(c, a_eq, poly.rhs(), a_ub, b_ub);
    if (lp.status != numerics::LpStatus::Optimal)
      throw NumericError("maximize_worst_case: linear program is not solvable");
    const Vector eta = lp.x.head(n).cwiseMax(0.0);
    upper = std::min(upper, lp.objective);
    const double value = worst_case_return(poly, eta, proxy, theta);
    if (value > best) {
      best = value;
      best_eta = eta;
    }
    out.cuts = round;
    if (upper - best <= gap_tol * std::max(1.0, std::abs(upper))) break;
    cuts.push_back(worst_case_reward(poly, eta, proxy, theta).values);
  }
  out.eta = OccupancyMeasure(best_eta);
  out.policy = policy_from_occupancy(mdp, out.eta);
  out.objective = best;
  out.upper_bound = upper;
  return out;
}

double polytope_diameter(const TabularMdp& mdp, const PolytopeModel& poly, std::int64_t max_vertices) {
  if (count_deterministic_policies(mdp, max_vertices) < 0) return 2.0 / (1.0 - mdp.discount());
  const auto vertices = enumerate_vertices(mdp, poly, max_vertices);
  double best = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    for (std::size_t j = i + 1; j < vertices.size(); ++j)
      best = std::max(best, (vertices[i].eta.values - vertices[j].eta.values).norm());
  return best;
}

double regret_bound(double diameter, const AscentPath& path, double theta) {
  if (path.points.empty()) throw InvalidArgument("regret_bound: empty path");
  return diameter - (path.points.back() - path.points.front()).norm() * std::cos(theta);
}

double regret_bound(const TabularMdp& mdp, const PolytopeModel& poly, const AscentPath& path, double theta) {
  return regret_bound(polytope_diameter(mdp, poly), path, theta);
}

IterativeResult iterative_improvement(const TabularMdp& mdp, const PolytopeModel& poly,
                                      const RewardOracle& oracle, const IterativeConfig& cfg) {
  if (!oracle) throw InvalidArgument("iterative_improvement: oracle is empty");
  if (cfg.max_oracle_calls < 1) throw InvalidArgument("iterative_improvement: max_oracle_calls must be >= 1");
  IterativeResult out;
  const double tol = default_active_tol(poly);
  RewardVector reward = cfg.initial_reward.size() > 0 ? cfg.initial_reward
                                                      : RewardVector(Vector::Zero(poly.num_pairs()));
  double theta = cfg.initial_theta;

  auto ask = [&]() {
    OracleReply reply = oracle(reward, theta);
    ++out.oracle_calls;
    require_valid(mdp, reply.reward);
    if (!(reply.theta >= 0.0 && reply.theta <= M_PI / 2))
      throw InvalidArgument("iterative_improvement: oracle returned theta outside [0, pi/2]");
    reward = std::move(reply.reward);
    theta = reply.theta;
  };

  out.path.refused_gain = std::numeric_limits<double>::quiet_NaN();
  out.path.points.push_back(occupancy_measure(mdp, uniform_policy(mdp)).values);
  ask();
  int steps = 0;
  while (true) {
    const Vector& eta = out.path.points.back();
    const Vector g = poly.project(reward);
    const Vector d = cone_projection(poly, eta, g, tol);
    const bool stationary = is_zero_direction(d, g);
    bool need_oracle = false;
    Vector t;
    double gain = 0.0;
    if (stationary) {
      if (theta <= cfg.terminal_theta) {
        out.converged = true;
        out.path.stop_reason = StopReason::Optimum;
        break;
      }
      need_oracle = true;
    } else {
      t = d / d.norm();
      gain = t.dot(g);
      need_oracle = gain <= std::sin(theta) * g.norm() * (1.0 + 1e-12);
    }
    if (need_oracle) {
      if (out.oracle_calls >= cfg.max_oracle_calls) {
        out.diagnostics = "oracle budget of " + std::to_string(cfg.max_oracle_calls) +
                          " calls exhausted at step " + std::to_string(steps) +
                          " with theta = " + std::to_string(theta);
        out.path.stop_reason = StopReason::EarlyStop;
        break;
      }
      ask();
      continue;
    }
    if (steps >= cfg.max_steps) {
      out.diagnostics = "step budget of " + std::to_string(cfg.max_steps) + " exhausted";
      out.path.stop_reason = StopReason::MaxSteps;
      break;
    }
    StepResult s = ratio_step(eta, t, tol);
    out.path.directions.push_back(t);
    out.path.step_gains.push_back(gain);
    out.path.step_lengths.push_back(s.length);
    out.path.points.push_back(std::move(s.next));
    ++steps;
  }
  out.eta = OccupancyMeasure(out.path.final_point());
  out.policy = policy_from_occupancy(mdp, out.eta);
  out.final_reward = reward;
  out.final_theta = theta;
  return out;
}

}  // namespace goodhart
