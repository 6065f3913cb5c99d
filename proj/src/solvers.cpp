#include "goodhart/solvers.hpp"

#include <algorithm>
#include <cmath>

#include "goodhart/errors.hpp"
#include "goodhart/geometry.hpp"

namespace goodhart {

std::string to_string(Method m) { return m == Method::MCE ? "mce" : "br"; }

Method method_from_string(const std::string& name) {
  if (name == "mce" || name == "MCE") return Method::MCE;
  if (name == "br" || name == "BR") return Method::BR;
  throw InvalidArgument("unknown solver method '" + name + "'");
}

void validate(const SolverConfig& cfg) {
  if (!(cfg.vi_threshold > 0.0)) throw InvalidArgument("vi_threshold must be positive");
  if (cfg.max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
}

namespace {

// q(s,a) = R(s,a) + gamma * sum_s' tau(s,a,s') v(s')
Matrix backup(const TabularMdp& mdp, const RewardVector& reward, const Vector& v) {
  const Vector flat = reward.values + mdp.discount() * (mdp.transition() * v);
  Matrix q(mdp.num_states(), mdp.num_actions());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (int a = 0; a < mdp.num_actions(); ++a) q(s, a) = flat(mdp.pair_index(s, a));
  return q;
}

Vector soft_max_rows(const Matrix& q, double alpha) {
  Vector v(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double m = q.row(s).maxCoeff();
    v(s) = m + alpha * std::log(((q.row(s).array() - m) / alpha).exp().sum());
  }
  return v;
}

void check_inputs(const TabularMdp& mdp, const RewardVector& reward, const SolverConfig& cfg) {
  validate(cfg);
  require_valid(mdp, reward);
}

}  // namespace

Policy greedy_policy(const Matrix& q) {
  Matrix p = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    p(s, best) = 1.0;
  }
  return Policy(std::move(p));
}

ValueIterationResult value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                                     const SolverConfig& cfg) {
  check_inputs(mdp, reward, cfg);
  Vector v = Vector::Zero(mdp.num_states());
  double residual = 0.0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Matrix q = backup(mdp, reward, v);
    const Vector next = q.rowwise().maxCoeff();
    residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (residual <= cfg.vi_threshold) {
      ValueIterationResult out;
      out.q = backup(mdp, reward, v);
      out.v = v;
      out.greedy = greedy_policy(out.q);
      out.iterations = it;
      out.residual = residual;
      return out;
    }
  }
  throw NonConvergenceError("value_iteration did not converge", residual);
}

Policy optimal_policy(const TabularMdp& mdp, const RewardVector& reward, const SolverConfig& cfg) {
  const auto vi = value_iteration(mdp, reward, cfg);
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  std::vector<int> actions(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    int a = 0;
    vi.greedy.probs.row(s).maxCoeff(&a);
    actions[static_cast<std::size_t>(s)] = a;
  }
  const int sweep_cap = 10 * S * A + 100;
  for (int sweep = 0; sweep < sweep_cap; ++sweep) {
    const Policy pi = deterministic_policy(mdp, actions);
    const Matrix p = policy_transition(mdp, pi);
    Vector r_pi(S);
    for (int s = 0; s < S; ++s) r_pi(s) = reward.values(mdp.pair_index(s, actions[static_cast<std::size_t>(s)]));
    const Vector v = (Matrix::Identity(S, S) - mdp.discount() * p).partialPivLu().solve(r_pi);
    const Matrix q = backup(mdp, reward, v);
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      const int cur = actions[static_cast<std::size_t>(s)];
      const double tol = 1e-12 * (1.0 + std::abs(q(s, cur)));
      int best = cur;
      for (int a = 0; a < A; ++a)
        if (q(s, a) > q(s, best) + tol) best = a;
      if (best != cur) {
        actions[static_cast<std::size_t>(s)] = best;
        changed = true;
      }
    }
    if (!changed) return pi;
  }
  throw NonConvergenceError("optimal_policy: policy iteration did not stabilise", 0.0);
}

Policy softmax_policy(const Matrix& q, double alpha) {
  Matrix p(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double m = q.row(s).maxCoeff();
    p.row(s) = ((q.row(s).array() - m) / alpha).exp().matrix();
    p.row(s) /= p.row(s).sum();
  }
  return Policy(std::move(p));
}

Policy mce_policy(const TabularMdp& mdp, const RewardVector& reward, double alpha,
                  const SolverConfig& cfg) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("mce_policy: alpha must be positive");
  check_inputs(mdp, reward, cfg);
  Vector v = Vector::Zero(mdp.num_states());
  double residual = 0.0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Vector next = soft_max_rows(backup(mdp, reward, v), alpha);
    residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (residual <= cfg.vi_threshold) return softmax_policy(backup(mdp, reward, v), alpha);
  }
  throw NonConvergenceError("soft value iteration did not converge", residual);
}

Policy boltzmann_policy(const TabularMdp& mdp, const RewardVector& reward, double alpha,
                        const SolverConfig& cfg) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("boltzmann_policy: alpha must be positive");
  return softmax_policy(value_iteration(mdp, reward, cfg).q, alpha);
}

PressureSchedule::PressureSchedule(std::vector<double> pressures) : pressures_(std::move(pressures)) {
  if (pressures_.empty()) throw InvalidArgument("pressure schedule must not be empty");
  for (std::size_t i = 0; i < pressures_.size(); ++i) {
    const double p = pressures_[i];
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("pressures must lie in (0,1)");
    if (i > 0 && !(p > pressures_[i - 1])) throw InvalidArgument("pressures must be strictly increasing");
  }
}

double PressureSchedule::alpha(std::size_t i) const { return -std::log(pressure(i)); }

namespace {

std::vector<double> linspace(int count, double lo, double hi) {
  std::vector<double> out;
  if (count == 1) {
    out.push_back(lo);
    return out;
  }
  for (int i = 0; i < count; ++i) out.push_back(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
  return out;
}

}  // namespace

PressureSchedule pressure_grid(const PressureGridSpec& spec) {
  if (spec.low_count < 0 || spec.high_count < 0 || spec.low_count + spec.high_count == 0)
    throw InvalidArgument("pressure_grid: counts must be non-negative and not both zero");
  auto check_range = [](int count, double lo, double hi) {
    if (count == 0) return;
    if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) throw InvalidArgument("pressure_grid: ranges must lie in (0,1)");
    if (count > 1 && !(lo < hi)) throw InvalidArgument("pressure_grid: degenerate range with count > 1");
  };
  check_range(spec.low_count, spec.low_lo, spec.low_hi);
  check_range(spec.high_count, spec.high_lo, spec.high_hi);
  if (spec.low_count > 0 && spec.high_count > 0 && !(spec.low_hi < spec.high_lo))
    throw InvalidArgument("pressure_grid: low and high ranges overlap");
  std::vector<double> all;
  if (spec.low_count > 0) {
    const auto low = linspace(spec.low_count, spec.low_lo, spec.low_hi);
    all.insert(all.end(), low.begin(), low.end());
  }
  if (spec.high_count > 0) {
    const auto high = linspace(spec.high_count, spec.high_lo, spec.high_hi);
    all.insert(all.end(), high.begin(), high.end());
  }
  return PressureSchedule(std::move(all));
}

PressureSchedule linear_pressures(int count, double lo, double hi) {
  if (count < 1) throw InvalidArgument("linear_pressures: count must be >= 1");
  return PressureSchedule(linspace(count, lo, hi));
}

void validate(const TrainingCurve& curve) {
  const std::size_t n = curve.pressures.size();
  if (curve.true_returns.size() != n || curve.proxy_returns.size() != n ||
      (!curve.occupancies.empty() && curve.occupancies.size() != n))
    throw InvalidArgument("training curve: column lengths differ");
  constexpr double eps = 1e-6;
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : {curve.true_returns[i], curve.proxy_returns[i]}) {
      if (!(v >= -eps && v <= 1.0 + eps))
        throw InvalidArgument("training curve: normalised return " + std::to_string(v) + " outside [0,1]");
    }
  }
}

TrainingCurve training_curve_normalized(const TabularMdp& mdp, const RewardVector& true_norm,
                                        const RewardVector& proxy_norm,
                                        const PressureSchedule& schedule, const SolverConfig& cfg) {
  check_inputs(mdp, proxy_norm, cfg);
  require_valid(mdp, true_norm);
  TrainingCurve curve;
  curve.metadata.method = to_string(cfg.method);
  Matrix q_star;
  if (cfg.method == Method::BR) q_star = value_iteration(mdp, proxy_norm, cfg).q;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const double alpha = schedule.alpha(i);
    const Policy pi = cfg.method == Method::BR ? softmax_policy(q_star, alpha)
                                                : mce_policy(mdp, proxy_norm, alpha, cfg);
    OccupancyMeasure eta = occupancy_measure(mdp, pi);
    curve.pressures.push_back(schedule.pressure(i));
    curve.true_returns.push_back(eta.values.dot(true_norm.values));
    curve.proxy_returns.push_back(eta.values.dot(proxy_norm.values));
    curve.occupancies.push_back(std::move(eta));
  }
  return curve;
}

TrainingCurve training_curve(const TabularMdp& mdp, const RewardVector& true_reward,
                             const RewardVector& proxy_reward, const PressureSchedule& schedule,
                             const SolverConfig& cfg) {
  const RewardVector true_norm = normalize_return_range(mdp, true_reward, cfg);
  const RewardVector proxy_norm = normalize_return_range(mdp, proxy_reward, cfg);
  return training_curve_normalized(mdp, true_norm, proxy_norm, schedule, cfg);
}

}  // namespace goodhart
