#include "goodhart/mdp.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "goodhart/errors.hpp"

namespace goodhart {

namespace {

constexpr double kStochasticTol = 1e-12;

std::string pair_label(int s, int a) {
  std::ostringstream os;
  os << "(s=" << s << ",a=" << a << ")";
  return os.str();
}

std::string describe(const std::vector<Violation>& violations, std::size_t limit = 3) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size() && i < limit; ++i) {
    if (i) os << "; ";
    os << violations[i].constraint << " at " << violations[i].location << ": "
       << violations[i].detail;
  }
  if (violations.size() > limit) os << "; ... (" << violations.size() << " total)";
  return os.str();
}

}  // namespace

TabularMdp::TabularMdp(int num_states, int num_actions, Matrix transition, Vector initial_dist,
                       double discount, std::vector<bool> terminal_mask)
    : num_states_(num_states),
      num_actions_(num_actions),
      transition_(std::move(transition)),
      initial_dist_(std::move(initial_dist)),
      discount_(discount),
      terminal_mask_(std::move(terminal_mask)) {
  if (num_states <= 0 || num_actions <= 0)
    throw InvalidArgument("TabularMdp: num_states and num_actions must be positive");
  if (transition_.rows() != num_pairs() || transition_.cols() != num_states)
    throw InvalidArgument("TabularMdp: transition must be (|S||A|) x |S|");
  if (initial_dist_.size() != num_states)
    throw InvalidArgument("TabularMdp: initial_dist must have |S| entries");
  if (static_cast<int>(terminal_mask_.size()) != num_states)
    throw InvalidArgument("TabularMdp: terminal_mask must have |S| entries");
}

std::vector<Violation> validate_mdp(const TabularMdp& mdp) {
  std::vector<Violation> out;
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  if (!(mdp.discount() >= 0.0 && mdp.discount() < 1.0)) {
    out.push_back({"discount", "gamma", "must lie in [0,1), got " + std::to_string(mdp.discount())});
  }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto row = mdp.transition().row(mdp.pair_index(s, a));
      if (!row.allFinite()) {
        out.push_back({"transition_finite", pair_label(s, a), "non-finite probability"});
        continue;
      }
      if (row.minCoeff() < 0.0) {
        out.push_back({"transition_nonnegative", pair_label(s, a),
                       "negative entry " + std::to_string(row.minCoeff())});
      }
      const double sum = row.sum();
      if (std::abs(sum - 1.0) > kStochasticTol) {
        out.push_back({"transition_row_sum", pair_label(s, a), "row sums to " + std::to_string(sum)});
      }
      if (mdp.is_terminal(s) && std::abs(row(s) - 1.0) > kStochasticTol) {
        out.push_back({"terminal_absorbing", pair_label(s, a),
                       "terminal state must self-loop with probability 1"});
      }
    }
  }
  const Vector& mu = mdp.initial_dist();
  if (!mu.allFinite() || mu.minCoeff() < 0.0) {
    out.push_back({"initial_nonnegative", "mu", "initial distribution has a negative or non-finite entry"});
  }
  if (std::abs(mu.sum() - 1.0) > kStochasticTol) {
    out.push_back({"initial_sum", "mu", "initial distribution sums to " + std::to_string(mu.sum())});
  }
  return out;
}

void require_valid(const TabularMdp& mdp) {
  const auto violations = validate_mdp(mdp);
  if (!violations.empty()) throw InvalidArgument("invalid MDP: " + describe(violations));
}

void require_valid(const TabularMdp& mdp, const Policy& policy) {
  const auto& p = policy.probs;
  if (p.rows() != mdp.num_states() || p.cols() != mdp.num_actions())
    throw InvalidArgument("policy shape does not match the MDP");
  if (!p.allFinite() || p.minCoeff() < 0.0) throw InvalidArgument("policy has negative entries");
  for (int s = 0; s < p.rows(); ++s) {
    if (std::abs(p.row(s).sum() - 1.0) > kStochasticTol)
      throw InvalidArgument("policy row " + std::to_string(s) + " does not sum to 1");
  }
}

void require_valid(const TabularMdp& mdp, const RewardVector& reward) {
  if (reward.size() != mdp.num_pairs())
    throw InvalidArgument("reward length " + std::to_string(reward.size()) + " does not match |S||A| = " +
                          std::to_string(mdp.num_pairs()));
  if (!reward.values.allFinite()) throw InvalidArgument("reward has non-finite entries");
}

Policy uniform_policy(const TabularMdp& mdp) {
  return Policy(Matrix::Constant(mdp.num_states(), mdp.num_actions(), 1.0 / mdp.num_actions()));
}

Policy deterministic_policy(const TabularMdp& mdp, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != mdp.num_states())
    throw InvalidArgument("deterministic_policy: need one action per state");
  Matrix p = Matrix::Zero(mdp.num_states(), mdp.num_actions());
  for (int s = 0; s < mdp.num_states(); ++s) {
    const int a = actions[static_cast<std::size_t>(s)];
    if (a < 0 || a >= mdp.num_actions()) throw InvalidArgument("deterministic_policy: action out of range");
    p(s, a) = 1.0;
  }
  return Policy(std::move(p));
}

Matrix constraint_matrix(const TabularMdp& mdp) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  Matrix a_mat = -mdp.discount() * mdp.transition().transpose();
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) a_mat(s, mdp.pair_index(s, a)) += 1.0;
  return a_mat;
}

Matrix policy_transition(const TabularMdp& mdp, const Policy& policy) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  Matrix p = Matrix::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double w = policy.probs(s, a);
      if (w != 0.0) p.row(s) += w * mdp.transition().row(mdp.pair_index(s, a));
    }
  return p;
}

OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const Policy& policy) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const Matrix p = policy_transition(mdp, policy);
  const Matrix system = Matrix::Identity(S, S) - mdp.discount() * p.transpose();
  Eigen::PartialPivLU<Matrix> lu(system);
  const Vector x = lu.solve(mdp.initial_dist());
  if (!x.allFinite()) throw NumericError("occupancy_measure: linear solve failed");
  Vector eta(mdp.num_pairs());
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) eta(mdp.pair_index(s, a)) = x(s) * policy.probs(s, a);
  return OccupancyMeasure(std::move(eta));
}

RolloutEstimate rollout_occupancy(const TabularMdp& mdp, const Policy& policy,
                                  std::int64_t num_traj, int horizon, std::uint64_t seed) {
  if (num_traj < 1 || horizon < 1) throw InvalidArgument("rollout_occupancy: num_traj and horizon must be >= 1");
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const int n = mdp.num_pairs();
  std::mt19937_64 rng(seed);

  std::vector<std::discrete_distribution<int>> start{
      std::discrete_distribution<int>(mdp.initial_dist().data(), mdp.initial_dist().data() + S)};
  std::vector<std::discrete_distribution<int>> act;
  std::vector<std::discrete_distribution<int>> step;
  act.reserve(static_cast<std::size_t>(S));
  step.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < S; ++s) {
    const Vector row = policy.probs.row(s).transpose();
    act.emplace_back(row.data(), row.data() + A);
  }
  for (int i = 0; i < n; ++i) {
    const Vector row = mdp.transition().row(i).transpose();
    step.emplace_back(row.data(), row.data() + S);
  }

  Vector sum = Vector::Zero(n);
  Vector sum_sq = Vector::Zero(n);
  Vector per_traj = Vector::Zero(n);
  std::vector<int> touched;
  touched.reserve(static_cast<std::size_t>(horizon));
  for (std::int64_t k = 0; k < num_traj; ++k) {
    touched.clear();
    int s = start[0](rng);
    double w = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = act[static_cast<std::size_t>(s)](rng);
      const int idx = mdp.pair_index(s, a);
      if (per_traj(idx) == 0.0) touched.push_back(idx);
      per_traj(idx) += w;
      s = step[static_cast<std::size_t>(idx)](rng);
      w *= mdp.discount();
    }
    for (int idx : touched) {
      sum(idx) += per_traj(idx);
      sum_sq(idx) += per_traj(idx) * per_traj(idx);
      per_traj(idx) = 0.0;
    }
  }
  const double count = static_cast<double>(num_traj);
  Vector mean = sum / count;
  Vector var = (sum_sq / count - mean.cwiseProduct(mean)).cwiseMax(0.0);
  Vector se = (var * (count / std::max(1.0, count - 1.0)) / count).cwiseSqrt();
  return {OccupancyMeasure(std::move(mean)), std::move(se)};
}

double policy_return(const TabularMdp& mdp, const RewardVector& reward, const Policy& policy) {
  return occupancy_measure(mdp, policy).values.dot(reward.values);
}

double constraint_residual(const TabularMdp& mdp, const Vector& eta) {
  return (constraint_matrix(mdp) * eta - mdp.initial_dist()).cwiseAbs().maxCoeff();
}

Policy policy_from_occupancy(const TabularMdp& mdp, const OccupancyMeasure& eta) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  if (eta.values.size() != mdp.num_pairs()) throw InvalidArgument("policy_from_occupancy: length mismatch");
  const double residual = constraint_residual(mdp, eta.values);
  if (!(residual <= 1e-6))
    throw InvalidArgument("policy_from_occupancy: infeasible occupancy measure (residual " +
                          std::to_string(residual) + ")");
  if (eta.values.minCoeff() < -1e-6)
    throw InvalidArgument("policy_from_occupancy: occupancy measure has negative entries");
  Matrix p(S, A);
  for (int s = 0; s < S; ++s) {
    double total = 0.0;
    for (int a = 0; a < A; ++a) total += std::max(0.0, eta.values(mdp.pair_index(s, a)));
    for (int a = 0; a < A; ++a) {
      p(s, a) = total > 0.0 ? std::max(0.0, eta.values(mdp.pair_index(s, a))) / total : 1.0 / A;
    }
  }
  return Policy(std::move(p));
}

nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  using nlohmann::json;
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  json transition = json::array();
  for (int s = 0; s < S; ++s) {
    json per_action = json::array();
    for (int a = 0; a < A; ++a) {
      json row = json::array();
      for (int t = 0; t < S; ++t) row.push_back(mdp.transition(s, a, t));
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  json initial = json::array();
  for (int s = 0; s < S; ++s) initial.push_back(mdp.initial_dist()(s));
  json terminal = json::array();
  for (int s = 0; s < S; ++s) terminal.push_back(static_cast<bool>(mdp.is_terminal(s)));
  return json{{"num_states", S},       {"num_actions", A},         {"discount", mdp.discount()},
              {"initial_dist", initial}, {"terminal_mask", terminal}, {"transition", transition}};
}

TabularMdp mdp_from_json(const nlohmann::json& doc) {
  try {
    const int S = doc.at("num_states").get<int>();
    const int A = doc.at("num_actions").get<int>();
    if (S <= 0 || A <= 0) throw InvalidArgument("mdp json: num_states and num_actions must be positive");
    const auto& tr = doc.at("transition");
    if (tr.size() != static_cast<std::size_t>(S)) throw InvalidArgument("mdp json: transition must have |S| entries");
    Matrix t(S * A, S);
    for (int s = 0; s < S; ++s) {
      if (tr[static_cast<std::size_t>(s)].size() != static_cast<std::size_t>(A))
        throw InvalidArgument("mdp json: transition[s] must have |A| entries");
      for (int a = 0; a < A; ++a) {
        const auto& row = tr[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        if (row.size() != static_cast<std::size_t>(S))
          throw InvalidArgument("mdp json: transition[s][a] must have |S| entries");
        for (int n = 0; n < S; ++n) t(s * A + a, n) = row[static_cast<std::size_t>(n)].get<double>();
      }
    }
    const auto mu_vec = doc.at("initial_dist").get<std::vector<double>>();
    const auto mask_vec = doc.at("terminal_mask").get<std::vector<bool>>();
    Vector mu = Eigen::Map<const Vector>(mu_vec.data(), static_cast<Eigen::Index>(mu_vec.size()));
    return TabularMdp(S, A, std::move(t), std::move(mu), doc.at("discount").get<double>(), mask_vec);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("mdp json: ") + e.what());
  }
}

nlohmann::json reward_to_json(const RewardVector& reward) {
  return nlohmann::json(std::vector<double>(reward.values.data(), reward.values.data() + reward.size()));
}

RewardVector reward_from_json(const nlohmann::json& doc) {
  try {
    const auto v = doc.get<std::vector<double>>();
    return RewardVector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("reward json: ") + e.what());
  }
}

}  // namespace goodhart
