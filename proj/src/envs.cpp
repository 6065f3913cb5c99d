#include "goodhart/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "goodhart/errors.hpp"

namespace goodhart {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::Gridworld: return "gridworld";
    case EnvKind::Cliff: return "cliff";
    case EnvKind::RandomMdp: return "random_mdp";
    case EnvKind::Tree: return "tree";
  }
  return "unknown";
}

std::string to_string(TreeVariant variant) {
  return variant == TreeVariant::FirstHalfTerminal ? "first_half" : "alternating";
}

std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::Terminal: return "terminal";
    case RewardKind::Cliff: return "cliff";
    case RewardKind::Path: return "path";
    case RewardKind::Uniform: return "uniform";
  }
  return "unknown";
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "gridworld") return EnvKind::Gridworld;
  if (name == "cliff") return EnvKind::Cliff;
  if (name == "random_mdp" || name == "random") return EnvKind::RandomMdp;
  if (name == "tree") return EnvKind::Tree;
  throw InvalidArgument("unknown environment kind '" + name + "'");
}

TreeVariant tree_variant_from_string(const std::string& name) {
  if (name == "first_half") return TreeVariant::FirstHalfTerminal;
  if (name == "alternating") return TreeVariant::AlternatingTerminal;
  throw InvalidArgument("unknown tree variant '" + name + "'");
}

RewardKind reward_kind_from_string(const std::string& name) {
  if (name == "terminal") return RewardKind::Terminal;
  if (name == "cliff") return RewardKind::Cliff;
  if (name == "path") return RewardKind::Path;
  if (name == "uniform") return RewardKind::Uniform;
  throw InvalidArgument("unknown reward kind '" + name + "'");
}

std::string EnvSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind) << '(';
  switch (kind) {
    case EnvKind::Gridworld: os << "n=" << n; break;
    case EnvKind::Cliff: os << "n=" << n << ",p=" << slip; break;
    case EnvKind::RandomMdp: os << "S=" << num_states << ",A=" << num_actions << ",k=" << num_terminal; break;
    case EnvKind::Tree: os << "b=" << branching << ",d=" << depth << ',' << to_string(variant); break;
  }
  os << ",gamma=" << discount << ')';
  return os.str();
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("discount must lie in [0, 1)");
}

Vector uniform_over_nonterminal(const std::vector<bool>& terminal) {
  Vector mu = Vector::Zero(static_cast<Eigen::Index>(terminal.size()));
  int live = 0;
  for (bool t : terminal) live += t ? 0 : 1;
  if (live == 0) throw InvalidArgument("environment has no non-terminal state");
  for (std::size_t s = 0; s < terminal.size(); ++s)
    if (!terminal[s]) mu(static_cast<Eigen::Index>(s)) = 1.0 / live;
  return mu;
}

void make_absorbing(Matrix& trans, int s, int num_actions) {
  for (int a = 0; a < num_actions; ++a) {
    trans.row(s * num_actions + a).setZero();
    trans(s * num_actions + a, s) = 1.0;
  }
}

// Destination of a grid move; off-grid moves stay put.
int grid_move(int n, int s, int action) {
  int r = s / n;
  int c = s % n;
  switch (action) {
    case kUp: r = std::max(r - 1, 0); break;
    case kRight: c = std::min(c + 1, n - 1); break;
    case kDown: r = std::min(r + 1, n - 1); break;
    case kLeft: c = std::max(c - 1, 0); break;
    default: break;
  }
  return r * n + c;
}

Matrix grid_transitions(int n) {
  const int S = n * n;
  Matrix trans = Matrix::Zero(S * 5, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < 5; ++a) trans(s * 5 + a, grid_move(n, s, a)) = 1.0;
  return trans;
}

}  // namespace

Environment make_gridworld(int n, double gamma) {
  if (n < 2) throw InvalidArgument("make_gridworld: n must be >= 2");
  check_gamma(gamma);
  const int S = n * n;
  Matrix trans = grid_transitions(n);
  std::vector<bool> terminal(static_cast<std::size_t>(S), false);
  terminal.front() = true;
  terminal.back() = true;
  make_absorbing(trans, 0, 5);
  make_absorbing(trans, S - 1, 5);
  Vector mu = uniform_over_nonterminal(terminal);
  EnvSpec spec;
  spec.kind = EnvKind::Gridworld;
  spec.n = n;
  spec.discount = gamma;
  Environment env{spec, TabularMdp(S, 5, std::move(trans), std::move(mu), gamma, terminal), n, {}, -1};
  require_valid(env.mdp);
  return env;
}

Environment make_cliff(int n, double p, double gamma) {
  if (n < 2) throw InvalidArgument("make_cliff: n must be >= 2");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("make_cliff: slip probability must lie in [0, 1]");
  check_gamma(gamma);
  const int S = n * n;
  Matrix trans = grid_transitions(n);
  std::vector<bool> terminal(static_cast<std::size_t>(S), false);
  std::vector<int> cliff;
  for (int c = 0; c + 1 < n; ++c) cliff.push_back((n - 1) * n + c);
  const int goal = S - 1;
  for (int s : cliff) terminal[static_cast<std::size_t>(s)] = true;
  terminal[static_cast<std::size_t>(goal)] = true;
  for (int c = 0; c + 1 < n; ++c) {
    const int s = (n - 2) * n + c;
    const int below = (n - 1) * n + c;
    for (int a = 0; a < 4; ++a) {
      const int row = s * 5 + a;
      trans.row(row) *= (1.0 - p);
      trans(row, below) += p;
    }
  }
  for (int s = 0; s < S; ++s)
    if (terminal[static_cast<std::size_t>(s)]) make_absorbing(trans, s, 5);
  Vector mu = uniform_over_nonterminal(terminal);
  EnvSpec spec;
  spec.kind = EnvKind::Cliff;
  spec.n = n;
  spec.slip = p;
  spec.discount = gamma;
  Environment env{spec, TabularMdp(S, 5, std::move(trans), std::move(mu), gamma, terminal), n, cliff, goal};
  require_valid(env.mdp);
  return env;
}

Environment make_random_mdp(int num_states, int num_actions, int num_terminal, double gamma,
                            std::uint64_t seed) {
  if (num_states < 1 || num_actions < 1) throw InvalidArgument("make_random_mdp: sizes must be positive");
  if (num_terminal < 0 || num_terminal >= num_states)
    throw InvalidArgument("make_random_mdp: need 0 <= num_terminal < num_states");
  check_gamma(gamma);
  std::mt19937_64 rng(seed);
  std::vector<int> order(static_cast<std::size_t>(num_states));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> terminal(static_cast<std::size_t>(num_states), false);
  for (int k = 0; k < num_terminal; ++k) terminal[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix trans = Matrix::Zero(num_states * num_actions, num_states);
  std::vector<double> cuts(static_cast<std::size_t>(num_states + 1));
  for (int s = 0; s < num_states; ++s) {
    if (terminal[static_cast<std::size_t>(s)]) {
      make_absorbing(trans, s, num_actions);
      continue;
    }
    for (int a = 0; a < num_actions; ++a) {
      // Gaps between sorted uniforms are uniform on the simplex.
      cuts.front() = 0.0;
      cuts.back() = 1.0;
      for (int k = 1; k < num_states; ++k) cuts[static_cast<std::size_t>(k)] = unit(rng);
      std::sort(cuts.begin() + 1, cuts.end() - 1);
      for (int k = 0; k < num_states; ++k)
        trans(s * num_actions + a, k) = cuts[static_cast<std::size_t>(k + 1)] - cuts[static_cast<std::size_t>(k)];
      const double sum = trans.row(s * num_actions + a).sum();
      trans.row(s * num_actions + a) /= sum;
    }
  }
  Vector mu = uniform_over_nonterminal(terminal);
  EnvSpec spec;
  spec.kind = EnvKind::RandomMdp;
  spec.num_states = num_states;
  spec.num_actions = num_actions;
  spec.num_terminal = num_terminal;
  spec.discount = gamma;
  spec.seed = seed;
  Environment env{spec, TabularMdp(num_states, num_actions, std::move(trans), std::move(mu), gamma, terminal),
                  0, {}, -1};
  require_valid(env.mdp);
  return env;
}

Environment make_tree_mdp(int branching, int depth, TreeVariant variant, double gamma) {
  if (branching < 2 || depth < 1) throw InvalidArgument("make_tree_mdp: need branching >= 2 and depth >= 1");
  check_gamma(gamma);
  long long total = 1;
  long long level = 1;
  for (int d = 0; d < depth; ++d) {
    level *= branching;
    total += level;
    if (total > 1000000) throw InvalidArgument("make_tree_mdp: tree too large");
  }
  const int S = static_cast<int>(total);
  const int leaves = static_cast<int>(level);
  const int first_leaf = S - leaves;
  Matrix trans = Matrix::Zero(static_cast<Eigen::Index>(S) * branching, S);
  std::vector<bool> terminal(static_cast<std::size_t>(S), false);
  for (int s = 0; s < first_leaf; ++s)
    for (int j = 0; j < branching; ++j) trans(s * branching + j, s * branching + j + 1) = 1.0;
  for (int k = 0; k < leaves; ++k) {
    const int s = first_leaf + k;
    const bool is_terminal = variant == TreeVariant::FirstHalfTerminal ? k < leaves / 2 : k % 2 == 0;
    terminal[static_cast<std::size_t>(s)] = is_terminal;
    if (is_terminal) {
      make_absorbing(trans, s, branching);
    } else {
      for (int j = 0; j < branching; ++j) trans(s * branching + j, 0) = 1.0;
    }
  }
  Vector mu = Vector::Zero(S);
  mu(0) = 1.0;
  EnvSpec spec;
  spec.kind = EnvKind::Tree;
  spec.branching = branching;
  spec.depth = depth;
  spec.variant = variant;
  spec.discount = gamma;
  Environment env{spec, TabularMdp(S, branching, std::move(trans), std::move(mu), gamma, terminal), 0, {}, -1};
  require_valid(env.mdp);
  return env;
}

Environment make_environment(const EnvSpec& spec) {
  Environment env = [&] {
    switch (spec.kind) {
      case EnvKind::Gridworld: return make_gridworld(spec.n, spec.discount);
      case EnvKind::Cliff: return make_cliff(spec.n, spec.slip, spec.discount);
      case EnvKind::RandomMdp:
        return make_random_mdp(spec.num_states, spec.num_actions, spec.num_terminal, spec.discount, spec.seed);
      case EnvKind::Tree: return make_tree_mdp(spec.branching, spec.depth, spec.variant, spec.discount);
    }
    throw InvalidArgument("make_environment: unknown kind");
  }();
  env.spec = spec;
  return env;
}

namespace {

std::vector<int> walk(int n, std::mt19937_64& rng) {
  std::vector<int> cells{0};
  int r = 0;
  int c = 0;
  std::bernoulli_distribution coin(0.5);
  while (r < n - 1 || c < n - 1) {
    const bool right = r == n - 1 || (c < n - 1 && coin(rng));
    if (right) ++c; else ++r;
    cells.push_back(r * n + c);
  }
  return cells;
}

}  // namespace

std::vector<int> sample_path(int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_path: n must be positive");
  std::mt19937_64 rng(seed);
  return walk(n, rng);
}

Vector sample_state_reward(const Environment& env, RewardKind kind, std::uint64_t seed) {
  const TabularMdp& mdp = env.mdp;
  const int S = mdp.num_states();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::uniform_real_distribution<double> neg(-1.0, 0.0);
  Vector out(S);
  switch (kind) {
    case RewardKind::Terminal:
      for (int s = 0; s < S; ++s) out(s) = mdp.is_terminal(s) ? pos(rng) : neg(rng);
      break;
    case RewardKind::Cliff: {
      if (env.spec.kind != EnvKind::Cliff) throw InvalidArgument("cliff rewards need a cliff environment");
      std::uniform_real_distribution<double> fall(-5.0, 0.0);
      for (int s = 0; s < S; ++s) {
        const bool is_cliff = std::find(env.cliff_states.begin(), env.cliff_states.end(), s) != env.cliff_states.end();
        if (is_cliff) out(s) = fall(rng);
        else if (s == env.goal_state) out(s) = pos(rng);
        else out(s) = neg(rng);
      }
      break;
    }
    case RewardKind::Path: {
      if (env.spec.kind != EnvKind::Gridworld) throw InvalidArgument("path rewards need a gridworld environment");
      const std::vector<int> path = walk(env.grid_size, rng);
      for (int s = 0; s < S; ++s) {
        if (mdp.is_terminal(s)) out(s) = pos(rng);
        else if (std::find(path.begin(), path.end(), s) != path.end()) out(s) = 0.0;
        else out(s) = neg(rng);
      }
      break;
    }
    case RewardKind::Uniform:
      for (int s = 0; s < S; ++s) out(s) = pos(rng);
      break;
  }
  return out;
}

RewardVector compile_state_reward(const TabularMdp& mdp, const Vector& state_reward) {
  if (state_reward.size() != mdp.num_states())
    throw InvalidArgument("compile_state_reward: length does not match |S|");
  Vector r = mdp.transition() * state_reward;
  for (int s = 0; s < mdp.num_states(); ++s)
    if (mdp.is_terminal(s))
      for (int a = 0; a < mdp.num_actions(); ++a) r(mdp.pair_index(s, a)) = 0.0;
  return RewardVector(std::move(r));
}

RewardVector sample_reward(const Environment& env, RewardKind kind, std::uint64_t seed) {
  return compile_state_reward(env.mdp, sample_state_reward(env, kind, seed));
}

RewardVector sparsify(const RewardVector& r, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw InvalidArgument("sparsify: sigma must lie in [0, 1]");
  const auto n = static_cast<std::size_t>(r.size());
  const auto count = static_cast<std::size_t>(std::llround(sigma * static_cast<double>(n)));
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  RewardVector out = r;
  for (std::size_t k = 0; k < count && k < n; ++k) out.values(idx[k]) = 0.0;
  return out;
}

RewardVector interpolate(const RewardVector& r0, const RewardVector& r1, double t) {
  if (r0.size() != r1.size()) throw InvalidArgument("interpolate: length mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("interpolate: t must lie in [0, 1]");
  return RewardVector((1.0 - t) * r0.values + t * r1.values);
}

}  // namespace goodhart
