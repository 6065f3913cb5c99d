#include "goodhart/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "goodhart/ascent.hpp"
#include "goodhart/errors.hpp"
#include "goodhart/geometry.hpp"
#include "goodhart/numerics.hpp"
#include "goodhart/worked_examples.hpp"

namespace goodhart {

using nlohmann::json;

std::string to_string(HarnessMethod m) {
  switch (m) {
    case HarnessMethod::Mce: return "mce";
    case HarnessMethod::Br: return "br";
    case HarnessMethod::Ascent: return "ascent";
  }
  return "unknown";
}

HarnessMethod harness_method_from_string(const std::string& name) {
  if (name == "mce") return HarnessMethod::Mce;
  if (name == "br") return HarnessMethod::Br;
  if (name == "ascent") return HarnessMethod::Ascent;
  throw ConfigError("unknown method '" + name + "' (expected mce, br or ascent)");
}

PressureSchedule ExperimentConfig::schedule() const {
  if (!pressure_values.empty()) return PressureSchedule(pressure_values);
  return pressure_grid(pressure_spec);
}

SolverConfig ExperimentConfig::solver() const {
  SolverConfig s;
  s.vi_threshold = vi_threshold;
  s.method = method == HarnessMethod::Br ? Method::BR : Method::MCE;
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
std::vector<T> read_list(const json& doc, const std::string& key, const std::vector<T>& fallback) {
  if (!doc.contains(key)) return fallback;
  const json& v = doc.at(key);
  std::vector<T> out;
  try {
    if (v.is_array()) {
      for (const auto& x : v) out.push_back(x.get<T>());
    } else {
      out.push_back(v.get<T>());
    }
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' must not be empty");
  return out;
}

template <typename T>
T read_scalar(const json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : doc.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

EnvironmentGrid parse_env_grid(const json& doc) {
  if (!doc.is_object()) throw ConfigError("environment entries must be objects");
  reject_unknown(doc,
                 {"kind", "n", "p", "num_states", "num_actions", "num_terminal", "branching", "depth", "variant",
                  "rewards"},
                 "environment entry");
  if (!doc.contains("kind")) throw ConfigError("environment entry needs a 'kind'");
  EnvironmentGrid g;
  try {
    g.kind = env_kind_from_string(doc.at("kind").get<std::string>());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  g.n = read_list<int>(doc, "n", g.n);
  g.slip = read_list<double>(doc, "p", g.slip);
  g.num_states = read_list<int>(doc, "num_states", g.num_states);
  g.num_actions = read_list<int>(doc, "num_actions", g.num_actions);
  g.num_terminal = read_list<int>(doc, "num_terminal", g.num_terminal);
  g.branching = read_list<int>(doc, "branching", g.branching);
  g.depth = read_list<int>(doc, "depth", g.depth);
  const RewardKind default_reward = g.kind == EnvKind::Cliff ? RewardKind::Cliff : RewardKind::Terminal;
  try {
    g.variants.clear();
    for (const auto& v : read_list<std::string>(doc, "variant", {"first_half"}))
      g.variants.push_back(tree_variant_from_string(v));
    g.rewards.clear();
    for (const auto& r : read_list<std::string>(doc, "rewards", {to_string(default_reward)}))
      g.rewards.push_back(reward_kind_from_string(r));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  for (RewardKind r : g.rewards) {
    if (r == RewardKind::Cliff && g.kind != EnvKind::Cliff) throw ConfigError("cliff rewards need kind 'cliff'");
    if (r == RewardKind::Path && g.kind != EnvKind::Gridworld) throw ConfigError("path rewards need kind 'gridworld'");
  }
  auto positive = [](const std::vector<int>& v, int lo, const char* name) {
    for (int x : v)
      if (x < lo) throw ConfigError(std::string(name) + " must be >= " + std::to_string(lo));
  };
  positive(g.n, 2, "n");
  positive(g.num_states, 1, "num_states");
  positive(g.num_actions, 1, "num_actions");
  positive(g.num_terminal, 0, "num_terminal");
  positive(g.branching, 2, "branching");
  positive(g.depth, 1, "depth");
  for (double p : g.slip)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  return g;
}

json env_grid_to_json(const EnvironmentGrid& g) {
  json doc;
  doc["kind"] = to_string(g.kind);
  switch (g.kind) {
    case EnvKind::Gridworld: doc["n"] = g.n; break;
    case EnvKind::Cliff:
      doc["n"] = g.n;
      doc["p"] = g.slip;
      break;
    case EnvKind::RandomMdp:
      doc["num_states"] = g.num_states;
      doc["num_actions"] = g.num_actions;
      doc["num_terminal"] = g.num_terminal;
      break;
    case EnvKind::Tree: {
      doc["branching"] = g.branching;
      doc["depth"] = g.depth;
      std::vector<std::string> v;
      for (auto x : g.variants) v.push_back(to_string(x));
      doc["variant"] = v;
      break;
    }
  }
  std::vector<std::string> r;
  for (auto x : g.rewards) r.push_back(to_string(x));
  doc["rewards"] = r;
  return doc;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc,
                 {"environments", "gammas", "gamma_samples", "sparsities", "pressures", "proxies_per_run",
                  "distances", "method", "theta", "seed", "jobs", "out", "vi_threshold", "cone_samples",
                  "ascent_max_steps"},
                 "config");
  ExperimentConfig cfg;
  if (doc.contains("environments")) {
    if (!doc.at("environments").is_array() || doc.at("environments").empty())
      throw ConfigError("'environments' must be a non-empty array");
    for (const auto& e : doc.at("environments")) cfg.environments.push_back(parse_env_grid(e));
  } else {
    cfg.environments = desk_config().environments;
  }
  cfg.gammas = read_list<double>(doc, "gammas", cfg.gammas);
  for (double g : cfg.gammas)
    if (!(g >= 0.0 && g < 1.0)) throw ConfigError("gammas must lie in [0, 1)");
  cfg.gamma_samples = read_scalar<int>(doc, "gamma_samples", 0);
  if (cfg.gamma_samples < 0) throw ConfigError("gamma_samples must be >= 0");
  cfg.sparsities = read_list<double>(doc, "sparsities", cfg.sparsities);
  for (double s : cfg.sparsities)
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("sparsities must lie in [0, 1]");
  if (doc.contains("pressures")) {
    const json& p = doc.at("pressures");
    try {
      if (p.is_array()) {
        cfg.pressure_values = p.get<std::vector<double>>();
        PressureSchedule check(cfg.pressure_values);
      } else if (p.is_object()) {
        reject_unknown(p, {"low_count", "low_range", "high_count", "high_range"}, "pressures");
        PressureGridSpec& s = cfg.pressure_spec;
        s.low_count = read_scalar<int>(p, "low_count", s.low_count);
        s.high_count = read_scalar<int>(p, "high_count", s.high_count);
        auto range = [&](const char* key, double& lo, double& hi) {
          if (!p.contains(key)) return;
          const auto v = p.at(key).get<std::vector<double>>();
          if (v.size() != 2) throw ConfigError(std::string(key) + " must have two entries");
          lo = v[0];
          hi = v[1];
        };
        range("low_range", s.low_lo, s.low_hi);
        range("high_range", s.high_lo, s.high_hi);
        pressure_grid(s);
      } else {
        throw ConfigError("'pressures' must be an array or an object");
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("pressures: ") + e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.proxies_per_run = read_scalar<int>(doc, "proxies_per_run", cfg.proxies_per_run);
  if (cfg.proxies_per_run < 1) throw ConfigError("proxies_per_run must be >= 1");
  if (doc.contains("distances") && !(doc.at("distances").is_array() && doc.at("distances").empty()))
    cfg.distances = read_list<double>(doc, "distances", {});
  for (double d : cfg.distances)
    if (!(d > 0.0 && d < M_PI)) throw ConfigError("distances must lie in (0, pi)");
  cfg.method = harness_method_from_string(read_scalar<std::string>(doc, "method", "mce"));
  if (doc.contains("theta") && !doc.at("theta").is_null()) {
    cfg.theta = read_scalar<double>(doc, "theta", 0.0);
    if (!(*cfg.theta >= 0.0 && *cfg.theta <= M_PI / 2)) throw ConfigError("theta must lie in [0, pi/2]");
  }
  cfg.seed = read_scalar<std::uint64_t>(doc, "seed", 0);
  cfg.jobs = read_scalar<int>(doc, "jobs", 1);
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  cfg.out = read_scalar<std::string>(doc, "out", cfg.out);
  cfg.vi_threshold = read_scalar<double>(doc, "vi_threshold", cfg.vi_threshold);
  if (!(cfg.vi_threshold > 0.0)) throw ConfigError("vi_threshold must be positive");
  cfg.cone_samples = read_scalar<int>(doc, "cone_samples", cfg.cone_samples);
  if (cfg.cone_samples < 0) throw ConfigError("cone_samples must be >= 0");
  cfg.ascent_max_steps = read_scalar<int>(doc, "ascent_max_steps", cfg.ascent_max_steps);
  if (cfg.ascent_max_steps < 1) throw ConfigError("ascent_max_steps must be >= 1");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["environments"] = json::array();
  for (const auto& g : cfg.environments) doc["environments"].push_back(env_grid_to_json(g));
  doc["gammas"] = cfg.gammas;
  doc["gamma_samples"] = cfg.gamma_samples;
  doc["sparsities"] = cfg.sparsities;
  if (!cfg.pressure_values.empty()) {
    doc["pressures"] = cfg.pressure_values;
  } else {
    const auto& s = cfg.pressure_spec;
    doc["pressures"] = {{"low_count", s.low_count},
                        {"low_range", {s.low_lo, s.low_hi}},
                        {"high_count", s.high_count},
                        {"high_range", {s.high_lo, s.high_hi}}};
  }
  doc["proxies_per_run"] = cfg.proxies_per_run;
  doc["distances"] = cfg.distances;
  doc["method"] = to_string(cfg.method);
  doc["theta"] = cfg.theta ? json(*cfg.theta) : json(nullptr);
  doc["seed"] = cfg.seed;
  doc["jobs"] = cfg.jobs;
  doc["out"] = cfg.out;
  doc["vi_threshold"] = cfg.vi_threshold;
  doc["cone_samples"] = cfg.cone_samples;
  doc["ascent_max_steps"] = cfg.ascent_max_steps;
  return doc;
}

ExperimentConfig desk_config() {
  ExperimentConfig cfg;
  EnvironmentGrid grid;
  grid.kind = EnvKind::Gridworld;
  grid.n = {2, 3, 4, 5, 6};
  grid.rewards = {RewardKind::Terminal, RewardKind::Path};
  EnvironmentGrid cliff;
  cliff.kind = EnvKind::Cliff;
  cliff.n = {2, 3, 4, 5};
  cliff.slip = {0.5};
  cliff.rewards = {RewardKind::Cliff};
  EnvironmentGrid random;
  random.kind = EnvKind::RandomMdp;
  random.num_states = {4, 8, 16, 32};
  random.num_actions = {2, 3};
  random.num_terminal = {2};
  random.rewards = {RewardKind::Terminal};
  EnvironmentGrid tree;
  tree.kind = EnvKind::Tree;
  tree.branching = {2};
  tree.depth = {2, 3, 4, 5};
  tree.variants = {TreeVariant::FirstHalfTerminal, TreeVariant::AlternatingTerminal};
  tree.rewards = {RewardKind::Terminal};
  cfg.environments = {grid, cliff, random, tree};
  return cfg;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  json doc = config_to_json(cfg);
  // Execution details do not change results.
  doc.erase("jobs");
  doc.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(doc.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Grid expansion

std::vector<Cell> expand_grid(const ExperimentConfig& cfg) {
  if (cfg.environments.empty()) throw ConfigError("config has no environments");
  std::vector<Cell> cells;
  for (std::size_t e = 0; e < cfg.environments.size(); ++e) {
    const EnvironmentGrid& g = cfg.environments[e];
    std::vector<EnvSpec> specs;
    EnvSpec base;
    base.kind = g.kind;
    switch (g.kind) {
      case EnvKind::Gridworld:
        for (int n : g.n) {
          base.n = n;
          specs.push_back(base);
        }
        break;
      case EnvKind::Cliff:
        for (int n : g.n)
          for (double p : g.slip) {
            base.n = n;
            base.slip = p;
            specs.push_back(base);
          }
        break;
      case EnvKind::RandomMdp:
        for (int s : g.num_states)
          for (int a : g.num_actions)
            for (int k : g.num_terminal) {
              if (k >= s) throw ConfigError("num_terminal must be smaller than num_states");
              base.num_states = s;
              base.num_actions = a;
              base.num_terminal = k;
              specs.push_back(base);
            }
        break;
      case EnvKind::Tree:
        for (int b : g.branching)
          for (int d : g.depth)
            for (TreeVariant v : g.variants) {
              base.branching = b;
              base.depth = d;
              base.variant = v;
              specs.push_back(base);
            }
        break;
    }
    for (std::size_t p = 0; p < specs.size(); ++p) {
      for (std::size_t r = 0; r < g.rewards.size(); ++r) {
        const std::size_t num_gammas = cfg.gamma_samples > 0 ? static_cast<std::size_t>(cfg.gamma_samples)
                                                             : cfg.gammas.size();
        for (std::size_t gi = 0; gi < num_gammas; ++gi) {
          for (std::size_t si = 0; si < cfg.sparsities.size(); ++si) {
            Cell c;
            c.index = cells.size();
            c.key = "e" + std::to_string(e) + "/p" + std::to_string(p) + "/r" + std::to_string(r) + "/g" +
                    std::to_string(gi) + "/s" + std::to_string(si);
            c.seed = mix_seed(cfg.seed, hash_string(c.key));
            c.env = specs[p];
            c.reward = g.rewards[r];
            if (cfg.gamma_samples > 0) {
              const std::string gkey = "e" + std::to_string(e) + "/p" + std::to_string(p) + "/r" +
                                       std::to_string(r) + "/g" + std::to_string(gi);
              std::mt19937_64 rng(mix_seed(cfg.seed, hash_string("gamma:" + gkey)));
              c.gamma = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            } else {
              c.gamma = cfg.gammas[gi];
            }
            c.env.discount = c.gamma;
            c.env.seed = mix_seed(c.seed, 1);
            c.sigma = cfg.sparsities[si];
            cells.push_back(std::move(c));
          }
        }
      }
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

enum class Protocol { Prevalence, Distance, EarlyStop };

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Prevalence: return "prevalence";
    case Protocol::Distance: return "distance";
    case Protocol::EarlyStop: return "early_stop";
  }
  return "unknown";
}

std::string padded(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

struct CellContext {
  const ExperimentConfig& cfg;
  const Cell& cell;
  const PressureSchedule& schedule;
  Protocol protocol;
};

struct CellOutput {
  std::vector<RunRecord> records;
  std::vector<DistanceSummary> summaries;
};

TrainingCurve make_curve(const ExperimentConfig& cfg, const TabularMdp& mdp, const PolytopeModel& poly,
                         const RewardVector& true_norm, const RewardVector& proxy_norm,
                         const PressureSchedule& schedule) {
  if (cfg.method != HarnessMethod::Ascent)
    return training_curve_normalized(mdp, true_norm, proxy_norm, schedule, cfg.solver());
  AscentConfig acfg;
  acfg.max_steps = cfg.ascent_max_steps;
  const AscentPath path = steepest_ascent(mdp, poly, proxy_norm, acfg);
  TrainingCurve curve;
  curve.metadata.method = "ascent";
  const std::size_t n = path.points.size();
  for (std::size_t i = 0; i < n; ++i) {
    curve.pressures.push_back(n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
    curve.true_returns.push_back(path.points[i].dot(true_norm.values));
    curve.proxy_returns.push_back(path.points[i].dot(proxy_norm.values));
    curve.occupancies.emplace_back(path.points[i]);
  }
  return curve;
}

void fill_early_stop(RunRecord& rec, const ExperimentConfig& cfg, const PolytopeModel& poly,
                     const RewardVector& proxy_norm, double diameter, std::uint64_t seed) {
  const TrainingCurve& c = rec.curve;
  const double theta = std::min(cfg.theta.value_or(rec.distance), M_PI / 2);
  std::vector<Vector> points;
  points.reserve(c.size());
  for (const auto& o : c.occupancies) points.push_back(o.values);
  const std::size_t stop = sequence_stop_index(poly, points, proxy_norm, theta);

  rec.has_early_stop = true;
  rec.theta = theta;
  rec.stop_index = static_cast<int>(stop);
  rec.stop_lambda = c.pressures[stop];
  rec.retained_return = c.true_returns[stop];
  rec.best_return = *std::max_element(c.true_returns.begin(), c.true_returns.end());
  rec.final_return = c.true_returns.back();
  rec.lost_reward = rec.best_return - rec.retained_return;
  rec.lost_vs_final = rec.final_return - rec.retained_return;
  rec.start_return = c.true_returns.front();
  const double gain = rec.final_return - rec.start_return;
  rec.lost_fraction = std::abs(gain) > 1e-9 ? rec.lost_vs_final / gain : std::numeric_limits<double>::quiet_NaN();
  rec.retained_ndh = ndh(std::vector<double>(c.true_returns.begin(), c.true_returns.begin() + static_cast<long>(stop) + 1));

  // Spot-check the guarantee with rewards drawn from the theta-cone around the proxy.
  rec.cone_samples = 0;
  rec.cone_violations = 0;
  rec.max_cone_decrease = 0.0;
  if (stop > 0 && poly.dimension() >= 2) {
    std::mt19937_64 rng(mix_seed(seed, 7));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 0; j < cfg.cone_samples; ++j) {
      const double d = j == 0 ? theta : theta * unit(rng);
      const RewardVector r = sample_reward_at_angle(poly, proxy_norm, d, 1.0, mix_seed(seed, 1000 + static_cast<std::uint64_t>(j)));
      ++rec.cone_samples;
      bool violated = false;
      for (std::size_t k = 0; k < stop; ++k) {
        const double drop = points[k].dot(r.values) - points[k + 1].dot(r.values);
        rec.max_cone_decrease = std::max(rec.max_cone_decrease, drop);
        if (drop > 1e-9) violated = true;
      }
      if (violated) ++rec.cone_violations;
    }
  }
  rec.regret_bound = diameter - (points[stop] - points.front()).norm() * std::cos(theta);
}

RunRecord base_record(const CellContext& ctx, const Environment* env) {
  RunRecord rec;
  rec.protocol = protocol_name(ctx.protocol);
  rec.cell = ctx.cell.index;
  rec.env = env ? env->spec.describe() : ctx.cell.env.describe();
  rec.env_kind = to_string(ctx.cell.env.kind);
  rec.reward_kind = to_string(ctx.cell.reward);
  rec.method = to_string(ctx.cfg.method);
  rec.gamma = ctx.cell.gamma;
  rec.sigma = ctx.cell.sigma;
  rec.seed_env = ctx.cell.env.seed;
  rec.seed_true = mix_seed(ctx.cell.seed, 2);
  rec.interpolation = std::numeric_limits<double>::quiet_NaN();
  rec.target_distance = std::numeric_limits<double>::quiet_NaN();
  rec.distance = std::numeric_limits<double>::quiet_NaN();
  return rec;
}

struct ProxyJob {
  int index = 0;
  std::string id;
  RewardVector raw;
  double interpolation = std::numeric_limits<double>::quiet_NaN();
  double target = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  bool is_true = false;
  int distance_index = -1;
};

CellOutput run_cell(const CellContext& ctx) {
  CellOutput out;
  const ExperimentConfig& cfg = ctx.cfg;
  const Cell& cell = ctx.cell;
  const std::string prefix = "c" + padded(static_cast<int>(cell.index), 5);
  const int n_proxies = cfg.proxies_per_run;
  const int n_dist = static_cast<int>(cfg.distances.size());
  const int n_jobs = ctx.protocol == Protocol::Distance ? n_proxies * n_dist : n_proxies;

  auto fail_all = [&](const std::string& what) {
    for (int k = 0; k < n_jobs; ++k) {
      RunRecord rec = base_record(ctx, nullptr);
      rec.id = prefix + "-p" + padded(k, 2);
      rec.proxy_index = k;
      rec.status = "failed";
      rec.error = what;
      out.records.push_back(std::move(rec));
    }
  };

  std::optional<Environment> env;
  try {
    env.emplace(make_environment(cell.env));
  } catch (const std::exception& e) {
    fail_all(std::string("environment: ") + e.what());
    return out;
  }
  const TabularMdp& mdp = env->mdp;
  const PolytopeModel poly(mdp);
  const SolverConfig solver = cfg.solver();

  const RewardVector r0 = sparsify(sample_reward(*env, cell.reward, mix_seed(cell.seed, 2)), cell.sigma,
                                   mix_seed(cell.seed, 4));
  const RewardVector r1 = sparsify(sample_reward(*env, cell.reward, mix_seed(cell.seed, 3)), cell.sigma,
                                   mix_seed(cell.seed, 5));
  RewardVector true_norm;
  try {
    true_norm = normalize_return_range(mdp, r0, solver);
    if (!(poly.project(true_norm).norm() > 1e-10))
      throw DegenerateRewardError("true reward has zero projection onto span(Omega)");
  } catch (const std::exception& e) {
    fail_all(std::string("true reward: ") + e.what());
    return out;
  }

  // Proxy list for this cell.
  std::vector<ProxyJob> jobs;
  if (ctx.protocol == Protocol::Distance) {
    const double m = poly.project(true_norm).norm();
    for (int di = 0; di < n_dist; ++di) {
      for (int j = 0; j < n_proxies; ++j) {
        ProxyJob job;
        job.index = j;
        job.distance_index = di;
        job.id = prefix + "-d" + padded(di, 2) + "-p" + padded(j, 2);
        job.target = cfg.distances[static_cast<std::size_t>(di)];
        job.seed = mix_seed(cell.seed, 100 + static_cast<std::uint64_t>(di) * 1000 + static_cast<std::uint64_t>(j));
        try {
          job.raw = sample_reward_at_angle(poly, true_norm, job.target, m, job.seed);
        } catch (const std::exception&) {
          job.raw = RewardVector();  // reported when the job runs
        }
        jobs.push_back(std::move(job));
      }
    }
  } else {
    for (int k = 0; k < n_proxies; ++k) {
      ProxyJob job;
      job.index = k;
      job.id = prefix + "-p" + padded(k, 2);
      job.interpolation = n_proxies > 1 ? static_cast<double>(k) / (n_proxies - 1) : 1.0;
      job.raw = interpolate(r0, r1, job.interpolation);
      job.seed = mix_seed(cell.seed, 3);
      job.is_true = k == 0 && n_proxies > 1;
      jobs.push_back(std::move(job));
    }
  }

  std::optional<TrainingCurve> baseline;
  try {
    baseline = make_curve(cfg, mdp, poly, true_norm, true_norm, ctx.schedule);
  } catch (const std::exception&) {
    baseline.reset();
  }
  std::optional<double> diameter;

  for (auto& job : jobs) {
    RunRecord rec = base_record(ctx, &*env);
    rec.id = job.id;
    rec.proxy_index = job.index;
    rec.interpolation = job.interpolation;
    rec.target_distance = job.target;
    rec.seed_proxy = job.seed;
    try {
      if (job.raw.size() == 0)
        throw InvalidArgument("cannot sample a proxy at the requested angle (dimension < 2)");
      const RewardVector proxy_norm = job.is_true ? true_norm : normalize_return_range(mdp, job.raw, solver);
      rec.distance = job.is_true ? 0.0 : projected_angle(poly, true_norm, proxy_norm);
      rec.curve = job.is_true && baseline ? *baseline
                                          : make_curve(cfg, mdp, poly, true_norm, proxy_norm, ctx.schedule);
      validate(rec.curve);
      rec.curve.metadata.env = rec.env;
      rec.curve.metadata.method = rec.method;
      rec.curve.metadata.distance = rec.distance;
      rec.curve.metadata.seed = job.seed;
      const bool same_grid = baseline && baseline->pressures == rec.curve.pressures;
      rec.metrics = compute_metrics(rec.curve, same_grid ? &*baseline : nullptr);
      rec.goodhart = rec.metrics.ndh > cfg.vi_threshold;
      if (ctx.protocol == Protocol::EarlyStop && !job.is_true) {
        if (!diameter) diameter = polytope_diameter(mdp, poly);
        fill_early_stop(rec, cfg, poly, proxy_norm, *diameter, job.seed);
      }
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.curve = TrainingCurve();
    }
    out.records.push_back(std::move(rec));
  }

  if (ctx.protocol == Protocol::Distance) {
    for (int di = 0; di < n_dist; ++di) {
      DistanceSummary s;
      s.cell = cell.index;
      s.env = env->spec.describe();
      s.distance = cfg.distances[static_cast<std::size_t>(di)];
      std::vector<double> mean;
      std::vector<double> grid;
      bool consistent = true;
      for (const auto& rec : out.records) {
        if (!rec.ok() || rec.target_distance != s.distance) continue;
        if (mean.empty()) {
          mean.assign(rec.curve.size(), 0.0);
          grid = rec.curve.pressures;
        } else if (rec.curve.pressures != grid) {
          consistent = false;
          break;
        }
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += rec.curve.true_returns[i];
        ++s.proxies;
      }
      if (s.proxies == 0 || !consistent) continue;
      for (double& v : mean) v /= s.proxies;
      s.mean_ndh = ndh(mean);
      s.lambda_star = grid[argmax_index(mean)];
      out.summaries.push_back(s);
    }
  }
  for (auto& rec : out.records) rec.curve.occupancies.clear();
  return out;
}

Dataset run_protocol(const ExperimentConfig& cfg, Protocol protocol) {
  if (protocol == Protocol::Distance && cfg.distances.empty())
    throw ConfigError("the distance protocol needs a non-empty 'distances' list");
  const std::vector<Cell> cells = expand_grid(cfg);
  const PressureSchedule schedule = cfg.schedule();
  std::vector<CellOutput> outputs(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const CellContext ctx{cfg, cells[i], schedule, protocol};
      outputs[i] = run_cell(ctx);
    }
  };
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(cells.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  Dataset ds;
  ds.protocol = protocol_name(protocol);
  ds.config = cfg;
  const std::string fp = config_fingerprint(cfg);
  for (auto& o : outputs) {
    for (auto& r : o.records) {
      r.fingerprint = fp;
      ds.records.push_back(std::move(r));
    }
    for (auto& s : o.summaries) ds.distance_summaries.push_back(s);
  }
  return ds;
}

}  // namespace

std::size_t Dataset::num_failed() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const RunRecord& r) { return !r.ok(); }));
}

Dataset run_prevalence(const ExperimentConfig& cfg) { return run_protocol(cfg, Protocol::Prevalence); }
Dataset run_distance_protocol(const ExperimentConfig& cfg) { return run_protocol(cfg, Protocol::Distance); }
Dataset run_early_stopping_eval(const ExperimentConfig& cfg) { return run_protocol(cfg, Protocol::EarlyStop); }

Dataset run_demo_m22(const ExperimentConfig& cfg) {
  const TabularMdp mdp = make_m22();
  const PolytopeModel poly(mdp);
  const auto rewards = m22_rewards();
  const PressureSchedule schedule =
      cfg.pressure_values.empty() ? linear_pressures(30, 0.01, 0.99) : PressureSchedule(cfg.pressure_values);
  const SolverConfig solver = cfg.solver();
  const RewardVector true_norm = normalize_return_range(mdp, rewards[0], solver);
  const double diameter = polytope_diameter(mdp, poly);
  Dataset ds;
  ds.protocol = "demo_m22";
  ds.config = cfg;
  const std::string fp = config_fingerprint(cfg);
  for (int k = 0; k < 3; ++k) {
    RunRecord rec;
    rec.id = "m22-r" + std::to_string(k);
    rec.protocol = ds.protocol;
    rec.proxy_index = k;
    rec.env = "m22(gamma=0.9)";
    rec.env_kind = "m22";
    rec.reward_kind = "fixed";
    rec.method = to_string(cfg.method);
    rec.gamma = mdp.discount();
    rec.interpolation = std::numeric_limits<double>::quiet_NaN();
    rec.target_distance = std::numeric_limits<double>::quiet_NaN();
    const RewardVector proxy_norm = normalize_return_range(mdp, rewards[static_cast<std::size_t>(k)], solver);
    rec.distance = projected_angle(poly, true_norm, proxy_norm);
    rec.curve = make_curve(cfg, mdp, poly, true_norm, proxy_norm, schedule);
    rec.curve.metadata.env = rec.env;
    rec.curve.metadata.method = rec.method;
    rec.curve.metadata.distance = rec.distance;
    rec.metrics = compute_metrics(rec.curve);
    rec.goodhart = rec.metrics.ndh > cfg.vi_threshold;
    fill_early_stop(rec, cfg, poly, proxy_norm, diameter, mix_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    rec.curve.occupancies.clear();
    rec.fingerprint = fp;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Summaries

PrevalenceSummary summarize_prevalence(const std::vector<RunRecord>& records, int buckets) {
  if (buckets < 1) throw InvalidArgument("summarize_prevalence: buckets must be >= 1");
  PrevalenceSummary s;
  double dmax = 0.0;
  for (const auto& r : records) {
    if (!r.ok()) {
      ++s.failed;
      continue;
    }
    ++s.ok;
    if (r.goodhart) ++s.goodhart;
    dmax = std::max(dmax, r.distance);
  }
  if (s.ok == 0) return s;
  s.fraction = static_cast<double>(s.goodhart) / static_cast<double>(s.ok);
  const double width = dmax > 0.0 ? dmax / buckets : 1.0;
  std::vector<std::size_t> count(static_cast<std::size_t>(buckets), 0);
  std::vector<std::size_t> hits(static_cast<std::size_t>(buckets), 0);
  for (const auto& r : records) {
    if (!r.ok()) continue;
    auto b = static_cast<std::size_t>(std::min<double>(buckets - 1, std::floor(r.distance / width)));
    ++count[b];
    if (r.goodhart) ++hits[b];
  }
  for (int b = 0; b < buckets; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    if (count[ub] == 0) continue;
    s.bucket_centres.push_back((b + 0.5) * width);
    s.bucket_counts.push_back(count[ub]);
    s.bucket_fractions.push_back(static_cast<double>(hits[ub]) / static_cast<double>(count[ub]));
  }
  if (s.bucket_centres.size() >= 2) {
    const Eigen::Map<const Vector> x(s.bucket_centres.data(), static_cast<Eigen::Index>(s.bucket_centres.size()));
    const Eigen::Map<const Vector> y(s.bucket_fractions.data(), static_cast<Eigen::Index>(s.bucket_fractions.size()));
    s.spearman = numerics::spearman(x, y);
  }
  return s;
}

EarlyStopSummary summarize_early_stopping(const std::vector<RunRecord>& records) {
  EarlyStopSummary s;
  auto add = [](FamilyStats& f, const RunRecord& r) {
    ++f.count;
    f.mean_lost += r.lost_reward;
    f.mean_lost_vs_final += r.lost_vs_final;
    if (std::isfinite(r.lost_fraction)) {
      f.mean_lost_fraction += r.lost_fraction;
      ++f.fraction_count;
    }
    f.stopped_early += static_cast<std::size_t>(r.stop_index) + 1 < r.curve.size() ? 1.0 : 0.0;
    f.max_retained_ndh = std::max(f.max_retained_ndh, r.retained_ndh);
    f.cone_violations += r.cone_violations;
  };
  auto finish = [](FamilyStats& f) {
    if (f.count == 0) return;
    const auto n = static_cast<double>(f.count);
    f.mean_lost /= n;
    f.mean_lost_vs_final /= n;
    f.stopped_early /= n;
    if (f.fraction_count > 0) f.mean_lost_fraction /= static_cast<double>(f.fraction_count);
  };
  for (const auto& r : records) {
    if (!r.ok() || !r.has_early_stop) continue;
    add(s.families[r.env_kind], r);
    add(s.overall, r);
  }
  for (auto& [_, f] : s.families) finish(f);
  finish(s.overall);
  return s;
}

}  // namespace goodhart
