#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "goodhart/envs.hpp"
#include "goodhart/errors.hpp"
#include "goodhart/metrics.hpp"
#include "goodhart/solvers.hpp"

namespace goodhart {

/// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitPartialFailure = 3;

/// Raised for malformed or out-of-range configuration documents.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class HarnessMethod { Mce, Br, Ascent };
std::string to_string(HarnessMethod m);
HarnessMethod harness_method_from_string(const std::string& name);

/// One environment family in the sweep; every list is a grid axis.
struct EnvironmentGrid {
  EnvKind kind = EnvKind::Gridworld;
  std::vector<int> n{2};
  std::vector<double> slip{0.5};
  std::vector<int> num_states{4};
  std::vector<int> num_actions{2};
  std::vector<int> num_terminal{1};
  std::vector<int> branching{2};
  std::vector<int> depth{2};
  std::vector<TreeVariant> variants{TreeVariant::FirstHalfTerminal};
  std::vector<RewardKind> rewards{RewardKind::Terminal};
};

struct ExperimentConfig {
  std::vector<EnvironmentGrid> environments;
  std::vector<double> gammas{0.7, 0.9};
  int gamma_samples = 0;  // > 0: draw this many gamma ~ U(0,1) per cell instead of the grid
  std::vector<double> sparsities{0.1, 0.5, 0.9};
  PressureGridSpec pressure_spec;
  std::vector<double> pressure_values;  // explicit grid; overrides pressure_spec when non-empty
  int proxies_per_run = 10;
  std::vector<double> distances;
  HarnessMethod method = HarnessMethod::Mce;
  std::optional<double> theta;  // early stopping bound; default is the measured angle
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out = "results";
  double vi_threshold = 1e-3;
  int cone_samples = 8;
  int ascent_max_steps = 10000;

  PressureSchedule schedule() const;
  SolverConfig solver() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// The desk-scale grid: Gridworld n 2..6, Cliff n 2..5, RandomMdp |S| in {4,8,16,32}
/// x |A| in {2,3}, Tree b = 2, d 2..5, gamma {0.7, 0.9}, sigma {0.1, 0.5, 0.9}.
ExperimentConfig desk_config();

/// Hex FNV-1a of the canonical config JSON.
std::string config_fingerprint(const ExperimentConfig& cfg);

/// splitmix64 finaliser.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(const std::string& s);

struct Cell {
  std::size_t index = 0;
  std::string key;  // stable coordinates, e.g. "e0/p3/r1/g0/s2"
  EnvSpec env;
  RewardKind reward = RewardKind::Terminal;
  double gamma = 0.9;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

std::vector<Cell> expand_grid(const ExperimentConfig& cfg);

struct RunRecord {
  std::string id;
  std::string protocol;
  std::size_t cell = 0;
  int proxy_index = 0;
  std::string env;
  std::string env_kind;
  std::string reward_kind;
  std::string method;
  double gamma = 0.0;
  double sigma = 0.0;
  double interpolation = 0.0;  // t of R_t; NaN for the distance protocol
  double target_distance = 0.0;  // NaN unless the distance protocol
  double distance = 0.0;         // measured projected angle(true, proxy)
  std::uint64_t seed_env = 0;
  std::uint64_t seed_true = 0;
  std::uint64_t seed_proxy = 0;
  std::string status = "ok";
  std::string error;
  MetricsReport metrics;
  bool goodhart = false;  // ndh > vi_threshold

  bool has_early_stop = false;
  double theta = 0.0;
  int stop_index = 0;
  double stop_lambda = 0.0;
  double retained_return = 0.0;
  double start_return = 0.0;  // true return at the lowest pressure
  double best_return = 0.0;
  double final_return = 0.0;
  double lost_reward = 0.0;     // best_return - retained_return
  double lost_vs_final = 0.0;   // final_return - retained_return
  double lost_fraction = 0.0;   // lost_vs_final / (final_return - start_return); NaN for a flat curve
  double retained_ndh = 0.0;
  int cone_samples = 0;
  int cone_violations = 0;
  double max_cone_decrease = 0.0;
  double regret_bound = 0.0;

  std::string fingerprint;
  TrainingCurve curve;

  bool ok() const { return status == "ok"; }
};

struct DistanceSummary {
  std::size_t cell = 0;
  std::string env;
  double distance = 0.0;
  int proxies = 0;
  double mean_ndh = 0.0;      // NDH of the averaged curve
  double lambda_star = 0.0;   // of the averaged curve
};

struct Dataset {
  std::string protocol;
  ExperimentConfig config;
  std::vector<RunRecord> records;
  std::vector<DistanceSummary> distance_summaries;

  std::size_t num_failed() const;
};

Dataset run_prevalence(const ExperimentConfig& cfg);
Dataset run_distance_protocol(const ExperimentConfig& cfg);
Dataset run_early_stopping_eval(const ExperimentConfig& cfg);

/// The two-state example: true reward R0 against proxies R0, R1, R2 over 30 evenly
/// spaced pressures in [0.01, 0.99] (or cfg.pressure_values), with early stopping.
Dataset run_demo_m22(const ExperimentConfig& cfg);

/// Writes runs.csv, curves/<id>.csv, config.json, manifest.json (and distance.csv
/// when present). Ok records are validated first.
void export_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset import_dataset(const std::filesystem::path& dir);

/// Column order of runs.csv.
const std::vector<std::string>& runs_csv_columns();

struct PrevalenceSummary {
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t goodhart = 0;
  double fraction = 0.0;
  std::vector<double> bucket_centres;
  std::vector<double> bucket_fractions;
  std::vector<std::size_t> bucket_counts;
  double spearman = 0.0;  // bucket centre vs fraction, non-empty buckets
};

PrevalenceSummary summarize_prevalence(const std::vector<RunRecord>& records, int buckets = 10);

struct FamilyStats {
  std::size_t count = 0;
  double mean_lost = 0.0;
  double mean_lost_vs_final = 0.0;
  double mean_lost_fraction = 0.0;  // over records with a defined fraction
  std::size_t fraction_count = 0;
  double stopped_early = 0.0;  // fraction
  double max_retained_ndh = 0.0;
  int cone_violations = 0;
};

struct EarlyStopSummary {
  std::map<std::string, FamilyStats> families;
  FamilyStats overall;
};

EarlyStopSummary summarize_early_stopping(const std::vector<RunRecord>& records);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace goodhart
