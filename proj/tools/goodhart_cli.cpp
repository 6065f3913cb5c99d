// goodhart: experiment runner.
//
//   goodhart prevalence  [--config FILE] [--seed N] [--out DIR] [--jobs N] [--method mce|br|ascent]
//   goodhart distance    (same flags; the config needs "distances")
//   goodhart early-stop  (same flags)
//   goodhart solve       --mdp FILE --reward FILE [--method mce|br] [--pressure L]
//   goodhart angle       --mdp FILE --r0 FILE --r1 FILE
//   goodhart demo-m22    [--out DIR] [--method mce|br|ascent]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "goodhart/errors.hpp"
#include "goodhart/geometry.hpp"
#include "goodhart/harness.hpp"
#include "goodhart/solvers.hpp"

namespace {

using goodhart::ConfigError;
using goodhart::format_double;
using nlohmann::json;

struct SweepFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> method;
};

void add_sweep_flags(CLI::App* cmd, SweepFlags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config (default: desk-scale grid)");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--jobs", f.jobs, "Worker threads");
  cmd->add_option("--method", f.method, "mce, br or ascent");
}

goodhart::ExperimentConfig resolve(const SweepFlags& f) {
  goodhart::ExperimentConfig cfg = f.config.empty() ? goodhart::desk_config() : goodhart::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.jobs) {
    if (*f.jobs < 1) throw ConfigError("--jobs must be >= 1");
    cfg.jobs = *f.jobs;
  }
  if (f.method) cfg.method = goodhart::harness_method_from_string(*f.method);
  return cfg;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void print_prevalence(const goodhart::Dataset& ds) {
  const auto s = goodhart::summarize_prevalence(ds.records);
  std::printf("records ok=%zu failed=%zu goodharting=%zu fraction=%s\n", s.ok, s.failed, s.goodhart,
              format_double(s.fraction).c_str());
  for (std::size_t b = 0; b < s.bucket_centres.size(); ++b)
    std::printf("  distance~%.3f  n=%zu  fraction=%.4f\n", s.bucket_centres[b], s.bucket_counts[b],
                s.bucket_fractions[b]);
  std::printf("spearman(distance bucket, fraction)=%s\n", format_double(s.spearman).c_str());
}

void print_early_stop(const goodhart::Dataset& ds) {
  const auto s = goodhart::summarize_early_stopping(ds.records);
  auto line = [](const std::string& name, const goodhart::FamilyStats& f) {
    std::printf("%-12s n=%zu mean_lost_fraction=%.4f mean_lost=%.4f mean_lost_vs_final=%.4f stopped_early=%.3f max_retained_ndh=%.3g cone_violations=%d\n",
                name.c_str(), f.count, f.mean_lost_fraction, f.mean_lost, f.mean_lost_vs_final, f.stopped_early, f.max_retained_ndh,
                f.cone_violations);
  };
  for (const auto& [name, f] : s.families) line(name, f);
  line("overall", s.overall);
}

void print_distance(const goodhart::Dataset& ds) {
  std::printf("records=%zu failed=%zu summaries=%zu\n", ds.records.size(), ds.num_failed(),
              ds.distance_summaries.size());
}

int finish(const goodhart::Dataset& ds, const goodhart::ExperimentConfig& cfg) {
  goodhart::export_dataset(ds, cfg.out);
  std::printf("wrote %zu records to %s\n", ds.records.size(), cfg.out.c_str());
  return ds.num_failed() > 0 ? goodhart::kExitPartialFailure : goodhart::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goodharting experiments on tabular MDPs"};
  app.require_subcommand(1);

  SweepFlags prev_flags, dist_flags, es_flags;
  auto* prevalence = app.add_subcommand("prevalence", "Goodharting prevalence sweep");
  add_sweep_flags(prevalence, prev_flags);
  auto* distance = app.add_subcommand("distance", "Proxies sampled at fixed projected distances");
  add_sweep_flags(distance, dist_flags);
  auto* early = app.add_subcommand("early-stop", "Early stopping evaluation");
  add_sweep_flags(early, es_flags);

  auto* solve = app.add_subcommand("solve", "Solve one MDP for one reward");
  std::string mdp_path, reward_path, solve_method = "mce";
  std::optional<double> pressure;
  double vi_threshold = 1e-3;
  solve->add_option("--mdp", mdp_path, "MDP JSON")->required();
  solve->add_option("--reward", reward_path, "Reward JSON array")->required();
  solve->add_option("--method", solve_method, "mce or br");
  solve->add_option("--pressure", pressure, "Optimisation pressure in (0,1); omit for the optimal policy");
  solve->add_option("--vi-threshold", vi_threshold, "Value iteration threshold");

  auto* angle = app.add_subcommand("angle", "Projected angle between two rewards");
  std::string angle_mdp, r0_path, r1_path;
  angle->add_option("--mdp", angle_mdp, "MDP JSON")->required();
  angle->add_option("--r0", r0_path, "First reward")->required();
  angle->add_option("--r1", r1_path, "Second reward")->required();

  auto* demo = app.add_subcommand("demo-m22", "Two-state worked example end to end");
  SweepFlags demo_flags;
  demo->add_option("--out", demo_flags.out, "Output directory");
  demo->add_option("--method", demo_flags.method, "mce, br or ascent");
  demo->add_option("--seed", demo_flags.seed, "Seed for cone sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return goodhart::kExitConfigError;
  }

  try {
    if (*prevalence) {
      const auto cfg = resolve(prev_flags);
      const auto ds = goodhart::run_prevalence(cfg);
      print_prevalence(ds);
      return finish(ds, cfg);
    }
    if (*distance) {
      const auto cfg = resolve(dist_flags);
      const auto ds = goodhart::run_distance_protocol(cfg);
      print_distance(ds);
      return finish(ds, cfg);
    }
    if (*early) {
      const auto cfg = resolve(es_flags);
      const auto ds = goodhart::run_early_stopping_eval(cfg);
      print_early_stop(ds);
      return finish(ds, cfg);
    }
    if (*solve) {
      const auto mdp = goodhart::mdp_from_json(read_json_file(mdp_path));
      const auto reward = goodhart::reward_from_json(read_json_file(reward_path));
      goodhart::SolverConfig cfg;
      cfg.vi_threshold = vi_threshold;
      cfg.method = goodhart::method_from_string(solve_method);
      goodhart::Policy pi;
      if (pressure) {
        goodhart::PressureSchedule sched({*pressure});
        pi = cfg.method == goodhart::Method::MCE ? goodhart::mce_policy(mdp, reward, sched.alpha(0), cfg)
                                                 : goodhart::boltzmann_policy(mdp, reward, sched.alpha(0), cfg);
      } else {
        pi = goodhart::optimal_policy(mdp, reward, cfg);
      }
      json out;
      out["return"] = goodhart::policy_return(mdp, reward, pi);
      out["policy"] = json::array();
      for (Eigen::Index s = 0; s < pi.probs.rows(); ++s) {
        json r = json::array();
        for (Eigen::Index a = 0; a < pi.probs.cols(); ++a) r.push_back(pi.probs(s, a));
        out["policy"].push_back(r);
      }
      std::cout << out.dump(2) << '\n';
      return goodhart::kExitOk;
    }
    if (*angle) {
      const auto mdp = goodhart::mdp_from_json(read_json_file(angle_mdp));
      const auto r0 = goodhart::reward_from_json(read_json_file(r0_path));
      const auto r1 = goodhart::reward_from_json(read_json_file(r1_path));
      const goodhart::PolytopeModel poly(mdp);
      std::cout << format_double(goodhart::projected_angle(poly, r0, r1)) << '\n';
      return goodhart::kExitOk;
    }
    if (*demo) {
      goodhart::ExperimentConfig cfg;
      cfg.out = demo_flags.out.value_or("demo_m22");
      if (demo_flags.method) cfg.method = goodhart::harness_method_from_string(*demo_flags.method);
      if (demo_flags.seed) cfg.seed = *demo_flags.seed;
      cfg.cone_samples = 64;
      const auto ds = goodhart::run_demo_m22(cfg);
      for (const auto& r : ds.records)
        std::printf("%s angle=%s ndh=%s lambda_star=%s stop_lambda=%s lost=%s\n", r.id.c_str(),
                    format_double(r.distance).c_str(), format_double(r.metrics.ndh).c_str(),
                    format_double(r.metrics.lambda_star).c_str(), format_double(r.stop_lambda).c_str(),
                    format_double(r.lost_reward).c_str());
      return finish(ds, cfg);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return goodhart::kExitConfigError;
  } catch (const goodhart::InvalidArgument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return goodhart::kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return goodhart::kExitOk;
}
