// runs.csv / curves export and import.

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "goodhart/errors.hpp"
#include "goodhart/harness.hpp"

namespace goodhart {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '\n') c = ' ';
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("csv: cannot parse number '" + s + "'");
  return v;
}

template <typename T>
T parse_integer(const std::string& s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("csv: cannot parse integer '" + s + "'");
  return v;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json doc;
  in >> doc;
  return doc;
}

std::vector<std::string> record_fields(const RunRecord& r) {
  const auto d = [](double v) { return format_double(v); };
  const auto& m = r.metrics;
  return {r.id,
          r.protocol,
          std::to_string(r.cell),
          std::to_string(r.proxy_index),
          r.env,
          r.env_kind,
          r.reward_kind,
          r.method,
          d(r.gamma),
          d(r.sigma),
          d(r.interpolation),
          d(r.target_distance),
          d(r.distance),
          std::to_string(r.seed_env),
          std::to_string(r.seed_true),
          std::to_string(r.seed_proxy),
          r.status,
          r.error,
          d(m.ndh),
          d(m.si),
          d(m.cacw),
          d(m.lr),
          m.rwi ? d(*m.rwi) : std::string(),
          d(m.lambda_star),
          r.goodhart ? "1" : "0",
          r.has_early_stop ? "1" : "0",
          d(r.theta),
          std::to_string(r.stop_index),
          d(r.stop_lambda),
          d(r.retained_return),
          d(r.start_return),
          d(r.best_return),
          d(r.final_return),
          d(r.lost_reward),
          d(r.lost_vs_final),
          d(r.lost_fraction),
          d(r.retained_ndh),
          std::to_string(r.cone_samples),
          std::to_string(r.cone_violations),
          d(r.max_cone_decrease),
          d(r.regret_bound),
          r.fingerprint};
}

RunRecord record_from_fields(const std::vector<std::string>& f) {
  if (f.size() != runs_csv_columns().size())
    throw Error("runs.csv: expected " + std::to_string(runs_csv_columns().size()) + " fields, got " +
                std::to_string(f.size()));
  RunRecord r;
  std::size_t i = 0;
  r.id = f[i++];
  r.protocol = f[i++];
  r.cell = parse_integer<std::size_t>(f[i++]);
  r.proxy_index = parse_integer<int>(f[i++]);
  r.env = f[i++];
  r.env_kind = f[i++];
  r.reward_kind = f[i++];
  r.method = f[i++];
  r.gamma = parse_double(f[i++]);
  r.sigma = parse_double(f[i++]);
  r.interpolation = parse_double(f[i++]);
  r.target_distance = parse_double(f[i++]);
  r.distance = parse_double(f[i++]);
  r.seed_env = parse_integer<std::uint64_t>(f[i++]);
  r.seed_true = parse_integer<std::uint64_t>(f[i++]);
  r.seed_proxy = parse_integer<std::uint64_t>(f[i++]);
  r.status = f[i++];
  r.error = f[i++];
  r.metrics.ndh = parse_double(f[i++]);
  r.metrics.si = parse_double(f[i++]);
  r.metrics.cacw = parse_double(f[i++]);
  r.metrics.lr = parse_double(f[i++]);
  if (!f[i].empty()) r.metrics.rwi = parse_double(f[i]);
  ++i;
  r.metrics.lambda_star = parse_double(f[i++]);
  r.goodhart = f[i++] == "1";
  r.has_early_stop = f[i++] == "1";
  r.theta = parse_double(f[i++]);
  r.stop_index = parse_integer<int>(f[i++]);
  r.stop_lambda = parse_double(f[i++]);
  r.retained_return = parse_double(f[i++]);
  r.start_return = parse_double(f[i++]);
  r.best_return = parse_double(f[i++]);
  r.final_return = parse_double(f[i++]);
  r.lost_reward = parse_double(f[i++]);
  r.lost_vs_final = parse_double(f[i++]);
  r.lost_fraction = parse_double(f[i++]);
  r.retained_ndh = parse_double(f[i++]);
  r.cone_samples = parse_integer<int>(f[i++]);
  r.cone_violations = parse_integer<int>(f[i++]);
  r.max_cone_decrease = parse_double(f[i++]);
  r.regret_bound = parse_double(f[i++]);
  r.fingerprint = f[i++];
  return r;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const std::vector<std::string>& runs_csv_columns() {
  static const std::vector<std::string> cols{
      "id", "protocol", "cell", "proxy_index", "env", "env_kind", "reward_kind", "method", "gamma", "sigma",
      "interpolation", "target_distance", "distance", "seed_env", "seed_true", "seed_proxy", "status",
      "error", "ndh", "si", "cacw", "lr", "rwi", "lambda_star", "goodhart", "has_early_stop", "theta",
      "stop_index", "stop_lambda", "retained_return", "start_return", "best_return", "final_return",
      "lost_reward", "lost_vs_final", "lost_fraction", "retained_ndh", "cone_samples", "cone_violations",
      "max_cone_decrease", "regret_bound", "fingerprint"};
  return cols;
}

void export_dataset(const Dataset& ds, const fs::path& dir) {
  for (const auto& r : ds.records)
    if (r.ok()) validate(r.curve);
  std::error_code ec;
  fs::create_directories(dir / "curves", ec);
  if (ec) throw Error("cannot create " + (dir / "curves").string() + ": " + ec.message());

  {
    auto out = open_out(dir / "runs.csv");
    write_row(out, runs_csv_columns());
    for (const auto& r : ds.records) write_row(out, record_fields(r));
    if (!out) throw Error("failed writing " + (dir / "runs.csv").string());
  }
  for (const auto& r : ds.records) {
    if (!r.ok()) continue;
    const fs::path path = dir / "curves" / (r.id + ".csv");
    auto out = open_out(path);
    out << "lambda,true_return,proxy_return\n";
    for (std::size_t i = 0; i < r.curve.size(); ++i)
      out << format_double(r.curve.pressures[i]) << ',' << format_double(r.curve.true_returns[i]) << ','
          << format_double(r.curve.proxy_returns[i]) << '\n';
    if (!out) throw Error("failed writing " + path.string());
    write_json(dir / "curves" / (r.id + ".json"), {{"env", r.curve.metadata.env},
                                                    {"method", r.curve.metadata.method},
                                                    {"distance", format_double(r.curve.metadata.distance)},
                                                    {"seed", r.curve.metadata.seed},
                                                    {"seed_env", r.seed_env},
                                                    {"seed_true", r.seed_true}});
  }
  if (!ds.distance_summaries.empty()) {
    auto out = open_out(dir / "distance.csv");
    out << "cell,env,distance,proxies,mean_ndh,lambda_star\n";
    for (const auto& s : ds.distance_summaries)
      write_row(out, {std::to_string(s.cell), s.env, format_double(s.distance), std::to_string(s.proxies),
                      format_double(s.mean_ndh), format_double(s.lambda_star)});
  }
  write_json(dir / "config.json", config_to_json(ds.config));
  write_json(dir / "manifest.json", {{"version", kVersion},
                                     {"protocol", ds.protocol},
                                     {"seed", ds.config.seed},
                                     {"fingerprint", config_fingerprint(ds.config)},
                                     {"records", ds.records.size()},
                                     {"failed", ds.num_failed()}});
}

Dataset import_dataset(const fs::path& dir) {
  Dataset ds;
  const json manifest = read_json(dir / "manifest.json");
  ds.protocol = manifest.at("protocol").get<std::string>();
  ds.config = parse_config(read_json(dir / "config.json"));

  std::ifstream in(dir / "runs.csv");
  if (!in) throw Error("cannot open " + (dir / "runs.csv").string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != runs_csv_columns())
    throw Error("runs.csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RunRecord r = record_from_fields(split_csv_line(line));
    if (r.ok()) {
      const fs::path path = dir / "curves" / (r.id + ".csv");
      std::ifstream cin(path);
      if (!cin) throw Error("cannot open " + path.string());
      std::string row;
      std::getline(cin, row);
      while (std::getline(cin, row)) {
        if (row.empty()) continue;
        const auto f = split_csv_line(row);
        if (f.size() != 3) throw Error(path.string() + ": expected 3 columns");
        r.curve.pressures.push_back(parse_double(f[0]));
        r.curve.true_returns.push_back(parse_double(f[1]));
        r.curve.proxy_returns.push_back(parse_double(f[2]));
      }
      const json meta = read_json(dir / "curves" / (r.id + ".json"));
      r.curve.metadata.env = meta.at("env").get<std::string>();
      r.curve.metadata.method = meta.at("method").get<std::string>();
      r.curve.metadata.distance = parse_double(meta.at("distance").get<std::string>());
      r.curve.metadata.seed = meta.at("seed").get<std::uint64_t>();
    }
    ds.records.push_back(std::move(r));
  }
  const fs::path dist = dir / "distance.csv";
  if (fs::exists(dist)) {
    std::ifstream din(dist);
    std::getline(din, line);
    while (std::getline(din, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 6) throw Error("distance.csv: expected 6 columns");
      DistanceSummary s;
      s.cell = parse_integer<std::size_t>(f[0]);
      s.env = f[1];
      s.distance = parse_double(f[2]);
      s.proxies = parse_integer<int>(f[3]);
      s.mean_ndh = parse_double(f[4]);
      s.lambda_star = parse_double(f[5]);
      ds.distance_summaries.push_back(s);
    }
  }
  return ds;
}

}  // namespace goodhart
