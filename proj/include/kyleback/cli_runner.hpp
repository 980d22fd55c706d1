#pragma once

// Experiment orchestration: flat key=value configs, the simulate / verify /
// sweep / table pipelines, and the files they write (series CSV, checkpoint
// CSV, JSON-lines report, summary table, manifest with SHA-256 digests).

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kyleback/bernoulli_equilibrium.hpp"
#include "kyleback/general_equilibrium.hpp"
#include "kyleback/verify_mc.hpp"

#ifndef KYLEBACK_VERSION
#define KYLEBACK_VERSION "0.0.0"
#endif

namespace kyleback {

inline constexpr const char* kVersion = KYLEBACK_VERSION;

enum ExitCode : int { kExitPass = 0, kExitTestFailure = 1, kExitConfigError = 2, kExitDivergence = 3 };

/// Field-level configuration problems, reported together.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& e) {
    std::string out;
    for (const auto& s : e) out += (out.empty() ? "" : "; ") + s;
    return out;
  }
  std::vector<std::string> errors_;
};

struct ExperimentConfig {
  std::string model = "bernoulli";  ///< bernoulli | general
  double r = 1.0;
  double d = 0.0;
  double p = 0.5;
  std::string payoff = "identity";
  double dt = 1e-3;
  double t_end = 8.0;
  std::size_t n_paths = 20000;
  std::uint64_t seed = 42;
  std::vector<double> checkpoints{1.0, 2.0, 4.0, 8.0};
  std::string output_dir;
  unsigned threads = 0;
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"model", "r",    "d",           "p",          "payoff",  "dt",
                                             "t_end", "n_paths", "seed", "checkpoints", "output_dir", "threads"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v, std::vector<std::string>& errors) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    errors.push_back(key + ": '" + v + "' is not a number");
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v, std::vector<std::string>& errors) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    errors.push_back(key + ": '" + v + "' is not a non-negative integer");
    return 0;
  }
}

}  // namespace detail

/// Sets one field from its textual value; problems are appended to errors.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& raw,
                          std::vector<std::string>& errors) {
  const std::string v = detail::trim(raw);
  if (key == "model") {
    cfg.model = v;
  } else if (key == "r") {
    cfg.r = detail::parse_double(key, v, errors);
  } else if (key == "d") {
    cfg.d = detail::parse_double(key, v, errors);
  } else if (key == "p") {
    cfg.p = detail::parse_double(key, v, errors);
  } else if (key == "payoff") {
    cfg.payoff = v;
  } else if (key == "dt") {
    cfg.dt = detail::parse_double(key, v, errors);
  } else if (key == "t_end") {
    cfg.t_end = detail::parse_double(key, v, errors);
  } else if (key == "n_paths") {
    cfg.n_paths = detail::parse_unsigned(key, v, errors);
  } else if (key == "seed") {
    cfg.seed = detail::parse_unsigned(key, v, errors);
  } else if (key == "threads") {
    cfg.threads = static_cast<unsigned>(detail::parse_unsigned(key, v, errors));
  } else if (key == "output_dir") {
    cfg.output_dir = v;
  } else if (key == "checkpoints") {
    cfg.checkpoints.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) cfg.checkpoints.push_back(detail::parse_double(key, item, errors));
    }
  } else {
    errors.push_back("unknown key '" + key + "'");
  }
}

/// Field-level validation against the module contracts.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.model != "bernoulli" && cfg.model != "general") {
    errors.push_back("model: must be 'bernoulli' or 'general', got '" + cfg.model + "'");
  }
  if (!(cfg.r > 0.0) || !std::isfinite(cfg.r)) errors.push_back("r: must be finite and > 0");
  if (!std::isfinite(cfg.d)) errors.push_back("d: must be finite");
  if (cfg.model == "bernoulli" && !(cfg.p > 0.0 && cfg.p < 1.0)) errors.push_back("p: must lie in (0,1)");
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) errors.push_back("dt: must be > 0");
  if (!(cfg.t_end > 0.0) || !std::isfinite(cfg.t_end)) errors.push_back("t_end: must be > 0");
  if (cfg.n_paths == 0) errors.push_back("n_paths: must be >= 1");
  if (cfg.model == "general") {
    try {
      const auto spec = parse_payoff(cfg.payoff);
      if (std::isfinite(cfg.r) && cfg.r > 0.0) {
        const auto val = validate_payoff(spec, cfg.r);
        if (!val.accepted) {
          std::string msg = "payoff: " + val.message;
          if (val.violating_point) msg += " at y=" + std::to_string(*val.violating_point);
          errors.push_back(msg);
        }
      }
    } catch (const std::exception& e) {
      errors.push_back(std::string("payoff: ") + e.what());
    }
  }
  if (cfg.dt > 0.0 && std::isfinite(cfg.dt) && cfg.t_end > 0.0 && std::isfinite(cfg.t_end)) {
    const TimeGrid grid = make_grid(cfg.t_end, cfg.dt);
    double prev = -1.0;
    for (double t : cfg.checkpoints) {
      if (!std::isfinite(t)) continue;  // already reported by the parser
      try {
        (void)grid.index_of(t);
      } catch (const std::invalid_argument&) {
        errors.push_back("checkpoints: " + std::to_string(t) + " is not on the time grid");
        continue;
      }
      if (t <= prev) errors.push_back("checkpoints: must be strictly increasing");
      prev = t;
    }
  }
  return errors;
}

/// Parses `key = value` lines ('#' starts a comment). Unknown keys and
/// malformed values are collected and raised as one ConfigError.
inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig cfg = {}) {
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1), errors);
  }
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
  std::stringstream buf;
  buf << in.rdbuf();
  auto cfg = parse_config_text(buf.str());
  const auto errors = validate_config(cfg);
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

/// Flat text form of a config, in key order; parse_config_text reads it back.
inline std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "model = " << c.model << "\nr = " << c.r << "\nd = " << c.d << "\np = " << c.p << "\npayoff = " << c.payoff
    << "\ndt = " << c.dt << "\nt_end = " << c.t_end << "\nn_paths = " << c.n_paths << "\nseed = " << c.seed
    << "\ncheckpoints = ";
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) o << (i ? "," : "") << c.checkpoints[i];
  o << "\noutput_dir = " << c.output_dir << "\nthreads = " << c.threads << "\n";
  return o.str();
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = c.model;
  j["r"] = c.r;
  j["d"] = c.d;
  j["p"] = c.p;
  j["payoff"] = c.payoff;
  j["dt"] = c.dt;
  j["t_end"] = c.t_end;
  j["n_paths"] = c.n_paths;
  j["seed"] = c.seed;
  j["checkpoints"] = c.checkpoints;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j;
}

// ---------------------------------------------------------------------------
// Number formatting and CSV output

/// x in plain decimal notation with 12 significant digits.
inline std::string format_decimal(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0.00000000000";
  const int exponent = static_cast<int>(std::floor(std::log10(std::abs(x))));
  int decimals = std::max(0, 11 - exponent);
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  // Rounding may carry into a new leading digit (9.99... -> 10.0...).
  std::string s(buf);
  std::size_t digits = 0;
  bool leading = true;
  for (char ch : s) {
    if (ch >= '0' && ch <= '9') {
      if (leading && ch == '0') continue;
      leading = false;
      ++digits;
    }
  }
  if (digits > 12 && decimals > 0) {
    --decimals;
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    s = buf;
  }
  return s;
}

/// Compact rendering for labels (%g).
inline std::string short_number(double x) {
  std::ostringstream o;
  o << x;
  return o.str();
}

struct SeriesRow {
  double t = 0.0;
  double mean_P = 0.0, se_P = 0.0;
  double mean_lambda = 0.0, se_lambda = 0.0;
  double mean_abs_gap = 0.0;  ///< E|P_t - Gamma|
  double qv_X_mean = 0.0;
};

inline std::vector<SeriesRow> series_from_run(const EquilibriumRun& run) {
  std::vector<SeriesRow> rows;
  for (std::size_t c = 0; c < run.n_checkpoints(); ++c) {
    SeriesRow row;
    row.t = run.checkpoints[c];
    const auto P = moments(run.column(run.P, c));
    const auto L = moments(run.column(run.lambda, c));
    std::vector<double> gap;
    gap.reserve(run.n_paths);
    for (std::size_t i = 0; i < run.n_paths; ++i) {
      if (!run.diverged[i]) gap.push_back(std::abs(run.at(run.P, c, i) - run.gamma[i]));
    }
    row.mean_P = P.mean;
    row.se_P = P.se();
    row.mean_lambda = L.mean;
    row.se_lambda = L.se();
    row.mean_abs_gap = moments(gap).mean;
    row.qv_X_mean = moments(run.column(run.qv_X, c)).mean;
    rows.push_back(row);
  }
  return rows;
}

inline const char* series_header() { return "t,mean_P,se_P,mean_lambda,se_lambda,mean_absPgapGamma,qv_X_mean"; }

inline std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::string out = std::string(series_header()) + "\n";
  for (const auto& r : rows) {
    for (double v : {r.t, r.mean_P, r.se_P, r.mean_lambda, r.se_lambda, r.mean_abs_gap}) {
      out += format_decimal(v);
      out += ',';
    }
    out += format_decimal(r.qv_X_mean);
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_series_csv(const std::vector<SeriesRow>& rows, const std::filesystem::path& path) {
  write_text_file(path, series_csv(rows));
}

/// Per-checkpoint distribution summary of the state variables.
inline std::string checkpoints_csv(const EquilibriumRun& run) {
  std::string out = "t,n_paths,mean_Y,sd_Y,mean_X,sd_X,mean_P,sd_P,mean_lambda,sd_lambda,mean_qv_X\n";
  for (std::size_t c = 0; c < run.n_checkpoints(); ++c) {
    const auto Y = moments(run.column(run.Y, c));
    const auto X = moments(run.column(run.X, c));
    const auto P = moments(run.column(run.P, c));
    const auto L = moments(run.column(run.lambda, c));
    const auto Q = moments(run.column(run.qv_X, c));
    out += format_decimal(run.checkpoints[c]) + "," + std::to_string(Y.n);
    for (double v : {Y.mean, std::sqrt(Y.variance), X.mean, std::sqrt(X.variance), P.mean, std::sqrt(P.variance),
                     L.mean, std::sqrt(L.variance), Q.mean}) {
      out += "," + format_decimal(v);
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

/// A StatReport plus whether it counts towards the exit status.
struct ReportEntry {
  StatReport report;
  bool mandatory = true;
};

inline nlohmann::ordered_json report_to_json(const ReportEntry& e) {
  const auto& r = e.report;
  const auto num = [](double x) -> nlohmann::ordered_json {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  };
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["estimate"] = num(r.estimate);
  j["std_error"] = num(r.std_error);
  j["statistic"] = num(r.statistic);
  j["threshold"] = num(r.threshold);
  j["passed"] = r.passed;
  j["mandatory"] = e.mandatory;
  j["n_paths"] = r.n_paths;
  j["checkpoints"] = r.checkpoints;
  j["flags"] = r.flags;
  return j;
}

inline ReportEntry report_from_json(const nlohmann::json& j) {
  const auto num = [](const nlohmann::json& v) {
    if (v.is_number()) return v.get<double>();
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  };
  ReportEntry e;
  e.report.name = j.at("name").get<std::string>();
  e.report.estimate = num(j.at("estimate"));
  e.report.std_error = num(j.at("std_error"));
  e.report.statistic = num(j.at("statistic"));
  e.report.threshold = num(j.at("threshold"));
  e.report.passed = j.at("passed").get<bool>();
  e.mandatory = j.value("mandatory", true);
  e.report.n_paths = j.at("n_paths").get<std::size_t>();
  e.report.checkpoints = j.at("checkpoints").get<std::vector<double>>();
  e.report.flags = j.at("flags").get<std::vector<std::string>>();
  return e;
}

inline std::string reports_jsonl(const std::vector<ReportEntry>& reports) {
  std::string out;
  for (const auto& e : reports) out += report_to_json(e).dump() + "\n";
  return out;
}

inline std::vector<ReportEntry> read_reports_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<ReportEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    out.push_back(report_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

/// Fixed-width table, one row per test. Optional tests get their own
/// section, which is left out when there are none.
inline std::string summarize(const std::vector<ReportEntry>& reports) {
  if (reports.empty()) throw std::invalid_argument("summarize: no reports");
  std::ostringstream o;
  const auto row = [&](const ReportEntry& e) {
    const auto& r = e.report;
    std::ostringstream est;
    est << std::setprecision(6) << r.estimate << " +- " << std::setprecision(3) << r.std_error;
    std::ostringstream stat;
    stat << std::setprecision(4) << r.statistic;
    std::ostringstream thr;
    thr << std::setprecision(4) << r.threshold;
    o << std::left << std::setw(40) << r.name << std::setw(28) << est.str() << std::setw(12) << stat.str()
      << std::setw(12) << thr.str() << (r.passed ? "PASS" : "FAIL") << "\n";
  };
  const auto header = [&] {
    o << std::left << std::setw(40) << "test" << std::setw(28) << "estimate +- se" << std::setw(12) << "statistic"
      << std::setw(12) << "threshold"
      << "result\n";
  };
  header();
  std::size_t failed = 0, optional = 0;
  for (const auto& e : reports) {
    if (!e.mandatory) {
      ++optional;
      continue;
    }
    row(e);
    failed += !e.report.passed;
  }
  if (optional > 0) {
    o << "\ninformational\n";
    header();
    for (const auto& e : reports) {
      if (!e.mandatory) row(e);
    }
  }
  o << "\n" << (reports.size() - optional) << " mandatory tests, " << failed << " failed\n";
  return o.str();
}

inline bool all_mandatory_pass(const std::vector<ReportEntry>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& e) { return !e.mandatory || e.report.passed; });
}

// ---------------------------------------------------------------------------
// Manifest

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return o.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Seconds since the epoch from SOURCE_DATE_EPOCH when set, else the clock.
inline std::string manifest_timestamp() {
  std::time_t t;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
    t = static_cast<std::time_t>(std::stoll(env));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream o;
  o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return o.str();
}

struct ManifestFile {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunManifest {
  ExperimentConfig config;
  std::string command;
  std::string version = kVersion;
  std::string timestamp;
  std::vector<ManifestFile> files;
  int exit_code = 0;
};

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["command"] = m.command;
  j["timestamp"] = m.timestamp;
  j["config"] = config_to_json(m.config);
  j["exit_code"] = m.exit_code;
  auto files = nlohmann::ordered_json::array();
  for (const auto& f : m.files) files.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  j["files"] = files;
  return j;
}

// ---------------------------------------------------------------------------
// Pipelines

/// Resolves the output directory: config value, else
/// $KYLEBACK_OUTPUT_ROOT/<model>-r<r>-seed<seed>, else ./kyleback-runs/...
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  std::ostringstream leaf;
  leaf << cfg.model << "-r" << cfg.r << "-seed" << cfg.seed;
  const char* root = std::getenv("KYLEBACK_OUTPUT_ROOT");
  return std::filesystem::path(root && *root ? root : "kyleback-runs") / leaf.str();
}

/// Creates the directory, refusing a non-empty one unless overwrite is set.
inline void prepare_output_dir(const std::filesystem::path& dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError({"output_dir: '" + dir.string() + "' is not a directory"});
    if (!fs::is_empty(dir) && !overwrite) {
      throw ConfigError({"output_dir: '" + dir.string() + "' is not empty (pass --overwrite to replace its files)"});
    }
  }
  fs::create_directories(dir);
}

inline SimulationConfig simulation_config(const ExperimentConfig& cfg) {
  SimulationConfig s;
  s.t_end = cfg.t_end;
  s.dt = cfg.dt;
  s.n_paths = cfg.n_paths;
  s.seed = cfg.seed;
  s.checkpoints = cfg.checkpoints;
  s.threads = cfg.threads;
  s.announcement = true;
  return s;
}

inline EquilibriumRun simulate_model(const ExperimentConfig& cfg) {
  const auto sim = simulation_config(cfg);
  if (cfg.model == "bernoulli") {
    BernoulliMarket m{cfg.p, OUParams{cfg.r, cfg.d}};
    return simulate_equilibrium(m, std::nullopt, sim);
  }
  return simulate_bridge(std::nullopt, GeneralMarket(cfg.r, parse_payoff(cfg.payoff)), sim);
}

namespace detail {

inline StatReport bound_report(std::string name, double estimate, double se, double bound, std::size_t n,
                               std::vector<double> cps) {
  StatReport r;
  r.name = std::move(name);
  r.estimate = estimate;
  r.std_error = se;
  r.statistic = estimate;
  r.threshold = bound;
  r.passed = estimate <= bound;
  r.n_paths = n;
  r.checkpoints = std::move(cps);
  return r;
}

/// |mean - target| within z SE plus an allowance for known bias.
inline StatReport match_report(std::string name, std::span<const double> xs, double target, double z, double bias,
                               double t) {
  const auto m = moments(xs);
  StatReport r;
  r.name = std::move(name);
  r.estimate = m.mean;
  r.std_error = m.se();
  r.statistic = std::abs(m.mean - target);
  r.threshold = z * m.se() + bias;
  r.passed = r.statistic <= r.threshold + 1e-15 * std::max(1.0, std::abs(target));
  r.n_paths = m.n;
  r.checkpoints = {t};
  if (m.n > 1 && m.variance == 0.0) r.flags.push_back("degenerate: zero-variance sample");
  r.flags.push_back("target " + std::to_string(target));
  return r;
}

inline std::vector<std::vector<double>> columns(const EquilibriumRun& run, const std::vector<double>& field) {
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < run.n_checkpoints(); ++c) out.push_back(run.column(field, c));
  return out;
}

inline std::vector<double> scaled(std::vector<double> xs, double s) {
  for (double& x : xs) x *= s;
  return xs;
}

}  // namespace detail

/// Test battery on a mixed-payoff run of the configured model.
inline std::vector<ReportEntry> verify_battery(const ExperimentConfig& cfg, const EquilibriumRun& run) {
  std::vector<ReportEntry> out;
  const BandPolicy band{};
  const auto& cps = run.checkpoints;
  const std::size_t last = run.n_checkpoints() - 1;
  const double T = cps.back();
  const auto P = detail::columns(run, run.P);
  const auto L = detail::columns(run, run.lambda);
  const auto gammas = run.per_path(run.gamma);

  std::vector<double> gap_T;
  for (std::size_t i = 0; i < run.n_paths; ++i) {
    if (!run.diverged[i]) gap_T.push_back(std::abs(run.at(run.P, last, i) - run.gamma[i]));
  }
  if (cfg.model == "bernoulli") {
    out.push_back({martingale_test(P, cps, cfg.p, band, "price-martingale"), true});
    const auto g = moments(gap_T);
    out.push_back({detail::bound_report("price-convergence E|P_T-Gamma|", g.mean, g.se(), 0.05, g.n, {T}),
                   T >= 8.0});
    const BernoulliMarket m{cfg.p, OUParams{cfg.r, cfg.d}};
    for (std::size_t c = 0; c < cps.size(); ++c) {
      const double z = band.width(cps.size());
      out.push_back({detail::match_report("lambda-closed-form t=" + short_number(cps[c]), L[c],
                                          lambda_mean_closed_form(cps[c], m), z, 0.0, cps[c]),
                     true});
    }
    out.push_back({supermartingale_test(L, cps, band, "lambda-supermartingale"), true});
  } else {
    const GeneralMarket m(cfg.r, parse_payoff(cfg.payoff));
    const double limit = lambda_limit(m);
    out.push_back({martingale_test(P, cps, std::nullopt, band, "price-martingale"), true});
    out.push_back({supermartingale_test(L, cps, band, "lambda-supermartingale"), true});
    out.push_back({detail::match_report("lambda-limit", L[last], limit, band.width(1),
                                        (price_stretch(T, cfg.r) - 1.0) * std::abs(limit), T),
                   true});
    std::vector<double> pin_gap;
    for (std::size_t i = 0; i < run.n_paths; ++i) {
      if (!run.diverged[i]) pin_gap.push_back(std::abs(run.at(run.Y, last, i) - run.pin[i]));
    }
    const auto pg = moments(pin_gap);
    out.push_back({detail::bound_report("pin-convergence E|Y_T-eta|", pg.mean, pg.se(), 0.05, pg.n, {T}), T >= 8.0});
    for (std::size_t c = 0; c < cps.size(); ++c) {
      const auto y = run.column(run.Y, c);
      out.push_back({normality_test(detail::scaled(y, 1.0 / std::sqrt(signal_variance(cps[c], cfg.r))), 1.0, 0.01,
                                    "signal-law t=" + short_number(cps[c])),
                     true});
    }
  }
  const auto xT = detail::scaled(run.column(run.X, last), 1.0 / std::sqrt(T));
  out.push_back({normality_test(xT, 1.0, 0.01, "demand-normality X_T/sqrt(T)"), true});
  const auto qv = moments(run.column(run.qv_X, last));
  {
    StatReport r = detail::bound_report("demand-qv |QV/T-1|", std::abs(qv.mean / T - 1.0), qv.se() / T, 0.05, qv.n,
                                        {T});
    out.push_back({r, true});
  }
  const std::size_t cal = std::min<std::size_t>(1, last);
  std::function<double(double)> null_var;
  if (cfg.model == "bernoulli") null_var = [](double q) { return q * (1.0 - q); };
  out.push_back({calibration_test(run.column(run.P, cal), gammas, band, "calibration t=" + short_number(cps[cal]),
                                  null_var),
                 true});
  if (run.has_announcement() && run.n_checkpoints() >= 2) {
    const auto a = announcement_sim(run, cfg.r, band);
    out.push_back({a.N_test, true});
    out.push_back({a.M_test, true});
    out.push_back({a.S_test, true});
    out.push_back({a.U_test, true});
    out.push_back({a.gap_test, true});
    StatReport j;
    j.name = "jump-fraction |Gamma-P_tau-|>0.01";
    j.estimate = a.large_jump_fraction();
    j.statistic = j.estimate;
    j.threshold = 0.95;
    j.passed = j.estimate >= 0.95;
    j.n_paths = a.n_jumps;
    j.flags.push_back("positive-jump fraction " + std::to_string(a.positive_jump_fraction()));
    out.push_back({j, false});
  }
  if (run.n_diverged > 0) {
    StatReport dv;
    dv.name = "divergence-fraction";
    dv.estimate = run.divergence_fraction();
    dv.statistic = dv.estimate;
    dv.threshold = 1e-3;
    dv.passed = true;
    dv.n_paths = run.n_paths;
    out.push_back({dv, false});
  }
  return out;
}

/// Outcome of one pipeline invocation.
struct RunOutcome {
  RunManifest manifest;
  std::vector<ReportEntry> reports;
  std::filesystem::path dir;
};

namespace detail {

inline ManifestFile emit(const std::filesystem::path& dir, const std::string& name, const std::string& content) {
  write_text_file(dir / name, content);
  return {name, sha256_hex(content), content.size()};
}

inline void finish_manifest(RunOutcome& out) {
  out.manifest.timestamp = manifest_timestamp();
  write_text_file(out.dir / "manifest.json", manifest_to_json(out.manifest).dump(2) + "\n");
}

}  // namespace detail

/// simulate: series.csv, checkpoints.csv, manifest.json.
/// verify: the same plus report.jsonl and summary.txt; exit 1 on a failed
/// mandatory test. Divergence beyond budget propagates as divergence_error.
inline RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& command, bool overwrite) {
  if (const auto errors = validate_config(cfg); !errors.empty()) throw ConfigError(errors);
  if (command == "verify" && cfg.checkpoints.size() < 2) throw ConfigError({"checkpoints: verify needs at least two"});
  RunOutcome out;
  out.dir = resolve_output_dir(cfg);
  prepare_output_dir(out.dir, overwrite);
  out.manifest.config = cfg;
  out.manifest.command = command;
  const auto run = simulate_model(cfg);
  out.manifest.files.push_back(detail::emit(out.dir, "series.csv", series_csv(series_from_run(run))));
  out.manifest.files.push_back(detail::emit(out.dir, "checkpoints.csv", checkpoints_csv(run)));
  if (command == "verify") {
    out.reports = verify_battery(cfg, run);
    out.manifest.files.push_back(detail::emit(out.dir, "report.jsonl", reports_jsonl(out.reports)));
    out.manifest.files.push_back(detail::emit(out.dir, "summary.txt", summarize(out.reports)));
    out.manifest.exit_code = all_mandatory_pass(out.reports) ? kExitPass : kExitTestFailure;
  }
  detail::finish_manifest(out);
  return out;
}

}  // namespace kyleback
