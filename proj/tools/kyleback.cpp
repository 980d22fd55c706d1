// Command-line front end: simulate | verify | sweep | table.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kyleback/cli_runner.hpp"

namespace fs = std::filesystem;
using namespace kyleback;

namespace {

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;  // key -> raw text, only for flags given
  bool overwrite = false;
};

void add_config_options(CLI::App& app, Overrides& o) {
  app.add_option("-c,--config", o.config_path, "flat key=value config file");
  for (const auto& key : config_keys()) {
    std::string flag = "--" + key;
    for (auto& ch : flag) {
      if (ch == '_') ch = '-';
    }
    app.add_option_function<std::string>(
        flag, [&o, key](const std::string& v) { o.values[key] = v; }, "override '" + key + "'");
  }
  app.add_flag("--overwrite", o.overwrite, "replace files in a non-empty output directory");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError({"cannot read config file '" + o.config_path + "'"});
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_config_text(buf.str());
  }
  std::vector<std::string> errors;
  for (const auto& [k, v] : o.values) apply_setting(cfg, k, v, errors);
  if (!errors.empty()) throw ConfigError(errors);
  if (auto e = validate_config(cfg); !e.empty()) throw ConfigError(e);
  return cfg;
}

int report_config_error(const ConfigError& e) {
  for (const auto& msg : e.errors()) std::cerr << "config error: " << msg << "\n";
  return kExitConfigError;
}

/// Runs one pipeline and maps its outcome to the exit-code contract.
int run_one(const ExperimentConfig& cfg, const std::string& command, bool overwrite, bool print_summary) {
  try {
    const auto out = run_experiment(cfg, command, overwrite);
    if (print_summary && !out.reports.empty()) std::cout << summarize(out.reports);
    std::cout << "wrote " << out.manifest.files.size() + 1 << " files to " << out.dir.string() << "\n";
    return out.manifest.exit_code;
  } catch (const ConfigError& e) {
    return report_config_error(e);
  } catch (const divergence_error& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kyle-Back equilibrium simulator with an exponential announcement time"};
  app.require_subcommand(1);

  Overrides sim_o, ver_o, sweep_o;
  auto* sim = app.add_subcommand("simulate", "simulate the configured model and write series.csv");
  add_config_options(*sim, sim_o);
  auto* ver = app.add_subcommand("verify", "simulate and run the statistical test battery");
  add_config_options(*ver, ver_o);

  auto* sweep = app.add_subcommand("sweep", "run verify over a grid of r or p values");
  add_config_options(*sweep, sweep_o);
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  sweep->add_option("--param", sweep_param, "parameter to vary (r or p)")->required()->check(CLI::IsMember({"r", "p"}));
  sweep->add_option("--values", sweep_values, "values, comma separated")->required()->delimiter(',');

  auto* table = app.add_subcommand("table", "print the summary table of an existing report");
  std::string table_input;
  table->add_option("input", table_input, "run directory or report.jsonl")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_one(resolve(sim_o), "simulate", sim_o.overwrite, false);
    if (*ver) return run_one(resolve(ver_o), "verify", ver_o.overwrite, true);
    if (*sweep) {
      const auto base = resolve(sweep_o);
      const fs::path root = resolve_output_dir(base);
      int worst = kExitPass;
      nlohmann::ordered_json cells = nlohmann::ordered_json::array();
      for (const auto& v : sweep_values) {
        auto cfg = base;
        std::vector<std::string> errors;
        apply_setting(cfg, sweep_param, v, errors);
        if (!errors.empty()) throw ConfigError(errors);
        cfg.output_dir = (root / ("cell-" + sweep_param + "=" + v)).string();
        std::cout << "== " << sweep_param << " = " << v << "\n";
        const int code = run_one(cfg, "verify", sweep_o.overwrite, true);
        cells.push_back({{"param", sweep_param}, {"value", v}, {"dir", cfg.output_dir}, {"exit_code", code}});
        if (code == kExitDivergence || worst == kExitDivergence) {
          worst = kExitDivergence;
        } else {
          worst = std::max(worst, code);
        }
      }
      write_text_file(root / "sweep.json", cells.dump(2) + "\n");
      return worst;
    }
    if (*table) {
      fs::path path = table_input;
      if (fs::is_directory(path)) path /= "report.jsonl";
      const auto reports = read_reports_jsonl(path);
      std::cout << summarize(reports);
      return all_mandatory_pass(reports) ? kExitPass : kExitTestFailure;
    }
  } catch (const ConfigError& e) {
    return report_config_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitPass;
}
