#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "brwd/experiments.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitOracle = 2;
constexpr int kExitStatistics = 3;

std::string flag_name(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching random walks among disasters: experiment driver"};
  app.require_subcommand(1);

  std::string config_path, seed, out_path, format;
  int threads = 1;
  bool timing = false;
  // Per-subcommand settings given as flags, keyed by setting name.
  std::map<std::string, std::map<std::string, std::string>> flag_values;

  for (const auto& info : brwd::experiment_catalog()) {
    auto* sub = app.add_subcommand(info.name, info.summary);
    sub->add_option("--config", config_path, "flat key = value settings file");
    sub->add_option("--seed", seed, "64-bit seed (required here or in the config)");
    sub->add_option("--out", out_path, "output file (default: stdout)");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
    sub->add_flag("--timing", timing, "append wall_seconds to every record");
    auto& values = flag_values[info.name];
    for (const auto& key : info.keys) {
      std::string help = key.help + " [default: " + (key.default_value.empty() ? "none" : key.default_value) + "]";
      sub->add_option(flag_name(key.name), values[key.name], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    brwd::RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw brwd::ConfigError("config", "cannot open " + config_path);
      cfg = brwd::RunConfig::parse(f);
    }
    for (const auto& key : brwd::find_experiment(name).keys)
      if (sub->count(flag_name(key.name)) > 0) cfg.set(key.name, flag_values[name][key.name]);
    if (sub->count("--seed") > 0) cfg.set("seed", seed);

    if (sub->count("--threads") == 0 && cfg.has("threads")) threads = std::stoi(cfg.get("threads"));
    if (sub->count("--out") == 0 && cfg.has("out")) out_path = cfg.get("out");
    if (format.empty()) format = cfg.has("format") ? cfg.get("format") : "csv";
    const auto fmt = brwd::parse_format(format);
    if (threads < 1) throw brwd::ConfigError("threads", "must be at least 1");

    const auto result = brwd::run_experiment(name, cfg, {threads, timing});
    std::ostringstream text;
    brwd::write_records(text, result.records, fmt);
    if (out_path.empty()) {
      std::cout << text.str();
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) throw brwd::ConfigError("out", "cannot open " + out_path);
      f << text.str();
    }
    switch (result.status) {
      case brwd::RunStatus::ok: return 0;
      case brwd::RunStatus::oracle_failure:
        std::cerr << name << ": oracle suite failure\n";
        return kExitOracle;
      case brwd::RunStatus::statistical_failure:
        std::cerr << name << ": statistical check failed\n";
        return kExitStatistics;
    }
  } catch (const brwd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
