#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "contourlab/experiments.hpp"

#ifndef CONTOURLAB_VERSION
#define CONTOURLAB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace contourlab;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kBudget = 3, kViolation = 4 };

struct Options {
  std::string config_path;
  std::optional<std::string> output;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << contents;
}

int run(const std::string& command, const Options& o) {
  auto j = o.config_path.empty() ? nlohmann::json::object() : read_json(o.config_path);
  std::optional<std::string> recorded_hash;
  if (j.is_object() && j.contains("config_hash") && j.contains("config")) {  // a run manifest
    recorded_hash = j.at("config_hash").get<std::string>();
    j = j.at("config");
  }
  ExperimentConfig cfg = parse_config(j, command);
  if (recorded_hash && *recorded_hash != config_hash(cfg))
    throw ConfigError("manifest config does not match its recorded hash");
  if (o.output) cfg.output = *o.output;
  if (o.workers) {
    if (*o.workers < 0) throw ConfigError("workers must be >= 0");
    cfg.workers = *o.workers;
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.print_config) {
    std::cout << config_json(cfg).dump(2) << '\n';
    return kOk;
  }

  const auto t0 = std::chrono::steady_clock::now();
  RunResult res = run_experiment(cfg);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(cfg.output);
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& [name, contents] : res.files) {
    write_file(fs::path(cfg.output) / name, contents);
    outputs.push_back(name);
  }
  nlohmann::json manifest{{"command", cfg.command},
                          {"config", config_json(cfg)},
                          {"config_hash", config_hash(cfg)},
                          {"source_config", o.config_path},
                          {"versions",
                           {{"contourlab", CONTOURLAB_VERSION},
                            {"compiler", __VERSION__},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                          std::to_string(EIGEN_MINOR_VERSION)},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                          {"workers_used", detail::resolve_workers(cfg.workers)},
                          {"timings_ms", {{"run", ms}}},
                          {"outputs", outputs},
                          {"status", res.ok() ? "ok" : "invariant_violation"},
                          {"violations", res.violations},
                          {"rerun", "contourlab " + cfg.command + " --config manifest.json"}};
  write_file(fs::path(cfg.output) / "manifest.json", manifest.dump(2) + '\n');

  std::cout << cfg.command << ": " << (res.ok() ? "ok" : "INVARIANT VIOLATION") << " (" << static_cast<long>(ms) << " ms) -> "
            << cfg.output << '\n';
  for (const auto& v : res.violations) std::cerr << "  violation: " << v << '\n';
  return res.ok() ? kOk : kViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contour-expansion and phase-diagram experiments for lattice models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CONTOURLAB_VERSION);

  Options opt;
  std::string chosen;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"verify-classical", "contour partition function against brute force"},
      {"verify-quantum", "Duhamel partial sums against exact diagonalization"},
      {"scan", "phase-diagram scan over (U, mu) in units of nu|W|"},
      {"gaps", "gap report and derivative matrix of the motive set"},
      {"decay", "Peierls decay certification of enumerated contours"},
      {"state-check", "exact Gibbs state against the restricted single-phase average"},
      {"symmetry", "hole-particle spectrum shift and reflected scan"},
      {"verify", "property suites"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("-o,--output", opt.output, "output directory");
    sub->add_option("-j,--workers", opt.workers, "worker threads (0: all cores)");
    sub->add_option("--seed", opt.seed, "seed for randomized property checks");
    sub->add_flag("--print-config", opt.print_config, "print the resolved config and exit");
    sub->callback([&chosen, name = name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    return run(chosen, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IncompatibleConfiguration& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const StructuralError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kConfig;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return kBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
