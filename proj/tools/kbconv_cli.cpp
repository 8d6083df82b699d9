// kbconv: run convergence experiments from a key = value config file.
//
// Exit status: 0 ok, 2 invalid config/arguments, 3 numerical failure
// (singular Gram, unconverged reference), 1 I/O or anything else.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kbconv/experiment.hpp"

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw kbconv::IoError(fmt::format("cannot open '{}' for writing", path));
  out << text;
  out.close();
  if (!out) throw kbconv::IoError(fmt::format("failed writing '{}'", path));
}

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

int execute(const std::string& kind, const Flags& flags) {
  auto config = kbconv::load_config(flags.config);
  if (!config.experiment.empty() && kind != "validate-config" && config.experiment != kind) {
    throw kbconv::ValidationError(fmt::format("config key 'experiment': file says '{}' but subcommand is '{}'",
                                              config.experiment, kind));
  }
  if (flags.seed) config.seed = *flags.seed;
  if (flags.threads < 1) throw kbconv::ValidationError("--threads must be >= 1");

  if (kind == "validate-config") {
    kbconv::build_model(config);
    std::cout << "config ok\n" << kbconv::format_config(config);
    return 0;
  }
  config.experiment = kind;
  const std::string out_path = flags.out.empty() ? config.output : flags.out;

  const auto start = std::chrono::steady_clock::now();
  const auto result = kbconv::run_experiment(config, flags.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (out_path.empty() || out_path == "-") {
    std::cout << result.csv;
  } else {
    write_file(out_path, result.csv);
    // wall-clock lives beside the output so the CSV itself stays reproducible
    write_file(out_path + ".timing", fmt::format("wall_clock_seconds = {:.3f}\nthreads = {}\n", seconds, flags.threads));
    if (!result.plot.empty()) write_file(out_path + ".plot", result.plot);
  }
  std::cerr << result.summary << fmt::format(" [{:.2f} s]\n", seconds);
  return result.status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampled-data vs continuous-time estimation: convergence experiments"};
  app.set_version_flag("--version", std::string("kbconv ") + KBCONV_VERSION);
  app.require_subcommand(1);
  Flags flags;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"converge", "Discrepancy curve D(n) against a fine reference grid"},
      {"bounds", "Theoretical bounds checked against the discrepancy curve"},
      {"telescope", "Sum of increment variances vs trace difference"},
      {"levelsum", "Level sums of the interpolated observation operator"},
      {"simulate", "Monte Carlo squared errors vs the filter covariance"},
      {"fit", "Log-log rate fit of a discrepancy curve"},
      {"validate-config", "Parse and validate a config file, then exit"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "Config file (key = value), or a previous output CSV")->required();
    sub->add_option("--out", flags.out, "Output CSV path ('-' for stdout); overrides the config's output key");
    sub->add_option("--seed", flags.seed, "Override the config seed");
    sub->add_option("--threads", flags.threads, "Worker threads (results do not depend on it)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("kbconv"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  const std::string kind = app.get_subcommands().front()->get_name();
  try {
    return execute(kind, flags);
  } catch (const kbconv::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kbconv::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const kbconv::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
