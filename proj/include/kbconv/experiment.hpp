#pragma once

// Experiment configuration (strict key = value text), orchestration and the
// CSV / plot-data writers behind the command-line tool.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbconv/montecarlo.hpp"
#include "kbconv/theory.hpp"

namespace kbconv {

#ifndef KBCONV_VERSION
#define KBCONV_VERSION "1.0.0"
#endif

/// File could not be read or written. Maps to CLI exit status 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // model
  std::string model = "heat";  // heat | wave
  int modes = 60;
  double horizon = 1.0;
  double prior_decay = 6.0;
  double q = 0.0;  // heat only
  double r = 1.0;
  double length = 1.0;                            // wave only
  double observation_point = 0.6180339887498949;  // wave only, fraction of length

  // experiment kind; optional in files, must then match the subcommand
  std::string experiment;

  // converge / bounds / fit
  std::vector<int> n_values{4, 8, 16, 32, 64};
  int k_ref = 6;
  std::string reference_mode = "global";  // global | per_n
  bool check_reference = true;
  double stability_threshold = 0.05;

  // bounds
  std::vector<int> theorems;
  double gamma = 0.0;
  std::optional<double> delta;
  std::optional<double> epsilon;
  double nu = 0.8;
  double eta = 1.0;
  std::string operator_case = "domain";  // bounded | domain
  bool a_priori = false;
  int err_x_theorem = 3;
  bool plot_data = false;

  // telescope
  int telescope_n = 4;
  int levels = 3;

  // levelsum
  int level_base_n = 4;
  int max_level = 6;
  std::string weights = "graph";  // unit | graph | power | index
  double weight_exponent = 1.0;
  double weight_scale = 1.0;

  // simulate
  int sim_n = 16;
  int trials = 10000;
  std::uint64_t seed = 1;

  // fit: read the curve from a converge CSV instead of recomputing it
  std::string input;

  // destination; not embedded in output headers
  std::string output;
};

/// Parses key = value lines ('#' comments). Output files are accepted too:
/// if any line starts with "# config.", only those lines are read, so a run
/// can be reproduced from its own output. Unknown or repeated keys and
/// malformed values are ValidationErrors naming the key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Throws ValidationError naming the offending field.
void validate_config(const ExperimentConfig& config);

/// "# config.key = value" lines for every resolved key, in a fixed order.
std::string format_config(const ExperimentConfig& config);

ModalSystem build_model(const ExperimentConfig& config);

const std::vector<std::string>& experiment_kinds();

struct RunResult {
  std::string csv;
  std::string plot;        // plot data, if requested
  std::string summary;     // one-line human-readable summary
  int status = 0;          // 0 ok, 3 numerical failure flagged in the output
};

/// Runs config.experiment. threads only affects scheduling, never output.
RunResult run_experiment(const ExperimentConfig& config, int threads = 1);

/// Whitespace-separated (log n, log value) columns, one block per series
/// (discrepancy first, then each bound series), blocks separated by a blank
/// line; 17 significant digits.
std::string emit_plot_data(const DiscrepancyCurve& curve,
                           const std::vector<std::vector<TheoremBound>>& bounds);

/// Reads the rows of a converge CSV back into a curve.
DiscrepancyCurve read_curve_csv(const std::string& text);

}  // namespace kbconv
