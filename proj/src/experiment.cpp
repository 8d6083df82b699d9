#include "kbconv/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

namespace kbconv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double x) { return fmt::format("{:.17g}", x); }

// shortest round-trip form, for config values
std::string short_num(double x) { return fmt::format("{}", x); }

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) {
    throw ValidationError(fmt::format("config key '{}': '{}' is not a finite number", key, v));
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ValidationError(fmt::format("config key '{}': '{}' is not an integer", key, v));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ValidationError(fmt::format("config key '{}': expected true or false, got '{}'", key, v));
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) throw ValidationError(fmt::format("config key '{}': empty list", key));
  return out;
}

std::string join(const std::vector<int>& v) { return fmt::format("{}", fmt::join(v, ",")); }

struct KeySpec {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

#define KB_STRING(field)                                                              \
  KeySpec {                                                                           \
    #field, [](ExperimentConfig& c, const std::string& v) { c.field = v; },           \
        [](const ExperimentConfig& c) -> std::optional<std::string> {                  \
          if (c.field.empty()) return std::nullopt;                                      \
          return c.field;                                                                \
        }                                                                                \
  }
#define KB_DOUBLE(field)                                                                           \
  KeySpec {                                                                                        \
    #field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(#field, v); }, \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return short_num(c.field); }       \
  }
#define KB_OPT_DOUBLE(field)                                                                       \
  KeySpec {                                                                                        \
    #field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(#field, v); }, \
        [](const ExperimentConfig& c) -> std::optional<std::string> {                              \
          if (!c.field) return std::nullopt;                                                       \
          return short_num(*c.field);                                                                    \
        }                                                                                          \
  }
#define KB_INT(field)                                                                                    \
  KeySpec {                                                                                              \
    #field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_int<decltype(c.field)>(#field, v); }, \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return std::to_string(c.field); }  \
  }
#define KB_BOOL(field)                                                                                 \
  KeySpec {                                                                                            \
    #field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(#field, v); },       \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return c.field ? "true" : "false"; } \
  }
#define KB_LIST(field)                                                                                \
  KeySpec {                                                                                           \
    #field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_int_list(#field, v); },  \
        [](const ExperimentConfig& c) -> std::optional<std::string> {                                 \
          if (c.field.empty()) return std::nullopt;                                                   \
          return join(c.field);                                                                       \
        }                                                                                             \
  }

// Order here is the order of embedded config lines.
const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> keys{
      KB_STRING(model),          KB_INT(modes),           KB_DOUBLE(horizon),
      KB_DOUBLE(prior_decay),    KB_DOUBLE(q),            KB_DOUBLE(r),
      KB_DOUBLE(length),         KB_DOUBLE(observation_point),
      KB_STRING(experiment),     KB_LIST(n_values),       KB_INT(k_ref),
      KB_STRING(reference_mode), KB_BOOL(check_reference), KB_DOUBLE(stability_threshold),
      KB_LIST(theorems),         KB_DOUBLE(gamma),        KB_OPT_DOUBLE(delta),
      KB_OPT_DOUBLE(epsilon),    KB_DOUBLE(nu),           KB_DOUBLE(eta),
      KB_STRING(operator_case),  KB_BOOL(a_priori),       KB_INT(err_x_theorem),
      KB_BOOL(plot_data),        KB_INT(telescope_n),     KB_INT(levels),
      KB_INT(level_base_n),      KB_INT(max_level),       KB_STRING(weights),
      KB_DOUBLE(weight_exponent), KB_DOUBLE(weight_scale), KB_INT(sim_n),
      KB_INT(trials),            KB_INT(seed),            KB_STRING(input),
  };
  return keys;
}

#undef KB_STRING
#undef KB_DOUBLE
#undef KB_OPT_DOUBLE
#undef KB_INT
#undef KB_BOOL
#undef KB_LIST

constexpr const char* kEmbeddedPrefix = "# config.";

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ValidationError(fmt::format("config key '{}': {}", key, what));
}

template <typename T>
bool one_of(const T& v, std::initializer_list<T> options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

std::string header(const ExperimentConfig& c) {
  return fmt::format("# tool: kbconv {}\n# experiment: {}\n", KBCONV_VERSION, c.experiment) + format_config(c);
}

CurveOptions curve_options(const ExperimentConfig& c, int threads) {
  CurveOptions o;
  o.mode = c.reference_mode == "per_n" ? ReferenceMode::per_n : ReferenceMode::global;
  o.threads = threads;
  return o;
}

struct CurveRun {
  DiscrepancyCurve curve;
  std::string meta;
  bool stable = true;
};

CurveRun compute_curve(const ExperimentConfig& c, const ModalSystem& sys, int threads) {
  CurveRun run;
  if (c.check_reference) {
    const auto check = reference_stability(sys, c.n_values, c.k_ref, curve_options(c, threads), c.stability_threshold);
    run.curve = check.curve;
    run.stable = check.stable;
    run.meta = fmt::format("# reference.k_check = {}\n# reference.max_relative_change = {}\n# reference.stable = {}\n",
                           check.finer.k_ref, num(check.max_relative_change), check.stable ? "true" : "false");
  } else {
    run.curve = discrepancy_curve(sys, c.n_values, c.k_ref, curve_options(c, threads));
    run.meta = "# reference.stable = unchecked\n";
  }
  return run;
}

std::string curve_rows(const DiscrepancyCurve& curve) {
  std::string out = "model,n,K_ref,trace_n,trace_ref,discrepancy\n";
  for (const auto& r : curve.rows) {
    out += fmt::format("{},{},{},{},{},{}\n", curve.model_id, r.n, curve.k_ref, num(r.trace_n), num(r.trace_ref),
                       num(r.discrepancy));
  }
  return out;
}

TheoremBound state_bound(const ExperimentConfig& c, const ModalSystem& sys, int which, int n, const BoundOptions& o) {
  switch (which) {
    case 1: return theorem1_bound(sys, n, c.gamma, o);
    case 2: return theorem2_bound(sys, n, o);
    case 3:
      return theorem3_bound(sys, n, c.operator_case == "bounded" ? OperatorCase::bounded : OperatorCase::domain, o);
    case 4: return theorem4_bound(sys, n, c.nu, c.eta, o);
    default: throw ValidationError(fmt::format("config key 'theorems': unknown bound {}", which));
  }
}

RunResult run_converge(const ExperimentConfig& c, const ModalSystem& sys, int threads) {
  const auto run = compute_curve(c, sys, threads);
  RunResult out;
  out.csv = header(c) + run.meta + curve_rows(run.curve);
  out.status = run.stable ? 0 : 3;
  out.summary = fmt::format("converge: {} rows, reference {}", run.curve.rows.size(),
                            c.check_reference ? (run.stable ? "stable" : "NOT stable") : "unchecked");
  if (!run.stable) spdlog::error("reference grid not converged: D changed by more than {} at K_ref + 1", c.stability_threshold);
  return out;
}

RunResult run_bounds(const ExperimentConfig& c, const ModalSystem& sys, int threads) {
  const auto run = compute_curve(c, sys, threads);
  BoundOptions o;
  o.a_priori = c.a_priori;
  o.delta = c.delta;
  o.epsilon = c.epsilon;
  std::vector<std::vector<TheoremBound>> all;
  std::string rows = "theorem,n,bound,measured,pass\n";
  std::string results;
  bool every = true;
  for (int which : c.theorems) {
    std::vector<TheoremBound> series;
    for (const auto& row : run.curve.rows) {
      if (which == 5) {
        series.push_back(theorem5_bound(sys, row.n, state_bound(c, sys, c.err_x_theorem, row.n, o), o));
      } else {
        series.push_back(state_bound(c, sys, which, row.n, o));
      }
    }
    const auto report = check_bound(run.curve, series);
    for (const auto& r : report.rows) {
      rows += fmt::format("{},{},{},{},{}\n", which, r.n, num(r.bound), num(r.measured), r.pass ? "true" : "false");
    }
    const auto& b = series.front();
    results += fmt::format("# bound.{}.exponent_n = {}\n# bound.{}.exponent_t = {}\n# bound.{}.pass = {}\n", which,
                           num(b.exponent_n), which, num(b.exponent_t), which, report.pass ? "true" : "false");
    every = every && report.pass;
    all.push_back(std::move(series));
  }
  RunResult out;
  out.csv = header(c) + run.meta + results + rows;
  if (c.plot_data) out.plot = emit_plot_data(run.curve, all);
  out.status = run.stable ? 0 : 3;
  out.summary = fmt::format("bounds: {} theorem(s), all pass: {}", c.theorems.size(), every ? "yes" : "no");
  return out;
}

RunResult run_telescope(const ExperimentConfig& c, const ModalSystem& sys) {
  const auto t = telescope_check(sys, c.telescope_n, c.levels);
  RunResult out;
  out.csv = header(c) + "model,n,levels,increment_sum,trace_difference,residual\n" +
            fmt::format("{},{},{},{},{},{}\n", sys.id(), c.telescope_n, c.levels, num(t.increment_sum),
                        num(t.trace_difference), num(t.residual));
  out.summary = fmt::format("telescope: relative residual {:.3e}", t.residual);
  return out;
}

WeightSpec weight_spec(const ExperimentConfig& c) {
  WeightSpec w;
  w.kind = c.weights == "unit"    ? WeightSpec::Kind::unit
           : c.weights == "power" ? WeightSpec::Kind::power
           : c.weights == "index" ? WeightSpec::Kind::index
                                  : WeightSpec::Kind::graph;
  w.exponent = c.weight_exponent;
  w.scale = c.weight_scale;
  return w;
}

RunResult run_levelsum(const ExperimentConfig& c, const ModalSystem& sys) {
  const Vector w = modal_weights(sys, weight_spec(c));
  std::string rows = "model,n,level,h,level_sum\n";
  std::vector<double> hs, vals;
  for (int k = 1; k <= c.max_level; ++k) {
    const auto ls = level_sum(sys, c.level_base_n, k, w);
    rows += fmt::format("{},{},{},{},{}\n", sys.id(), c.level_base_n, k, num(ls.h), num(ls.value));
    if (ls.value > 0.0) {
      hs.push_back(ls.h);
      vals.push_back(ls.value);
    }
  }
  std::string meta;
  RunResult out;
  if (hs.size() >= 2) {
    const auto fit = fit_loglog(hs, vals);
    meta = fmt::format("# fit.slope_vs_h = {}\n# fit.r_squared = {}\n", num(fit.slope), num(fit.r_squared));
    out.summary = fmt::format("levelsum: slope vs h {:.4f}", fit.slope);
  } else {
    out.summary = "levelsum: too few positive level sums to fit";
  }
  out.csv = header(c) + meta + rows;
  return out;
}

RunResult run_simulate(const ExperimentConfig& c, const ModalSystem& sys, int threads) {
  const auto times = dyadic_grid(c.sim_n, 0, sys.horizon()).times;
  std::string rows = "model,n,trials,seed,mean,standard_error,trace_err,deviation_se,rerun,pass\n";
  RunResult out;
  if (c.trials >= 100) {
    const auto r = consistency_check(sys, times, c.trials, c.seed, threads);
    rows += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", sys.id(), c.sim_n, c.trials, r.batch.seed,
                        num(*r.batch.mean), num(*r.batch.standard_error), num(r.batch.trace_err),
                        num(r.deviation_in_se), r.rerun ? "true" : "false", r.pass ? "true" : "false");
    out.summary = fmt::format("simulate: mean {:.4e} vs trace {:.4e} ({:.2f} SE){}", *r.batch.mean, r.batch.trace_err,
                              r.deviation_in_se, r.pass ? "" : " FAIL");
  } else {
    // no summary below 100 trials; report the raw errors instead
    const auto b = empirical_error(sys, times, c.trials, c.seed, threads);
    rows = "model,n,trial,error\n";
    for (int i = 0; i < c.trials; ++i) rows += fmt::format("{},{},{},{}\n", sys.id(), c.sim_n, i, num(b.errors[i]));
    out.summary = fmt::format("simulate: {} trials (no summary below 100)", c.trials);
  }
  out.csv = header(c) + rows;
  return out;
}

RunResult run_fit(const ExperimentConfig& c, const ModalSystem& sys, int threads) {
  DiscrepancyCurve curve;
  std::string meta;
  if (!c.input.empty()) {
    std::ifstream in(c.input, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read curve file '{}'", c.input));
    std::stringstream ss;
    ss << in.rdbuf();
    curve = read_curve_csv(ss.str());
  } else {
    const auto run = compute_curve(c, sys, threads);
    curve = run.curve;
    meta = run.meta;
  }
  const auto fit = fit_rate(curve);
  RunResult out;
  out.csv = header(c) + meta + "model,slope,intercept,r_squared,points\n" +
            fmt::format("{},{},{},{},{}\n", curve.model_id, num(fit.slope), num(fit.intercept), num(fit.r_squared),
                        fit.points);
  out.summary = fmt::format("fit: slope {:.4f}, r^2 {:.4f}", fit.slope, fit.r_squared);
  return out;
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"converge", "bounds", "telescope", "levelsum", "simulate", "fit"};
  return kinds;
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::stringstream ss(text);
    std::string line;
    bool embedded = false;
    std::vector<std::string> all;
    while (std::getline(ss, line)) {
      all.push_back(line);
      if (line.rfind(kEmbeddedPrefix, 0) == 0) embedded = true;
    }
    for (auto& l : all) {
      if (!embedded) {
        lines.push_back(l);
      } else if (l.rfind(kEmbeddedPrefix, 0) == 0) {
        lines.push_back(l.substr(std::string(kEmbeddedPrefix).size()));
      }
    }
  }
  ExperimentConfig c;
  std::set<std::string> seen;
  int lineno = 0;
  for (const auto& raw : lines) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(fmt::format("config line {}: expected 'key = value', got '{}'", lineno, line));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = key_table();
    auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& k) { return key == k.name; });
    if (key == "output") {
      c.output = value;
    } else if (it == keys.end()) {
      throw ValidationError(fmt::format("config line {}: unknown key '{}'", lineno, key));
    } else {
      it->set(c, value);
    }
    if (!seen.insert(key).second) throw ValidationError(fmt::format("config key '{}' given twice", key));
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read config file '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& k : key_table()) {
    if (std::string(k.name) == "experiment") continue;  // its own header line
    if (const auto v = k.get(config)) out += fmt::format("{}{} = {}\n", kEmbeddedPrefix, k.name, *v);
  }
  return out;
}

void validate_config(const ExperimentConfig& c) {
  require(one_of<std::string>(c.model, {"heat", "wave"}), "model", "must be heat or wave");
  require(c.modes >= 1, "modes", "must be >= 1");
  require(c.model != "wave" || c.modes % 2 == 0, "modes", "must be even for the wave model");
  require(c.horizon > 0.0, "horizon", "must be positive");
  require(c.r > 0.0, "r", "must be positive");
  require(c.q >= 0.0, "q", "must be non-negative");
  require(c.model == "heat" || c.q == 0.0, "q", "input noise is only available for the heat model");
  require(c.length > 0.0, "length", "must be positive");
  require(c.experiment.empty() ||
              std::find(experiment_kinds().begin(), experiment_kinds().end(), c.experiment) != experiment_kinds().end(),
          "experiment", "unknown experiment kind");
  require(!c.n_values.empty(), "n_values", "must not be empty");
  for (int n : c.n_values) require(n >= 1, "n_values", fmt::format("n = {} must be >= 1", n));
  require(c.k_ref >= 0 && c.k_ref <= 20, "k_ref", "must lie in [0, 20]");
  require(one_of<std::string>(c.reference_mode, {"global", "per_n"}), "reference_mode", "must be global or per_n");
  require(c.stability_threshold > 0.0, "stability_threshold", "must be positive");
  for (int t : c.theorems) require(t >= 1 && t <= 5, "theorems", fmt::format("unknown bound {}", t));
  require(c.experiment != "bounds" || !c.theorems.empty(), "theorems", "bounds needs at least one entry");
  require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma", "must lie in [0, 1)");
  require(!c.epsilon || *c.epsilon > 0.0, "epsilon", "must be positive");
  require(!c.delta || *c.delta > 0.5, "delta", "must exceed 1/2");
  require(std::abs(c.eta - c.nu) < 0.5, "eta", "need |eta - nu| < 1/2");
  require(one_of<std::string>(c.operator_case, {"bounded", "domain"}), "operator_case", "must be bounded or domain");
  require(c.err_x_theorem >= 1 && c.err_x_theorem <= 4, "err_x_theorem", "must be 1, 2, 3 or 4");
  require(c.telescope_n >= 1, "telescope_n", "must be >= 1");
  require(c.levels >= 0, "levels", "must be >= 0");
  require(c.level_base_n >= 1, "level_base_n", "must be >= 1");
  require(c.max_level >= 1, "max_level", "must be >= 1");
  require(one_of<std::string>(c.weights, {"unit", "graph", "power", "index"}), "weights",
          "must be unit, graph, power or index");
  require(c.sim_n >= 1, "sim_n", "must be >= 1");
  require(c.trials >= 1, "trials", "must be >= 1");
}

ModalSystem build_model(const ExperimentConfig& c) {
  validate_config(c);
  if (c.model == "wave") return build_wave_model(c.modes, c.length, c.horizon, c.prior_decay, c.r, c.observation_point);
  return build_heat_model(c.modes, c.horizon, c.prior_decay, c.q, c.r);
}

RunResult run_experiment(const ExperimentConfig& config, int threads) {
  const ModalSystem sys = build_model(config);
  if (config.experiment == "converge") return run_converge(config, sys, threads);
  if (config.experiment == "bounds") return run_bounds(config, sys, threads);
  if (config.experiment == "telescope") return run_telescope(config, sys);
  if (config.experiment == "levelsum") return run_levelsum(config, sys);
  if (config.experiment == "simulate") return run_simulate(config, sys, threads);
  if (config.experiment == "fit") return run_fit(config, sys, threads);
  throw ValidationError(fmt::format("config key 'experiment': unknown kind '{}'", config.experiment));
}

std::string emit_plot_data(const DiscrepancyCurve& curve, const std::vector<std::vector<TheoremBound>>& bounds) {
  if (curve.rows.empty()) throw ValidationError("cannot emit plot data for an empty curve");
  auto line = [](double n, double v) { return fmt::format("{:.17g} {:.17g}\n", std::log(n), std::log(v)); };
  std::string out = fmt::format("# series: discrepancy model={}\n# log_n log_value\n", curve.model_id);
  for (const auto& r : curve.rows) {
    if (r.discrepancy > 0.0) out += line(r.n, r.discrepancy);
  }
  for (const auto& series : bounds) {
    if (series.empty()) continue;
    out += fmt::format("\n\n# series: bound theorem={}\n# log_n log_value\n", series.front().theorem);
    for (const auto& b : series) out += line(b.n, b.value());
  }
  return out;
}

DiscrepancyCurve read_curve_csv(const std::string& text) {
  DiscrepancyCurve curve;
  std::stringstream ss(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(ss, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "model,n,K_ref,trace_n,trace_ref,discrepancy") {
        throw ValidationError("curve file is not converge output (unexpected column header)");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ValidationError(fmt::format("curve file: malformed row '{}'", line));
    curve.model_id = f[0];
    curve.k_ref = parse_int<int>("K_ref", f[2]);
    curve.rows.push_back({parse_int<int>("n", f[1]), parse_double("trace_n", f[3]), parse_double("trace_ref", f[4]),
                          parse_double("discrepancy", f[5])});
  }
  if (curve.rows.empty()) throw ValidationError("curve file has no rows");
  return curve;
}

}  // namespace kbconv
