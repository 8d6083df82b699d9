#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "kbconv/experiment.hpp"

namespace kbconv {
namespace {

std::string validation_message(const std::string& text) {
  try {
    validate_config(parse_config(text));
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

std::vector<std::string> data_lines(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

TEST(ParseConfig, DefaultsAndComments) {
  const auto c = parse_config("# a comment\n\nmodel = wave\n  modes=8 \nn_values = 2, 4,8\n");
  EXPECT_EQ(c.model, "wave");
  EXPECT_EQ(c.modes, 8);
  EXPECT_EQ(c.n_values, (std::vector<int>{2, 4, 8}));
  EXPECT_EQ(c.k_ref, 6);
  EXPECT_FALSE(c.delta.has_value());
}

TEST(ParseConfig, RejectsUnknownRepeatedAndMalformed) {
  EXPECT_NE(validation_message("modes = 10\nmdoes = 4\n").find("mdoes"), std::string::npos);
  EXPECT_NE(validation_message("seed = 1\nseed = 2\n").find("seed"), std::string::npos);
  EXPECT_NE(validation_message("horizon = abc\n").find("horizon"), std::string::npos);
  EXPECT_NE(validation_message("horizon = nan\n").find("horizon"), std::string::npos);
  EXPECT_NE(validation_message("modes = 3.5\n").find("modes"), std::string::npos);
  EXPECT_NE(validation_message("a_priori = yes\n").find("a_priori"), std::string::npos);
  EXPECT_NE(validation_message("just words\n"), "");
}

TEST(ValidateConfig, NamesOffendingField) {
  EXPECT_NE(validation_message("n_values = 4,0\n").find("n_values"), std::string::npos);
  EXPECT_NE(validation_message("horizon = -1\n").find("horizon"), std::string::npos);
  EXPECT_NE(validation_message("r = 0\n").find("'r'"), std::string::npos);
  EXPECT_NE(validation_message("model = plate\n").find("model"), std::string::npos);
  EXPECT_EQ(validation_message("model = heat\n"), "");
}

TEST(FormatConfig, RoundTripsEveryKey) {
  ExperimentConfig c;
  c.model = "wave";
  c.modes = 12;
  c.horizon = 0.1;
  c.prior_decay = 4.25;
  c.observation_point = 1.0 / 3.0;
  c.n_values = {2, 4};
  c.theorems = {1};
  c.delta = 1.0000000000000002;
  c.epsilon = 0.125;
  c.a_priori = true;
  c.seed = 18446744073709551615ull;
  c.input = "curve.csv";
  c.output = "never-embedded.csv";
  const std::string text = format_config(c);
  EXPECT_EQ(text.find("output"), std::string::npos);
  const auto back = parse_config(text);
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.observation_point, c.observation_point);
  EXPECT_EQ(*back.delta, *c.delta);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.output, "");
}

TEST(ParseConfig, OutputFileOnlyReadsEmbeddedLines) {
  // data rows and other metadata must not be mistaken for keys
  const std::string text =
      "# tool: kbconv 1.0.0\n# experiment: converge\n# config.modes = 7\n# reference.stable = true\n"
      "model,n\nheat,4\n";
  const auto c = parse_config(text);
  EXPECT_EQ(c.modes, 7);
}

TEST(PlotData, PowerLawGivesExactLogs) {
  DiscrepancyCurve curve;
  curve.model_id = "toy";
  for (int n : {2, 4, 8, 16}) curve.rows.push_back({n, 0.0, 0.0, 1.0 / n});
  const std::string text = emit_plot_data(curve, {});
  std::stringstream ss(text);
  std::string line;
  int rows = 0;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    double log_n = 0.0, log_v = 0.0;
    std::stringstream(line) >> log_n >> log_v;
    EXPECT_EQ(log_v, -log_n);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(emit_plot_data(curve, {}), text);
  EXPECT_THROW(emit_plot_data(DiscrepancyCurve{}, {}), ValidationError);
}

TEST(PlotData, OneBlockPerSeries) {
  DiscrepancyCurve curve;
  curve.model_id = "toy";
  curve.rows.push_back({4, 0.0, 0.0, 0.5});
  TheoremBound b;
  b.theorem = 3;
  b.n = 4;
  b.constant = 2.0;
  b.exponent_n = 1.0;
  const std::string text = emit_plot_data(curve, {{b}});
  EXPECT_NE(text.find("# series: discrepancy"), std::string::npos);
  EXPECT_NE(text.find("# series: bound theorem=3"), std::string::npos);
  EXPECT_NE(text.find("\n\n"), std::string::npos);
}

TEST(CurveCsv, ReadsConvergeOutput) {
  const std::string csv =
      "# tool: kbconv 1.0.0\nmodel,n,K_ref,trace_n,trace_ref,discrepancy\n"
      "heat,4,3,2.5,1.5,1\nheat,8,3,1.75,1.5,0.25\n";
  const auto curve = read_curve_csv(csv);
  EXPECT_EQ(curve.model_id, "heat");
  EXPECT_EQ(curve.k_ref, 3);
  ASSERT_EQ(curve.rows.size(), 2u);
  EXPECT_EQ(curve.rows[1].n, 8);
  EXPECT_EQ(curve.rows[1].discrepancy, 0.25);
  EXPECT_THROW(read_curve_csv("model,n\nheat,4\n"), ValidationError);
  EXPECT_THROW(read_curve_csv("model,n,K_ref,trace_n,trace_ref,discrepancy\n"), ValidationError);
  EXPECT_THROW(read_curve_csv("model,n,K_ref,trace_n,trace_ref,discrepancy\nheat,4,3\n"), ValidationError);
}

ExperimentConfig small_heat(const std::string& kind) {
  auto c = parse_config("modes = 8\nn_values = 2,4,8\nk_ref = 3\nsim_n = 4\ntrials = 200\n");
  c.experiment = kind;
  return c;
}

TEST(RunExperiment, ColumnHeaders) {
  const std::vector<std::pair<std::string, std::string>> expected{
      {"converge", "model,n,K_ref,trace_n,trace_ref,discrepancy"},
      {"telescope", "model,n,levels,increment_sum,trace_difference,residual"},
      {"levelsum", "model,n,level,h,level_sum"},
      {"simulate", "model,n,trials,seed,mean,standard_error,trace_err,deviation_se,rerun,pass"},
      {"fit", "model,slope,intercept,r_squared,points"},
  };
  for (const auto& [kind, columns] : expected) {
    const auto out = run_experiment(small_heat(kind));
    EXPECT_EQ(out.status, 0) << kind;
    EXPECT_NE(out.csv.find("# experiment: " + kind + "\n"), std::string::npos);
    EXPECT_EQ(data_lines(out.csv).front(), columns) << kind;
  }
  auto bounds = small_heat("bounds");
  bounds.theorems = {3};
  EXPECT_EQ(data_lines(run_experiment(bounds).csv).front(), "theorem,n,bound,measured,pass");
}

TEST(RunExperiment, FewTrialsWritePerTrialErrors) {
  auto c = small_heat("simulate");
  c.trials = 5;
  const auto lines = data_lines(run_experiment(c).csv);
  EXPECT_EQ(lines.front(), "model,n,trial,error");
  EXPECT_EQ(lines.size(), 6u);
}

TEST(RunExperiment, RerunFromOwnOutputIsByteIdentical) {
  for (const std::string kind : {"converge", "simulate"}) {
    const auto first = run_experiment(small_heat(kind));
    auto again = parse_config(first.csv);
    again.experiment = kind;
    EXPECT_EQ(run_experiment(again, 3).csv, first.csv) << kind;
  }
}

TEST(RunExperiment, UnknownKindIsRejected) {
  EXPECT_THROW(run_experiment(small_heat("plot")), ValidationError);
}

}  // namespace
}  // namespace kbconv
