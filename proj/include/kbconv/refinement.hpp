#pragma once

// Dyadic refinement of the sample grid and the discrepancy experiments built
// on it. The continuous-time estimate is represented by a fine reference
// grid, certified by re-running one level finer.

#include <string>
#include <vector>

#include "kbconv/filter.hpp"

namespace kbconv {

/// Grid at base n and level K: {i T / (2^K n) : i = 1..2^K n}. Computing
/// every grid point as T * (i / M) makes nested grids share exact doubles.
struct DyadicGrid {
  int base_n = 1;
  int level = 0;
  double horizon = 1.0;
  std::vector<double> times;            // ordered
  std::vector<double> insertion_order;  // {jT/n}, then each level's midpoints
};

DyadicGrid dyadic_grid(int n, int K, double horizon);

/// Midpoints added at level k >= 1: (2j - 1) T / (2^k n), j = 1..2^(k-1) n.
std::vector<double> level_points(int n, int k, double horizon);

enum class ReferenceMode { global, per_n };

struct DiscrepancyRow {
  int n = 0;
  double trace_n = 0.0;
  double trace_ref = 0.0;
  double discrepancy = 0.0;  // trace_n - trace_ref
};

struct DiscrepancyCurve {
  std::string model_id;
  int k_ref = 0;
  ReferenceMode mode = ReferenceMode::global;
  std::vector<DiscrepancyRow> rows;
};

struct CurveOptions {
  ReferenceMode mode = ReferenceMode::global;
  int threads = 1;
};

/// D(n) for each n against dyadic_grid(max n, K_ref) (global) or
/// dyadic_grid(n, K_ref) (per_n). Throws ValidationError if the reference is
/// not a superset of {jT/n}, NumericalError if D(n) < 0 or D fails to
/// decrease along nested n beyond rounding.
DiscrepancyCurve discrepancy_curve(const ModalSystem& sys, const std::vector<int>& n_values,
                                   int k_ref, const CurveOptions& options = {});

struct ReferenceCheck {
  DiscrepancyCurve curve;   // at K_ref
  DiscrepancyCurve finer;   // at K_ref + 1
  double max_relative_change = 0.0;
  bool stable = false;      // every |D_K - D_{K+1}| / D_{K+1} < threshold
};

ReferenceCheck reference_stability(const ModalSystem& sys, const std::vector<int>& n_values,
                                   int k_ref, const CurveOptions& options = {},
                                   double threshold = 0.05);

struct TelescopeResult {
  double residual = 0.0;
  double increment_sum = 0.0;
  double trace_difference = 0.0;
};

/// Sum of increment variances over levels 1..K against
/// trace(grid(n, 0)) - trace(grid(n, K)), relative to trace(grid(n, 0)).
TelescopeResult telescope_check(const ModalSystem& sys, int n, int K);

/// Modal weights defining a stronger norm ||x||^2 = sum w_k |x_k|^2.
struct WeightSpec {
  enum class Kind {
    unit,    // 1
    graph,   // 1 + |lambda_k|^2, the graph norm of D(A)
    power,   // |lambda_k|^(2 s), fractional-power domain D((-A)^s)
    index,   // (scale * k^s)^2, 1-based k
  };
  Kind kind = Kind::graph;
  double exponent = 1.0;
  double scale = 1.0;
};

Vector modal_weights(const ModalSystem& sys, const WeightSpec& spec);

struct LevelSum {
  double value = 0.0;  // sup_x sum_j ||C_h(t_j) x||^2 / ||x||_w^2
  double h = 0.0;      // T / (2^K n)
};

/// Largest generalized eigenvalue of the level-K Gramian
/// G = sum_j C_h(t_j)^* C_h(t_j) against diag(weights). K >= 1.
LevelSum level_sum(const ModalSystem& sys, int n, int K, const Vector& weights);

}  // namespace kbconv
