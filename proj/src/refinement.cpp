#include "kbconv/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kbconv/parallel.hpp"

namespace kbconv {

namespace {

double grid_point(double horizon, long long i, long long cells) {
  return horizon * (static_cast<double>(i) / static_cast<double>(cells));
}

long long cells_at(int n, int k) {
  if (n < 1) throw ValidationError(fmt::format("base n must be >= 1 (got {})", n));
  if (k < 0) throw ValidationError(fmt::format("refinement level must be >= 0 (got {})", k));
  if (k > 40) throw ValidationError(fmt::format("refinement level {} is too large", k));
  return static_cast<long long>(n) << k;
}

bool is_superset(const std::vector<double>& big, const std::vector<double>& small, double tol) {
  auto it = big.begin();
  for (const double t : small) {
    it = std::lower_bound(it, big.end(), t - tol);
    if (it == big.end() || std::abs(*it - t) > tol) return false;
  }
  return true;
}

}  // namespace

DyadicGrid dyadic_grid(int n, int K, double horizon) {
  const long long cells = cells_at(n, K);
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (cells > (1LL << 26)) throw ValidationError(fmt::format("grid of {} points is too large", cells));
  DyadicGrid g;
  g.base_n = n;
  g.level = K;
  g.horizon = horizon;
  g.times.reserve(cells);
  for (long long i = 1; i <= cells; ++i) g.times.push_back(grid_point(horizon, i, cells));
  g.insertion_order.reserve(cells);
  for (int j = 1; j <= n; ++j) g.insertion_order.push_back(grid_point(horizon, j, n));
  for (int k = 1; k <= K; ++k) {
    const auto pts = level_points(n, k, horizon);
    g.insertion_order.insert(g.insertion_order.end(), pts.begin(), pts.end());
  }
  return g;
}

std::vector<double> level_points(int n, int k, double horizon) {
  if (k < 1) throw ValidationError("level points exist for levels >= 1 only");
  const long long cells = cells_at(n, k);
  std::vector<double> pts;
  pts.reserve(cells / 2);
  for (long long i = 1; i < cells; i += 2) pts.push_back(grid_point(horizon, i, cells));
  return pts;
}

DiscrepancyCurve discrepancy_curve(const ModalSystem& sys, const std::vector<int>& n_values,
                                   int k_ref, const CurveOptions& options) {
  if (n_values.empty()) throw ValidationError("n_values must not be empty");
  for (const int n : n_values) {
    if (n < 1) throw ValidationError(fmt::format("n_values entries must be >= 1 (got {})", n));
  }
  if (k_ref < 0) throw ValidationError("K_ref must be >= 0");
  const double horizon = sys.horizon();
  const double tol = 1e-12 * horizon;
  const int m = static_cast<int>(n_values.size());

  // Tasks: one filter per coarse grid plus one per distinct reference.
  std::vector<std::vector<double>> grids;
  std::vector<int> ref_index(m);
  for (int i = 0; i < m; ++i) grids.push_back(dyadic_grid(n_values[i], 0, horizon).times);
  if (options.mode == ReferenceMode::global) {
    const int n_max = *std::max_element(n_values.begin(), n_values.end());
    grids.push_back(dyadic_grid(n_max, k_ref, horizon).times);
    std::fill(ref_index.begin(), ref_index.end(), m);
  } else {
    for (int i = 0; i < m; ++i) {
      grids.push_back(dyadic_grid(n_values[i], k_ref, horizon).times);
      ref_index[i] = m + i;
    }
  }
  for (int i = 0; i < m; ++i) {
    if (!is_superset(grids[ref_index[i]], grids[i], tol)) {
      throw ValidationError(fmt::format(
          "reference grid ({} points) does not contain the n = {} grid", grids[ref_index[i]].size(),
          n_values[i]));
    }
  }

  const auto traces = parallel_map<double>(static_cast<int>(grids.size()), options.threads,
                                           [&](int i) { return sequential_filter(sys, grids[i]).trace_err; });

  DiscrepancyCurve curve;
  curve.model_id = sys.id();
  curve.k_ref = k_ref;
  curve.mode = options.mode;
  for (int i = 0; i < m; ++i) {
    DiscrepancyRow row;
    row.n = n_values[i];
    row.trace_n = traces[i];
    row.trace_ref = traces[ref_index[i]];
    row.discrepancy = row.trace_n - row.trace_ref;
    if (row.discrepancy < -1e-10 * row.trace_ref) {
      throw NumericalError(fmt::format("negative discrepancy D({}) = {:.6e} (reference trace {:.6e})",
                                       row.n, row.discrepancy, row.trace_ref));
    }
    curve.rows.push_back(row);
  }
  if (options.mode == ReferenceMode::global) {
    for (const auto& a : curve.rows) {
      for (const auto& b : curve.rows) {
        if (b.n > a.n && b.n % a.n == 0 && a.discrepancy < b.discrepancy - 1e-10 * a.trace_ref) {
          throw NumericalError(fmt::format("discrepancy increases under refinement: D({}) = {:.6e} < D({}) = {:.6e}",
                                           a.n, a.discrepancy, b.n, b.discrepancy));
        }
      }
    }
  }
  return curve;
}

ReferenceCheck reference_stability(const ModalSystem& sys, const std::vector<int>& n_values,
                                   int k_ref, const CurveOptions& options, double threshold) {
  ReferenceCheck check;
  check.curve = discrepancy_curve(sys, n_values, k_ref, options);
  check.finer = discrepancy_curve(sys, n_values, k_ref + 1, options);
  check.max_relative_change = 0.0;
  for (std::size_t i = 0; i < check.curve.rows.size(); ++i) {
    const double coarse = check.curve.rows[i].discrepancy;
    const double fine = check.finer.rows[i].discrepancy;
    double change = 0.0;
    if (fine > 0.0) {
      change = std::abs(coarse - fine) / fine;
    } else if (coarse != fine) {
      change = std::numeric_limits<double>::infinity();
    }
    check.max_relative_change = std::max(check.max_relative_change, change);
  }
  check.stable = check.max_relative_change < threshold;
  if (!check.stable) {
    spdlog::warn("reference at K_ref = {} not converged: D(n) moves by {:.2f}% at K_ref + 1", k_ref,
                 100.0 * check.max_relative_change);
  }
  return check;
}

TelescopeResult telescope_check(const ModalSystem& sys, int n, int K) {
  const double horizon = sys.horizon();
  const auto coarse = dyadic_grid(n, 0, horizon);
  const auto fine = dyadic_grid(n, K, horizon);
  std::vector<double> base = coarse.times;
  double total = 0.0;
  for (int k = 1; k <= K; ++k) {
    const double h = horizon / static_cast<double>(cells_at(n, k));
    for (const double t : level_points(n, k, horizon)) {
      total += increment_variance(sys, base, t, h);
      base.insert(std::upper_bound(base.begin(), base.end(), t), t);
    }
  }
  TelescopeResult out;
  out.increment_sum = total;
  const double tr0 = sequential_filter(sys, coarse.times).trace_err;
  const double trk = sequential_filter(sys, fine.times).trace_err;
  out.trace_difference = tr0 - trk;
  const double gap = std::abs(total - out.trace_difference);
  out.residual = tr0 > 0.0 ? gap / tr0 : gap;
  return out;
}

Vector modal_weights(const ModalSystem& sys, const WeightSpec& spec) {
  const int n = sys.num_modes();
  Vector w(n);
  for (int k = 0; k < n; ++k) {
    const double mod = std::abs(sys.eigenvalue(k));
    switch (spec.kind) {
      case WeightSpec::Kind::unit: w(k) = 1.0; break;
      case WeightSpec::Kind::graph: w(k) = 1.0 + mod * mod; break;
      case WeightSpec::Kind::power: w(k) = std::pow(mod, 2.0 * spec.exponent); break;
      case WeightSpec::Kind::index: {
        const double v = spec.scale * std::pow(k + 1.0, spec.exponent);
        w(k) = v * v;
        break;
      }
    }
    if (!(w(k) > 0.0) || !std::isfinite(w(k))) {
      throw ValidationError(fmt::format("modal weight {} is not positive and finite", k + 1));
    }
  }
  return w;
}

LevelSum level_sum(const ModalSystem& sys, int n, int K, const Vector& weights) {
  if (K < 1) throw ValidationError("level_sum needs K >= 1");
  const int modes = sys.num_modes();
  if (weights.size() != modes) throw ValidationError("weights must have one entry per mode");
  const double horizon = sys.horizon();
  LevelSum out;
  out.h = horizon / static_cast<double>(cells_at(n, K));
  const CMatrix& c = sys.output_coeffs();
  const Vector scale = weights.cwiseSqrt().cwiseInverse();
  CMatrix gram = CMatrix::Zero(modes, modes);
  CMatrix ch(c.rows(), modes);
  for (const double t : level_points(n, K, horizon)) {
    for (int k = 0; k < modes; ++k) {
      ch.col(k) = c.col(k) * (phi_h(sys.eigenvalue(k), t, out.h) * scale(k));
    }
    gram.noalias() += ch.adjoint() * ch;
  }
  gram = (0.5 * (gram + gram.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram, Eigen::EigenvaluesOnly);
  out.value = std::max(0.0, eig.eigenvalues().maxCoeff());
  return out;
}

}  // namespace kbconv
