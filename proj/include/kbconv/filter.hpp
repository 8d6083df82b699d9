#pragma once

// Sampled-data estimators for the modal system.
//
// The sequential filter carries [z; Y_partial] between samples and observes
// output increments dy = Y_partial + dw; the batch oracle conditions z(t) on
// the cumulative outputs y(t_i) directly. Both give the same error covariance,
// which is what the tests lean on.

#include <vector>

#include "kbconv/kernels.hpp"

namespace kbconv {

struct FilterRun {
  std::vector<double> grid;
  CMatrix final_cov;               // N x N error covariance of z(T)
  double trace_err = 0.0;          // tr(final_cov)
  std::vector<CMatrix> snapshots;  // z-block after each update, if requested
};

/// Exact-discretization Kalman recursion over the sample times, then a
/// prediction to T. times must be strictly increasing in (0, T].
FilterRun sequential_filter(const ModalSystem& sys, const std::vector<double>& times,
                            bool keep_snapshots = false);

/// Joint-Gaussian conditioning of z(T) on y(t_1..t_m).
FilterRun batch_condition(const ModalSystem& sys, const std::vector<double>& times);

/// Conditional covariance of z(t_state) given y(t_1..t_m); t_state = 0 is the
/// initial-state error covariance.
CMatrix batch_conditional_covariance(const ModalSystem& sys, const std::vector<double>& times,
                                     double t_state);

/// Variance of the estimate increment when y(new_time) is added to the base
/// samples, via the interpolated output y(t) - (y(t-h) + y(t+h))/2. Requires
/// t - h in base or 0, t + h in base, nothing from base inside (t-h, t+h).
double increment_variance(const ModalSystem& sys, const std::vector<double>& base_times,
                          double new_time, double h);

/// Precomputed gains for running the filter mean on realized outputs.
class FilterPlan {
 public:
  FilterPlan(const ModalSystem& sys, const std::vector<double>& times);

  /// increments[i] = y(t_i) - y(t_{i-1}) (real, r entries each). Returns the
  /// estimate of z(T).
  CVector estimate(const std::vector<Vector>& increments) const;

  const FilterRun& covariance() const { return run_; }

 private:
  struct Step {
    int block = 0;
    CMatrix gain;  // N x r
  };
  std::vector<TransitionBlocks> blocks_;
  std::vector<Step> steps_;
  int tail_block_ = -1;
  CVector prior_mean_;
  FilterRun run_;
  FilterPlan() = default;
  void build(const ModalSystem& sys, const std::vector<double>& times, bool keep_snapshots,
             bool keep_gains);
  friend FilterRun sequential_filter(const ModalSystem&, const std::vector<double>&, bool);
};

/// Strictly increasing, inside (0, T]; throws ValidationError otherwise.
void validate_times(const ModalSystem& sys, const std::vector<double>& times);

}  // namespace kbconv
