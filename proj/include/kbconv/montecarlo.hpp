#pragma once

// Exact simulation of the modal system and Monte Carlo checks of the filter
// error covariance against realized squared errors.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kbconv/filter.hpp"

namespace kbconv {

/// splitmix64 of (seed, trial): independent per-trial streams, so results do
/// not depend on how trials are scheduled.
std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial);

struct PathSample {
  CVector z_final;                   // z(T), modal coordinates
  std::vector<Vector> increments;    // y(t_i) - y(t_{i-1})
  std::vector<Vector> observations;  // y(t_i)
};

/// Precomputed per-step Gaussian factors. Noise is drawn in real coordinates
/// (real_basis) so conjugate-paired models give real outputs.
class PathSampler {
 public:
  PathSampler(const ModalSystem& sys, const std::vector<double>& times);

  PathSample sample(std::mt19937_64& rng) const;

  /// Eigenvalue mass clipped to zero while factoring the step covariances.
  double clipped_mass() const { return clipped_mass_; }

 private:
  struct StepFactor {
    TransitionBlocks blocks;
    Matrix noise_factor;  // (N+r) x (N+r), real coordinates
    Matrix output_noise;  // r x r, chol(R h)
  };
  CMatrix basis_;  // real -> modal, N x N
  CVector prior_mean_;
  Matrix prior_factor_;
  std::vector<StepFactor> factors_;
  std::vector<int> step_factor_;
  int tail_factor_ = -1;
  int outputs_ = 0;
  double clipped_mass_ = 0.0;

  int factor_for(const ModalSystem& sys, double h);
};

PathSample sample_path(const ModalSystem& sys, const std::vector<double>& times, std::uint64_t seed);

struct SimulationBatch {
  std::string model_id;
  std::vector<double> grid;
  int trials = 0;
  std::uint64_t seed = 0;
  std::vector<double> errors;  // ||z_hat - z(T)||^2 per trial
  double trace_err = 0.0;      // the deterministic prediction
  // summary, only for trials >= 100
  std::optional<double> mean;
  std::optional<double> standard_error;
};

SimulationBatch empirical_error(const ModalSystem& sys, const std::vector<double>& times, int trials,
                                std::uint64_t seed, int threads = 1);

struct ConsistencyResult {
  SimulationBatch batch;          // the batch the verdict is based on
  bool rerun = false;             // first seed missed, alternate seed used
  double deviation_in_se = 0.0;   // |mean - trace_err| / SE
  bool pass = false;
};

/// |mean - trace_err| <= 3 SE, retried once on a fixed alternate seed.
ConsistencyResult consistency_check(const ModalSystem& sys, const std::vector<double>& times, int trials,
                                    std::uint64_t seed, int threads = 1);

/// Pairwise (cascade) summation.
double pairwise_sum(const double* data, std::size_t count);

}  // namespace kbconv
