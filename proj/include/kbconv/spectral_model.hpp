#pragma once

// Truncated modal representations of linear systems
//
//   dz = A z dt + B du,   dy = C z dt + dw,   z(0) = x ~ N(m, P0)
//
// with A diagonal in an orthonormal eigenbasis {e_k}. Everything downstream
// (kernels, filters, bounds) works in these modal coordinates.

#include <optional>
#include <string>
#include <vector>

#include "kbconv/types.hpp"

namespace kbconv {

/// Raw fields of a modal system. Build one, then hand it to ModalSystem,
/// which validates and freezes it.
struct ModalSpec {
  std::string id = "custom";
  std::vector<cplx> eigenvalues;  // lambda_k, Re <= 0, |lambda_k| non-decreasing
  CMatrix output_coeffs;          // r x N, column k is c_k = C e_k
  CMatrix input_coeffs;           // N x q, row k is b_k
  CVector prior_mean;             // N
  Vector prior_var;               // N, diagonal prior covariance
  Matrix q_cov;                   // q x q, PSD
  Matrix r_cov;                   // r x r, PD
  double horizon = 1.0;           // T
  // partner[k] is the index whose modal data is the complex conjugate of
  // mode k (partner[k] == k for a self-conjugate, i.e. real, mode).
  std::optional<std::vector<int>> conjugate_pairing;
};

/// Immutable, validated modal system.
class ModalSystem {
 public:
  explicit ModalSystem(ModalSpec spec);

  const ModalSpec& spec() const { return spec_; }
  const std::string& id() const { return spec_.id; }
  int num_modes() const { return static_cast<int>(spec_.eigenvalues.size()); }
  int num_outputs() const { return static_cast<int>(spec_.output_coeffs.rows()); }
  int num_inputs() const { return static_cast<int>(spec_.input_coeffs.cols()); }
  double horizon() const { return spec_.horizon; }

  cplx eigenvalue(int k) const { return spec_.eigenvalues[k]; }
  const std::vector<cplx>& eigenvalues() const { return spec_.eigenvalues; }
  const CMatrix& output_coeffs() const { return spec_.output_coeffs; }
  const CMatrix& input_coeffs() const { return spec_.input_coeffs; }
  const CVector& prior_mean() const { return spec_.prior_mean; }
  const Vector& prior_var() const { return spec_.prior_var; }
  const Matrix& q_cov() const { return spec_.q_cov; }
  const Matrix& r_cov() const { return spec_.r_cov; }
  const std::optional<std::vector<int>>& conjugate_pairing() const {
    return spec_.conjugate_pairing;
  }

  /// b_k Q b_l^* for all mode pairs (N x N Hermitian).
  const CMatrix& input_gram() const { return input_gram_; }
  bool has_input_noise() const { return has_input_noise_; }

  /// Unitary map from real coordinates to modal coordinates. Identity for
  /// real models; 2x2 blocks [1, i; 1, -i]/sqrt(2) for conjugate pairs.
  const CMatrix& real_basis() const { return real_basis_; }

  double min_r_eigenvalue() const { return min_r_eig_; }

  /// sum_k (1 + |lambda_k|^2) (p_k + |m_k|^2), i.e. E||x||^2 in the graph
  /// norm of D(A).
  double domain_second_moment() const { return domain_moment_; }

  /// A copy with a different output noise covariance.
  ModalSystem with_r_cov(const Matrix& r_cov) const;
  /// A copy with a different input noise covariance.
  ModalSystem with_q_cov(const Matrix& q_cov) const;

 private:
  ModalSpec spec_;
  CMatrix input_gram_;
  bool has_input_noise_ = false;
  CMatrix real_basis_;
  double min_r_eig_ = 0.0;
  double domain_moment_ = 0.0;
};

/// 1D heat equation on [0,1], Dirichlet, boundary-derivative observation.
/// lambda_k = -pi^2 k^2, c_k = pi k, p_k = k^-prior_decay. With q_scalar > 0
/// a scalar input enters through b_k = k^-4.
ModalSystem build_heat_model(int num_modes, double horizon, double prior_decay,
                             double q_scalar, double r_scalar);

/// 1D wave equation on [0,L], Dirichlet, in energy coordinates, observing the
/// velocity at observation_point * L. Eigenvalues +-i pi j / L in conjugate
/// pairs (num_modes must be even). No input noise.
ModalSystem build_wave_model(int num_modes, double domain_length, double horizon,
                             double prior_decay, double r_scalar,
                             double observation_point = 0.6180339887498949);

/// Spectral asymptotics entering the diagonal-generator bound.
struct SpectralParams {
  double delta_fit = 0.0;    // slope of log|lambda| vs log(rank of distinct |lambda|)
  double gamma_hat = 0.0;    // max_k |lambda_k| / k^delta
  double gamma_limit = 0.0;  // |lambda_N| / N^delta, the truncated tail value
  double gamma_check = 0.0;  // min_{k >= k0} |lambda_k| / k^delta
  int tail_start = 1;        // k0 = ceil((2n/T)^(1/delta)), 1-based
  double sup_ratio = 0.0;    // max_k ||c_k|| / |lambda_k|^gamma
  double mu = 1.0;           // max_k sup_{t in [0,T]} |exp(lambda_k t)|
};

/// Per-eigenvalue indexing k = 1..N (conjugate partners counted separately)
/// is used for gamma_hat/gamma_limit/gamma_check; delta_fit ranks distinct
/// magnitudes so that pairs do not distort the slope. delta may be supplied
/// to override delta_fit in the Gamma quantities.
SpectralParams spectral_parameters(const ModalSystem& sys, double gamma, int base_n = 1,
                                   std::optional<double> delta = std::nullopt);

}  // namespace kbconv
