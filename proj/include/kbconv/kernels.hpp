#pragma once

// Closed-form Gaussian kernels for diagonal generators.
//
// Every iterated integral of exponentials over [0, h] that appears in the
// exact discretization is a scaled divided difference of exp: for example
//
//   int_0^h int_0^u e^{a u + b s} ds du = h^2 exp[0, a h, (a + b) h].
//
// Divided differences are evaluated with a centred Taylor expansion when the
// nodes are clustered and by the symmetric recurrence otherwise, which keeps
// the removable singularities (lambda -> 0, lambda_k + conj(lambda_l) -> 0)
// free of cancellation.

#include <span>

#include "kbconv/spectral_model.hpp"

namespace kbconv {

/// Below this |x| the two-point kernels switch to their truncated series.
inline constexpr double kSeriesSwitch = 1e-4;

/// (e^x - 1) / x with the removable singularity at 0.
cplx phi1(cplx x);

/// Divided difference exp[z_0, ..., z_m] for up to a handful of nodes.
cplx exp_divided_difference(std::span<const cplx> nodes);

/// Scalar modal kernel of the interpolated-output functional,
///   (1/2) (int_{t-h}^t e^{lambda s} ds - int_t^{t+h} e^{lambda s} ds).
/// Requires t >= h > 0.
cplx phi_h(cplx lambda, double t, double h);

/// One-step exact discretization of [z; Y_partial], Y_partial = int C z ds.
struct AugmentedTransition {
  double step = 0.0;
  CMatrix state_map;  // (N+r) x (N+r)
  CMatrix noise_cov;  // (N+r) x (N+r), Hermitian PSD
};

/// The non-trivial blocks of an AugmentedTransition. The filter and the
/// sampler work directly on these.
struct TransitionBlocks {
  double step = 0.0;
  CVector decay;      // e^{lambda_k h}
  CMatrix integrator; // r x N, c_k (e^{lambda_k h} - 1) / lambda_k
  CMatrix sigma_zz;   // N x N
  CMatrix sigma_zy;   // N x r
  CMatrix sigma_yy;   // r x r
};

TransitionBlocks transition_blocks(const ModalSystem& sys, double h);
AugmentedTransition transition_block(const ModalSystem& sys, double h);
AugmentedTransition assemble(const TransitionBlocks& blocks);

/// Cov(Y(t), Y(t2)) with Y(t) = int_0^t C z ds (prior plus input noise).
/// Output noise w is not included.
CMatrix output_covariance_kernel(const ModalSystem& sys, double t, double t2);

/// Cov(z(t_state), Y(t_obs)), N x r. Any t_state, t_obs in [0, T]; t_state = 0
/// gives the initial-state cross covariance used by the interpolant route.
CMatrix state_output_cross(const ModalSystem& sys, double t_state, double t_obs);

/// Cov(z(t)), N x N.
CMatrix state_covariance(const ModalSystem& sys, double t);

}  // namespace kbconv
