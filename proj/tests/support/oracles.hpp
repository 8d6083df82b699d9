#pragma once

// Independent reference computations for the tests. Everything here is done
// by brute force (adaptive quadrature, dense linear algebra) and shares no
// code with the closed forms under test.

#include <functional>
#include <vector>

#include "kbconv/kernels.hpp"

namespace kbconv::oracle {

/// Adaptive Gauss-Kronrod on [a, b]; throws if the error estimate misses tol
/// (relative to the L1 norm of the integrand, floored at tol absolute).
cplx integrate(const std::function<cplx(double)>& f, double a, double b, double tol,
               const char* what = "integrand");

/// ½ (int_{t-h}^t e^{lambda s} ds - int_t^{t+h} e^{lambda s} ds).
cplx phi_h(cplx lambda, double t, double h, double tol = 1e-14);

/// Same contract as transition_block with every integral done numerically.
AugmentedTransition quadrature_oracle_transition(const ModalSystem& sys, double h, double tol);

/// Cov(Y(t), Y(t2)) by nested quadrature.
CMatrix output_covariance(const ModalSystem& sys, double t, double t2, double tol);

/// Cov(z(t_state), Y(t_obs)) by nested quadrature.
CMatrix state_output_cross(const ModalSystem& sys, double t_state, double t_obs, double tol);

/// int_0^T ||C e^{At} x||^2 dt.
double gramian_form(const ModalSystem& sys, const CVector& x, double horizon, double tol);

/// max over t in a dense log-spaced grid and all modes of t^kappa |lambda|^kappa |e^{lambda t}|.
double analytic_sup(const std::vector<cplx>& eigenvalues, double kappa);

/// Largest entrywise relative error, with entries below floor * max|ref|
/// compared absolutely against that floor.
double max_relative_error(const CMatrix& got, const CMatrix& ref, double floor = 1e-12);

/// Posterior covariance of z(T) by building the joint covariance of
/// [z(T); y(t_1); ...; y(t_m)] from the quadrature kernels and taking the
/// Schur complement with a dense LU solve.
CMatrix brute_force_posterior(const ModalSystem& sys, const std::vector<double>& times,
                              double tol = 1e-12);

}  // namespace kbconv::oracle
