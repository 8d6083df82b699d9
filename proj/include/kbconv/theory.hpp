#pragma once

// Convergence-rate bounds D(n) <= M T^a / n^b for the sampled estimate, with
// every constant assembled from the truncated model actually filtered, plus
// empirical rate fitting against discrepancy curves.

#include <optional>
#include <string>
#include <vector>

#include "kbconv/refinement.hpp"

namespace kbconv {

struct BoundIngredients {
  double mu = 1.0;
  double delta = 0.0;
  double gamma = 0.0;
  double epsilon = 0.0;
  double gamma_hat = 0.0;
  double gamma_check = 0.0;
  bool tail_guard_fired = false;
  double sup_ratio = 0.0;
  double h_t = 0.0;
  double c_kappa = 0.0;   // c(1) for the analytic bounds, c(1 - eta + nu) for the sectorial one
  double nu = 0.0;
  double eta = 0.0;
  double output_norm = 0.0;  // ||C|| in the operator norm the theorem uses
  double input_norm = 0.0;   // ||B||_{L(U, D(A))}
  double min_r_eig = 0.0;
  double trace_q = 0.0;
  double state_moment = 0.0;  // E||x||^2 in the theorem's norm
  double filter_error = 0.0;  // E||z_hat_{T,n} - z(T)||^2, or its a-priori substitute
};

struct TheoremBound {
  int theorem = 0;
  std::string model_id;
  int n = 0;
  double horizon = 1.0;
  double exponent_n = 0.0;  // b
  double exponent_t = 0.0;  // a
  double constant = 0.0;    // M
  double m1 = 0.0, m2 = 0.0, err_x = 0.0;  // input-noise bound only
  BoundIngredients ingredients;

  /// M T^a / n^b, or M1/n + M2/n^2 + err_x for the input-noise bound.
  double value() const;
};

struct BoundOptions {
  /// Replace the filter error by mu^2 E||x||^2 (no filter run needed).
  bool a_priori = false;
  /// Spectral growth exponent; defaults to the fitted one.
  std::optional<double> delta;
  /// Diagonal bound without a spectral limit: exponents at delta -+ epsilon.
  std::optional<double> epsilon;
};

struct Exponents {
  double n = 0.0;  // b
  double t = 0.0;  // a
};

Exponents diagonal_exponents(double delta, double gamma, double epsilon = 0.0);
Exponents admissible_exponents(double delta);
Exponents sectorial_exponents(double nu, double eta);

/// Diagonal generator with spectral growth |lambda_k| ~ k^delta and
/// sup ||c_k|| / |lambda_k|^gamma < inf; requires 2 gamma + 1/delta < 2.
TheoremBound theorem1_bound(const ModalSystem& sys, int n, double gamma,
                            const BoundOptions& options = {});

/// Admissible observation operator, D(A) realized by weights (Gamma_hat k^delta)^2.
TheoremBound theorem2_bound(const ModalSystem& sys, int n, const BoundOptions& options = {});

enum class OperatorCase { bounded, domain };

/// Analytic semigroup (real negative spectrum), C bounded on X or on D(A).
TheoremBound theorem3_bound(const ModalSystem& sys, int n, OperatorCase which,
                            const BoundOptions& options = {});

/// Sectorial -A, C on D((-A)^nu), x in D((-A)^eta), |eta - nu| < 1/2.
TheoremBound theorem4_bound(const ModalSystem& sys, int n, double nu, double eta,
                            const BoundOptions& options = {});

/// Input-noise bound M1/n + M2/n^2 + err_x; err_x is the value of a no-input
/// bound computed for the same model and n.
TheoremBound theorem5_bound(const ModalSystem& sys, int n, const TheoremBound& state_part,
                            const BoundOptions& options = {});

/// G_kl = int_0^T conj(c_k e^{lambda_k t}) . c_l e^{lambda_l t} dt.
CMatrix observability_gramian(const ModalSystem& sys, double horizon);

/// Smallest H_T with ||C e^{At} x||_{L^2(0,T)} <= H_T ||x||.
double admissibility_constant(const ModalSystem& sys, double horizon);

/// c(kappa) = sup_t t^kappa ||(-A)^kappa e^{At}|| = (kappa/e)^kappa for a
/// negative self-adjoint A; c(0) = 1.
double analytic_constant(double kappa);

/// Largest singular value of C diag(w)^(-1/2): ||C|| from the weighted norm to Y.
double output_operator_norm(const ModalSystem& sys, const Vector& weights);
/// Largest singular value of diag(w)^(1/2) B: ||B|| from U to the weighted norm.
double input_operator_norm(const ModalSystem& sys, const Vector& weights);
/// sum_k w_k (p_k + |m_k|^2).
double weighted_second_moment(const ModalSystem& sys, const Vector& weights);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

/// Least squares of log y against log x.
RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

/// OLS of log D(n) on log n. Rows with D <= 0 are dropped (logged); fewer
/// than 3 remaining rows is a ValidationError.
RateFit fit_rate(const DiscrepancyCurve& curve);

struct BoundCheckRow {
  int n = 0;
  double bound = 0.0;
  double measured = 0.0;
  bool pass = false;
};

struct BoundReport {
  int theorem = 0;
  std::string model_id;
  std::vector<BoundCheckRow> rows;
  bool pass = false;
};

/// D(n) <= bound(n) for every curve row; bounds are matched by n.
BoundReport check_bound(const DiscrepancyCurve& curve, const std::vector<TheoremBound>& bounds);

}  // namespace kbconv
