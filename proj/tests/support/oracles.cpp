#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

namespace kbconv::oracle {

namespace {

using boost::math::quadrature::gauss_kronrod;

// g(v) = int_0^v e^{lambda s} ds, numerically.
cplx g_num(cplx lambda, double v, double tol) {
  if (v == 0.0) return 0.0;
  return integrate([&](double s) { return std::exp(lambda * s); }, 0.0, v, tol, "g");
}

}  // namespace

cplx integrate(const std::function<cplx(double)>& f, double a, double b, double tol,
               const char* what) {
  if (a == b) return 0.0;
  // Bisection on a fixed 31-point Kronrod rule against an absolute target
  // taken from the L1 norm of the integrand; boost's own driver uses a
  // relative target that never terminates on integrals that nearly cancel.
  double l1 = 0.0, err = 0.0;
  gauss_kronrod<double, 31>::integrate(f, a, b, 0, tol, &err, &l1);
  const double target = tol * std::max(l1, 1e-300);
  double total_err = 0.0;
  std::function<cplx(double, double, double, int)> rec = [&](double lo, double hi, double goal,
                                                              int depth) -> cplx {
    double e = 0.0, piece_l1 = 0.0;
    const cplx v = gauss_kronrod<double, 31>::integrate(f, lo, hi, 0, tol, &e, &piece_l1);
    e *= 0.5 * (hi - lo);  // boost reports the error of the rule on [-1, 1]
    // Below ~50 ulps of the piece's L1 the estimate is rounding noise.
    const bool roundoff = e <= 50.0 * std::numeric_limits<double>::epsilon() * piece_l1;
    if (e <= goal || roundoff || depth >= 40) {
      total_err += e;
      return v;
    }
    const double mid = 0.5 * (lo + hi);
    return rec(lo, mid, 0.5 * goal, depth + 1) + rec(mid, hi, 0.5 * goal, depth + 1);
  };
  const cplx val = rec(a, b, target, 0);
  if (total_err > 10.0 * target) {
    throw std::runtime_error(fmt::format("quadrature of {} on [{}, {}] did not converge: error {:.3e}, L1 {:.3e}",
                                         what, a, b, total_err, l1));
  }
  return val;
}

cplx phi_h(cplx lambda, double t, double h, double tol) {
  auto e = [&](double s) { return std::exp(lambda * s); };
  return 0.5 * (integrate(e, t - h, t, tol, "phi_h left") - integrate(e, t, t + h, tol, "phi_h right"));
}

AugmentedTransition quadrature_oracle_transition(const ModalSystem& sys, double h, double tol) {
  const int n = sys.num_modes();
  const int r = sys.num_outputs();
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();
  const CMatrix beta = sys.input_coeffs() * sys.q_cov().cast<cplx>() * sys.input_coeffs().adjoint();

  AugmentedTransition out;
  out.step = h;
  out.state_map = CMatrix::Zero(n + r, n + r);
  for (int k = 0; k < n; ++k) {
    out.state_map(k, k) = std::exp(lam[k] * h);
    out.state_map.block(n, k, r, 1) = c.col(k) * g_num(lam[k], h, tol);
  }
  out.state_map.bottomRightCorner(r, r).setIdentity();

  CMatrix szz = CMatrix::Zero(n, n), izy = CMatrix::Zero(n, n), iyy = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      if (beta(k, l) == 0.0) continue;
      const cplx a = lam[k], b = lam[l];
      szz(k, l) = beta(k, l) * integrate([&](double v) { return std::exp(a * v) * std::conj(std::exp(b * v)); },
                                         0.0, h, tol, "sigma_zz");
      izy(k, l) = beta(k, l) * integrate(
                                   [&](double v) { return std::exp(a * v) * std::conj(g_num(b, v, tol)); },
                                   0.0, h, tol, "sigma_zy");
      iyy(k, l) = beta(k, l) * integrate(
                                   [&](double v) { return g_num(a, v, tol) * std::conj(g_num(b, v, tol)); },
                                   0.0, h, tol, "sigma_yy");
    }
  }
  out.noise_cov = CMatrix::Zero(n + r, n + r);
  out.noise_cov.topLeftCorner(n, n) = szz;
  out.noise_cov.topRightCorner(n, r) = izy * c.adjoint();
  out.noise_cov.bottomLeftCorner(r, n) = (izy * c.adjoint()).adjoint();
  out.noise_cov.bottomRightCorner(r, r) = c * iyy * c.adjoint();
  return out;
}

CMatrix output_covariance(const ModalSystem& sys, double t, double t2, double tol) {
  const int n = sys.num_modes();
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();
  const CMatrix beta = sys.input_coeffs() * sys.q_cov().cast<cplx>() * sys.input_coeffs().adjoint();
  CMatrix w = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    w(k, k) = sys.prior_var()(k) * g_num(lam[k], t, tol) * std::conj(g_num(lam[k], t2, tol));
  }
  const double overlap = std::min(t, t2);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      if (beta(k, l) == 0.0 || overlap == 0.0) continue;
      const cplx a = lam[k], b = lam[l];
      w(k, l) += beta(k, l) * integrate(
                                  [&](double tau) {
                                    return g_num(a, t - tau, tol) * std::conj(g_num(b, t2 - tau, tol));
                                  },
                                  0.0, overlap, tol, "output covariance");
    }
  }
  return c * w * c.adjoint();
}

CMatrix state_output_cross(const ModalSystem& sys, double t_state, double t_obs, double tol) {
  const int n = sys.num_modes();
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();
  const CMatrix beta = sys.input_coeffs() * sys.q_cov().cast<cplx>() * sys.input_coeffs().adjoint();
  CMatrix w = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    w(k, k) = sys.prior_var()(k) * std::exp(lam[k] * t_state) * std::conj(g_num(lam[k], t_obs, tol));
  }
  const double overlap = std::min(t_state, t_obs);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      if (beta(k, l) == 0.0 || overlap == 0.0) continue;
      const cplx a = lam[k], b = lam[l];
      w(k, l) += beta(k, l) * integrate(
                                  [&](double tau) {
                                    return std::exp(a * (t_state - tau)) * std::conj(g_num(b, t_obs - tau, tol));
                                  },
                                  0.0, overlap, tol, "state-output cross");
    }
  }
  return w * c.adjoint();
}

double gramian_form(const ModalSystem& sys, const CVector& x, double horizon, double tol) {
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();
  auto f = [&](double t) {
    CVector y = CVector::Zero(c.rows());
    for (int k = 0; k < sys.num_modes(); ++k) y += c.col(k) * (std::exp(lam[k] * t) * x(k));
    return cplx(y.squaredNorm(), 0.0);
  };
  return integrate(f, 0.0, horizon, tol, "gramian form").real();
}

double analytic_sup(const std::vector<cplx>& eigenvalues, double kappa) {
  double best = 0.0;
  constexpr int kPoints = 200000;
  const double lo = std::log(1e-7), hi = std::log(1e3);
  for (int i = 0; i <= kPoints; ++i) {
    const double t = std::exp(lo + (hi - lo) * i / kPoints);
    for (const cplx lam : eigenvalues) {
      const double v = std::pow(t * std::abs(lam), kappa) * std::exp(lam.real() * t);
      best = std::max(best, v);
    }
  }
  return best;
}

double max_relative_error(const CMatrix& got, const CMatrix& ref, double floor) {
  const double scale = std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ref.rows(); ++i) {
    for (Eigen::Index j = 0; j < ref.cols(); ++j) {
      const double denom = std::max(std::abs(ref(i, j)), floor * scale);
      worst = std::max(worst, std::abs(got(i, j) - ref(i, j)) / denom);
    }
  }
  return worst;
}

CMatrix brute_force_posterior(const ModalSystem& sys, const std::vector<double>& times, double tol) {
  const int n = sys.num_modes();
  const int r = sys.num_outputs();
  const int m = static_cast<int>(times.size());
  const double horizon = sys.horizon();
  const auto& lam = sys.eigenvalues();
  const CMatrix beta = sys.input_coeffs() * sys.q_cov().cast<cplx>() * sys.input_coeffs().adjoint();

  CMatrix czz = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) czz(k, k) = sys.prior_var()(k) * std::norm(std::exp(lam[k] * horizon));
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      if (beta(k, l) == 0.0) continue;
      const cplx a = lam[k], b = lam[l];
      czz(k, l) += beta(k, l) * integrate([&](double v) { return std::exp(a * v) * std::conj(std::exp(b * v)); },
                                          0.0, horizon, tol);
    }
  }
  if (m == 0) return czz;
  CMatrix gram(m * r, m * r), cross(n, m * r);
  for (int i = 0; i < m; ++i) {
    cross.middleCols(i * r, r) = state_output_cross(sys, horizon, times[i], tol);
    for (int j = 0; j < m; ++j) {
      gram.block(i * r, j * r, r, r) = output_covariance(sys, times[i], times[j], tol) +
                                       sys.r_cov().cast<cplx>() * std::min(times[i], times[j]);
    }
  }
  return czz - cross * gram.fullPivLu().solve(cross.adjoint());
}

}  // namespace kbconv::oracle
