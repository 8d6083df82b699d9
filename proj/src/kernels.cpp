#include "kbconv/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

namespace kbconv {

namespace {

// e^x - 1 without cancellation for small |x|.
cplx expm1c(cplx x) {
  const double a = x.real();
  const double b = x.imag();
  const double s = std::sin(0.5 * b);
  return {std::expm1(a) * std::cos(b) - 2.0 * s * s, std::exp(a) * std::sin(b)};
}

// Complete homogeneous symmetric polynomials give the Taylor coefficients of
// a divided difference around the centroid of its nodes.
cplx divided_difference_taylor(std::span<const cplx> nodes, cplx center) {
  // Fixed length: with centred nodes odd-order terms can vanish identically,
  // so a small term says nothing about the tail. Spread <= 1 makes 30 plenty.
  constexpr int kTerms = 30;
  const int m = static_cast<int>(nodes.size()) - 1;
  std::array<cplx, kTerms> h{};
  h[0] = 1.0;
  for (const cplx z : nodes) {
    const cplx w = z - center;
    for (int n = 1; n < kTerms; ++n) h[n] += w * h[n - 1];
  }
  double inv_fact = 1.0;
  for (int i = 2; i <= m; ++i) inv_fact /= i;
  cplx sum = 0.0;
  for (int n = 0; n < kTerms; ++n) {
    sum += h[n] * inv_fact;
    inv_fact /= (n + m + 1);
  }
  return std::exp(center) * sum;
}

}  // namespace

cplx phi1(cplx x) {
  if (std::abs(x) < kSeriesSwitch) {
    return 1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0));
  }
  return expm1c(x) / x;
}

cplx exp_divided_difference(std::span<const cplx> nodes) {
  const std::size_t count = nodes.size();
  if (count == 0) throw ValidationError("divided difference needs at least one node");
  if (count == 1) return std::exp(nodes[0]);
  if (count == 2) {
    // exp[a, b] = e^a phi1(b - a); anchor at the node with larger real part.
    const cplx a = nodes[0].real() >= nodes[1].real() ? nodes[0] : nodes[1];
    const cplx b = a == nodes[0] ? nodes[1] : nodes[0];
    return std::exp(a) * phi1(b - a);
  }

  cplx center = 0.0;
  for (const cplx z : nodes) center += z;
  center /= static_cast<double>(count);
  double spread = 0.0;
  for (const cplx z : nodes) spread = std::max(spread, std::abs(z - center));
  if (spread <= 1.0) return divided_difference_taylor(nodes, center);

  std::size_t bi = 0, bj = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      const double d = std::abs(nodes[i] - nodes[j]);
      if (d > best) {
        best = d;
        bi = i;
        bj = j;
      }
    }
  }
  std::array<cplx, 8> without_i{}, without_j{};
  if (count > without_i.size()) throw ValidationError("too many divided-difference nodes");
  std::size_t a = 0, b = 0;
  for (std::size_t k = 0; k < count; ++k) {
    if (k != bi) without_i[a++] = nodes[k];
    if (k != bj) without_j[b++] = nodes[k];
  }
  const cplx upper = exp_divided_difference(std::span<const cplx>(without_i.data(), count - 1));
  const cplx lower = exp_divided_difference(std::span<const cplx>(without_j.data(), count - 1));
  return (upper - lower) / (nodes[bj] - nodes[bi]);
}

cplx phi_h(cplx lambda, double t, double h) {
  if (!(h > 0.0) || t < h * (1.0 - 1e-12)) {
    throw ValidationError("phi_h requires t >= h > 0");
  }
  const cplx x = lambda * h;
  if (std::abs(x) < kSeriesSwitch) {
    // -(h x / 2)(1 + x^2/12) e^{lambda t}
    return -0.5 * h * x * (1.0 + x * x / 12.0) * std::exp(lambda * t);
  }
  if (std::abs(x.real()) <= 20.0) {
    const cplx s = std::sinh(0.5 * x);
    return -2.0 * std::exp(lambda * t) * s * s / lambda;
  }
  // Strong decay: e^{lambda (t-h)} dominates, no cancellation left.
  return (2.0 * std::exp(lambda * t) - std::exp(lambda * (t - h)) - std::exp(lambda * (t + h))) /
         (2.0 * lambda);
}

TransitionBlocks transition_blocks(const ModalSystem& sys, double h) {
  if (!(h > 0.0)) throw ValidationError("transition step must be positive");
  const int n = sys.num_modes();
  const int r = sys.num_outputs();
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();

  TransitionBlocks out;
  out.step = h;
  out.decay.resize(n);
  out.integrator.resize(r, n);
  for (int k = 0; k < n; ++k) {
    out.decay(k) = std::exp(lam[k] * h);
    out.integrator.col(k) = c.col(k) * (h * phi1(lam[k] * h));
  }
  out.sigma_zz = CMatrix::Zero(n, n);
  out.sigma_zy = CMatrix::Zero(n, r);
  out.sigma_yy = CMatrix::Zero(r, r);
  if (!sys.has_input_noise()) return out;

  const CMatrix& beta = sys.input_gram();
  CMatrix zy_weights(n, n);  // beta_kl int_0^h e^{lambda_k v} conj(g_l(v)) dv
  CMatrix yy_weights(n, n);  // beta_kl int_0^h g_k(v) conj(g_l(v)) dv
  const double h2 = h * h;
  const double h3 = h2 * h;
  for (int k = 0; k < n; ++k) {
    const cplx a = lam[k] * h;
    for (int l = 0; l < n; ++l) {
      const cplx bk = beta(k, l);
      if (bk == 0.0) {
        zy_weights(k, l) = 0.0;
        yy_weights(k, l) = 0.0;
        continue;
      }
      const cplx b = std::conj(lam[l]) * h;
      const cplx s = a + b;
      out.sigma_zz(k, l) = bk * h * phi1(s);
      const std::array<cplx, 3> zy{0.0, a, s};
      zy_weights(k, l) = bk * h2 * exp_divided_difference(zy);
      const std::array<cplx, 4> yy1{0.0, 0.0, b, s};
      const std::array<cplx, 4> yy2{0.0, 0.0, a, s};
      yy_weights(k, l) =
          bk * h3 * (exp_divided_difference(yy1) + exp_divided_difference(yy2));
    }
  }
  out.sigma_zz = 0.5 * (out.sigma_zz + out.sigma_zz.adjoint()).eval();
  out.sigma_zy = zy_weights * c.adjoint();
  out.sigma_yy = c * yy_weights * c.adjoint();
  out.sigma_yy = 0.5 * (out.sigma_yy + out.sigma_yy.adjoint()).eval();
  return out;
}

AugmentedTransition assemble(const TransitionBlocks& blocks) {
  const auto n = blocks.decay.size();
  const auto r = blocks.integrator.rows();
  AugmentedTransition out;
  out.step = blocks.step;
  out.state_map = CMatrix::Zero(n + r, n + r);
  out.state_map.topLeftCorner(n, n) = blocks.decay.asDiagonal();
  out.state_map.bottomLeftCorner(r, n) = blocks.integrator;
  out.state_map.bottomRightCorner(r, r).setIdentity();
  out.noise_cov = CMatrix::Zero(n + r, n + r);
  out.noise_cov.topLeftCorner(n, n) = blocks.sigma_zz;
  out.noise_cov.topRightCorner(n, r) = blocks.sigma_zy;
  out.noise_cov.bottomLeftCorner(r, n) = blocks.sigma_zy.adjoint();
  out.noise_cov.bottomRightCorner(r, r) = blocks.sigma_yy;
  return out;
}

AugmentedTransition transition_block(const ModalSystem& sys, double h) {
  return assemble(transition_blocks(sys, h));
}

namespace {

// g_k(t) = int_0^t e^{lambda s} ds
cplx integral_exp(cplx lambda, double t) { return t == 0.0 ? cplx(0.0) : t * phi1(lambda * t); }

// int_0^t e^{a v} conj(g_l(v)) dv with b = conj(lambda_l)
cplx simplex2(cplx a, cplx b, double t) {
  const std::array<cplx, 3> nodes{0.0, a * t, (a + b) * t};
  return t * t * exp_divided_difference(nodes);
}

// int_0^t g_k(v) conj(g_l(v)) dv
cplx simplex3(cplx a, cplx b, double t) {
  const std::array<cplx, 4> n1{0.0, 0.0, b * t, (a + b) * t};
  const std::array<cplx, 4> n2{0.0, 0.0, a * t, (a + b) * t};
  return t * t * t * (exp_divided_difference(n1) + exp_divided_difference(n2));
}

void check_time(const ModalSystem& sys, double t, const char* name) {
  if (!(t >= 0.0) || t > sys.horizon() * (1.0 + 1e-12)) {
    throw ValidationError(fmt::format("{} = {} outside [0, T]", name, t));
  }
}

}  // namespace

CMatrix output_covariance_kernel(const ModalSystem& sys, double t, double t2) {
  check_time(sys, t, "t");
  check_time(sys, t2, "t2");
  if (t > t2) return output_covariance_kernel(sys, t2, t).adjoint();
  const int n = sys.num_modes();
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();
  if (t == 0.0) return CMatrix::Zero(sys.num_outputs(), sys.num_outputs());

  CVector prior(n);
  for (int k = 0; k < n; ++k) {
    prior(k) = sys.prior_var()(k) * integral_exp(lam[k], t) * std::conj(integral_exp(lam[k], t2));
  }
  CMatrix out = c * prior.asDiagonal() * c.adjoint();
  if (sys.has_input_noise()) {
    const CMatrix& beta = sys.input_gram();
    const double d = t2 - t;
    CMatrix w(n, n);
    for (int k = 0; k < n; ++k) {
      // int_0^t g_k(v) dv = t^2 exp[0, 0, lambda_k t]
      const std::array<cplx, 3> nodes{0.0, 0.0, lam[k] * t};
      const cplx gk_int = t * t * exp_divided_difference(nodes);
      for (int l = 0; l < n; ++l) {
        if (beta(k, l) == 0.0) {
          w(k, l) = 0.0;
          continue;
        }
        const cplx lb = std::conj(lam[l]);
        w(k, l) = beta(k, l) * (std::conj(integral_exp(lam[l], d)) * gk_int +
                                std::exp(lb * d) * simplex3(lam[k], lb, t));
      }
    }
    out += c * w * c.adjoint();
  }
  if (t == t2) out = 0.5 * (out + out.adjoint()).eval();
  return out;
}

CMatrix state_output_cross(const ModalSystem& sys, double t_state, double t_obs) {
  check_time(sys, t_state, "t_state");
  check_time(sys, t_obs, "t_obs");
  const int n = sys.num_modes();
  const auto& lam = sys.eigenvalues();
  const CMatrix& c = sys.output_coeffs();

  CVector prior(n);
  for (int k = 0; k < n; ++k) {
    prior(k) = sys.prior_var()(k) * std::exp(lam[k] * t_state) *
               std::conj(integral_exp(lam[k], t_obs));
  }
  CMatrix out = prior.asDiagonal() * c.adjoint();
  const double overlap = std::min(t_state, t_obs);
  if (sys.has_input_noise() && overlap > 0.0) {
    const CMatrix& beta = sys.input_gram();
    CMatrix w(n, n);
    for (int k = 0; k < n; ++k) {
      for (int l = 0; l < n; ++l) {
        if (beta(k, l) == 0.0) {
          w(k, l) = 0.0;
          continue;
        }
        const cplx lb = std::conj(lam[l]);
        cplx x;
        if (t_state >= t_obs) {
          x = std::exp(lam[k] * (t_state - t_obs)) * simplex2(lam[k], lb, t_obs);
        } else {
          const double d = t_obs - t_state;
          x = std::conj(integral_exp(lam[l], d)) * integral_exp(lam[k], t_state) +
              std::exp(lb * d) * simplex2(lam[k], lb, t_state);
        }
        w(k, l) = beta(k, l) * x;
      }
    }
    out += w * c.adjoint();
  }
  return out;
}

CMatrix state_covariance(const ModalSystem& sys, double t) {
  check_time(sys, t, "t");
  const int n = sys.num_modes();
  const auto& lam = sys.eigenvalues();
  CMatrix out = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    out(k, k) = sys.prior_var()(k) * std::exp(2.0 * lam[k].real() * t);
  }
  if (sys.has_input_noise() && t > 0.0) {
    const CMatrix& beta = sys.input_gram();
    for (int k = 0; k < n; ++k) {
      for (int l = 0; l < n; ++l) {
        if (beta(k, l) != 0.0) out(k, l) += beta(k, l) * t * phi1((lam[k] + std::conj(lam[l])) * t);
      }
    }
    out = 0.5 * (out + out.adjoint()).eval();
  }
  return out;
}

}  // namespace kbconv
