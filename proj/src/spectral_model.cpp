#include "kbconv/spectral_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace kbconv {

namespace {

bool is_real(cplx v) { return v.imag() == 0.0; }

void check_symmetric(const Matrix& m, const char* name) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ValidationError(fmt::format("{} must be symmetric", name));
  }
}

void check_real_model(const ModalSpec& s) {
  const int n = static_cast<int>(s.eigenvalues.size());
  if (!s.conjugate_pairing) {
    for (int k = 0; k < n; ++k) {
      bool real = is_real(s.eigenvalues[k]) && is_real(s.prior_mean(k));
      for (int i = 0; i < s.output_coeffs.rows(); ++i) real = real && is_real(s.output_coeffs(i, k));
      for (int j = 0; j < s.input_coeffs.cols(); ++j) real = real && is_real(s.input_coeffs(k, j));
      if (!real) {
        throw ValidationError(fmt::format(
            "mode {} has complex data but no conjugate_pairing was given", k + 1));
      }
    }
    return;
  }
  const auto& partner = *s.conjugate_pairing;
  if (static_cast<int>(partner.size()) != n) {
    throw ValidationError("conjugate_pairing must have one entry per mode");
  }
  for (int k = 0; k < n; ++k) {
    const int l = partner[k];
    if (l < 0 || l >= n || partner[l] != k) {
      throw ValidationError(fmt::format("conjugate_pairing is not an involution at mode {}", k + 1));
    }
    bool ok = s.eigenvalues[l] == std::conj(s.eigenvalues[k]) &&
              s.prior_mean(l) == std::conj(s.prior_mean(k)) && s.prior_var(l) == s.prior_var(k);
    for (int i = 0; i < s.output_coeffs.rows(); ++i) {
      ok = ok && s.output_coeffs(i, l) == std::conj(s.output_coeffs(i, k));
    }
    for (int j = 0; j < s.input_coeffs.cols(); ++j) {
      ok = ok && s.input_coeffs(l, j) == std::conj(s.input_coeffs(k, j));
    }
    if (!ok) {
      throw ValidationError(
          fmt::format("modes {} and {} are paired but not exact conjugates", k + 1, l + 1));
    }
  }
}

void validate(const ModalSpec& s) {
  const int n = static_cast<int>(s.eigenvalues.size());
  if (n < 1) throw ValidationError("num_modes must be >= 1");
  if (!(s.horizon > 0.0) || !std::isfinite(s.horizon)) {
    throw ValidationError("horizon must be positive and finite");
  }
  if (s.output_coeffs.cols() != n || s.output_coeffs.rows() < 1) {
    throw ValidationError("output_coeffs must be r x N with r >= 1");
  }
  if (s.input_coeffs.rows() != n) throw ValidationError("input_coeffs must be N x q");
  if (s.prior_mean.size() != n || s.prior_var.size() != n) {
    throw ValidationError("prior_mean and prior_var must have N entries");
  }
  const auto r = s.output_coeffs.rows();
  const auto q = s.input_coeffs.cols();
  if (s.r_cov.rows() != r || s.r_cov.cols() != r) throw ValidationError("r_cov must be r x r");
  if (s.q_cov.rows() != q || s.q_cov.cols() != q) throw ValidationError("q_cov must be q x q");

  for (int k = 0; k < n; ++k) {
    const cplx lam = s.eigenvalues[k];
    if (!std::isfinite(lam.real()) || !std::isfinite(lam.imag())) {
      throw ValidationError(fmt::format("eigenvalue {} is not finite", k + 1));
    }
    if (lam.real() > 0.0) {
      throw ValidationError(fmt::format("eigenvalue {} has positive real part", k + 1));
    }
    if (k > 0 && std::abs(lam) < std::abs(s.eigenvalues[k - 1]) * (1.0 - 1e-12)) {
      throw ValidationError(
          fmt::format("eigenvalues must be ordered by non-decreasing modulus (mode {})", k + 1));
    }
    if (!(s.prior_var(k) >= 0.0)) {
      throw ValidationError(fmt::format("prior_var {} must be non-negative", k + 1));
    }
  }

  check_symmetric(s.r_cov, "r_cov");
  Eigen::SelfAdjointEigenSolver<Matrix> r_eig(s.r_cov);
  if (!(r_eig.eigenvalues().minCoeff() > 0.0)) {
    throw ValidationError("r_cov must be positive definite");
  }
  if (q > 0) {
    check_symmetric(s.q_cov, "q_cov");
    Eigen::SelfAdjointEigenSolver<Matrix> q_eig(s.q_cov);
    const double scale = std::max(1.0, s.q_cov.cwiseAbs().maxCoeff());
    if (q_eig.eigenvalues().minCoeff() < -1e-12 * scale) {
      throw ValidationError("q_cov must be positive semidefinite");
    }
  }
  check_real_model(s);
}

CMatrix make_real_basis(const ModalSpec& s) {
  const int n = static_cast<int>(s.eigenvalues.size());
  CMatrix u = CMatrix::Identity(n, n);
  if (!s.conjugate_pairing) return u;
  const double w = 1.0 / std::numbers::sqrt2;
  const auto& partner = *s.conjugate_pairing;
  for (int k = 0; k < n; ++k) {
    const int l = partner[k];
    if (l <= k) continue;
    // alpha_k = (v_k + i v_l)/sqrt2, alpha_l = (v_k - i v_l)/sqrt2
    u(k, k) = w;
    u(k, l) = cplx(0.0, w);
    u(l, k) = w;
    u(l, l) = cplx(0.0, -w);
  }
  return u;
}

}  // namespace

ModalSystem::ModalSystem(ModalSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  const int n = num_modes();
  if (num_inputs() > 0) {
    input_gram_ = spec_.input_coeffs * spec_.q_cov.cast<cplx>() * spec_.input_coeffs.adjoint();
  } else {
    input_gram_ = CMatrix::Zero(n, n);
  }
  has_input_noise_ = input_gram_.cwiseAbs().maxCoeff() > 0.0;
  real_basis_ = make_real_basis(spec_);
  min_r_eig_ = Eigen::SelfAdjointEigenSolver<Matrix>(spec_.r_cov).eigenvalues().minCoeff();
  domain_moment_ = 0.0;
  for (int k = 0; k < n; ++k) {
    domain_moment_ += (1.0 + std::norm(spec_.eigenvalues[k])) *
                      (spec_.prior_var(k) + std::norm(spec_.prior_mean(k)));
  }
}

ModalSystem ModalSystem::with_r_cov(const Matrix& r_cov) const {
  ModalSpec copy = spec_;
  copy.r_cov = r_cov;
  return ModalSystem(std::move(copy));
}

ModalSystem ModalSystem::with_q_cov(const Matrix& q_cov) const {
  ModalSpec copy = spec_;
  copy.q_cov = q_cov;
  return ModalSystem(std::move(copy));
}

ModalSystem build_heat_model(int num_modes, double horizon, double prior_decay, double q_scalar,
                             double r_scalar) {
  if (num_modes < 1) throw ValidationError("num_modes must be >= 1");
  if (!(r_scalar > 0.0)) throw ValidationError("r_scalar must be positive");
  if (!(q_scalar >= 0.0)) throw ValidationError("q_scalar must be non-negative");
  if (!(prior_decay > 5.0)) {
    throw ValidationError(fmt::format(
        "warning: prior_decay = {} <= 5 does not keep x in D(A) under refinement", prior_decay));
  }
  constexpr double pi = std::numbers::pi;
  ModalSpec s;
  s.id = "heat";
  s.horizon = horizon;
  s.eigenvalues.resize(num_modes);
  s.output_coeffs = CMatrix::Zero(1, num_modes);
  s.input_coeffs = CMatrix::Zero(num_modes, 1);
  s.prior_mean = CVector::Zero(num_modes);
  s.prior_var = Vector::Zero(num_modes);
  for (int i = 0; i < num_modes; ++i) {
    const double k = i + 1.0;
    s.eigenvalues[i] = -pi * pi * k * k;
    s.output_coeffs(0, i) = pi * k;
    s.prior_var(i) = std::pow(k, -prior_decay);
    if (q_scalar > 0.0) s.input_coeffs(i, 0) = std::pow(k, -4.0);
  }
  s.q_cov = Matrix::Constant(1, 1, q_scalar);
  s.r_cov = Matrix::Constant(1, 1, r_scalar);
  return ModalSystem(std::move(s));
}

ModalSystem build_wave_model(int num_modes, double domain_length, double horizon,
                             double prior_decay, double r_scalar, double observation_point) {
  if (num_modes < 2 || num_modes % 2 != 0) {
    throw ValidationError("wave model needs an even num_modes (conjugate pairs)");
  }
  if (!(domain_length > 0.0)) throw ValidationError("domain_length must be positive");
  if (!(r_scalar > 0.0)) throw ValidationError("r_scalar must be positive");
  if (!(prior_decay > 3.0)) {
    throw ValidationError("wave prior_decay must exceed 3 for a D(A)-valued initial state");
  }
  if (!(observation_point > 0.0 && observation_point < 1.0)) {
    throw ValidationError("observation_point must lie in (0, 1)");
  }
  constexpr double pi = std::numbers::pi;
  const int pairs = num_modes / 2;
  ModalSpec s;
  s.id = "wave";
  s.horizon = horizon;
  s.eigenvalues.resize(num_modes);
  s.output_coeffs = CMatrix::Zero(1, num_modes);
  s.input_coeffs = CMatrix::Zero(num_modes, 1);
  s.prior_mean = CVector::Zero(num_modes);
  s.prior_var = Vector::Zero(num_modes);
  std::vector<int> partner(num_modes);
  for (int j = 1; j <= pairs; ++j) {
    const int a = 2 * j - 2;
    const int b = 2 * j - 1;
    const double omega = pi * j / domain_length;
    s.eigenvalues[a] = cplx(0.0, omega);
    s.eigenvalues[b] = cplx(0.0, -omega);
    // e_j^(+-) = (s_j / (+-i omega_j), s_j) / sqrt2 with s_j = sqrt(2/L) sin(j pi x / L);
    // the velocity at x0 gives C e = s_j(x0) / sqrt2.
    const double c = std::sin(j * pi * observation_point) / std::sqrt(domain_length);
    s.output_coeffs(0, a) = c;
    s.output_coeffs(0, b) = c;
    s.prior_var(a) = s.prior_var(b) = std::pow(static_cast<double>(j), -prior_decay);
    partner[a] = b;
    partner[b] = a;
  }
  s.q_cov = Matrix::Zero(1, 1);
  s.r_cov = Matrix::Constant(1, 1, r_scalar);
  s.conjugate_pairing = std::move(partner);
  return ModalSystem(std::move(s));
}

SpectralParams spectral_parameters(const ModalSystem& sys, double gamma, int base_n,
                                   std::optional<double> delta) {
  if (base_n < 1) throw ValidationError("base_n must be >= 1");
  const int n = sys.num_modes();
  const auto& lam = sys.eigenvalues();
  SpectralParams out;

  // Least squares of log|lambda| against log(rank) over distinct non-zero moduli.
  std::vector<double> xs, ys;
  double last = -1.0;
  int rank = 0;
  for (int k = 0; k < n; ++k) {
    const double m = std::abs(lam[k]);
    if (m == 0.0) continue;
    if (last < 0.0 || m > last * (1.0 + 1e-12)) {
      ++rank;
      xs.push_back(std::log(static_cast<double>(rank)));
      ys.push_back(std::log(m));
      last = m;
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    out.delta_fit = sxy / sxx;
  } else {
    out.delta_fit = std::numeric_limits<double>::quiet_NaN();
  }

  const double d = delta.value_or(out.delta_fit);
  const double horizon = sys.horizon();
  if (std::isfinite(d) && d > 0.0) {
    out.gamma_hat = 0.0;
    for (int k = 0; k < n; ++k) {
      out.gamma_hat = std::max(out.gamma_hat, std::abs(lam[k]) / std::pow(k + 1.0, d));
    }
    out.gamma_limit = std::abs(lam[n - 1]) / std::pow(static_cast<double>(n), d);
    out.tail_start =
        static_cast<int>(std::ceil(std::pow(2.0 * base_n / horizon, 1.0 / d) - 1e-12));
    out.tail_start = std::max(out.tail_start, 1);
    out.gamma_check = std::numeric_limits<double>::infinity();
    for (int k = out.tail_start - 1; k < n; ++k) {
      out.gamma_check = std::min(out.gamma_check, std::abs(lam[k]) / std::pow(k + 1.0, d));
    }
  }

  const CMatrix& c = sys.output_coeffs();
  out.sup_ratio = 0.0;
  for (int k = 0; k < n; ++k) {
    const double cn = c.col(k).norm();
    if (cn == 0.0) continue;
    const double m = std::abs(lam[k]);
    if (m == 0.0 && gamma > 0.0) {
      out.sup_ratio = std::numeric_limits<double>::infinity();
      continue;
    }
    out.sup_ratio = std::max(out.sup_ratio, cn / std::pow(m, gamma));
  }

  out.mu = 1.0;
  for (int k = 0; k < n; ++k) out.mu = std::max(out.mu, std::exp(lam[k].real() * horizon));
  return out;
}

}  // namespace kbconv
