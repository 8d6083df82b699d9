#include "kbconv/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace kbconv {

namespace {

double filter_error(const ModalSystem& sys, int n, const BoundOptions& options, double mu) {
  if (options.a_priori) {
    return mu * mu * weighted_second_moment(sys, Vector::Ones(sys.num_modes()));
  }
  return sequential_filter(sys, dyadic_grid(n, 0, sys.horizon()).times).trace_err;
}

void check_n(int n) {
  if (n < 1) throw ValidationError(fmt::format("n must be >= 1, got {}", n));
}

double fitted_delta(const ModalSystem& sys, const BoundOptions& options) {
  const double d = options.delta.value_or(spectral_parameters(sys, 0.0).delta_fit);
  if (!std::isfinite(d) || d <= 0.5) {
    throw ValidationError(fmt::format("spectral growth exponent delta must exceed 1/2, got {}", d));
  }
  return d;
}

void require_real_negative(const ModalSystem& sys, const char* what) {
  for (const cplx& l : sys.eigenvalues()) {
    if (l.imag() != 0.0 || !(l.real() < 0.0)) {
      throw ValidationError(fmt::format("{} needs a real negative spectrum; found {}{:+}i", what,
                                        l.real(), l.imag()));
    }
  }
}

TheoremBound start(int theorem, const ModalSystem& sys, int n, Exponents e) {
  TheoremBound b;
  b.theorem = theorem;
  b.model_id = sys.id();
  b.n = n;
  b.horizon = sys.horizon();
  b.exponent_n = e.n;
  b.exponent_t = e.t;
  b.ingredients.min_r_eig = sys.min_r_eigenvalue();
  b.ingredients.trace_q = sys.q_cov().trace();
  return b;
}

// Gamma_check = 0.9 Gamma, lowered to the tail infimum when the tail already
// dips below it.
double checked_lower_constant(const SpectralParams& sp, int n, bool& fired) {
  double g = 0.9 * sp.gamma_limit;
  fired = false;
  if (std::isfinite(sp.gamma_check) && sp.gamma_check < g) {
    spdlog::warn("tail guard: |lambda_k|/k^delta drops to {:.6g} < 0.9 Gamma = {:.6g} for k >= {} (n = {}); using it",
                 sp.gamma_check, g, sp.tail_start, n);
    g = sp.gamma_check;
    fired = true;
  }
  return g;
}

}  // namespace

double TheoremBound::value() const {
  if (theorem == 5) return m1 / n + m2 / (static_cast<double>(n) * n) + err_x;
  return constant * std::pow(horizon, exponent_t) / std::pow(static_cast<double>(n), exponent_n);
}

Exponents diagonal_exponents(double delta, double gamma, double epsilon) {
  return {2.0 - 2.0 * gamma - 1.0 / (delta - epsilon), 3.0 - 2.0 * gamma - 1.0 / (delta + epsilon)};
}

Exponents admissible_exponents(double delta) {
  return {1.0 - 1.0 / (2.0 * delta), 2.0 - 1.0 / (2.0 * delta)};
}

Exponents sectorial_exponents(double nu, double eta) {
  const double e = 1.0 + 2.0 * (eta - nu);
  return {e, e};
}

TheoremBound theorem1_bound(const ModalSystem& sys, int n, double gamma, const BoundOptions& options) {
  check_n(n);
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError(fmt::format("gamma must lie in [0, 1), got {}", gamma));
  const double delta = fitted_delta(sys, options);
  if (!(2.0 * gamma + 1.0 / delta < 2.0)) {
    throw ValidationError(fmt::format("need 2 gamma + 1/delta < 2, got gamma = {}, delta = {}", gamma, delta));
  }
  const double eps = options.epsilon.value_or(0.0);
  if (options.epsilon && !(eps > 0.0 && eps < delta - 1.0 / (2.0 - gamma))) {
    throw ValidationError(fmt::format("epsilon must lie in (0, {}), got {}", delta - 1.0 / (2.0 - gamma), eps));
  }

  auto out = start(1, sys, n, diagonal_exponents(delta, gamma, eps));
  auto& in = out.ingredients;
  const auto upper = spectral_parameters(sys, gamma, n, delta + eps);
  const auto lower = spectral_parameters(sys, gamma, n, delta - eps);
  in.delta = delta;
  in.gamma = gamma;
  in.epsilon = eps;
  in.mu = upper.mu;
  in.gamma_hat = upper.gamma_hat;
  in.gamma_check = checked_lower_constant(lower, n, in.tail_guard_fired);
  in.sup_ratio = upper.sup_ratio;
  in.state_moment = sys.domain_second_moment();
  in.filter_error = filter_error(sys, n, options, in.mu);

  const double spread = std::max(std::pow(9.0, delta + eps) * std::pow(in.gamma_hat, 2.0 * gamma) / 4.0,
                                 4.0 / std::pow(in.gamma_check, 4.0 - 2.0 * gamma));
  out.constant = 2.0 * in.mu * in.filter_error * in.state_moment /
                 ((std::pow(2.0, out.exponent_n) - 1.0) * in.min_r_eig) * in.sup_ratio * in.sup_ratio * spread;
  return out;
}

TheoremBound theorem2_bound(const ModalSystem& sys, int n, const BoundOptions& options) {
  check_n(n);
  const double delta = fitted_delta(sys, options);
  const double horizon = sys.horizon();
  if (horizon / (2.0 * n) > 1.0) {
    throw ValidationError(fmt::format("admissible bound needs T/(2n) <= 1, got {}", horizon / (2.0 * n)));
  }
  auto out = start(2, sys, n, admissible_exponents(delta));
  auto& in = out.ingredients;
  const auto sp = spectral_parameters(sys, 0.0, n, delta);
  in.delta = delta;
  in.mu = sp.mu;
  in.gamma_hat = sp.gamma_hat;

  const Vector w = modal_weights(sys, {WeightSpec::Kind::index, delta, sp.gamma_hat});
  in.output_norm = output_operator_norm(sys, w);
  in.state_moment = weighted_second_moment(sys, w);
  in.h_t = admissibility_constant(sys, horizon);
  in.filter_error = filter_error(sys, n, options, in.mu);

  const double g2 = in.gamma_hat * in.gamma_hat;
  const double level = std::pow(3.0, 2.0 * delta + 1.0) * horizon * in.mu * in.mu * in.output_norm *
                           in.output_norm * g2 / (8.0 * delta + 4.0) +
                       in.h_t * in.h_t / ((2.0 * delta - 1.0) * g2);
  out.constant = 2.0 * level * in.state_moment * in.filter_error /
                 ((std::pow(2.0, out.exponent_n) - 1.0) * in.min_r_eig) / horizon;
  return out;
}

TheoremBound theorem3_bound(const ModalSystem& sys, int n, OperatorCase which, const BoundOptions& options) {
  check_n(n);
  require_real_negative(sys, "analytic-semigroup bound");
  auto out = start(3, sys, n, {1.0, 1.0});
  auto& in = out.ingredients;
  in.mu = spectral_parameters(sys, 0.0).mu;
  in.c_kappa = analytic_constant(1.0);
  const Vector w = which == OperatorCase::bounded ? Vector::Ones(sys.num_modes())
                                                  : modal_weights(sys, {WeightSpec::Kind::graph});
  in.output_norm = output_operator_norm(sys, w);
  in.state_moment = weighted_second_moment(sys, w);
  in.filter_error = filter_error(sys, n, options, in.mu);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  out.constant = 2.0 * in.output_norm * in.output_norm / in.min_r_eig *
                 (in.mu * in.mu + in.c_kappa * in.c_kappa * pi2 / 96.0) * in.filter_error * in.state_moment;
  return out;
}

TheoremBound theorem4_bound(const ModalSystem& sys, int n, double nu, double eta, const BoundOptions& options) {
  check_n(n);
  const double d = eta - nu;
  if (!(std::abs(d) < 0.5)) throw ValidationError(fmt::format("need |eta - nu| < 1/2, got {}", d));
  require_real_negative(sys, "sectorial bound");
  auto out = start(4, sys, n, sectorial_exponents(nu, eta));
  auto& in = out.ingredients;
  in.nu = nu;
  in.eta = eta;
  in.mu = spectral_parameters(sys, 0.0).mu;
  in.c_kappa = analytic_constant(1.0 - d);
  in.output_norm = output_operator_norm(sys, modal_weights(sys, {WeightSpec::Kind::power, nu}));
  in.state_moment = weighted_second_moment(sys, modal_weights(sys, {WeightSpec::Kind::power, eta}));
  in.filter_error = filter_error(sys, n, options, in.mu);

  const double first = d > 0.0
                           ? 4.0 * std::log(2.0) * std::log(2.0) * in.c_kappa * in.c_kappa / ((1.0 + d) * (1.0 + d))
                           : std::pow(2.0, 2.0 + 2.0 * d) * std::pow(analytic_constant(-d), 2) / ((1.0 + d) * (1.0 + d));
  // l > 1 terms: (h^2 c / (2 (2h)^kappa))^2 = c^2 h^(2+2d) / 2^(4-2d)
  const double rest = in.c_kappa * in.c_kappa / std::pow(2.0, 4.0 - 2.0 * d) * (2.0 - 2.0 * d) / (1.0 - 2.0 * d);
  out.constant = 2.0 * in.output_norm * in.output_norm * in.filter_error * in.state_moment /
                 ((std::pow(2.0, out.exponent_n) - 1.0) * in.min_r_eig) * (first + rest);
  return out;
}

TheoremBound theorem5_bound(const ModalSystem& sys, int n, const TheoremBound& state_part,
                            const BoundOptions& options) {
  check_n(n);
  if (!sys.has_input_noise()) {
    throw ValidationError("input-noise bound needs nonzero input noise; use a no-input bound");
  }
  if (state_part.model_id != sys.id() || state_part.n != n || state_part.theorem == 5) {
    throw ValidationError("err_x must come from a no-input bound on the same model and n");
  }
  const double horizon = sys.horizon();
  auto out = start(5, sys, n, {1.0, 2.0});
  auto& in = out.ingredients;
  in.mu = spectral_parameters(sys, 0.0).mu;
  const Vector w = modal_weights(sys, {WeightSpec::Kind::graph});
  in.output_norm = output_operator_norm(sys, w);
  in.input_norm = input_operator_norm(sys, w);
  in.h_t = admissibility_constant(sys, horizon);
  in.filter_error = filter_error(sys, n, options, in.mu);

  const double common = in.trace_q * in.input_norm * in.input_norm * in.filter_error / in.min_r_eig;
  out.m1 = horizon * horizon / 2.0 * common * in.output_norm * in.output_norm;
  out.m2 = horizon * horizon * horizon / 3.0 * common * in.h_t * in.h_t;
  out.err_x = state_part.value();
  out.constant = out.m1;
  return out;
}

CMatrix observability_gramian(const ModalSystem& sys, double horizon) {
  if (!(horizon >= 0.0)) throw ValidationError("horizon must be >= 0");
  const int n = sys.num_modes();
  const CMatrix& c = sys.output_coeffs();
  const CMatrix cc = c.adjoint() * c;
  CMatrix g(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      g(k, l) = cc(k, l) * horizon * phi1((std::conj(sys.eigenvalue(k)) + sys.eigenvalue(l)) * horizon);
    }
  }
  return 0.5 * (g + g.adjoint());
}

double admissibility_constant(const ModalSystem& sys, double horizon) {
  const CMatrix g = observability_gramian(sys, horizon);
  const double top = Eigen::SelfAdjointEigenSolver<CMatrix>(g, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return std::sqrt(std::max(top, 0.0));
}

double analytic_constant(double kappa) {
  if (!(kappa >= 0.0)) throw ValidationError(fmt::format("kappa must be >= 0, got {}", kappa));
  if (kappa == 0.0) return 1.0;
  return std::pow(kappa / std::numbers::e, kappa);
}

namespace {

void check_weights(const ModalSystem& sys, const Vector& w) {
  if (w.size() != sys.num_modes()) throw ValidationError("weights must have one entry per mode");
  if (!(w.array() > 0.0).all() || !w.allFinite()) throw ValidationError("weights must be positive and finite");
}

double top_singular_value(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<CMatrix>(m).singularValues()(0);
}

}  // namespace

double output_operator_norm(const ModalSystem& sys, const Vector& weights) {
  check_weights(sys, weights);
  return top_singular_value(sys.output_coeffs() * weights.cwiseSqrt().cwiseInverse().cast<cplx>().asDiagonal());
}

double input_operator_norm(const ModalSystem& sys, const Vector& weights) {
  check_weights(sys, weights);
  return top_singular_value(weights.cwiseSqrt().cast<cplx>().asDiagonal() * sys.input_coeffs());
}

double weighted_second_moment(const ModalSystem& sys, const Vector& weights) {
  check_weights(sys, weights);
  return (weights.array() * (sys.prior_var().array() + sys.prior_mean().cwiseAbs2().array())).sum();
}

RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("need at least two (x, y) pairs");
  const int m = static_cast<int>(x.size());
  std::vector<double> lx(m), ly(m);
  for (int i = 0; i < m; ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw ValidationError("log-log fit needs positive data");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < m; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("log-log fit needs distinct x values");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  fit.points = m;
  return fit;
}

RateFit fit_rate(const DiscrepancyCurve& curve) {
  std::vector<double> x, y;
  for (const auto& row : curve.rows) {
    if (row.discrepancy > 0.0) {
      x.push_back(row.n);
      y.push_back(row.discrepancy);
    } else {
      spdlog::warn("fit_rate: dropping n = {} with D = {:.3g}", row.n, row.discrepancy);
    }
  }
  if (x.size() < 3) {
    throw ValidationError(fmt::format("fit_rate needs >= 3 rows with D > 0, have {}", x.size()));
  }
  return fit_loglog(x, y);
}

BoundReport check_bound(const DiscrepancyCurve& curve, const std::vector<TheoremBound>& bounds) {
  if (bounds.empty()) throw ValidationError("no bounds to check");
  BoundReport report;
  report.theorem = bounds.front().theorem;
  report.model_id = curve.model_id;
  report.pass = true;
  for (const auto& b : bounds) {
    if (b.model_id != curve.model_id) {
      throw ValidationError(fmt::format("bound for model '{}' checked against curve for '{}'", b.model_id,
                                        curve.model_id));
    }
  }
  for (const auto& row : curve.rows) {
    auto it = std::find_if(bounds.begin(), bounds.end(), [&](const TheoremBound& b) { return b.n == row.n; });
    if (it == bounds.end()) throw ValidationError(fmt::format("no bound computed for n = {}", row.n));
    BoundCheckRow r{row.n, it->value(), row.discrepancy, false};
    r.pass = r.measured <= r.bound;
    report.pass = report.pass && r.pass;
    report.rows.push_back(r);
  }
  return report;
}

}  // namespace kbconv
