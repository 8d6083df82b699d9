#include "kbconv/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace kbconv {

namespace {

template <typename M>
void hermitize(M& m) {
  m = (0.5 * (m + m.adjoint())).eval();
}

double real_trace(const CMatrix& m) { return m.trace().real(); }

// Index of the cached transition for step h, building it on a miss. Dyadic
// steps recovered by subtraction differ by a few ulps of T.
int cached_block(const ModalSystem& sys, std::vector<TransitionBlocks>& cache, double h) {
  const double tol = 1e-12 * h + 4.0 * std::numeric_limits<double>::epsilon() * sys.horizon();
  for (std::size_t i = 0; i < cache.size(); ++i) {
    if (std::abs(cache[i].step - h) <= tol) return static_cast<int>(i);
  }
  cache.push_back(transition_blocks(sys, h));
  return static_cast<int>(cache.size()) - 1;
}

// SPD factorization of an observation Gram matrix with a single bounded
// jitter retry.
Eigen::LLT<Matrix> factor_gram(Matrix& gram) {
  Eigen::LLT<Matrix> llt(gram);
  const double eps = std::numeric_limits<double>::epsilon();
  if (llt.info() == Eigen::Success && llt.rcond() > eps) return llt;
  const double jitter = 1e-12 * gram.trace() / static_cast<double>(gram.rows());
  spdlog::warn("observation Gram matrix near-singular (dim {}), adding jitter {:.3e}",
               gram.rows(), jitter);
  gram.diagonal().array() += jitter;
  llt.compute(gram);
  if (llt.info() == Eigen::Success && llt.rcond() > eps) return llt;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  throw NumericalError(fmt::format(
      "observation Gram matrix is numerically singular (dim {}, condition estimate {:.3e})",
      gram.rows(), lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()));
}

// Cov(y(s), y(t)) for cumulative outputs including the Brownian output noise.
Matrix observation_kernel(const ModalSystem& sys, double s, double t) {
  const int r = sys.num_outputs();
  if (s == 0.0 || t == 0.0) return Matrix::Zero(r, r);
  return output_covariance_kernel(sys, s, t).real() + sys.r_cov() * std::min(s, t);
}

Matrix observation_gram(const ModalSystem& sys, const std::vector<double>& times) {
  const int r = sys.num_outputs();
  const int m = static_cast<int>(times.size());
  Matrix gram(m * r, m * r);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      const Matrix block = observation_kernel(sys, times[i], times[j]);
      gram.block(i * r, j * r, r, r) = block;
      if (j != i) gram.block(j * r, i * r, r, r) = block.transpose();
    }
  }
  return 0.5 * (gram + gram.transpose());
}

CMatrix cross_block(const ModalSystem& sys, const std::vector<double>& times, double t_state) {
  const int r = sys.num_outputs();
  const int m = static_cast<int>(times.size());
  CMatrix cross(sys.num_modes(), m * r);
  for (int j = 0; j < m; ++j) cross.middleCols(j * r, r) = state_output_cross(sys, t_state, times[j]);
  return cross;
}

// a^* G^{-1} b with G real SPD and a, b complex.
CMatrix solve_complex(const Eigen::LLT<Matrix>& llt, const CMatrix& rhs) {
  CMatrix out(rhs.rows(), rhs.cols());
  out.real() = llt.solve(Matrix(rhs.real()));
  out.imag() = llt.solve(Matrix(rhs.imag()));
  return out;
}

bool contains_time(const std::vector<double>& sorted, double t, double tol) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), t - tol);
  return it != sorted.end() && std::abs(*it - t) <= tol;
}

}  // namespace

void validate_times(const ModalSystem& sys, const std::vector<double>& times) {
  const double horizon = sys.horizon();
  double prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (!std::isfinite(t) || t <= 0.0 || t > horizon * (1.0 + 1e-12)) {
      throw ValidationError(fmt::format("sample time {} = {} outside (0, T = {}]", i, t, horizon));
    }
    if (i > 0 && !(t > prev)) {
      throw ValidationError(fmt::format("sample times must be strictly increasing (index {})", i));
    }
    prev = t;
  }
}

FilterPlan::FilterPlan(const ModalSystem& sys, const std::vector<double>& times) {
  build(sys, times, false, true);
}

void FilterPlan::build(const ModalSystem& sys, const std::vector<double>& times,
                       bool keep_snapshots, bool keep_gains) {
  validate_times(sys, times);
  const CMatrix r_cov = sys.r_cov().cast<cplx>();
  prior_mean_ = sys.prior_mean();
  run_.grid = times;

  CMatrix p = sys.prior_var().cast<cplx>().asDiagonal();
  double prev = 0.0;
  for (const double t : times) {
    const double h = t - prev;
    const int idx = cached_block(sys, blocks_, h);
    const TransitionBlocks& b = blocks_[idx];
    const CMatrix& g = b.integrator;

    const CMatrix pg = p * g.adjoint();
    const CMatrix pzy = b.decay.asDiagonal() * pg + b.sigma_zy;
    CMatrix s = g * pg + b.sigma_yy + r_cov * h;
    hermitize(s);
    p.array() *= (b.decay * b.decay.adjoint()).array();
    p += b.sigma_zz;

    Eigen::LLT<CMatrix> llt(s);
    if (llt.info() != Eigen::Success) {
      throw NumericalError(fmt::format("innovation covariance not positive definite at t = {}", t));
    }
    const CMatrix gain = llt.solve(pzy.adjoint()).adjoint();
    p -= gain * pzy.adjoint();
    hermitize(p);

    if (keep_gains) steps_.push_back({idx, gain});
    if (keep_snapshots) run_.snapshots.push_back(p);
    prev = t;
  }
  const double tail = sys.horizon() - prev;
  if (tail > 1e-12 * sys.horizon()) {
    tail_block_ = cached_block(sys, blocks_, tail);
    const TransitionBlocks& b = blocks_[tail_block_];
    p.array() *= (b.decay * b.decay.adjoint()).array();
    p += b.sigma_zz;
    hermitize(p);
  }
  run_.final_cov = std::move(p);
  run_.trace_err = real_trace(run_.final_cov);
}

CVector FilterPlan::estimate(const std::vector<Vector>& increments) const {
  if (increments.size() != steps_.size()) {
    throw ValidationError(fmt::format("expected {} output increments, got {}", steps_.size(),
                                      increments.size()));
  }
  CVector z = prior_mean_;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const TransitionBlocks& b = blocks_[steps_[i].block];
    const CVector innovation = increments[i].cast<cplx>() - b.integrator * z;
    z = b.decay.cwiseProduct(z) + steps_[i].gain * innovation;
  }
  if (tail_block_ >= 0) z = blocks_[tail_block_].decay.cwiseProduct(z);
  return z;
}

FilterRun sequential_filter(const ModalSystem& sys, const std::vector<double>& times,
                            bool keep_snapshots) {
  FilterPlan plan;
  plan.build(sys, times, keep_snapshots, false);
  return std::move(plan.run_);
}

CMatrix batch_conditional_covariance(const ModalSystem& sys, const std::vector<double>& times,
                                     double t_state) {
  validate_times(sys, times);
  CMatrix prior = state_covariance(sys, t_state);
  if (times.empty()) return prior;
  Matrix gram = observation_gram(sys, times);
  const auto llt = factor_gram(gram);
  const CMatrix cross = cross_block(sys, times, t_state);
  CMatrix post = prior - cross * solve_complex(llt, cross.adjoint());
  hermitize(post);
  return post;
}

FilterRun batch_condition(const ModalSystem& sys, const std::vector<double>& times) {
  FilterRun run;
  run.grid = times;
  run.final_cov = batch_conditional_covariance(sys, times, sys.horizon());
  run.trace_err = real_trace(run.final_cov);
  return run;
}

double increment_variance(const ModalSystem& sys, const std::vector<double>& base_times,
                          double new_time, double h) {
  validate_times(sys, base_times);
  const double horizon = sys.horizon();
  const double tol = 1e-12 * horizon;
  if (!(h > 0.0)) throw ValidationError("increment_variance: h must be positive");
  const double left = new_time - h;
  const double right = new_time + h;
  if (left < -tol || right > horizon + tol) {
    throw ValidationError(fmt::format("interpolation stencil [{}, {}] leaves [0, T]", left, right));
  }
  const bool left_is_origin = std::abs(left) <= tol;
  if (!left_is_origin && !contains_time(base_times, left, tol)) {
    throw ValidationError(fmt::format("stencil point t - h = {} is not a base sample", left));
  }
  if (!contains_time(base_times, right, tol)) {
    throw ValidationError(fmt::format("stencil point t + h = {} is not a base sample", right));
  }
  for (const double s : base_times) {
    if (s > left + tol && s < right - tol) {
      throw ValidationError(
          fmt::format("base sample {} lies inside the stencil ({}, {})", s, left, right));
    }
  }

  const int n = sys.num_modes();
  const int r = sys.num_outputs();
  const auto& lam = sys.eigenvalues();
  const Matrix& r_cov = sys.r_cov();

  if (!sys.has_input_noise()) {
    // Interpolated output y(t) - (y(t-h) + y(t+h))/2 = C_h x + noise with
    // covariance (h/2) R, independent of every base sample's noise.
    const CMatrix p0 = batch_conditional_covariance(sys, base_times, 0.0);
    CMatrix ch(r, n);
    CVector decay(n);
    for (int k = 0; k < n; ++k) {
      ch.col(k) = sys.output_coeffs().col(k) * phi_h(lam[k], new_time, h);
      decay(k) = std::exp(lam[k] * horizon);
    }
    CMatrix s = ch * p0 * ch.adjoint() + (0.5 * h) * r_cov.cast<cplx>();
    hermitize(s);
    Eigen::LLT<CMatrix> llt(s);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("interpolated-output covariance not positive definite");
    }
    const CMatrix m = decay.asDiagonal() * p0 * ch.adjoint();
    return (m * llt.solve(m.adjoint())).trace().real();
  }

  // With input noise the interpolated output also carries u; condition the
  // same linear combination of outputs on the base samples directly.
  struct Tap {
    double t;
    double w;
  };
  std::vector<Tap> taps{{new_time, 1.0}, {right, -0.5}};
  if (!left_is_origin) taps.push_back({left, -0.5});

  Matrix var = Matrix::Zero(r, r);
  for (const Tap& a : taps) {
    for (const Tap& b : taps) var += a.w * b.w * observation_kernel(sys, a.t, b.t);
  }
  CMatrix cov_z = CMatrix::Zero(n, r);
  for (const Tap& a : taps) cov_z += a.w * state_output_cross(sys, horizon, a.t);

  if (!base_times.empty()) {
    const int m = static_cast<int>(base_times.size());
    Matrix cov_b = Matrix::Zero(m * r, r);
    for (int j = 0; j < m; ++j) {
      for (const Tap& a : taps) cov_b.middleRows(j * r, r) += a.w * observation_kernel(sys, base_times[j], a.t);
    }
    Matrix gram = observation_gram(sys, base_times);
    const auto llt = factor_gram(gram);
    const Matrix solved = llt.solve(cov_b);
    var -= cov_b.transpose() * solved;
    cov_z -= cross_block(sys, base_times, horizon) * solved.cast<cplx>();
  }
  var = 0.5 * (var + var.transpose());
  Eigen::LLT<Matrix> vllt(var);
  if (vllt.info() != Eigen::Success) {
    throw NumericalError("conditional interpolated-output variance not positive definite");
  }
  return (cov_z * solve_complex(vllt, cov_z.adjoint())).trace().real();
}

}  // namespace kbconv
