#include <array>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "kbconv/kernels.hpp"
#include "models.hpp"
#include "oracles.hpp"

namespace kbconv {
namespace {

constexpr double pi = std::numbers::pi;

cplx explicit_divided_difference(const std::vector<cplx>& z) {
  // sum_i e^{z_i} / prod_{j != i} (z_i - z_j); fine for well-separated nodes.
  cplx sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    cplx den = 1.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (j != i) den *= z[i] - z[j];
    }
    sum += std::exp(z[i]) / den;
  }
  return sum;
}

TEST(Phi1, SeriesAndDirectBranchesAgreeAtSwitch) {
  auto long_series = [](cplx x) {
    cplx sum = 0.0, term = 1.0;
    for (int n = 1; n <= 12; ++n) {
      sum += term;
      term *= x / static_cast<double>(n + 1);
    }
    return sum;
  };
  for (const cplx dir : {cplx(1, 0), cplx(-1, 0), cplx(0, 1), cplx(-0.6, 0.8)}) {
    for (double scale : {0.999, 1.001, 10.0}) {
      const cplx x = dir * (kSeriesSwitch * scale);
      EXPECT_LT(std::abs(phi1(x) - long_series(x)), 4e-16) << x;
    }
  }
  EXPECT_EQ(phi1(0.0), cplx(1.0));
  EXPECT_NEAR(std::abs(phi1(cplx(-3.0, 0.0)) - (1.0 - std::exp(-3.0)) / 3.0), 0.0, 1e-15);
}

TEST(ExpDividedDifference, MatchesExplicitFormulaOnSeparatedNodes) {
  const std::vector<std::vector<cplx>> cases = {
      {0.0, cplx(-2.0, 0.0), cplx(-5.0, 0.0)},
      {0.0, cplx(0.0, 3.0), cplx(-1.0, -2.0)},
      {0.0, cplx(-1.3, 0.2), cplx(-4.0, 1.0), cplx(-8.0, -2.0)},
      {cplx(0.2, 0.1), cplx(-0.7, 0.4), cplx(0.1, -0.6)},  // Taylor branch
      {cplx(-0.99, 0.0), 0.0, cplx(0.99, 0.0)},              // odd Taylor terms vanish
      {0.0, cplx(-0.987, 0.0), cplx(-1.974, 0.0)},
  };
  for (const auto& z : cases) {
    const cplx got = exp_divided_difference(z);
    const cplx want = explicit_divided_difference(z);
    EXPECT_LT(std::abs(got - want), 1e-12 * std::abs(want));
  }
}

TEST(ExpDividedDifference, ConfluentNodes) {
  const std::array<cplx, 3> triple{-0.4, -0.4, -0.4};
  EXPECT_NEAR(std::abs(exp_divided_difference(triple) - std::exp(-0.4) / 2.0), 0.0, 1e-15);
  const std::array<cplx, 4> zeros{0.0, 0.0, 0.0, 0.0};
  EXPECT_NEAR(std::abs(exp_divided_difference(zeros) - 1.0 / 6.0), 0.0, 1e-15);
  // exp[0, 0, x] = (e^x - 1 - x) / x^2
  const double x = -7.0;
  const std::array<cplx, 3> nodes{0.0, 0.0, x};
  EXPECT_NEAR(exp_divided_difference(nodes).real(), (std::exp(x) - 1.0 - x) / (x * x), 1e-15);
}

TEST(PhiH, ZeroEigenvalueGivesZero) {
  for (double t : {0.25, 0.5, 1.0}) {
    for (double h : {1e-3, 0.1, 0.25}) EXPECT_EQ(phi_h(0.0, t, h), cplx(0.0));
  }
}

TEST(PhiH, MatchesQuadrature) {
  EXPECT_NEAR(std::abs(phi_h(-1.0, 1.0, 0.25) - oracle::phi_h(-1.0, 1.0, 0.25)), 0.0, 1e-10);
  EXPECT_NEAR(std::abs(phi_h(cplx(-2.0, 9.0), 0.7, 0.05) - oracle::phi_h(cplx(-2.0, 9.0), 0.7, 0.05)),
              0.0, 1e-12);
  // series branch
  EXPECT_NEAR(std::abs(phi_h(-1e-3, 0.5, 0.01) - oracle::phi_h(-1e-3, 0.5, 0.01)), 0.0, 1e-16);
  // strongly damped branch
  const cplx strong = phi_h(-900.0, 0.5, 0.05);
  const cplx ref = oracle::phi_h(-900.0, 0.5, 0.05);
  EXPECT_LT(std::abs(strong - ref), 1e-10 * std::abs(ref) + 1e-300);
}

TEST(PhiH, DerivativeBoundHoldsOnGrid) {
  // |2 phi_h| <= min(h^2 |lambda|, 4 / |lambda|) for Re lambda <= 0.
  int checked = 0;
  for (double re : {0.0, -0.1, -1.0, -10.0, -100.0, -1e4}) {
    for (double im : {0.0, 0.5, 3.0, 40.0, 1e3}) {
      const cplx lam(re, im);
      if (lam == 0.0) continue;
      for (double h : {1e-4, 1e-2, 0.1, 0.25}) {
        for (double t : {h, 2 * h, 0.5, 1.0}) {
          if (t < h) continue;
          const double lhs = std::abs(2.0 * phi_h(lam, t, h));
          const double rhs = std::min(h * h * std::abs(lam), 4.0 / std::abs(lam));
          EXPECT_LE(lhs, rhs * (1.0 + 1e-12)) << lam << " t=" << t << " h=" << h;
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 400);
}

TEST(PhiH, RejectsStencilBeyondOrigin) { EXPECT_THROW(phi_h(-1.0, 0.1, 0.2), ValidationError); }

TEST(TransitionBlock, NoInputNoiseGivesZeroNoiseAndIntegratorRow) {
  const auto sys = build_heat_model(3, 1.0, 6.0, 0.0, 1.0);
  const double h = 0.1;
  const auto tr = transition_block(sys, h);
  EXPECT_EQ(tr.noise_cov.cwiseAbs().maxCoeff(), 0.0);
  for (int k = 0; k < 3; ++k) {
    const double lam = -pi * pi * (k + 1) * (k + 1);
    EXPECT_NEAR(tr.state_map(k, k).real(), std::exp(lam * h), 1e-15);
    const double want = pi * (k + 1) * std::expm1(lam * h) / lam;
    EXPECT_NEAR(tr.state_map(3, k).real(), want, 1e-14 * std::abs(want));
  }
  EXPECT_EQ(tr.state_map(3, 3), cplx(1.0));
}

TEST(TransitionBlock, ZeroEigenvalueOutputVarianceIsCubic) {
  const double q = 0.7, b = 1.3, h = 0.4;
  const auto sys = testing::single_mode(0.0, 1.0, b, 1.0, q, 1.0);
  const auto tr = transition_block(sys, h);
  EXPECT_NEAR(tr.noise_cov(1, 1).real(), q * b * b * h * h * h / 3.0, 1e-15);
  EXPECT_NEAR(tr.noise_cov(0, 1).real(), q * b * b * h * h / 2.0, 1e-15);
  EXPECT_NEAR(tr.noise_cov(0, 0).real(), q * b * b * h, 1e-15);
}

TEST(TransitionBlock, ScalarOrnsteinUhlenbeckVariance) {
  const auto sys = testing::single_mode(-1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
  const auto tr = transition_block(sys, 1.0);
  EXPECT_NEAR(tr.noise_cov(0, 0).real(), (1.0 - std::exp(-2.0)) / 2.0, 1e-15);
  const auto quad = oracle::quadrature_oracle_transition(sys, 1.0, 1e-13);
  EXPECT_NEAR(quad.noise_cov(0, 0).real(), (1.0 - std::exp(-2.0)) / 2.0, 1e-12);
}

TEST(TransitionBlock, HeatWithInputMatchesQuadrature) {
  const auto sys = build_heat_model(3, 1.0, 6.0, 1.0, 1.0);
  for (double h : {1e-3, 0.1}) {
    const auto exact = transition_block(sys, h);
    const auto quad = oracle::quadrature_oracle_transition(sys, h, 1e-13);
    EXPECT_LT(oracle::max_relative_error(exact.state_map, quad.state_map), 1e-8) << h;
    EXPECT_LT(oracle::max_relative_error(exact.noise_cov, quad.noise_cov), 1e-8) << h;
  }
}

TEST(TransitionBlock, ComplexSpectrumWithInputMatchesQuadrature) {
  const auto sys = testing::damped_pairs();
  for (double h : {1e-3, 0.1, 0.6}) {
    const auto exact = transition_block(sys, h);
    const auto quad = oracle::quadrature_oracle_transition(sys, h, 1e-13);
    EXPECT_LT(oracle::max_relative_error(exact.state_map, quad.state_map), 1e-8) << h;
    EXPECT_LT(oracle::max_relative_error(exact.noise_cov, quad.noise_cov), 1e-8) << h;
  }
}

TEST(TransitionBlock, SemigroupOnStateBlock) {
  const auto sys = testing::damped_pairs();
  const auto one = transition_block(sys, 0.05);
  const auto two = transition_block(sys, 0.1);
  const CMatrix composed = one.state_map * one.state_map;
  EXPECT_LT((composed - two.state_map).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TransitionBlock, DiscreteLyapunovConsistency) {
  for (const auto& sys : {build_heat_model(6, 1.0, 6.0, 2.0, 1.0), testing::damped_pairs()}) {
    for (double h : {1e-3, 0.05, 0.3}) {
      const auto one = transition_block(sys, h);
      const auto two = transition_block(sys, 2 * h);
      const CMatrix composed = one.state_map * one.noise_cov * one.state_map.adjoint() + one.noise_cov;
      const double scale = two.noise_cov.cwiseAbs().maxCoeff();
      EXPECT_LT((composed - two.noise_cov).cwiseAbs().maxCoeff(), 1e-10 * scale) << h;
    }
  }
}

TEST(TransitionBlock, NoiseCovarianceIsHermitianPsd) {
  for (const auto& sys : {build_heat_model(20, 1.0, 6.0, 1.0, 1.0), testing::damped_pairs()}) {
    for (double h : {1e-6, 1e-4, 1e-2, 0.1, 1.0}) {
      const auto tr = transition_block(sys, h);
      const double norm = tr.noise_cov.norm();
      EXPECT_LT((tr.noise_cov - tr.noise_cov.adjoint()).norm(), 1e-14 * norm);
      Eigen::SelfAdjointEigenSolver<CMatrix> eig(tr.noise_cov);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12 * norm) << h;
    }
  }
}

TEST(OutputCovariance, ZeroAtOrigin) {
  const auto sys = build_heat_model(4, 1.0, 6.0, 1.0, 1.0);
  EXPECT_EQ(output_covariance_kernel(sys, 0.0, 0.5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(OutputCovariance, MatchesQuadrature) {
  const auto heat = build_heat_model(3, 1.0, 6.0, 1.0, 1.0);
  for (auto [t, t2] : {std::pair{0.3, 0.7}, std::pair{0.7, 0.3}, std::pair{0.5, 0.5}}) {
    EXPECT_LT(oracle::max_relative_error(output_covariance_kernel(heat, t, t2),
                                         oracle::output_covariance(heat, t, t2, 1e-13)),
              1e-8);
  }
  const auto damped = testing::damped_pairs();
  EXPECT_LT(oracle::max_relative_error(output_covariance_kernel(damped, 0.3, 0.7),
                                       oracle::output_covariance(damped, 0.3, 0.7, 1e-13)),
            1e-8);
}

TEST(OutputCovariance, ConstantModeIsBilinearInTime) {
  const double c = 1.7;
  const auto sys = testing::single_mode(0.0, c, 0.0, 1.0, 0.0, 1.0);
  EXPECT_NEAR(output_covariance_kernel(sys, 0.3, 0.8)(0, 0).real(), c * c * 0.3 * 0.8, 1e-15);
}

TEST(OutputCovariance, ConjugatePairedModelsAreReal) {
  const auto wave = build_wave_model(20, 1.0, 1.0, 4.0, 1.0);
  for (auto [t, t2] : {std::pair{0.2, 0.9}, std::pair{0.6, 0.6}, std::pair{1.0, 0.35}}) {
    const CMatrix k = output_covariance_kernel(wave, t, t2);
    EXPECT_LT(std::abs(k(0, 0).imag()), 1e-12 * std::abs(k(0, 0)));
  }
  const auto damped = testing::damped_pairs();
  const CMatrix k = output_covariance_kernel(damped, 0.4, 0.9);
  EXPECT_LT(k.imag().cwiseAbs().maxCoeff(), 1e-12 * k.cwiseAbs().maxCoeff());
}

TEST(StateOutputCross, ZeroWithoutPriorOrInput) {
  const auto sys = testing::single_mode(-2.0, 1.0, 1.0, 0.0, 0.0, 1.0);
  EXPECT_EQ(state_output_cross(sys, 1.0, 0.5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(StateOutputCross, MatchesQuadrature) {
  const auto heat = build_heat_model(3, 1.0, 6.0, 1.0, 1.0);
  for (double t_obs : {0.0, 0.2, 0.7, 1.0}) {
    EXPECT_LT(oracle::max_relative_error(state_output_cross(heat, 1.0, t_obs),
                                         oracle::state_output_cross(heat, 1.0, t_obs, 1e-13)),
              1e-8);
  }
  const auto damped = testing::damped_pairs();
  for (auto [ts, to] : {std::pair{1.0, 0.4}, std::pair{0.3, 0.8}, std::pair{0.0, 0.6}}) {
    EXPECT_LT(oracle::max_relative_error(state_output_cross(damped, ts, to),
                                         oracle::state_output_cross(damped, ts, to, 1e-13)),
              1e-8);
  }
}

TEST(StateOutputCross, ConstantModeIsLinear) {
  const double c = 0.9;
  const auto sys = testing::single_mode(0.0, c, 0.0, 1.0, 0.0, 1.0);
  EXPECT_NEAR(state_output_cross(sys, 1.0, 0.4)(0, 0).real(), c * 0.4, 1e-15);
}

TEST(StateCovariance, AgreesWithAccumulatedTransitions) {
  const auto sys = testing::damped_pairs();
  const auto tr = transition_blocks(sys, 0.25);
  CMatrix p = sys.prior_var().cast<cplx>().asDiagonal();
  for (int i = 0; i < 4; ++i) {
    p = tr.decay.asDiagonal() * p * tr.decay.conjugate().asDiagonal();
    p += tr.sigma_zz;
  }
  EXPECT_LT((p - state_covariance(sys, 1.0)).cwiseAbs().maxCoeff(), 1e-13);
}

}  // namespace
}  // namespace kbconv
