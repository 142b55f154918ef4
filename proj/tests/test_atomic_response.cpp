#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eitlens/atomic_response.hpp"

using namespace eitlens;

namespace {

const LevelScheme kRb = LevelScheme::rubidium_27s();
const double kGe = kRb.gamma_e;

double rel(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

FieldPoint point(double op, double oc, double dp, double dc) {
  return {cplx(op * kGe), cplx(oc * kGe), dp * kGe, dc * kGe};
}

// Reference susceptibilities evaluated independently at 50 significant digits
// (dephasing 2pi x 100 kHz, probe linewidth 2pi x 30 kHz, Gamma_e 2pi x 6.067 MHz).
struct FrozenChi {
  double n, dp, dc, oc;
  cplx chi;
};
const FrozenChi kFrozen[] = {
    {0.59e16, -0.28, 0.0, 1.98, {-3.1619573361057521603e-5, 6.9759703605172530282e-6}},
    {0.69e16, 0.5, 0.0, 3.18, {2.6760855371274457524e-5, 3.9339377184692827491e-6}},
    {1.40e16, -0.1, 0.16, 1.98, {1.5099125008543936793e-5, 4.6169927468786380658e-6}},
    {0.59e16, 0.0, 0.0, 0.0, {0.0, 2.1171671050913899764e-4}},
};

}  // namespace

TEST(LevelScheme, RubidiumRates) {
  EXPECT_NEAR(kRb.gamma_gr(), kTwoPi * 100e3, 1e-6);
  EXPECT_NEAR(kRb.gamma_ge(), 0.5 * kTwoPi * (6.067e6 + 30e3), 1e-6);
  EXPECT_NEAR(kRb.sigma_0(), 2.9048960213132736685e-13, 1e-25);
  EXPECT_TRUE(kRb.violations().empty());
  EXPECT_THROW(LevelScheme::rubidium_27s(kTwoPi * 1e3), Error);
}

TEST(LevelScheme, ViolationsReported) {
  LevelScheme ls;
  ls.gamma_r = -1.0;
  ls.lambda_probe = 0.0;
  EXPECT_EQ(ls.violations().size(), 2u);
  EXPECT_THROW(ls.validate(), Error);
}

TEST(ChiLinear, MatchesHighPrecisionReference) {
  for (const auto& f : kFrozen) {
    const auto chi = chi_linear(f.n, point(0.0, f.oc, f.dp, f.dc), kRb).chi;
    EXPECT_LT(rel(chi, f.chi), 1e-12) << "dp " << f.dp;
  }
}

TEST(ChiLinear, TwoLevelResonantAbsorption) {
  const double n = 0.59e16;
  const auto chi = chi_linear(n, point(0.0, 0.0, 0.0, 0.0), kRb).chi;
  LevelScheme natural = kRb;
  natural.gamma_p = 0.0;
  const auto chi0 = chi_linear(n, point(0.0, 0.0, 0.0, 0.0), natural).chi;
  EXPECT_NEAR(natural.k() * chi0.imag() / (n * natural.sigma_0()), 1.0, 1e-10);
  EXPECT_GT(chi.imag(), 0.0);
  EXPECT_NEAR(chi.real(), 0.0, 1e-18);
}

TEST(ChiLinear, PerfectTransparency) {
  LevelScheme ls = kRb;
  ls.gamma_r = ls.gamma_p = ls.gamma_c = 0.0;
  const auto chi = chi_linear(1e16, point(0.0, 1.0, 0.0, 0.0), ls).chi;
  EXPECT_EQ(chi, cplx(0.0));
}

TEST(ChiLinear, DegenerateDenominator) {
  LevelScheme ls;
  ls.gamma_e = ls.gamma_r = ls.gamma_p = ls.gamma_c = 0.0;
  try {
    chi_linear(1e16, FieldPoint{}, ls);
    FAIL() << "expected degenerate-denominator";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::degenerate_denominator);
  }
}

TEST(ChiLinear, RejectsNegativeDensity) {
  EXPECT_THROW(chi_linear(-1.0, point(0.0, 1.0, 0.0, 0.0), kRb), Error);
}

TEST(ChiLinear, PassiveAndEvenInCoupling) {
  for (double dp = -2.0; dp <= 2.0; dp += 0.05) {
    for (double oc : {0.0, 0.5, 1.98, 3.18}) {
      const auto a = chi_linear(1e16, point(0.0, oc, dp, 0.0), kRb).chi;
      const auto b = chi_linear(1e16, point(0.0, -oc, dp, 0.0), kRb).chi;
      EXPECT_GE(a.imag(), 0.0);
      EXPECT_EQ(a, b);
    }
  }
}

TEST(RefractiveIndex, SmallChi) {
  EXPECT_NEAR(refractive_index({cplx(0.02, 0.01)}), 1.01, 1e-15);
}

TEST(RefractiveIndex, RedDetunedIndexPeaksOffAxis) {
  // Red of the two-photon resonance the index is depressed on axis relative to
  // the beam edge: this gradient is what focuses the probe.
  const double n = 0.59e16;
  const auto axis = chi_linear(n, point(0.0, 1.98, -0.28, 0.0), kRb);
  const auto edge = chi_linear(n, point(0.0, 1.98 * std::exp(-1.0), -0.28, 0.0), kRb);
  EXPECT_GT(refractive_index(axis), refractive_index(edge));
}

TEST(Liouvillian, ZeroRatesAndFieldsGiveZeroMatrix) {
  LevelScheme ls = kRb;
  ls.gamma_r = ls.gamma_p = ls.gamma_c = 0.0;
  ls.gamma_e = 0.0;
  const auto l = build_liouvillian(FieldPoint{}, ls);
  EXPECT_EQ(l.matrix.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Liouvillian, PureDecayOfExcitedState) {
  Eigen::Matrix3cd rho = Eigen::Matrix3cd::Zero();
  rho(kE, kE) = 1.0;
  const auto l = build_liouvillian(FieldPoint{}, kRb);
  const auto d = l.apply(rho);
  EXPECT_NEAR(d(vec_index(kE, kE)).real(), -kGe, 1e-6 * kGe);
  EXPECT_NEAR(d(vec_index(kG, kG)).real(), kGe, 1e-6 * kGe);
}

TEST(Liouvillian, PreservesTrace) {
  const auto l = build_liouvillian(point(0.3, 1.7, -0.4, 0.2), kRb);
  for (int c = 0; c < 9; ++c) {
    const cplx t = l.matrix(vec_index(kG, kG), c) + l.matrix(vec_index(kE, kE), c) + l.matrix(vec_index(kR, kR), c);
    EXPECT_LT(std::abs(t), 1e-14);
  }
}

TEST(SteadyState, GroundStateWithoutFields) {
  const auto rho = steady_state(build_liouvillian(FieldPoint{}, kRb));
  EXPECT_NEAR(rho(kG, kG).real(), 1.0, 1e-12);
  EXPECT_TRUE(rho.is_valid());
}

TEST(SteadyState, ZeroMatrixIsNotUnique) {
  LevelScheme ls;
  ls.gamma_e = ls.gamma_r = ls.gamma_p = ls.gamma_c = 0.0;
  try {
    steady_state(build_liouvillian(FieldPoint{}, ls));
    FAIL() << "expected non-unique-steady-state";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::non_unique_steady_state);
  }
}

TEST(SteadyState, TwoLevelSaturation) {
  // Closed-form two-level steady state with natural broadening only.
  LevelScheme ls = kRb;
  ls.gamma_p = 0.0;
  const double s = 0.4, dp = -0.3;
  const auto rho = steady_state(build_liouvillian(point(s, 0.0, dp, 0.0), ls));
  const double sat = 2.0 * s * s / (1.0 + 4.0 * dp * dp);
  EXPECT_NEAR(rho(kE, kE).real(), 0.5 * sat / (1.0 + sat), 1e-12);
  EXPECT_TRUE(rho.is_valid());
}

TEST(SteadyState, MatchesLongTimeEvolution) {
  // Propagator exp(L dt) approximated by one RK4 step, then squared to t ~ 8e4 / Gamma_e.
  const auto l = build_liouvillian(point(0.16, 1.98, -0.28, 0.0), kRb);
  const double dt = 0.01;
  using M9 = Eigen::Matrix<cplx, 9, 9>;
  const M9 a = l.matrix * dt;
  const M9 id = M9::Identity();
  M9 p = id + a * (id + a * (id / 2.0 + a * (id / 6.0 + a / 24.0)));
  for (int k = 0; k < 23; ++k) p = p * p;
  Eigen::Matrix<cplx, 9, 1> v = Eigen::Matrix<cplx, 9, 1>::Zero();
  v(vec_index(kG, kG)) = 1.0;
  v = p * v;
  const auto rho = steady_state(l);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(std::abs(v(vec_index(r, c)) - rho(r, c)), 0.0, 1e-6);
  }
}

TEST(SteadyState, PhysicalOverParameterSweep) {
  for (double op : {0.01, 0.16, 0.5, 2.0}) {
    for (double oc : {0.0, 1.0, 3.18}) {
      for (double dp = -2.0; dp <= 2.0; dp += 0.25) {
        const auto rho = steady_state(build_liouvillian(point(op, oc, dp, 0.1), kRb));
        EXPECT_TRUE(rho.is_valid()) << op << " " << oc << " " << dp;
        EXPECT_GE(coherence_eg(rho).imag(), 0.0);
      }
    }
  }
}

TEST(SteadyState, WeakProbeMatchesClosedForm) {
  const double n = 0.59e16, op = 1e-3;
  for (double dp = -2.0; dp <= 2.0; dp += 0.1) {
    const auto fp = point(op, 1.98, dp, 0.0);
    const auto rho = steady_state(build_liouvillian(fp, kRb));
    const auto chi = chi_from_coherence(n, coherence_eg(rho), fp.omega_p, kRb).chi;
    EXPECT_LT(rel(chi, chi_linear(n, fp, kRb).chi), 1e-3) << dp;
  }
}

TEST(SteadyState, GaugeInvariance) {
  const double op = 0.3, oc = 1.5;
  const auto ref = steady_state(build_liouvillian(point(op, oc, -0.2, 0.1), kRb));
  for (double phase : {0.7, 2.1, -1.3}) {
    FieldPoint fp = point(op, oc, -0.2, 0.1);
    fp.omega_p *= std::polar(1.0, phase);
    fp.omega_c *= std::polar(1.0, -0.5 * phase);
    const auto rho = steady_state(build_liouvillian(fp, kRb));
    EXPECT_LT(std::abs(coherence_eg(rho) / fp.omega_p - coherence_eg(ref) / cplx(op * kGe)) * kGe, 1e-10);
    EXPECT_NEAR(rho(kE, kE).real(), ref(kE, kE).real(), 1e-10);
  }
}

TEST(SteadyState, DetuningParity) {
  // With Delta_c = 0, Delta_p -> -Delta_p maps rho_eg to -conj(rho_eg).
  for (double dp : {0.1, 0.28, 0.99, 1.7}) {
    const auto a = response_ratio(0.16 * kGe, 1.98 * kGe, dp * kGe, 0.0, kRb);
    const auto b = response_ratio(0.16 * kGe, 1.98 * kGe, -dp * kGe, 0.0, kRb);
    EXPECT_LT(std::abs(a + std::conj(b)) / std::abs(a), 1e-12);
  }
}

TEST(SteadyState, AutlerTownesPeaks) {
  // Absorption maxima near +-Omega_c/2 for a strong coupling field.
  const double oc = 3.18;
  double best = 0.0, at = 0.0;
  for (double dp = 0.5; dp <= 2.5; dp += 0.001) {
    const double a = chi_linear(1e16, point(0.0, oc, dp, 0.0), kRb).chi.imag();
    if (a > best) best = a, at = dp;
  }
  EXPECT_NEAR(at, 0.5 * oc, 0.2 * 0.5 * oc);
}

TEST(LinearResponse, PerturbativeRatioMatchesClosedForm) {
  for (double dp : {-1.0, -0.28, 0.0, 0.3, 1.2}) {
    const auto fp = point(0.0, 1.98, dp, 0.0);
    const cplx ratio = linear_response_ratio(1.98 * kGe, dp * kGe, 0.0, kRb);
    const auto chi = chi_from_coherence(1e16, ratio, cplx(1.0), kRb).chi;
    EXPECT_LT(rel(chi, chi_linear(1e16, fp, kRb).chi), 1e-10) << dp;
  }
}

TEST(FieldPoint, Validation) {
  FieldPoint fp = point(0.1, 1.0, 0.0, 0.0);
  EXPECT_NO_THROW(fp.validate(100.0 * kGe));
  EXPECT_THROW(fp.validate(0.5 * kGe), Error);
  fp.delta_p = std::nan("");
  EXPECT_THROW(fp.validate(100.0 * kGe), Error);
}

TEST(DensityMatrix, DetectsInvalidStates) {
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(kG, kG) = 1.5;
  m(kE, kE) = -0.5;
  EXPECT_FALSE(DensityMatrix3(m).is_valid());
  EXPECT_TRUE(DensityMatrix3().is_valid());
}
