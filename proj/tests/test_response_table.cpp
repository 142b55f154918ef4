#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eitlens/response_table.hpp"

using namespace eitlens;

namespace {

const LevelScheme kRb = LevelScheme::rubidium_27s();
const double kGe = kRb.gamma_e;

}  // namespace

TEST(ResponseTable, ExactAtNodes) {
  const auto t = ResponseTable::uniform(0.4 * kGe, 2.0 * kGe, 9, 7, -0.28 * kGe, 0.0, kRb);
  for (double p : t.omega_p_samples()) {
    for (double c : t.omega_c_samples()) {
      const cplx direct = response_ratio(p, c, -0.28 * kGe, 0.0, kRb);
      EXPECT_LT(std::abs(t.response_ratio_at(p, c) - direct) / std::abs(direct), 1e-12) << p << " " << c;
    }
  }
}

TEST(ResponseTable, GaugeIdentity) {
  const auto t = ResponseTable::uniform(0.4 * kGe, 2.0 * kGe, 17, 17, 0.3 * kGe, 0.0, kRb);
  const cplx op = std::polar(0.2 * kGe, 1.1), oc = std::polar(1.3 * kGe, -0.4);
  const cplx direct = coherence_eg(steady_state(build_liouvillian({op, oc, 0.3 * kGe, 0.0}, kRb)));
  EXPECT_LT(std::abs(t.coherence(op, oc) - direct) / std::abs(direct), 2e-3);
  EXPECT_LT(std::abs(t.coherence(op, oc) - op * t.response_ratio_at(std::abs(op), std::abs(oc))), 1e-18);
}

TEST(ResponseTable, AdaptiveOffNodeAccuracy) {
  for (double dp : {-0.28, 0.05, 0.3, -1.0}) {
    const auto t = ResponseTable::adaptive(0.4 * kGe, 2.0 * kGe, 128, 128, dp * kGe, 0.0, kRb);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> up(0.0, 0.4 * kGe), uc(0.0, 2.0 * kGe);
    double worst = 0.0;
    for (int k = 0; k < 400; ++k) {
      const double p = up(rng), c = uc(rng);
      const cplx direct = response_ratio(p, c, dp * kGe, 0.0, kRb);
      worst = std::max(worst, std::abs(t.response_ratio_at(p, c) - direct) / std::abs(direct));
    }
    EXPECT_LT(worst, 1e-4) << dp;
  }
}

TEST(ResponseTable, AdaptiveNodesAreIncreasing) {
  const auto nodes = ResponseTable::adaptive_coupling_nodes(0.3 * kGe, 3.2 * kGe, 64, 0.0, 0.0, kRb);
  ASSERT_EQ(nodes.size(), 64u);
  EXPECT_EQ(nodes.front(), 0.0);
  EXPECT_EQ(nodes.back(), 3.2 * kGe);
  for (std::size_t i = 1; i < nodes.size(); ++i) EXPECT_GT(nodes[i], nodes[i - 1]);
}

TEST(ResponseTable, SliceMatchesPointQuery) {
  const auto t = ResponseTable::adaptive(0.4 * kGe, 2.0 * kGe, 32, 32, -0.28 * kGe, 0.0, kRb);
  const auto s = t.slice(1.234 * kGe);
  for (double p = 0.0; p <= 0.4 * kGe; p += 0.013 * kGe) {
    EXPECT_EQ(s.response_ratio_at(p), t.response_ratio_at(p, 1.234 * kGe));
  }
}

TEST(ResponseTable, OutOfRangeRaises) {
  const auto t = ResponseTable::uniform(0.4 * kGe, 2.0 * kGe, 8, 8, 0.0, 0.0, kRb);
  EXPECT_TRUE(t.covers(0.4 * kGe, 2.0 * kGe));
  EXPECT_FALSE(t.covers(0.41 * kGe, 1.0 * kGe));
  try {
    t.response_ratio_at(0.5 * kGe, 1.0 * kGe);
    FAIL() << "expected response-out-of-range";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::response_out_of_range);
  }
  EXPECT_THROW(t.response_ratio_at(0.1 * kGe, 2.5 * kGe), Error);
}

TEST(ResponseTable, RejectsBadSamples) {
  EXPECT_THROW(ResponseTable({0.0}, {0.0, 1.0}, 0.0, 0.0, kRb), Error);
  EXPECT_THROW(ResponseTable({0.0, 1.0, 1.0}, {0.0, 1.0}, 0.0, 0.0, kRb), Error);
  EXPECT_THROW(ResponseTable({-1.0, 1.0}, {0.0, 1.0}, 0.0, 0.0, kRb), Error);
}

TEST(ResponseTable, CopiesStayValid) {
  auto t = ResponseTable::uniform(0.4 * kGe, 2.0 * kGe, 8, 8, 0.1 * kGe, 0.0, kRb);
  const cplx before = t.response_ratio_at(0.13 * kGe, 0.77 * kGe);
  ResponseTable u = t;
  t = ResponseTable::uniform(0.8 * kGe, 3.0 * kGe, 5, 5, -0.5 * kGe, 0.0, kRb);
  EXPECT_EQ(u.response_ratio_at(0.13 * kGe, 0.77 * kGe), before);
}

TEST(DirectResponse, AgreesWithSteadyState) {
  const DirectResponse d(-0.28 * kGe, 0.0, kRb);
  const cplx op(0.16 * kGe), oc(1.98 * kGe);
  const cplx direct = coherence_eg(steady_state(build_liouvillian({op, oc, -0.28 * kGe, 0.0}, kRb)));
  EXPECT_LT(std::abs(d.coherence(op, oc) - direct) / std::abs(direct), 1e-14);
  EXPECT_EQ(d.slice(1.98 * kGe).response_ratio_at(0.16 * kGe), d.response_ratio_at(0.16 * kGe, 1.98 * kGe));
}
