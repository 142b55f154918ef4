#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "eitlens/engine.hpp"

using namespace eitlens;

namespace {

Scenario small(const std::string& name, int n = 64) {
  auto s = preset(name);
  s.set_grid(n, 512e-6);
  return s;
}

ImageResult synthetic_spot(double w, double background) {
  ImageResult img;
  img.grid = TransverseGrid{256, 256, 512e-6, 512e-6};
  img.intensity.resize(img.grid.size());
  for (int j = 0; j < img.grid.ny; ++j) {
    for (int i = 0; i < img.grid.nx; ++i) {
      const double r2 = img.grid.x(i) * img.grid.x(i) + img.grid.y(j) * img.grid.y(j);
      img.intensity[img.grid.index(i, j)] = background + 0.8 * std::exp(-2.0 * r2 / (w * w));
    }
  }
  return img;
}

}  // namespace

TEST(Cloud, DensityProfile) {
  AtomicCloud c;
  c.n0 = 1e16;
  EXPECT_DOUBLE_EQ(density(c, 0.0, 0.0), 1e16);
  EXPECT_NEAR(density(c, c.w_r, 0.0), 1e16 * std::exp(-2.0), 1e3);
  EXPECT_NEAR(density(c, 0.0, c.w_z), 1e16 * std::exp(-2.0), 1e3);
  c.radially_uniform = true;
  EXPECT_DOUBLE_EQ(density(c, 1.0, 0.0), 1e16);
}

TEST(Cloud, OpticalDepthFromQuadrature) {
  // Resonant column OD in closed form: n0 w_z sqrt(pi/2) sigma0 Gamma_e / (Gamma_e + gamma_p).
  auto s = preset("fig3b");
  const auto& ls = s.levels;
  const double od = column_density(s.cloud) * ls.sigma_0() * ls.gamma_e / (ls.gamma_e + ls.gamma_p);
  EXPECT_NEAR(od, 2.3513, 1e-3);
  const double t = column_transmission(s, 0.0, 0.0, -10.0 * s.cloud.w_z, 10.0 * s.cloud.w_z, false);
  EXPECT_NEAR(-std::log(t) / od, 1.0, 1e-10);
}

TEST(Cloud, ThinCloudTransmissionWithoutCoupling) {
  auto s = preset("fig4");
  s.coupling.omega_c0 = 0.0;
  const auto& ls = s.levels;
  const double od = column_density(s.cloud) * ls.sigma_0() * ls.gamma_e / (ls.gamma_e + ls.gamma_p);
  EXPECT_NEAR(thin_cloud_transmission(s, 0.0, 0.0) / std::exp(-od), 1.0, 1e-6);
}

TEST(Presets, Values) {
  for (const auto& name : preset_names()) {
    const auto s = preset(name);
    EXPECT_NO_THROW(s.validate()) << name;
    EXPECT_EQ(s.grid.nx, 256);
    EXPECT_NEAR(s.levels.gamma_gr(), kTwoPi * 100e3, 1e-6);
  }
  const double ge = kTwoPi * 6.067e6;
  const auto b = preset("fig3b");
  EXPECT_DOUBLE_EQ(b.cloud.n0, 0.59e16);
  EXPECT_DOUBLE_EQ(b.coupling.omega_c0, 1.98 * ge);
  EXPECT_DOUBLE_EQ(b.probe.omega_p0, 0.16 * ge);
  const auto a = preset("fig3a");
  EXPECT_DOUBLE_EQ(a.cloud.w_z, 1.2e-3);
  EXPECT_DOUBLE_EQ(a.delta_c, 0.16 * ge);
  const auto c = preset("fig3c");
  EXPECT_DOUBLE_EQ(c.coupling.w_c, 34e-6);
  EXPECT_DOUBLE_EQ(c.coupling.omega_c0, 3.18 * ge);
  const auto f = preset("fig4");
  EXPECT_TRUE(f.cloud.radially_uniform);
  EXPECT_DOUBLE_EQ(f.cloud.w_z, 55e-6);
  EXPECT_GT(f.coupling.rayleigh(), 10e-3);
}

TEST(Presets, UnknownName) {
  try {
    preset("fig9");
    FAIL() << "expected unknown-preset";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::unknown_preset);
  }
}

TEST(Scenario, ValidationCollectsAllProblems) {
  auto s = preset("fig2");
  s.cloud.w_z = -1.0;
  s.coupling.w_c = 100e-6;
  s.probe.omega_p0 = 0.0;
  const auto v = s.violations();
  EXPECT_EQ(v.size(), 3u);
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::validation_error);
  }
}

TEST(Scenario, PeakCouplingInsideSpan) {
  const auto f = preset("fig4");
  EXPECT_NEAR(peak_coupling(f), coupling_magnitude(f.coupling, 0.0, f.settings.z_start), 1e-6);
  const auto b = preset("fig3b");
  EXPECT_DOUBLE_EQ(peak_coupling(b), b.coupling.omega_c0);
}

TEST(Analysis, SpotRadiusOfGaussian) {
  for (double w : {30e-6, 60e-6}) {
    const auto img = synthetic_spot(w, 0.2);
    EXPECT_NEAR(spot_radius(img, 0.2) / w, 1.0, 0.02);
  }
  EXPECT_EQ(spot_radius(synthetic_spot(30e-6, 0.2), 5.0), 0.0);
}

TEST(Analysis, DiskAverage) {
  const auto img = synthetic_spot(1.0, 0.0);  // nearly flat at 0.8
  EXPECT_NEAR(center_transmission(img, 10e-6), 0.8, 1e-6);
  EXPECT_NEAR(center_transmission(img, 0.0), 0.8, 1e-12);
}

TEST(Engine, EmptyCloudTransmitsEverything) {
  auto s = small("fig2");
  s.cloud.n0 = 0.0;
  const auto img = run_image(s, -0.28 * s.levels.gamma_e);
  for (double v : img.intensity) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Engine, BackgroundMatchesCouplingFreeReference) {
  auto s = small("fig2", 128);
  const double dp = -0.28 * s.levels.gamma_e;
  const auto img = run_image(s, dp);
  EXPECT_NEAR(background_level(img, s) / background_reference(s, dp), 1.0, 0.02);
}

TEST(Engine, TableAgreesWithDirectSolves) {
  auto s = small("fig2", 32);
  const double dp = -0.28 * s.levels.gamma_e;
  RunOptions direct;
  direct.direct = true;
  const auto a = run_image(s, dp, direct);
  const auto b = run_image(s, dp);
  for (std::size_t n = 0; n < a.intensity.size(); ++n) EXPECT_NEAR(b.intensity[n], a.intensity[n], 1e-4);
  EXPECT_EQ(b.diagnostics.table_rebuilds, 0);
}

TEST(Engine, ThinCloudLensingNegligible) {
  auto s = small("fig2");
  s.cloud.w_z = 20e-6;
  s.cloud.n0 = 5e16;
  s.settings.dz = 2e-6;
  s.settings.z_start = -4.0 * s.cloud.w_z;
  s.settings.z_end = 4.0 * s.cloud.w_z;
  for (double dp : {-0.28, 0.3}) {
    const auto on = run_image(s, dp * s.levels.gamma_e);
    s.settings.lensing = false;
    const auto off = run_image(s, dp * s.levels.gamma_e);
    s.settings.lensing = true;
    const double r = 0.2 * s.coupling.w_c;
    EXPECT_NEAR(center_transmission(on, r), center_transmission(off, r), 1e-3) << dp;
  }
}

TEST(Engine, BluePowerDecreasesMonotonically) {
  auto s = small("fig2");
  const double dp = 0.3 * s.levels.gamma_e;
  CloudMedium<TabulatedResponse> medium(
      s, TabulatedResponse(2.0 * s.probe.omega_p0, peak_coupling(s), 64, dp, s.delta_c, s.levels));
  double last = 1e300;
  int increases = 0;
  s.settings.absorber_width = 0.0;
  propagate(detail::initial_field(s), medium, s.settings, s.levels.lambda_probe,
            [&](double, std::span<const cplx> f) {
              double p = 0.0;
              for (const auto& v : f) p += std::norm(v);
              if (p > last) ++increases;
              last = p;
            });
  EXPECT_EQ(increases, 0);
}

TEST(Engine, NoLensingIsRadiallyLocal) {
  // Without diffraction every node sees its own column: the axis matches RK4 on
  // the scalar amplitude with the same response.
  auto s = small("fig3b", 16);
  s.settings.lensing = false;
  s.settings.dz = 5e-6;
  s.coupling.omega_c0 = 0.0;
  const double dp = 0.4 * s.levels.gamma_e;
  RunOptions direct;
  direct.direct = true;
  const auto img = run_image(s, dp, direct);
  EXPECT_NEAR(img.intensity[s.grid.center_index()] / coupling_free_transmission(s, 0.0, dp), 1.0, 1e-5);
}

TEST(Engine, SpectrumIndependentOfThreadCount) {
  auto s = small("fig2", 32);
  RunOptions one, two;
  one.threads = 1;
  two.threads = 2;
  const auto a = run_scan(s, -0.5, 0.5, 5, one);
  const auto b = run_scan(s, -0.5, 0.5, 5, two);
  ASSERT_EQ(a.entries.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(a.entries[k].delta_p, b.entries[k].delta_p);
    EXPECT_EQ(a.entries[k].transmission, b.entries[k].transmission);
  }
}

TEST(Engine, ScanValidation) {
  const auto d = scan_detunings(-2.0, 2.0, 81, 1.0);
  EXPECT_EQ(d.size(), 81u);
  EXPECT_DOUBLE_EQ(d[40], 0.0);
  EXPECT_DOUBLE_EQ(d.back(), 2.0);
  EXPECT_THROW(scan_detunings(1.0, -1.0, 3, 1.0), Error);
  EXPECT_THROW(scan_detunings(0.0, 1.0, 0, 1.0), Error);
  EXPECT_THROW(run_spectrum(small("fig2", 32), {1.0, 0.0}), Error);
}

TEST(Engine, ParallelForReportsLowestFailure) {
  std::vector<int> hit(10, 0);
  try {
    parallel_for(10, 3, [&](std::size_t k) {
      hit[k] = 1;
      if (k == 4 || k == 7) throw std::runtime_error(std::to_string(k));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "4");
  }
  for (int h : hit) EXPECT_EQ(h, 1);
}
