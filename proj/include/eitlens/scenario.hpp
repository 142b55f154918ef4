#pragma once

// Cloud and beam geometry, and the named parameter sets of the lensing experiments.
// Axial coordinate z is measured from the cloud center along the probe direction.

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "eitlens/atomic_response.hpp"
#include "eitlens/error.hpp"
#include "eitlens/propagation.hpp"

namespace eitlens {

/// Gaussian cloud with 1/e^2 radii.
struct AtomicCloud {
  double n0 = 0.0;         ///< peak density [m^-3]
  double w_r = 2.1e-3;     ///< radial 1/e^2 radius [m]
  double w_z = 1.1e-3;     ///< axial 1/e^2 radius [m]
  double center_z = 0.0;   ///< [m]
  bool radially_uniform = false;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(n0 >= 0.0) || !std::isfinite(n0)) out.push_back("cloud n0 must be finite and >= 0");
    if (!(w_r > 0.0)) out.push_back("cloud w_r must be > 0");
    if (!(w_z > 0.0)) out.push_back("cloud w_z must be > 0");
    return out;
  }
};

inline double density(const AtomicCloud& cloud, double r, double z) {
  const double dz = z - cloud.center_z;
  double n = cloud.n0 * std::exp(-2.0 * dz * dz / (cloud.w_z * cloud.w_z));
  if (!cloud.radially_uniform) n *= std::exp(-2.0 * r * r / (cloud.w_r * cloud.w_r));
  return n;
}

/// n0 * w_z * sqrt(pi/2): on-axis column density of the full Gaussian cloud [m^-2].
inline double column_density(const AtomicCloud& cloud) {
  return cloud.n0 * cloud.w_z * std::sqrt(0.5 * std::numbers::pi);
}

/// Focused Gaussian coupling beam.
struct CouplingBeam {
  double omega_c0 = 0.0;        ///< peak Rabi frequency [rad/s]
  double w_c = 49e-6;           ///< waist [m]
  double z_focus = 0.0;         ///< [m]
  double wavelength = 480e-9;   ///< [m]

  double rayleigh() const noexcept { return std::numbers::pi * w_c * w_c / wavelength; }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(omega_c0 >= 0.0) || !std::isfinite(omega_c0)) out.push_back("coupling omega_c0 must be finite and >= 0");
    if (!(w_c > 0.0)) out.push_back("coupling w_c must be > 0");
    if (!(wavelength > 0.0)) out.push_back("coupling wavelength must be > 0");
    return out;
  }
};

/// i Omega_c0 z0/(z + i z0) exp(-i z0 r^2 / [w_c^2 (z + i z0)]), z taken from the focus.
inline cplx coupling_field(const CouplingBeam& beam, double r, double z) {
  const double z0 = beam.rayleigh();
  const cplx q(z - beam.z_focus, z0);
  const cplx i(0.0, 1.0);
  return i * beam.omega_c0 * z0 / q * std::exp(-i * z0 * r * r / (beam.w_c * beam.w_c * q));
}

/// |coupling_field|, in closed form.
inline double coupling_magnitude(const CouplingBeam& beam, double r, double z) {
  const double z0 = beam.rayleigh();
  const double zz = z - beam.z_focus;
  const double w2 = beam.w_c * beam.w_c * (1.0 + zz * zz / (z0 * z0));
  return beam.omega_c0 * z0 / std::hypot(zz, z0) * std::exp(-r * r / w2);
}

struct ProbeBeam {
  enum class Profile { uniform, gaussian };
  double omega_p0 = 0.0;  ///< incoming Rabi frequency [rad/s]
  Profile profile = Profile::uniform;
  double w_p = 3.45e-3;   ///< 1/e^2 intensity radius [m], gaussian profile only

  cplx amplitude(double r) const {
    if (profile == Profile::uniform) return omega_p0;
    return omega_p0 * std::exp(-r * r / (w_p * w_p));
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(omega_p0 > 0.0) || !std::isfinite(omega_p0)) out.push_back("probe omega_p0 must be finite and > 0");
    if (profile == Profile::gaussian && !(w_p > 0.0)) out.push_back("probe w_p must be > 0");
    return out;
  }
};

struct Scenario {
  std::string name = "custom";
  AtomicCloud cloud;
  CouplingBeam coupling;
  ProbeBeam probe;
  LevelScheme levels;
  double delta_c = 0.0;  ///< [rad/s]
  TransverseGrid grid;
  PropagationSettings settings;
  /// Captioned one-sigma uncertainties, keyed by parameter name. Informational only.
  std::map<std::string, double> uncertainties;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    auto append = [&out](const std::vector<std::string>& v) { out.insert(out.end(), v.begin(), v.end()); };
    append(cloud.violations());
    append(coupling.violations());
    append(probe.violations());
    append(levels.violations());
    append(grid.violations());
    append(settings.violations());
    if (!std::isfinite(delta_c)) out.push_back("delta_c must be finite");
    if (settings.absorber_width > 0.0 && !(settings.absorber_width < 0.5 * std::min(grid.lx, grid.ly))) {
      out.push_back("absorber width must be below half the window");
    }
    if (!(std::min(grid.lx, grid.ly) > 6.0 * coupling.w_c)) {
      out.push_back("transverse window must exceed 6 coupling waists");
    }
    return out;
  }

  void validate() const {
    auto v = violations();
    if (v.empty()) return;
    std::string msg = "scenario '" + name + "':";
    for (const auto& s : v) msg += " " + s + ";";
    throw Error(ErrorCategory::validation_error, msg);
  }

  /// Sets an n x n grid over a square window, and the absorber band to 10% of it.
  void set_grid(int n, double window) {
    grid = TransverseGrid{n, n, window, window};
    settings.absorber_width = 0.1 * window;
  }
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig2", "fig3a", "fig3b", "fig3c", "fig4"};
  return names;
}

/// Named parameter sets (caption means). Rabi frequencies and detunings are given
/// relative to Gamma_e = 2 pi x 6.067 MHz; gamma_gr = 2 pi x 100 kHz.
inline Scenario preset(const std::string& name) {
  Scenario s;
  s.name = name;
  s.levels = LevelScheme::rubidium_27s();
  const double ge = s.levels.gamma_e;
  s.set_grid(256, 512e-6);
  s.settings.dz = 25e-6;
  s.settings.lensing = true;
  s.probe.omega_p0 = 0.16 * ge;
  s.cloud.w_r = 2.1e-3;
  s.coupling.wavelength = s.levels.lambda_coupling;
  s.uncertainties["cloud.w_r"] = 0.1e-3;
  s.uncertainties["probe.omega_p0_in_gamma_e"] = 0.01;

  auto molasses = [&](double w_z, double n0, double dn0, double w_c, double delta_c, double omega_c0) {
    s.cloud.w_z = w_z;
    s.cloud.n0 = n0;
    s.coupling.w_c = w_c;
    s.coupling.omega_c0 = omega_c0 * ge;
    s.delta_c = delta_c * ge;
    s.settings.z_start = -2.5 * w_z;
    s.settings.z_end = 1.1e-3;  // camera object plane, 1.1 mm past the cloud center
    s.uncertainties["cloud.w_z"] = 0.1e-3;
    s.uncertainties["cloud.n0"] = dn0;
    s.uncertainties["coupling.w_c"] = 1e-6;
    s.uncertainties["delta_c_in_gamma_e"] = 0.05;
    s.uncertainties["coupling.omega_c0_in_gamma_e"] = 0.05;
  };

  if (name == "fig2" || name == "fig3b") {
    molasses(1.1e-3, 0.59e16, 0.06e16, 49e-6, 0.0, 1.98);
  } else if (name == "fig3a") {
    molasses(1.2e-3, 1.40e16, 0.15e16, 49e-6, 0.16, 1.98);
  } else if (name == "fig3c") {
    molasses(1.1e-3, 0.69e16, 0.07e16, 34e-6, 0.0, 3.18);
  } else if (name == "fig4") {
    // Thin cloud released from a dipole trap sitting in the camera object plane,
    // 1.1 mm past the coupling focus. Coupling beam as calibrated for fig2/fig3b.
    // The probe is followed through the whole cloud and then refocused onto its center.
    s.cloud.w_z = 55e-6;
    s.cloud.n0 = 3.30e16;
    s.cloud.radially_uniform = true;
    s.coupling.w_c = 49e-6;
    s.coupling.omega_c0 = 1.98 * ge;
    s.coupling.z_focus = -1.1e-3;
    s.delta_c = 0.0;
    s.probe.omega_p0 = 0.05 * ge;
    s.settings.dz = 5e-6;
    s.settings.z_start = -4.0 * s.cloud.w_z;
    s.settings.z_end = 4.0 * s.cloud.w_z;
    s.settings.object_plane = 0.0;
    s.uncertainties.erase("cloud.w_r");
    s.uncertainties.erase("probe.omega_p0_in_gamma_e");
    s.uncertainties["cloud.w_z"] = 0.5e-6;
    s.uncertainties["cloud.n0"] = 0.03e16;
  } else {
    throw Error(ErrorCategory::unknown_preset, "unknown scenario preset '" + name + "'");
  }
  return s;
}

}  // namespace eitlens
