#pragma once

// Steady-state paraxial propagation of the probe envelope,
//
//   d/dz Omega_p = i (lambda / 4 pi) Laplacian_perp Omega_p + i eta rho_eg(Omega_p),
//
// by symmetric split-step integration: spectral diffraction half steps around a
// pointwise medium step. The medium step integrates the local ODE with an
// exponential midpoint rule, which is exact for a linear response.

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eitlens/atomic_response.hpp"
#include "eitlens/error.hpp"
#include "eitlens/fft.hpp"
#include "eitlens/log.hpp"

namespace eitlens {

/// Uniform transverse grid. Node (i, j) sits at x = (i - nx/2) dx, y = (j - ny/2) dy,
/// so the optical axis falls exactly on node (nx/2, ny/2). Storage is row-major with x fastest.
struct TransverseGrid {
  int nx = 256;
  int ny = 256;
  double lx = 512e-6;  ///< [m]
  double ly = 512e-6;  ///< [m]

  double dx() const noexcept { return lx / nx; }
  double dy() const noexcept { return ly / ny; }
  double x(int i) const noexcept { return (i - nx / 2) * dx(); }
  double y(int j) const noexcept { return (j - ny / 2) * dy(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  std::size_t center_index() const noexcept { return index(nx / 2, ny / 2); }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (nx < 16 || ny < 16) out.push_back("grid needs at least 16 points per axis");
    if (nx % 2 != 0 || ny % 2 != 0) out.push_back("grid sizes must be even");
    if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly)) {
      out.push_back("window extents must be finite and > 0");
    }
    return out;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw Error(ErrorCategory::invalid_argument, "TransverseGrid: " + v.front());
  }

  friend bool operator==(const TransverseGrid&, const TransverseGrid&) = default;
};

/// Transverse slice of the probe Rabi frequency [rad/s] at axial position z [m].
struct ComplexField2D {
  TransverseGrid grid;
  std::vector<cplx> values;
  double z = 0.0;

  ComplexField2D() = default;
  ComplexField2D(const TransverseGrid& g, double z_pos, cplx fill = cplx(0.0))
      : grid(g), values(g.size(), fill), z(z_pos) {}

  cplx& at(int i, int j) { return values[grid.index(i, j)]; }
  cplx at(int i, int j) const { return values[grid.index(i, j)]; }

  /// sum |Omega|^2 dx dy
  double power() const {
    double s = 0.0;
    for (const auto& v : values) s += std::norm(v);
    return s * grid.dx() * grid.dy();
  }
};

struct PropagationSettings {
  double dz = 25e-6;
  double z_start = 0.0;
  double z_end = 0.0;
  bool lensing = true;
  int absorber_order = 8;
  double absorber_width = 51.2e-6;  ///< edge band width [m]; 0 disables the absorber
  /// Damp only the departure from the diffraction-free field, so a transversely
  /// uniform background passes the window edge without being clipped.
  bool absorber_relative = true;
  int medium_substeps = 1;
  /// Plane the camera is focused on. When set (and lensing is on), the field leaving
  /// z_end is carried back or forward to it through vacuum.
  std::optional<double> object_plane;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(dz > 0.0)) out.push_back("dz must be > 0");
    if (!(z_end > z_start)) out.push_back("z_end must exceed z_start");
    if (absorber_order < 2) out.push_back("absorber_order must be >= 2");
    if (!(absorber_width >= 0.0)) out.push_back("absorber_width must be >= 0");
    if (medium_substeps < 1) out.push_back("medium_substeps must be >= 1");
    if (object_plane && !std::isfinite(*object_plane)) out.push_back("object_plane must be finite");
    return out;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw Error(ErrorCategory::invalid_argument, "PropagationSettings: " + v.front());
  }

  int step_count() const {
    return std::max(1, static_cast<int>(std::ceil((z_end - z_start) / dz - 1e-9)));
  }
};

/// Warns when dz exceeds a twentieth of the Rayleigh length of the narrowest transverse feature.
inline bool step_size_adequate(const PropagationSettings& s, double feature_waist, double wavelength) {
  const double zr = std::numbers::pi * feature_waist * feature_waist / wavelength;
  if (s.dz > zr / 20.0) {
    warn("dz = " + std::to_string(s.dz) + " m exceeds Rayleigh length / 20 of the narrowest feature (" +
         std::to_string(zr / 20.0) + " m)");
    return false;
  }
  return true;
}

/// Anything that supplies the local medium on the grid and the per-atom response.
///   sample(z, eta, omega_c): coupling constant eta = n sigma0 Gamma_e / 2 [rad/(s m)]
///                            and |Omega_c| [rad/s] at every grid node
///   response_ratio_at(|Omega_p|, |Omega_c|): rho_eg / Omega_p [s/rad]
template <class M>
concept TransverseMedium = requires(const M& m, double z, std::span<double> buf, double v) {
  m.sample(z, buf, buf);
  { m.response_ratio_at(v, v) } -> std::convertible_to<cplx>;
};

/// Homogeneous slab on [z_begin, z_end), vacuum elsewhere.
template <class Response>
struct UniformSlab {
  double eta = 0.0;
  double omega_c = 0.0;
  double z_begin = 0.0;
  double z_end = 0.0;
  Response response;

  void sample(double z, std::span<double> eta_out, std::span<double> oc_out) const {
    const double e = (z >= z_begin && z < z_end) ? eta : 0.0;
    std::fill(eta_out.begin(), eta_out.end(), e);
    std::fill(oc_out.begin(), oc_out.end(), omega_c);
  }
  cplx response_ratio_at(double p, double c) const { return response.response_ratio_at(p, c); }
};

// -- absorber ---------------------------------------------------------------

namespace detail {

// Mask value at the outermost node: exp(-kAbsorberStrength).
inline constexpr double kAbsorberStrength = 9.210340371976184;  // ln(1e4)

inline std::vector<double> edge_mask_1d(int n, double extent, int order, double width) {
  std::vector<double> m(static_cast<std::size_t>(n), 1.0);
  if (width <= 0.0) return m;
  const double d = extent / n;
  const double inner = 0.5 * extent - width;
  for (int i = 0; i < n; ++i) {
    const double u = (std::abs((i - n / 2) * d) - inner) / width;
    if (u > 0.0) m[static_cast<std::size_t>(i)] = std::exp(-kAbsorberStrength * std::pow(u, order));
  }
  return m;
}

struct EdgeMask {
  std::vector<double> mx, my;
  bool active = false;

  EdgeMask(const TransverseGrid& g, int order, double width)
      : mx(edge_mask_1d(g.nx, g.lx, order, width)), my(edge_mask_1d(g.ny, g.ly, order, width)),
        active(width > 0.0) {}

  void apply(std::span<cplx> f, int nx, int ny) const {
    if (!active) return;
    for (int j = 0; j < ny; ++j) {
      const double wy = my[static_cast<std::size_t>(j)];
      cplx* row = f.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(nx);
      if (wy == 1.0) {
        for (int i = 0; i < nx; ++i) {
          const double wx = mx[static_cast<std::size_t>(i)];
          if (wx != 1.0) row[i] *= wx;
        }
      } else {
        for (int i = 0; i < nx; ++i) row[i] *= wy * mx[static_cast<std::size_t>(i)];
      }
    }
  }

  /// f <- ref + mask (f - ref)
  void apply_relative(std::span<cplx> f, std::span<const cplx> ref, int nx, int ny) const {
    if (!active) return;
    for (int j = 0; j < ny; ++j) {
      const double wy = my[static_cast<std::size_t>(j)];
      const std::size_t base = static_cast<std::size_t>(j) * static_cast<std::size_t>(nx);
      for (int i = 0; i < nx; ++i) {
        const double w = wy * mx[static_cast<std::size_t>(i)];
        if (w == 1.0) continue;
        const std::size_t n = base + static_cast<std::size_t>(i);
        f[n] = ref[n] + w * (f[n] - ref[n]);
      }
    }
  }
};

}  // namespace detail

/// Multiplies the field by a super-Gaussian edge mask: exactly 1 in the interior,
/// rolling off over the outer @p width to 1e-4 at the window edge.
inline ComplexField2D apply_absorber(ComplexField2D f, int order, double width) {
  if (!(width < 0.5 * std::min(f.grid.lx, f.grid.ly))) {
    throw Error(ErrorCategory::invalid_argument, "absorber width must be below half the window");
  }
  detail::EdgeMask(f.grid, order, width).apply(f.values, f.grid.nx, f.grid.ny);
  return f;
}

// -- diffraction ------------------------------------------------------------

/// Spectral free-space propagator on one grid. Owns the FFT workspace; the field
/// being propagated lives in workspace() between calls.
class Diffractor {
 public:
  Diffractor(const TransverseGrid& grid, double wavelength)
      : grid_(grid), wavelength_(wavelength), ws_(grid.nx, grid.ny), k2_(grid.size()) {
    grid.validate();
    const double dkx = kTwoPi / grid.lx, dky = kTwoPi / grid.ly;
    for (int j = 0; j < grid.ny; ++j) {
      const double ky = dky * (j < grid.ny / 2 ? j : j - grid.ny);
      for (int i = 0; i < grid.nx; ++i) {
        const double kx = dkx * (i < grid.nx / 2 ? i : i - grid.nx);
        k2_[grid.index(i, j)] = kx * kx + ky * ky;
      }
    }
  }

  std::span<cplx> workspace() noexcept { return ws_.data(); }
  const TransverseGrid& grid() const noexcept { return grid_; }

  /// Multiplies the spectrum by exp(-i lambda/(4 pi) |k_perp|^2 dz).
  void step(double dz) {
    const auto& kernel = kernel_for(dz);
    ws_.forward();
    auto d = ws_.data();
    for (std::size_t n = 0; n < d.size(); ++n) d[n] *= kernel[n];
    ws_.backward();
  }

 private:
  const std::vector<cplx>& kernel_for(double dz) {
    for (auto& c : cache_) {
      if (c.dz == dz) return c.kernel;
    }
    if (cache_.size() >= 4) cache_.erase(cache_.begin());
    Cached c{dz, std::vector<cplx>(k2_.size())};
    const double a = wavelength_ / (2.0 * kTwoPi) * dz;
    const double norm = 1.0 / static_cast<double>(k2_.size());
    for (std::size_t n = 0; n < k2_.size(); ++n) c.kernel[n] = std::polar(norm, -a * k2_[n]);
    cache_.push_back(std::move(c));
    return cache_.back().kernel;
  }

  struct Cached {
    double dz;
    std::vector<cplx> kernel;
  };

  TransverseGrid grid_;
  double wavelength_;
  FftWorkspace ws_;
  std::vector<double> k2_;
  std::vector<Cached> cache_;
};

inline ComplexField2D diffraction_step(ComplexField2D f, double dz, double wavelength) {
  Diffractor d(f.grid, wavelength);
  std::copy(f.values.begin(), f.values.end(), d.workspace().begin());
  d.step(dz);
  std::copy(d.workspace().begin(), d.workspace().end(), f.values.begin());
  f.z += dz;
  return f;
}

inline ComplexField2D diffraction_step(ComplexField2D f, double dz, const LevelScheme& ls) {
  return diffraction_step(std::move(f), dz, ls.lambda_probe);
}

// -- medium -----------------------------------------------------------------

namespace detail {

template <class R>
inline cplx midpoint_update(const R& ratio_at, cplx omega, double e, double h) {
  // log-derivative g = i eta rho_eg / Omega_p; exponential midpoint rule.
  // Only |Omega_p| at the midpoint is needed, and Re(g) = -eta Im(ratio).
  const double m0 = std::sqrt(std::norm(omega));
  const double mh = m0 * std::exp(-0.5 * h * e * ratio_at(m0).imag());
  const cplx r1 = ratio_at(mh);
  return omega * std::polar(std::exp(-h * e * r1.imag()), h * e * r1.real());
}

// Fixes the coupling magnitude for both midpoint evaluations; media that expose
// slice(c) skip the repeated coupling-axis lookup.
template <class M>
inline cplx midpoint_update(const M& medium, cplx omega, double e, double c, double h) {
  if constexpr (requires { medium.slice(c).response_ratio_at(c); }) {
    const auto s = medium.slice(c);
    return midpoint_update([&s](double p) { return s.response_ratio_at(p); }, omega, e, h);
  } else {
    return midpoint_update([&](double p) { return medium.response_ratio_at(p, c); }, omega, e, h);
  }
}

/// Advances @p field over [z0, z0 + dz]. If @p ref_nodes is nonempty, @p ref is
/// advanced at those nodes only, sharing the medium samples.
template <TransverseMedium M>
void medium_step_inplace(std::span<cplx> field, const M& medium, double z0, double dz, int substeps,
                         std::vector<double>& eta, std::vector<double>& oc, std::span<cplx> ref = {},
                         std::span<const std::size_t> ref_nodes = {}) {
  eta.resize(field.size());
  oc.resize(field.size());
  const double h = dz / substeps;
  for (int s = 0; s < substeps; ++s) {
    medium.sample(z0 + (s + 0.5) * h, eta, oc);
    for (std::size_t n = 0; n < field.size(); ++n) {
      if (eta[n] != 0.0) field[n] = midpoint_update(medium, field[n], eta[n], oc[n], h);
    }
    for (const std::size_t n : ref_nodes) {
      if (eta[n] != 0.0) ref[n] = midpoint_update(medium, ref[n], eta[n], oc[n], h);
    }
  }
}

}  // namespace detail

/// Integrates d Omega_p/dz = i eta rho_eg(Omega_p) pointwise from f.z to f.z + dz.
template <TransverseMedium M>
ComplexField2D medium_step(ComplexField2D f, const M& medium, double dz, int substeps = 1) {
  std::vector<double> eta, oc;
  detail::medium_step_inplace(std::span<cplx>(f.values), medium, f.z, dz, substeps, eta, oc);
  f.z += dz;
  return f;
}

// -- full propagation -------------------------------------------------------

/// Called after every completed step with the current z and field.
using StepObserver = std::function<void(double z, std::span<const cplx> field)>;

/// Propagates f0 (given at settings.z_start) to settings.z_end. Steps are
/// D(h/2) M(h) D(h/2) with consecutive half diffractions merged, and the absorber
/// applied after each step. With lensing off, diffraction is skipped entirely.
///
/// With settings.absorber_relative, a diffraction-free copy of the field is carried
/// along (medium steps only) and the edge mask pulls the field towards it.
///
/// With settings.object_plane, the exit field is finally refocused onto that plane.
///
/// If the medium provides ensure_probe_coverage(max |Omega_p|), it is called before
/// each medium step so tabulated responses can grow their range.
template <TransverseMedium M>
ComplexField2D propagate(const ComplexField2D& f0, M& medium, const PropagationSettings& settings,
                         double wavelength, const StepObserver& observer = {}) {
  settings.validate();
  f0.grid.validate();
  if (settings.absorber_width > 0.0 &&
      !(settings.absorber_width < 0.5 * std::min(f0.grid.lx, f0.grid.ly))) {
    throw Error(ErrorCategory::invalid_argument, "absorber width must be below half the window");
  }
  const int n = settings.step_count();
  const double h = (settings.z_end - settings.z_start) / n;

  Diffractor diff(f0.grid, wavelength);
  auto field = diff.workspace();
  std::copy(f0.values.begin(), f0.values.end(), field.begin());
  const detail::EdgeMask mask(f0.grid, settings.absorber_order, settings.absorber_width);
  std::vector<double> eta, oc;
  // Relative absorber: the reference is only needed where the mask is below 1,
  // and without diffraction it equals the field, so the mask is then a no-op.
  const bool relative = settings.absorber_relative && mask.active;
  std::vector<cplx> ref;
  std::vector<std::size_t> band;
  if (relative && settings.lensing) {
    ref = f0.values;
    for (int j = 0; j < f0.grid.ny; ++j) {
      for (int i = 0; i < f0.grid.nx; ++i) {
        if (mask.mx[static_cast<std::size_t>(i)] * mask.my[static_cast<std::size_t>(j)] != 1.0) {
          band.push_back(f0.grid.index(i, j));
        }
      }
    }
  }

  if (settings.lensing) diff.step(0.5 * h);
  for (int k = 0; k < n; ++k) {
    const double z = settings.z_start + k * h;
    if constexpr (requires(M& m, double v) { m.ensure_probe_coverage(v); }) {
      double peak = 0.0;
      for (const auto& v : field) peak = std::max(peak, std::norm(v));
      medium.ensure_probe_coverage(std::sqrt(peak));
    }
    detail::medium_step_inplace(field, std::as_const(medium), z, h, settings.medium_substeps, eta, oc,
                                std::span<cplx>(ref), band);
    if (settings.lensing) diff.step(k + 1 == n ? 0.5 * h : h);
    if (!relative) {
      mask.apply(field, f0.grid.nx, f0.grid.ny);
    } else if (settings.lensing) {
      mask.apply_relative(field, ref, f0.grid.nx, f0.grid.ny);
    }

    double p = 0.0;
    for (const auto& v : field) p += std::norm(v);
    if (!std::isfinite(p)) {
      throw Error(ErrorCategory::nonfinite_field, "field became nonfinite at z = " + std::to_string(z + h));
    }
    if (observer) observer(z + h, field);
  }

  double z_out = settings.z_end;
  if (settings.object_plane && settings.lensing && *settings.object_plane != settings.z_end) {
    diff.step(*settings.object_plane - settings.z_end);
    z_out = *settings.object_plane;
  }
  ComplexField2D out(f0.grid, z_out);
  std::copy(field.begin(), field.end(), out.values.begin());
  return out;
}

}  // namespace eitlens
