#pragma once

// Scenario runs: exit-plane images, detuning scans, and the analytic column-transmission
// reference used for thin clouds and for the coupling-free background.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "eitlens/atomic_response.hpp"
#include "eitlens/error.hpp"
#include "eitlens/propagation.hpp"
#include "eitlens/response_table.hpp"
#include "eitlens/scenario.hpp"

namespace eitlens {

// -- response providers -----------------------------------------------------

/// Response table that rebuilds itself with a larger probe range when the field
/// outgrows it. Coupling nodes are placed adaptively.
class TabulatedResponse {
 public:
  TabulatedResponse(double omega_p_max, double omega_c_max, std::size_t nodes, double delta_p,
                    double delta_c, const LevelScheme& ls)
      : nodes_(nodes), omega_c_max_(omega_c_max), delta_p_(delta_p), delta_c_(delta_c), ls_(ls),
        table_(build(omega_p_max)) {}

  cplx response_ratio_at(double p, double c) const { return table_.response_ratio_at(p, c); }
  ResponseTable::CouplingSlice slice(double c) const { return table_.slice(c); }

  void ensure_probe_coverage(double peak) {
    if (peak <= table_.omega_p_max()) return;
    if (!std::isfinite(peak)) throw Error(ErrorCategory::nonfinite_field, "probe field became nonfinite");
    table_ = build(1.5 * peak);
    ++rebuilds_;
  }

  const ResponseTable& table() const noexcept { return table_; }
  int rebuilds() const noexcept { return rebuilds_; }

 private:
  ResponseTable build(double pmax) const {
    return ResponseTable::adaptive(pmax, omega_c_max_, nodes_, nodes_, delta_p_, delta_c_, ls_);
  }

  std::size_t nodes_;
  double omega_c_max_, delta_p_, delta_c_;
  LevelScheme ls_;
  ResponseTable table_;
  int rebuilds_ = 0;
};

// -- medium -----------------------------------------------------------------

/// The scenario's cloud and coupling beam sampled on the transverse grid.
template <class Response>
class CloudMedium {
 public:
  CloudMedium(const Scenario& s, Response response)
      : cloud_(s.cloud), beam_(s.coupling), response_(std::move(response)),
        eta_unit_(0.5 * s.levels.sigma_0() * s.levels.gamma_e) {
    const auto& g = s.grid;
    r2_.resize(g.size());
    radial_.resize(g.size());
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const double r2 = g.x(i) * g.x(i) + g.y(j) * g.y(j);
        r2_[g.index(i, j)] = r2;
        radial_[g.index(i, j)] =
            cloud_.radially_uniform ? 1.0 : std::exp(-2.0 * r2 / (cloud_.w_r * cloud_.w_r));
      }
    }
  }

  void sample(double z, std::span<double> eta, std::span<double> oc) const {
    const double dz = z - cloud_.center_z;
    const double e0 = eta_unit_ * cloud_.n0 * std::exp(-2.0 * dz * dz / (cloud_.w_z * cloud_.w_z));
    const double z0 = beam_.rayleigh();
    const double zz = z - beam_.z_focus;
    const double amp = beam_.omega_c0 * z0 / std::hypot(zz, z0);
    const double inv_w2 = 1.0 / (beam_.w_c * beam_.w_c * (1.0 + zz * zz / (z0 * z0)));
    for (std::size_t n = 0; n < r2_.size(); ++n) {
      eta[n] = e0 * radial_[n];
      oc[n] = amp * std::exp(-r2_[n] * inv_w2);
    }
  }

  cplx response_ratio_at(double p, double c) const { return response_.response_ratio_at(p, c); }
  auto slice(double c) const { return response_.slice(c); }

  void ensure_probe_coverage(double peak)
    requires requires(Response& r, double v) { r.ensure_probe_coverage(v); }
  {
    response_.ensure_probe_coverage(peak);
  }

  const Response& response() const noexcept { return response_; }

 private:
  AtomicCloud cloud_;
  CouplingBeam beam_;
  Response response_;
  double eta_unit_;
  std::vector<double> r2_, radial_;
};

/// Largest |Omega_c| met inside the propagation span.
inline double peak_coupling(const Scenario& s) {
  const double z = std::clamp(s.coupling.z_focus, s.settings.z_start, s.settings.z_end);
  return coupling_magnitude(s.coupling, 0.0, z);
}

// -- results ----------------------------------------------------------------

struct RunOptions {
  std::size_t table_nodes = 128;
  bool direct = false;                  ///< per-point steady-state solves instead of the table
  unsigned threads = 0;                 ///< 0: hardware concurrency
  double center_radius_fraction = 0.2;  ///< center disk radius in units of w_c
  bool keep_images = false;
};

struct RunDiagnostics {
  int steps = 0;
  int table_rebuilds = 0;
  double table_probe_max = 0.0;  ///< [rad/s]; 0 for direct solves
  double peak_probe = 0.0;       ///< largest |Omega_p| seen [rad/s]
  double seconds = 0.0;
};

struct ImageResult {
  std::string scenario;
  double delta_p = 0.0;  ///< [rad/s]
  bool lensing = true;
  TransverseGrid grid;
  std::vector<double> intensity;  ///< |Omega_p|^2 / Omega_p0^2 at the exit plane
  RunDiagnostics diagnostics;

  double at(int i, int j) const { return intensity[grid.index(i, j)]; }
};

struct SpectrumEntry {
  double delta_p;  ///< [rad/s]
  double transmission;
};

struct SpectrumResult {
  std::string scenario;
  bool lensing = true;
  double gamma_e = 0.0;
  std::vector<SpectrumEntry> entries;
  std::vector<RunDiagnostics> diagnostics;  ///< one per entry
  std::vector<ImageResult> images;          ///< filled when RunOptions::keep_images
};

// -- image analysis ---------------------------------------------------------

/// Mean over the nodes within @p radius of the axis.
inline double disk_average(const TransverseGrid& g, std::span<const double> v, double radius) {
  double sum = 0.0;
  std::size_t count = 0;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (std::hypot(g.x(i), g.y(j)) <= radius) {
        sum += v[g.index(i, j)];
        ++count;
      }
    }
  }
  return count == 0 ? v[g.center_index()] : sum / static_cast<double>(count);
}

inline double center_transmission(const ImageResult& img, double radius) {
  return disk_average(img.grid, img.intensity, radius);
}

/// Azimuthally averaged profile in bins of width dx centered on r = k dx.
inline std::vector<double> radial_profile(const ImageResult& img) {
  const auto& g = img.grid;
  const int bins = std::min(g.nx, g.ny) / 2;
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<int> count(static_cast<std::size_t>(bins), 0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const auto k = static_cast<int>(std::lround(std::hypot(g.x(i), g.y(j)) / g.dx()));
      if (k < bins) {
        sum[static_cast<std::size_t>(k)] += img.intensity[g.index(i, j)];
        ++count[static_cast<std::size_t>(k)];
      }
    }
  }
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (count[k] > 0) sum[k] /= count[k];
  }
  return sum;
}

/// Radius where the spot's excess over @p background first falls to e^-2 of its
/// on-axis value. Returns 0 when the axis is not brighter than the background.
inline double spot_radius(const ImageResult& img, double background) {
  const auto prof = radial_profile(img);
  const double top = prof[0] - background;
  if (!(top > 0.0)) return 0.0;
  const double level = top * std::exp(-2.0);
  for (std::size_t k = 1; k < prof.size(); ++k) {
    const double a = prof[k - 1] - background, b = prof[k] - background;
    if (b <= level) {
      const double f = (a - level) / (a - b);
      return (static_cast<double>(k - 1) + f) * img.grid.dx();
    }
  }
  return static_cast<double>(prof.size()) * img.grid.dx();
}

/// Nodes far from the coupling beam (r >= 4 w_c) and clear of the absorber band.
inline std::vector<std::size_t> background_nodes(const Scenario& s) {
  const auto& g = s.grid;
  const double margin = 5.0 * g.dx();
  const double hx = 0.5 * g.lx - s.settings.absorber_width - margin;
  const double hy = 0.5 * g.ly - s.settings.absorber_width - margin;
  std::vector<std::size_t> out;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const double x = g.x(i), y = g.y(j);
      if (std::abs(x) <= hx && std::abs(y) <= hy && std::hypot(x, y) >= 4.0 * s.coupling.w_c) {
        out.push_back(g.index(i, j));
      }
    }
  }
  return out;
}

inline double background_level(const ImageResult& img, const Scenario& s) {
  const auto nodes = background_nodes(s);
  if (nodes.empty()) throw Error(ErrorCategory::invalid_argument, "window has no background region");
  double sum = 0.0;
  for (auto n : nodes) sum += img.intensity[n];
  return sum / static_cast<double>(nodes.size());
}

// -- analytic column transmission ---------------------------------------------

/// exp(-k integral Im chi dz) along the line at radius r over [z_begin, z_end],
/// with the scenario's coupling beam or without it.
inline double column_transmission(const Scenario& s, double r, double delta_p, double z_begin,
                                  double z_end, bool with_coupling = true) {
  const auto& ls = s.levels;
  const double k = ls.k();
  auto integrand = [&](double z) {
    const double n = density(s.cloud, r, z);
    if (n == 0.0) return 0.0;
    FieldPoint fp;
    fp.omega_c = with_coupling ? coupling_magnitude(s.coupling, r, z) : 0.0;
    fp.delta_p = delta_p;
    fp.delta_c = s.delta_c;
    return k * chi_linear(n, fp, ls).chi.imag();
  };
  double err = 0.0, l1 = 0.0;
  // Tolerances much below 1e-10 drive the recursion into roundoff, where the
  // summed error estimate grows instead of shrinking.
  const double od = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, z_begin, z_end, 15,
                                                                                   1e-10, &err, &l1);
  if (l1 > 0.0 && err > 1e-8 * l1) {
    throw Error(ErrorCategory::quadrature_nonconvergence,
                "column quadrature error estimate " + std::to_string(err / l1) + " exceeds 1e-8");
  }
  return std::exp(-od);
}

/// Linear-response transmission through the full cloud (center +- 4 w_z).
inline double thin_cloud_transmission(const Scenario& s, double r, double delta_p) {
  const double a = s.cloud.center_z - 4.0 * s.cloud.w_z, b = s.cloud.center_z + 4.0 * s.cloud.w_z;
  return column_transmission(s, r, delta_p, a, b);
}

/// thin_cloud_transmission averaged over the same center disk the images use.
inline double thin_cloud_center_transmission(const Scenario& s, double delta_p, double radius) {
  const auto& g = s.grid;
  std::vector<double> t(g.size(), 0.0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const double r = std::hypot(g.x(i), g.y(j));
      if (r <= radius || (i == g.nx / 2 && j == g.ny / 2)) t[g.index(i, j)] = thin_cloud_transmission(s, r, delta_p);
    }
  }
  return disk_average(g, t, radius);
}

/// Intensity transmission without coupling light over the propagation span, solved
/// with the full steady-state response (RK4 on the probe amplitude).
inline double coupling_free_transmission(const Scenario& s, double r, double delta_p) {
  const DirectResponse resp(delta_p, s.delta_c, s.levels);
  const double eta_unit = 0.5 * s.levels.sigma_0() * s.levels.gamma_e;
  auto rhs = [&](double z, cplx omega) {
    const double eta = eta_unit * density(s.cloud, r, z);
    if (eta == 0.0) return cplx(0.0);
    return cplx(0.0, eta) * omega * resp.response_ratio_at(std::abs(omega), 0.0);
  };
  const double p0 = std::abs(s.probe.amplitude(r));
  const int n = 4 * s.settings.step_count();
  const double h = (s.settings.z_end - s.settings.z_start) / n;
  cplx y = p0;
  for (int k = 0; k < n; ++k) {
    const double z = s.settings.z_start + k * h;
    const cplx k1 = rhs(z, y);
    const cplx k2 = rhs(z + 0.5 * h, y + 0.5 * h * k1);
    const cplx k3 = rhs(z + 0.5 * h, y + 0.5 * h * k2);
    const cplx k4 = rhs(z + h, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return std::norm(y) / (p0 * p0);
}

/// Mean of coupling_free_transmission over the background nodes, with the radial
/// dependence interpolated from a few samples.
inline double background_reference(const Scenario& s, double delta_p) {
  const auto& g = s.grid;
  const auto nodes = background_nodes(s);
  if (nodes.empty()) throw Error(ErrorCategory::invalid_argument, "window has no background region");
  double rmin = 1e300, rmax = 0.0;
  std::vector<double> rs;
  rs.reserve(nodes.size());
  for (auto n : nodes) {
    const auto i = static_cast<int>(n % static_cast<std::size_t>(g.nx));
    const auto j = static_cast<int>(n / static_cast<std::size_t>(g.nx));
    rs.push_back(std::hypot(g.x(i), g.y(j)));
    rmin = std::min(rmin, rs.back());
    rmax = std::max(rmax, rs.back());
  }
  constexpr int kSamples = 9;
  std::vector<double> tr(kSamples);
  for (int k = 0; k < kSamples; ++k) tr[k] = coupling_free_transmission(s, rmin + (rmax - rmin) * k / (kSamples - 1), delta_p);
  double sum = 0.0;
  for (double r : rs) {
    const double u = rmax > rmin ? (r - rmin) / (rmax - rmin) * (kSamples - 1) : 0.0;
    const int k = std::min(kSamples - 2, static_cast<int>(u));
    const double f = u - k;
    sum += (1.0 - f) * tr[k] + f * tr[k + 1];
  }
  return sum / static_cast<double>(rs.size());
}

// -- runs -------------------------------------------------------------------

namespace detail {

inline ComplexField2D initial_field(const Scenario& s) {
  ComplexField2D f(s.grid, s.settings.z_start);
  for (int j = 0; j < s.grid.ny; ++j) {
    for (int i = 0; i < s.grid.nx; ++i) f.at(i, j) = s.probe.amplitude(std::hypot(s.grid.x(i), s.grid.y(j)));
  }
  return f;
}

template <class Response>
ImageResult run_with(const Scenario& s, double delta_p, CloudMedium<Response>& medium) {
  ImageResult img;
  img.scenario = s.name;
  img.delta_p = delta_p;
  img.lensing = s.settings.lensing;
  img.grid = s.grid;

  double peak = 0.0;
  auto observer = [&peak](double, std::span<const cplx> f) {
    for (const auto& v : f) peak = std::max(peak, std::norm(v));
  };
  const auto out = propagate(initial_field(s), medium, s.settings, s.levels.lambda_probe, observer);

  const double norm = 1.0 / (s.probe.omega_p0 * s.probe.omega_p0);
  img.intensity.resize(out.values.size());
  for (std::size_t n = 0; n < out.values.size(); ++n) img.intensity[n] = std::norm(out.values[n]) * norm;
  img.diagnostics.steps = s.settings.step_count();
  img.diagnostics.peak_probe = std::sqrt(peak);
  return img;
}

}  // namespace detail

/// Propagates the probe through the scenario and returns the exit-plane intensity.
inline ImageResult run_image(const Scenario& s, double delta_p, const RunOptions& opt = {}) {
  s.validate();
  if (!std::isfinite(delta_p)) throw Error(ErrorCategory::invalid_argument, "delta_p must be finite");
  const auto t0 = std::chrono::steady_clock::now();
  ImageResult img;
  if (opt.direct) {
    CloudMedium<DirectResponse> medium(s, DirectResponse(delta_p, s.delta_c, s.levels));
    img = detail::run_with(s, delta_p, medium);
  } else {
    const double pmax = 2.0 * s.probe.omega_p0;
    const double cmax = peak_coupling(s);
    CloudMedium<TabulatedResponse> medium(
        s, TabulatedResponse(pmax, cmax, opt.table_nodes, delta_p, s.delta_c, s.levels));
    img = detail::run_with(s, delta_p, medium);
    img.diagnostics.table_rebuilds = medium.response().rebuilds();
    img.diagnostics.table_probe_max = medium.response().table().omega_p_max();
  }
  img.diagnostics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return img;
}

/// Runs @p task(k) for k in [0, count) on up to @p threads workers. The first
/// failure (lowest index) is rethrown after all workers finish.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        task(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline unsigned resolved_threads(unsigned requested) {
  return requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
}

/// Center transmission for each detuning [rad/s]; @p deltas must be strictly increasing.
inline SpectrumResult run_spectrum(const Scenario& s, const std::vector<double>& deltas, const RunOptions& opt = {}) {
  s.validate();
  if (deltas.empty()) throw Error(ErrorCategory::invalid_argument, "empty detuning list");
  for (std::size_t k = 1; k < deltas.size(); ++k) {
    if (!(deltas[k] > deltas[k - 1])) throw Error(ErrorCategory::invalid_argument, "detunings must be strictly increasing");
  }
  SpectrumResult res;
  res.scenario = s.name;
  res.lensing = s.settings.lensing;
  res.gamma_e = s.levels.gamma_e;
  res.entries.resize(deltas.size());
  res.diagnostics.resize(deltas.size());
  if (opt.keep_images) res.images.resize(deltas.size());
  const double radius = opt.center_radius_fraction * s.coupling.w_c;

  parallel_for(deltas.size(), opt.threads, [&](std::size_t k) {
    auto img = run_image(s, deltas[k], opt);
    res.entries[k] = {deltas[k], center_transmission(img, radius)};
    res.diagnostics[k] = img.diagnostics;
    if (opt.keep_images) res.images[k] = std::move(img);
  });
  return res;
}

/// count detunings evenly spaced over [start, stop], both in units of Gamma_e.
inline std::vector<double> scan_detunings(double start, double stop, int count, double gamma_e) {
  if (count < 1) throw Error(ErrorCategory::invalid_argument, "scan count must be >= 1");
  if (count > 1 && !(start < stop)) throw Error(ErrorCategory::invalid_argument, "scan start must be below stop");
  std::vector<double> d(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double u = count == 1 ? start : start + (stop - start) * k / (count - 1);
    d[static_cast<std::size_t>(k)] = u * gamma_e;
  }
  return d;
}

inline SpectrumResult run_scan(const Scenario& s, double start, double stop, int count, const RunOptions& opt = {}) {
  return run_spectrum(s, scan_detunings(start, stop, count, s.levels.gamma_e), opt);
}

}  // namespace eitlens
