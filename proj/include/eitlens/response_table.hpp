#pragma once

// Tabulated steady-state response for fixed detunings.
//
// rho_eg depends on the field phases only through a gauge factor,
//   rho_eg(Omega_p e^{i phi}, Omega_c e^{i psi}) = e^{i phi} rho_eg(|Omega_p|, |Omega_c|),
// so a 2-D table over magnitudes is sufficient.
//
// The table stores the effective denominator D = i / (2 rho_eg / Omega_p) (units of
// Gamma_e) and interpolates it bilinearly with weights taken in squared magnitudes.
// In the weak-probe limit D is exactly affine in |Omega_c|^2 and independent of
// |Omega_p|, so the interpolation error comes only from saturation terms. Those are
// sharpest at small |Omega_c| (probe pumping into |r>) and near the Autler-Townes
// resonance |Omega_c| ~ 2|Delta_p|; adaptive() concentrates coupling nodes there.

#include <algorithm>
#include <cstddef>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eitlens/atomic_response.hpp"
#include "eitlens/error.hpp"

namespace eitlens {

class ResponseTable {
 public:
  /// Sample magnitudes are in rad/s and must be strictly increasing and nonnegative.
  ResponseTable(std::vector<double> omega_p_samples, std::vector<double> omega_c_samples,
                double delta_p, double delta_c, const LevelScheme& ls)
      : p_(std::move(omega_p_samples), "omega_p"),
        c_(std::move(omega_c_samples), "omega_c"),
        delta_p_(delta_p),
        delta_c_(delta_c),
        ls_(ls) {
    ls_.validate();
    const std::size_t np = p_.nodes.size();
    denom_.resize(np * c_.nodes.size());
    for (std::size_t ic = 0; ic < c_.nodes.size(); ++ic) {
      for (std::size_t ip = 0; ip < np; ++ip) {
        const cplx r = response_ratio(p_.nodes[ip], c_.nodes[ic], delta_p_, delta_c_, ls_);
        denom_[ic * np + ip] = ratio_to_denominator(r * ls_.gamma_e);
      }
    }
  }

  /// Equally spaced magnitudes on [0, max].
  static std::vector<double> linear_nodes(double max_magnitude, std::size_t count) {
    if (count < 2) throw Error(ErrorCategory::invalid_argument, "response table needs >= 2 nodes per axis");
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
      v[i] = max_magnitude * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    v.back() = max_magnitude;
    return v;
  }

  static ResponseTable uniform(double omega_p_max, double omega_c_max, std::size_t np, std::size_t nc,
                               double delta_p, double delta_c, const LevelScheme& ls) {
    return ResponseTable(linear_nodes(omega_p_max, np), linear_nodes(omega_c_max, nc),
                         delta_p, delta_c, ls);
  }

  /// Probe nodes equally spaced; coupling nodes equidistribute the linear-interpolation
  /// error estimate sqrt(|d^2 D / d(|Omega_c|^2)^2| / |D|), sampled on @p probe_samples
  /// points along the coupling axis at nine probe amplitudes.
  static ResponseTable adaptive(double omega_p_max, double omega_c_max, std::size_t np, std::size_t nc,
                                double delta_p, double delta_c, const LevelScheme& ls,
                                std::size_t probe_samples = 1024) {
    return ResponseTable(linear_nodes(omega_p_max, np),
                         adaptive_coupling_nodes(omega_p_max, omega_c_max, nc, delta_p, delta_c, ls,
                                                 probe_samples),
                         delta_p, delta_c, ls);
  }

  static std::vector<double> adaptive_coupling_nodes(double omega_p_max, double omega_c_max,
                                                     std::size_t count, double delta_p, double delta_c,
                                                     const LevelScheme& ls, std::size_t samples = 1024) {
    if (count < 2) throw Error(ErrorCategory::invalid_argument, "response table needs >= 2 nodes per axis");
    if (!(omega_c_max > 0.0)) return linear_nodes(omega_c_max > 0.0 ? omega_c_max : 1.0, count);
    const std::size_t m = std::max<std::size_t>(samples, 16);
    std::vector<double> sq(m), density(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double c = omega_c_max * static_cast<double>(k) / static_cast<double>(m - 1);
      sq[k] = c * c;
    }
    std::vector<cplx> d(m);
    constexpr int kProbeLevels = 8;
    for (int level = 0; level <= kProbeLevels; ++level) {
      const double p = omega_p_max * level / kProbeLevels;
      for (std::size_t k = 0; k < m; ++k) {
        d[k] = ratio_to_denominator(response_ratio(p, std::sqrt(sq[k]), delta_p, delta_c, ls) * ls.gamma_e);
      }
      for (std::size_t k = 1; k + 1 < m; ++k) {
        const double h0 = sq[k] - sq[k - 1], h1 = sq[k + 1] - sq[k];
        const cplx d2 = 2.0 * ((d[k + 1] - d[k]) / h1 - (d[k] - d[k - 1]) / h0) / (h0 + h1);
        density[k] = std::max(density[k], std::sqrt(std::abs(d2) / std::abs(d[k])));
      }
    }
    density.front() = density[1];
    density.back() = density[m - 2];
    double mean = 0.0;
    for (double v : density) mean += v / static_cast<double>(m);
    if (!(mean > 0.0)) return linear_nodes(omega_c_max, count);
    for (double& v : density) v += 0.002 * mean;

    std::vector<double> cum(m, 0.0);
    for (std::size_t k = 1; k < m; ++k) cum[k] = cum[k - 1] + 0.5 * (density[k] + density[k - 1]) * (sq[k] - sq[k - 1]);
    std::vector<double> nodes(count);
    std::size_t k = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const double target = cum.back() * static_cast<double>(i) / static_cast<double>(count - 1);
      while (k + 2 < m && cum[k + 1] < target) ++k;
      const double f = (target - cum[k]) / (cum[k + 1] - cum[k]);
      nodes[i] = std::sqrt(sq[k] + f * (sq[k + 1] - sq[k]));
    }
    nodes.front() = 0.0;
    nodes.back() = omega_c_max;
    for (std::size_t i = 1; i < count; ++i) {
      if (!(nodes[i] > nodes[i - 1])) return linear_nodes(omega_c_max, count);
    }
    return nodes;
  }

  /// The table restricted to one coupling magnitude; cheap repeated probe queries.
  class CouplingSlice {
   public:
    cplx response_ratio_at(double omega_p_abs) const {
      const auto [ip, tp] = t_->p_.locate(omega_p_abs);
      const cplx* r0 = row0_ + ip;
      const cplx* r1 = r0 + t_->p_.nodes.size();
      const cplx a = r0[0] + tp * (r0[1] - r0[0]);
      const cplx b = r1[0] + tp * (r1[1] - r1[0]);
      return denominator_to_ratio(a + tc_ * (b - a), t_->ls_.gamma_e);
    }

   private:
    friend class ResponseTable;
    CouplingSlice(const ResponseTable* t, const cplx* row0, double tc) : t_(t), row0_(row0), tc_(tc) {}
    const ResponseTable* t_;
    const cplx* row0_;
    double tc_;
  };

  CouplingSlice slice(double omega_c_abs) const {
    const auto [ic, tc] = c_.locate(omega_c_abs);
    return CouplingSlice(this, &denom_[ic * p_.nodes.size()], tc);
  }

  /// rho_eg / Omega_p [s/rad] for magnitudes inside the table.
  cplx response_ratio_at(double omega_p_abs, double omega_c_abs) const {
    return slice(omega_c_abs).response_ratio_at(omega_p_abs);
  }

  /// Full complex coherence, with phases restored through the gauge identity.
  cplx coherence(cplx omega_p, cplx omega_c) const {
    return omega_p * response_ratio_at(std::abs(omega_p), std::abs(omega_c));
  }

  bool covers(double omega_p_abs, double omega_c_abs) const noexcept {
    return p_.contains(omega_p_abs) && c_.contains(omega_c_abs);
  }

  double omega_p_max() const noexcept { return p_.nodes.back(); }
  double omega_c_max() const noexcept { return c_.nodes.back(); }
  const std::vector<double>& omega_p_samples() const noexcept { return p_.nodes; }
  const std::vector<double>& omega_c_samples() const noexcept { return c_.nodes; }
  double delta_p() const noexcept { return delta_p_; }
  double delta_c() const noexcept { return delta_c_; }
  const LevelScheme& levels() const noexcept { return ls_; }

 private:
  static constexpr double kDenominatorCap = 1e150;

  // i / (2 d Gamma_e), written out to keep the hot path free of library complex division
  static cplx denominator_to_ratio(cplx d, double gamma_e) {
    const double f = 0.5 / (std::norm(d) * gamma_e);
    return {d.imag() * f, d.real() * f};
  }

  static cplx ratio_to_denominator(cplx ratio_in_gamma_units) {
    if (std::abs(ratio_in_gamma_units) < 1.0 / kDenominatorCap) return cplx(kDenominatorCap);
    return cplx(0.0, 0.5) / ratio_in_gamma_units;
  }

  struct Cell {
    std::size_t index;
    double t;
  };

  // One sample axis. Cells are found through equal-width buckets over the node range,
  // each pointing at the first candidate cell; interpolation weights are linear in the
  // squared magnitude.
  struct Axis {
    static constexpr std::size_t kBucketsPerNode = 4;

    std::vector<double> nodes;
    std::vector<double> inv_gap_sq;
    std::vector<std::size_t> bucket;
    double inv_width = 0.0;
    const char* name = "";

    Axis(std::vector<double> v, const char* axis_name) : nodes(std::move(v)), name(axis_name) {
      if (nodes.size() < 2) {
        throw Error(ErrorCategory::invalid_argument, std::string(name) + " axis needs >= 2 samples");
      }
      if (!(nodes.front() >= 0.0)) {
        throw Error(ErrorCategory::invalid_argument, std::string(name) + " samples must be >= 0");
      }
      for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (!(nodes[i] > nodes[i - 1]) || !std::isfinite(nodes[i])) {
          throw Error(ErrorCategory::invalid_argument,
                      std::string(name) + " samples must be finite and strictly increasing");
        }
      }
      inv_gap_sq.resize(nodes.size() - 1);
      for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        inv_gap_sq[i] = 1.0 / (nodes[i + 1] * nodes[i + 1] - nodes[i] * nodes[i]);
      }
      const std::size_t nb = kBucketsPerNode * nodes.size();
      const double w = (nodes.back() - nodes.front()) / static_cast<double>(nb);
      inv_width = 1.0 / w;
      bucket.resize(nb + 1);
      std::size_t i = 0;
      for (std::size_t k = 0; k <= nb; ++k) {
        const double lo = nodes.front() + w * static_cast<double>(k);
        while (i + 2 < nodes.size() && nodes[i + 1] <= lo) ++i;
        bucket[k] = i;
      }
    }

    bool contains(double m) const noexcept { return m >= nodes.front() && m <= nodes.back(); }

    Cell locate(double m) const {
      if (!contains(m)) {
        throw Error(ErrorCategory::response_out_of_range,
                    std::string(name) + " magnitude outside the response table");
      }
      const std::size_t last = nodes.size() - 1;
      const auto k = static_cast<std::size_t>((m - nodes.front()) * inv_width);
      std::size_t i = bucket[std::min(k, bucket.size() - 1)];
      while (i + 1 < last && m >= nodes[i + 1]) ++i;
      while (i > 0 && m < nodes[i]) --i;
      return {i, (m * m - nodes[i] * nodes[i]) * inv_gap_sq[i]};
    }
  };

  Axis p_, c_;
  double delta_p_, delta_c_;
  LevelScheme ls_;
  std::vector<cplx> denom_;  // [ic][ip]
};

/// Per-point steady-state solves. Used to verify the tabulated path.
class DirectResponse {
 public:
  DirectResponse(double delta_p, double delta_c, const LevelScheme& ls)
      : delta_p_(delta_p), delta_c_(delta_c), ls_(ls) {
    ls_.validate();
  }

  cplx response_ratio_at(double omega_p_abs, double omega_c_abs) const {
    return response_ratio(omega_p_abs, omega_c_abs, delta_p_, delta_c_, ls_);
  }

  class CouplingSlice {
   public:
    cplx response_ratio_at(double omega_p_abs) const { return r_->response_ratio_at(omega_p_abs, c_); }

   private:
    friend class DirectResponse;
    CouplingSlice(const DirectResponse* r, double c) : r_(r), c_(c) {}
    const DirectResponse* r_;
    double c_;
  };

  CouplingSlice slice(double omega_c_abs) const { return CouplingSlice(this, omega_c_abs); }

  cplx coherence(cplx omega_p, cplx omega_c) const {
    return omega_p * response_ratio_at(std::abs(omega_p), std::abs(omega_c));
  }

  bool covers(double, double) const noexcept { return true; }

  double delta_p() const noexcept { return delta_p_; }
  double delta_c() const noexcept { return delta_c_; }
  const LevelScheme& levels() const noexcept { return ls_; }

 private:
  double delta_p_, delta_c_;
  LevelScheme ls_;
};

}  // namespace eitlens
