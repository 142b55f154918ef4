#pragma once

// Single-atom response of a three-level ladder g -> e -> r driven by a probe
// (g<->e) and a coupling field (e<->r).
//
// Two routes are provided and kept independent of each other:
//   * chi_linear: closed-form weak-probe susceptibility.
//   * build_liouvillian + steady_state: the full Lindblad master equation,
//     valid to all orders in the probe field.
//
// Sign convention: fields propagate as exp(i(kz - wt)); with this convention
// the Maxwell-Bloch source term i*eta*rho_eg absorbs, and the matching
// susceptibility is chi = 2*eta*rho_eg / (k*Omega_p) = +i n sigma0 lambda Gamma_e / (4 pi D).
// Im(chi) >= 0 for a passive medium.
//
// All internal arithmetic is done in units of Gamma_e (rates) so matrix entries
// stay O(1). Public inputs and outputs are SI (rad/s, m).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "eitlens/error.hpp"
#include "eitlens/log.hpp"

namespace eitlens {

using cplx = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Decay/dephasing rates and wavelengths of the g-e-r ladder.
struct LevelScheme {
  double gamma_e = kTwoPi * 6.067e6;  ///< full decay rate of |e> [rad/s]
  double gamma_r = kTwoPi * 10e3;     ///< decay rate of |r> [rad/s]
  double gamma_p = kTwoPi * 30e3;     ///< probe laser linewidth [rad/s]
  double gamma_c = kTwoPi * 160e3;    ///< coupling laser linewidth, incl. folded-in extra dephasing [rad/s]
  double lambda_probe = 780e-9;       ///< [m]
  double lambda_coupling = 480e-9;    ///< [m]

  double gamma_ge() const noexcept { return 0.5 * gamma_e + 0.5 * gamma_p; }
  double gamma_gr() const noexcept { return 0.5 * (gamma_r + gamma_p + gamma_c); }
  double sigma_0() const noexcept {
    return 3.0 * lambda_probe * lambda_probe / kTwoPi;
  }
  double k() const noexcept { return kTwoPi / lambda_probe; }

  /// 87Rb 5s -> 5p3/2 -> 27s ladder. Extra dephasing is folded into gamma_c so that
  /// gamma_gr() equals @p gamma_gr_target.
  static LevelScheme rubidium_27s(double gamma_gr_target = kTwoPi * 100e3,
                                  double probe_linewidth = kTwoPi * 30e3) {
    LevelScheme ls;
    ls.gamma_p = probe_linewidth;
    ls.gamma_c = 2.0 * gamma_gr_target - ls.gamma_r - ls.gamma_p;
    if (ls.gamma_c < 0.0) {
      throw Error(ErrorCategory::invalid_argument,
                  "gamma_gr target smaller than (Gamma_r + gamma_p)/2");
    }
    return ls;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    auto finite_nonneg = [&](double v, const char* name) {
      if (!std::isfinite(v) || v < 0.0) out.push_back(std::string(name) + " must be finite and >= 0");
    };
    finite_nonneg(gamma_e, "gamma_e");
    finite_nonneg(gamma_r, "gamma_r");
    finite_nonneg(gamma_p, "gamma_p");
    finite_nonneg(gamma_c, "gamma_c");
    if (!(gamma_e > 0.0)) out.push_back("gamma_e must be > 0 (sets the rate unit)");
    if (!(gamma_r < gamma_e)) out.push_back("gamma_r must be smaller than gamma_e");
    if (!(lambda_probe > 0.0)) out.push_back("lambda_probe must be > 0");
    if (!(lambda_coupling > 0.0)) out.push_back("lambda_coupling must be > 0");
    return out;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw Error(ErrorCategory::invalid_argument, "LevelScheme: " + v.front());
  }
};

/// Local fields and detunings seen by one atom.
struct FieldPoint {
  cplx omega_p{};     ///< probe Rabi frequency [rad/s]
  cplx omega_c{};     ///< coupling Rabi frequency [rad/s]
  double delta_p = 0.0;  ///< omega_probe - omega_e [rad/s]
  double delta_c = 0.0;  ///< omega_coupling - omega_r [rad/s]

  /// Throws if a component is nonfinite or a Rabi frequency exceeds @p cap.
  void validate(double cap) const {
    if (!std::isfinite(omega_p.real()) || !std::isfinite(omega_p.imag()) ||
        !std::isfinite(omega_c.real()) || !std::isfinite(omega_c.imag()) ||
        !std::isfinite(delta_p) || !std::isfinite(delta_c)) {
      throw Error(ErrorCategory::invalid_argument, "FieldPoint has nonfinite components");
    }
    if (std::abs(omega_p) > cap || std::abs(omega_c) > cap) {
      throw Error(ErrorCategory::invalid_argument, "FieldPoint Rabi frequency exceeds sanity cap");
    }
  }
};

/// Level order g, e, r.
enum Level : int { kG = 0, kE = 1, kR = 2 };

class DensityMatrix3 {
 public:
  DensityMatrix3() { rho_(kG, kG) = 1.0; }
  explicit DensityMatrix3(const Eigen::Matrix3cd& rho) : rho_(rho) {}

  const Eigen::Matrix3cd& matrix() const noexcept { return rho_; }
  cplx operator()(int row, int col) const { return rho_(row, col); }

  std::vector<std::string> violations(double herm_tol = 1e-12, double trace_tol = 1e-12,
                                      double psd_tol = 1e-10) const {
    std::vector<std::string> out;
    if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > herm_tol) out.push_back("not Hermitian");
    if (std::abs(rho_.trace() - cplx(1.0)) > trace_tol) out.push_back("trace differs from 1");
    for (int i = 0; i < 3; ++i) {
      double p = rho_(i, i).real();
      if (p < -psd_tol || p > 1.0 + psd_tol) out.push_back("population outside [0, 1]");
    }
    Eigen::Matrix3cd h = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(h, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -psd_tol) out.push_back("not positive semidefinite");
    return out;
  }

  bool is_valid() const { return violations().empty(); }

 private:
  Eigen::Matrix3cd rho_ = Eigen::Matrix3cd::Zero();
};

struct Susceptibility {
  cplx chi{};
};

namespace detail {

// Rate unit: Gamma_e, or 1 rad/s when Gamma_e = 0.
inline double rate_unit(const LevelScheme& ls) noexcept { return ls.gamma_e > 0.0 ? ls.gamma_e : 1.0; }

// Weak-probe denominator in units of rate_unit. Returns false for the perfect
// dark-state limit, where the coupling term diverges and chi vanishes.
inline bool weak_probe_denominator(const FieldPoint& fp, const LevelScheme& ls, cplx& d) {
  const double u = rate_unit(ls);
  const cplx two_photon(ls.gamma_gr() / u, -(fp.delta_c + fp.delta_p) / u);
  const double oc2 = std::norm(fp.omega_c) / (u * u);
  d = cplx(ls.gamma_ge() / u, -fp.delta_p / u);
  if (oc2 == 0.0) return true;
  if (two_photon == cplx(0.0)) return false;
  d += oc2 / (4.0 * two_photon);
  return true;
}

}  // namespace detail

/// Closed-form weak-probe susceptibility. Uses |Omega_c|^2, so only the coupling
/// intensity matters.
inline Susceptibility chi_linear(double n_at, const FieldPoint& fp, const LevelScheme& ls) {
  if (!(n_at >= 0.0)) throw Error(ErrorCategory::invalid_argument, "negative atom density");
  cplx d;
  if (!detail::weak_probe_denominator(fp, ls, d)) return {cplx(0.0)};
  if (std::abs(d) < 1e-30) {
    throw Error(ErrorCategory::degenerate_denominator, "weak-probe denominator vanishes");
  }
  const double pref = n_at * ls.sigma_0() * ls.lambda_probe * (ls.gamma_e / detail::rate_unit(ls)) / (2.0 * kTwoPi);
  return {cplx(0.0, pref) / d};
}

/// n = 1 + Re(chi)/2, valid for |chi| << 1.
inline double refractive_index(const Susceptibility& s) {
  if (std::abs(s.chi) > 0.1) warn("refractive_index: |chi| > 0.1, dilute-medium expansion is inaccurate");
  return 1.0 + 0.5 * s.chi.real();
}

/// Lindblad generator acting on vec(rho), column-major over (row, col) in level
/// order (g, e, r): vec index = row + 3*col. Entries are in units of rate_unit.
struct Liouvillian {
  Eigen::Matrix<cplx, 9, 9> matrix = Eigen::Matrix<cplx, 9, 9>::Zero();
  double rate_unit = 1.0;  ///< [rad/s] per matrix unit

  Eigen::Matrix<cplx, 9, 1> apply(const Eigen::Matrix3cd& rho) const {
    Eigen::Matrix<cplx, 9, 1> v = Eigen::Map<const Eigen::Matrix<cplx, 9, 1>>(rho.data());
    return rate_unit * (matrix * v);
  }
};

inline constexpr int vec_index(int row, int col) noexcept { return row + 3 * col; }

inline Liouvillian build_liouvillian(const FieldPoint& fp, const LevelScheme& ls) {
  const double u = detail::rate_unit(ls);
  const cplx i(0.0, 1.0);

  Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
  h(kE, kE) = -fp.delta_p / u;
  h(kR, kR) = -(fp.delta_c + fp.delta_p) / u;
  h(kE, kG) = -0.5 * fp.omega_p / u;
  h(kG, kE) = std::conj(h(kE, kG));
  h(kR, kE) = -0.5 * fp.omega_c / u;
  h(kE, kR) = std::conj(h(kR, kE));

  // Jump operators sqrt(rate)|to><from|: e->g and r->e decay, plus projector
  // dephasing on r (coupling laser) and on g (probe laser).
  struct Jump {
    double rate;
    int to, from;
  };
  const Jump jumps[] = {{ls.gamma_e / u, kG, kE},
                        {ls.gamma_r / u, kE, kR},
                        {ls.gamma_c / u, kR, kR},
                        {ls.gamma_p / u, kG, kG}};

  // Effective non-Hermitian generator K = H - (i/2) sum C^dag C.
  Eigen::Matrix3cd k = h;
  for (const auto& j : jumps) k(j.from, j.from) -= 0.5 * i * j.rate;

  // d rho/dt = -i (K rho - rho K^dag) + sum C rho C^dag, vectorized column-major:
  // vec(A rho B)[b + 3a] picks up A(b, d) B(c, a) rho(d, c).
  Liouvillian out;
  out.rate_unit = u;
  auto& l = out.matrix;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const int row = vec_index(b, a);
      for (int d = 0; d < 3; ++d) l(row, vec_index(d, a)) += -i * k(b, d);
      for (int c = 0; c < 3; ++c) l(row, vec_index(b, c)) += i * std::conj(k(a, c));
    }
  }
  for (const auto& j : jumps) {
    if (j.rate <= 0.0) continue;
    l(vec_index(j.to, j.to), vec_index(j.from, j.from)) += j.rate;
  }
  return out;
}

namespace detail {

// Solves L x = rhs with row vec(g,g) replaced by the trace functional.
inline Eigen::Matrix<cplx, 9, 1> solve_trace_constrained(const Eigen::Matrix<cplx, 9, 9>& l,
                                                         cplx trace_value,
                                                         const Eigen::Matrix<cplx, 9, 1>& rhs) {
  Eigen::Matrix<cplx, 9, 9> a = l;
  Eigen::Matrix<cplx, 9, 1> b = rhs;
  a.row(0).setZero();
  a(0, vec_index(kG, kG)) = 1.0;
  a(0, vec_index(kE, kE)) = 1.0;
  a(0, vec_index(kR, kR)) = 1.0;
  b(0) = trace_value;
  Eigen::PartialPivLU<Eigen::Matrix<cplx, 9, 9>> lu(a);
  // rcond() misses exactly zero pivots, so the pivot spread is checked as well.
  const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
  const double rc = std::min(lu.rcond(), pivots.minCoeff() / pivots.maxCoeff());
  if (!(rc > 1e-14)) {
    throw Error(ErrorCategory::non_unique_steady_state,
                "trace-constrained Liouvillian is singular (condition number > 1e14)");
  }
  return lu.solve(b);
}

}  // namespace detail

inline DensityMatrix3 steady_state(const Liouvillian& l) {
  Eigen::Matrix<cplx, 9, 1> rhs = Eigen::Matrix<cplx, 9, 1>::Zero();
  Eigen::Matrix<cplx, 9, 1> x = detail::solve_trace_constrained(l.matrix, 1.0, rhs);
  Eigen::Matrix3cd rho = Eigen::Map<Eigen::Matrix3cd>(x.data());
  return DensityMatrix3(rho);
}

inline cplx coherence_eg(const DensityMatrix3& rho) { return rho(kE, kG); }

/// d rho_eg / d Omega_p at Omega_p = 0 in SI [s/rad], from first-order perturbation
/// of the Liouvillian around the probe-free steady state. No closed form is used.
inline cplx linear_response_ratio(double omega_c_abs, double delta_p, double delta_c,
                                  const LevelScheme& ls) {
  FieldPoint fp{cplx(0.0), cplx(omega_c_abs), delta_p, delta_c};
  const Liouvillian l0 = build_liouvillian(fp, ls);
  fp.omega_p = cplx(ls.gamma_e);  // one rate unit
  const Liouvillian l1 = build_liouvillian(fp, ls);
  const Eigen::Matrix<cplx, 9, 9> dl = l1.matrix - l0.matrix;

  const DensityMatrix3 rho0 = steady_state(l0);
  Eigen::Matrix3cd r0 = rho0.matrix();
  Eigen::Matrix<cplx, 9, 1> v0 = Eigen::Map<Eigen::Matrix<cplx, 9, 1>>(r0.data());
  Eigen::Matrix<cplx, 9, 1> rhs = -(dl * v0);
  Eigen::Matrix<cplx, 9, 1> v1 = detail::solve_trace_constrained(l0.matrix, 0.0, rhs);
  return v1(vec_index(kE, kG)) / ls.gamma_e;
}

/// rho_eg / Omega_p [s/rad] for a real, nonnegative probe amplitude. Phase-free:
/// the full response is omega_p * response_ratio(|omega_p|, |omega_c|).
inline cplx response_ratio(double omega_p_abs, double omega_c_abs, double delta_p, double delta_c,
                           const LevelScheme& ls) {
  if (omega_p_abs == 0.0) return linear_response_ratio(omega_c_abs, delta_p, delta_c, ls);
  const FieldPoint fp{cplx(omega_p_abs), cplx(omega_c_abs), delta_p, delta_c};
  return coherence_eg(steady_state(build_liouvillian(fp, ls))) / omega_p_abs;
}

/// Susceptibility implied by a steady-state coherence, chi = 2 eta rho_eg / (k Omega_p),
/// with eta = n sigma0 Gamma_e / 2.
inline Susceptibility chi_from_coherence(double n_at, cplx rho_eg, cplx omega_p,
                                         const LevelScheme& ls) {
  const double eta = 0.5 * n_at * ls.sigma_0() * ls.gamma_e;
  return {2.0 * eta * rho_eg / (ls.k() * omega_p)};
}

}  // namespace eitlens
