#pragma once

// Run configuration, scenario documents, output writers and the run driver.
// Documents are JSON; detunings in user-facing fields are in units of Gamma_e.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eitlens/engine.hpp"
#include "eitlens/error.hpp"
#include "eitlens/log.hpp"
#include "eitlens/scenario.hpp"

namespace eitlens {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kOutDirEnv = "EITLENS_OUT_DIR";

using json = nlohmann::json;

// -- scenario documents -----------------------------------------------------

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCategory::parse_error, where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw Error(ErrorCategory::parse_error, where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCategory::parse_error, where + "." + key + ": wrong value type");
  }
}

// Reads a rate given either in SI (key) or relative to Gamma_e (rel_key).
inline void read_scaled(const json& j, const char* key, const char* rel_key, double unit, double& out,
                        const std::string& where) {
  std::optional<double> si, rel;
  if (j.contains(key)) read(j, key, si.emplace(), where);
  if (j.contains(rel_key)) read(j, rel_key, rel.emplace(), where);
  if (si && rel && std::abs(*si - *rel * unit) > 1e-9 * std::max(std::abs(*si), 1.0)) {
    throw Error(ErrorCategory::validation_error,
                where + ": " + key + " and " + rel_key + " disagree");
  }
  if (si) out = *si;
  else if (rel) out = *rel * unit;
}

}  // namespace detail

/// Scenario as a JSON document in SI units. With @p conveniences, rates are also
/// given relative to Gamma_e and gamma_gr is listed.
inline json scenario_to_json(const Scenario& s, bool conveniences = true) {
  const double ge = s.levels.gamma_e;
  json j;
  j["name"] = s.name;
  j["cloud"] = {{"n0_per_m3", s.cloud.n0},
                {"w_r_m", s.cloud.w_r},
                {"w_z_m", s.cloud.w_z},
                {"center_z_m", s.cloud.center_z},
                {"radially_uniform", s.cloud.radially_uniform}};
  j["coupling"] = {{"omega_c0_rad_per_s", s.coupling.omega_c0},
                   {"w_c_m", s.coupling.w_c},
                   {"z_focus_m", s.coupling.z_focus},
                   {"wavelength_m", s.coupling.wavelength}};
  j["probe"] = {{"omega_p0_rad_per_s", s.probe.omega_p0},
                {"profile", s.probe.profile == ProbeBeam::Profile::uniform ? "uniform" : "gaussian"},
                {"w_p_m", s.probe.w_p}};
  j["levels"] = {{"gamma_e_rad_per_s", s.levels.gamma_e},
                 {"gamma_r_rad_per_s", s.levels.gamma_r},
                 {"gamma_p_rad_per_s", s.levels.gamma_p},
                 {"gamma_c_rad_per_s", s.levels.gamma_c},
                 {"lambda_probe_m", s.levels.lambda_probe},
                 {"lambda_coupling_m", s.levels.lambda_coupling}};
  j["delta_c_rad_per_s"] = s.delta_c;
  j["grid"] = {{"nx", s.grid.nx}, {"ny", s.grid.ny}, {"lx_m", s.grid.lx}, {"ly_m", s.grid.ly}};
  j["settings"] = {{"dz_m", s.settings.dz},
                   {"z_start_m", s.settings.z_start},
                   {"z_end_m", s.settings.z_end},
                   {"lensing", s.settings.lensing},
                   {"absorber_order", s.settings.absorber_order},
                   {"absorber_width_m", s.settings.absorber_width},
                   {"absorber_relative", s.settings.absorber_relative},
                   {"medium_substeps", s.settings.medium_substeps},
                   {"object_plane_m", s.settings.object_plane ? json(*s.settings.object_plane) : json(nullptr)}};
  j["uncertainties"] = s.uncertainties;
  if (conveniences) {
    j["coupling"]["omega_c0_in_gamma_e"] = s.coupling.omega_c0 / ge;
    j["probe"]["omega_p0_in_gamma_e"] = s.probe.omega_p0 / ge;
    j["delta_c_in_gamma_e"] = s.delta_c / ge;
    j["levels"]["gamma_gr_rad_per_s"] = s.levels.gamma_gr();
  }
  return j;
}

/// Reads a scenario document. Missing fields come from the preset named by "base",
/// or from the defaults when there is none. Unknown keys are errors.
inline Scenario scenario_from_json(const json& j) {
  using detail::read;
  using detail::read_scaled;
  detail::reject_unknown(j, {"name", "base", "cloud", "coupling", "probe", "levels", "delta_c_rad_per_s",
                             "delta_c_in_gamma_e", "grid", "settings", "uncertainties"},
                         "scenario");
  Scenario s;
  s.levels = LevelScheme::rubidium_27s();
  if (j.contains("base")) {
    std::string base;
    read(j, "base", base, "scenario");
    s = preset(base);
  }
  read(j, "name", s.name, "scenario");

  if (j.contains("levels")) {
    const auto& l = j["levels"];
    detail::reject_unknown(l, {"gamma_e_rad_per_s", "gamma_r_rad_per_s", "gamma_p_rad_per_s", "gamma_c_rad_per_s",
                               "gamma_gr_rad_per_s", "lambda_probe_m", "lambda_coupling_m"},
                           "scenario.levels");
    read(l, "gamma_e_rad_per_s", s.levels.gamma_e, "scenario.levels");
    read(l, "gamma_r_rad_per_s", s.levels.gamma_r, "scenario.levels");
    read(l, "gamma_p_rad_per_s", s.levels.gamma_p, "scenario.levels");
    read(l, "gamma_c_rad_per_s", s.levels.gamma_c, "scenario.levels");
    read(l, "lambda_probe_m", s.levels.lambda_probe, "scenario.levels");
    read(l, "lambda_coupling_m", s.levels.lambda_coupling, "scenario.levels");
    if (l.contains("gamma_gr_rad_per_s")) {
      double gr = 0.0;
      read(l, "gamma_gr_rad_per_s", gr, "scenario.levels");
      // remaining dephasing is carried by the coupling-laser channel
      const double gc = 2.0 * gr - s.levels.gamma_r - s.levels.gamma_p;
      if (l.contains("gamma_c_rad_per_s") && std::abs(gc - s.levels.gamma_c) > 1e-9 * std::max(gr, 1.0)) {
        throw Error(ErrorCategory::validation_error,
                    "scenario.levels: gamma_c_rad_per_s and gamma_gr_rad_per_s disagree");
      }
      if (!l.contains("gamma_c_rad_per_s")) s.levels.gamma_c = gc;
    }
  }
  const double ge = s.levels.gamma_e;

  if (j.contains("cloud")) {
    const auto& c = j["cloud"];
    detail::reject_unknown(c, {"n0_per_m3", "w_r_m", "w_z_m", "center_z_m", "radially_uniform"}, "scenario.cloud");
    read(c, "n0_per_m3", s.cloud.n0, "scenario.cloud");
    read(c, "w_r_m", s.cloud.w_r, "scenario.cloud");
    read(c, "w_z_m", s.cloud.w_z, "scenario.cloud");
    read(c, "center_z_m", s.cloud.center_z, "scenario.cloud");
    read(c, "radially_uniform", s.cloud.radially_uniform, "scenario.cloud");
  }
  if (j.contains("coupling")) {
    const auto& c = j["coupling"];
    detail::reject_unknown(c, {"omega_c0_rad_per_s", "omega_c0_in_gamma_e", "w_c_m", "z_focus_m", "wavelength_m"},
                           "scenario.coupling");
    read_scaled(c, "omega_c0_rad_per_s", "omega_c0_in_gamma_e", ge, s.coupling.omega_c0, "scenario.coupling");
    read(c, "w_c_m", s.coupling.w_c, "scenario.coupling");
    read(c, "z_focus_m", s.coupling.z_focus, "scenario.coupling");
    read(c, "wavelength_m", s.coupling.wavelength, "scenario.coupling");
  }
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    detail::reject_unknown(p, {"omega_p0_rad_per_s", "omega_p0_in_gamma_e", "profile", "w_p_m"}, "scenario.probe");
    read_scaled(p, "omega_p0_rad_per_s", "omega_p0_in_gamma_e", ge, s.probe.omega_p0, "scenario.probe");
    if (p.contains("profile")) {
      std::string prof;
      read(p, "profile", prof, "scenario.probe");
      if (prof == "uniform") s.probe.profile = ProbeBeam::Profile::uniform;
      else if (prof == "gaussian") s.probe.profile = ProbeBeam::Profile::gaussian;
      else throw Error(ErrorCategory::parse_error, "scenario.probe.profile: expected 'uniform' or 'gaussian'");
    }
    read(p, "w_p_m", s.probe.w_p, "scenario.probe");
  }
  read_scaled(j, "delta_c_rad_per_s", "delta_c_in_gamma_e", ge, s.delta_c, "scenario");
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    detail::reject_unknown(g, {"nx", "ny", "lx_m", "ly_m"}, "scenario.grid");
    read(g, "nx", s.grid.nx, "scenario.grid");
    read(g, "ny", s.grid.ny, "scenario.grid");
    read(g, "lx_m", s.grid.lx, "scenario.grid");
    read(g, "ly_m", s.grid.ly, "scenario.grid");
  }
  if (j.contains("settings")) {
    const auto& t = j["settings"];
    detail::reject_unknown(t, {"dz_m", "z_start_m", "z_end_m", "lensing", "absorber_order", "absorber_width_m",
                               "absorber_relative", "medium_substeps", "object_plane_m"},
                           "scenario.settings");
    read(t, "dz_m", s.settings.dz, "scenario.settings");
    read(t, "z_start_m", s.settings.z_start, "scenario.settings");
    read(t, "z_end_m", s.settings.z_end, "scenario.settings");
    read(t, "lensing", s.settings.lensing, "scenario.settings");
    read(t, "absorber_order", s.settings.absorber_order, "scenario.settings");
    read(t, "absorber_width_m", s.settings.absorber_width, "scenario.settings");
    read(t, "absorber_relative", s.settings.absorber_relative, "scenario.settings");
    read(t, "medium_substeps", s.settings.medium_substeps, "scenario.settings");
    if (t.contains("object_plane_m")) {
      if (t["object_plane_m"].is_null()) s.settings.object_plane.reset();
      else read(t, "object_plane_m", s.settings.object_plane.emplace(), "scenario.settings");
    }
  }
  if (j.contains("uncertainties")) read(j, "uncertainties", s.uncertainties, "scenario");
  return s;
}

// -- run configuration --------------------------------------------------------

struct ScanRange {
  double start = -2.0;  ///< [Gamma_e]
  double stop = 2.0;    ///< [Gamma_e]
  int count = 81;
};

/// Parses "START:STOP:COUNT".
inline ScanRange parse_scan(const std::string& text) {
  ScanRange r;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> r.start >> c1 >> r.stop >> c2 >> r.count) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof()) {
    throw Error(ErrorCategory::parse_error, "--scan: expected START:STOP:COUNT, got '" + text + "'");
  }
  return r;
}

struct Override {
  std::string key;
  json file_value;
  json flag_value;
};

struct RunConfig {
  std::string scenario_name = "fig3b";
  std::optional<json> inline_scenario;  ///< scenario document from the config file
  ScanRange scan;
  std::optional<bool> lensing;          ///< unset: keep the scenario's setting
  std::string out_dir;
  std::optional<int> grid;              ///< nodes per axis
  std::optional<double> window_um;
  std::optional<double> dz_um;
  std::size_t table_nodes = 128;
  bool verify = false;
  unsigned threads = 0;
  bool images = false;
  std::string config_path;
  std::vector<std::string> command_line;
  std::vector<Override> overrides;      ///< flag values that replaced file values

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (scan.count < 1) v.push_back("scan count must be >= 1");
    if (scan.count > 1 && !(scan.start < scan.stop)) v.push_back("scan start must be below stop");
    if (!std::isfinite(scan.start) || !std::isfinite(scan.stop)) v.push_back("scan bounds must be finite");
    if (grid && (*grid < 16 || *grid % 2 != 0)) v.push_back("grid must be even and >= 16");
    if (window_um && !(*window_um > 0.0)) v.push_back("window must be > 0");
    if (dz_um && !(*dz_um > 0.0)) v.push_back("dz must be > 0");
    if (table_nodes < 2) v.push_back("table resolution must be >= 2");
    if (out_dir.empty()) v.push_back("output directory must be set");
    return v;
  }
};

inline std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return (env != nullptr && *env != '\0') ? std::string(env) : std::string("eitlens_out");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io_error, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // message carries the line and column
    throw Error(ErrorCategory::parse_error, path + ": " + e.what());
  }
}

/// Applies a config document onto @p cfg. Keys mirror the command-line flags.
inline void apply_config_json(RunConfig& cfg, const json& j, const std::string& where) {
  using detail::read;
  detail::reject_unknown(j, {"scenario", "scan", "lensing", "out", "grid", "window_um", "dz_um", "table", "verify",
                             "threads", "images"},
                         where);
  if (j.contains("scenario")) {
    if (j["scenario"].is_string()) {
      cfg.scenario_name = j["scenario"].get<std::string>();
    } else if (j["scenario"].is_object()) {
      cfg.inline_scenario = j["scenario"];
    } else {
      throw Error(ErrorCategory::parse_error, where + ".scenario: expected a preset name or an object");
    }
  }
  if (j.contains("scan")) {
    const auto& s = j["scan"];
    if (s.is_string()) {
      cfg.scan = parse_scan(s.get<std::string>());
    } else {
      detail::reject_unknown(s, {"start", "stop", "count"}, where + ".scan");
      read(s, "start", cfg.scan.start, where + ".scan");
      read(s, "stop", cfg.scan.stop, where + ".scan");
      read(s, "count", cfg.scan.count, where + ".scan");
    }
  }
  if (j.contains("lensing")) read(j, "lensing", cfg.lensing.emplace(), where);
  read(j, "out", cfg.out_dir, where);
  if (j.contains("grid")) read(j, "grid", cfg.grid.emplace(), where);
  if (j.contains("window_um")) read(j, "window_um", cfg.window_um.emplace(), where);
  if (j.contains("dz_um")) read(j, "dz_um", cfg.dz_um.emplace(), where);
  read(j, "table", cfg.table_nodes, where);
  read(j, "verify", cfg.verify, where);
  read(j, "threads", cfg.threads, where);
  read(j, "images", cfg.images, where);
}

inline void validate(const RunConfig& cfg) {
  const auto v = cfg.violations();
  if (v.empty()) return;
  std::string msg = "invalid run configuration:";
  for (const auto& s : v) msg += " " + s + ";";
  throw Error(ErrorCategory::validation_error, msg);
}

/// The scenario a configuration asks for, with grid, step and lensing overrides applied.
inline Scenario resolve_scenario(const RunConfig& cfg) {
  Scenario s = cfg.inline_scenario ? scenario_from_json(*cfg.inline_scenario) : preset(cfg.scenario_name);
  if (cfg.grid || cfg.window_um) {
    const int n = cfg.grid.value_or(s.grid.nx);
    const double w = cfg.window_um ? *cfg.window_um * 1e-6 : s.grid.lx;
    const double frac = s.settings.absorber_width / s.grid.lx;
    s.grid = TransverseGrid{n, n, w, w};
    s.settings.absorber_width = frac * w;
  }
  if (cfg.dz_um) s.settings.dz = *cfg.dz_um * 1e-6;
  if (cfg.lensing) s.settings.lensing = *cfg.lensing;
  return s;
}

// -- writers ------------------------------------------------------------------

namespace detail {

inline std::string format_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCategory::io_error, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCategory::io_error, "write failed for '" + path.string() + "'");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io_error, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string detuning_tag(double delta_p, double gamma_e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "dp%+.4f", delta_p / gamma_e);
  return buf;
}

}  // namespace detail

inline std::filesystem::path spectrum_path(const SpectrumResult& r, const std::filesystem::path& dir) {
  return dir / (r.scenario + (r.lensing ? "" : "_nolensing") + "_spectrum.csv");
}

/// CSV with header "delta_p_over_gamma_e,transmission", 12 significant digits.
inline std::filesystem::path write_spectrum(const SpectrumResult& r, const std::filesystem::path& dir) {
  if (r.entries.empty()) throw Error(ErrorCategory::invalid_argument, "empty spectrum");
  std::string text = "delta_p_over_gamma_e,transmission\n";
  for (const auto& e : r.entries) {
    text += detail::format_g12(e.delta_p / r.gamma_e) + "," + detail::format_g12(e.transmission) + "\n";
  }
  const auto path = spectrum_path(r, dir);
  detail::write_file(path, text);
  return path;
}

struct ImagePaths {
  std::filesystem::path pgm, raw, meta;
};

/// 16-bit binary graymap scaled to [min, max] (top row = largest y), raw little-endian
/// float64 grid (x fastest, y ascending) and a JSON sidecar describing both.
inline ImagePaths write_image(const ImageResult& img, const std::filesystem::path& dir, double gamma_e) {
  const auto& g = img.grid;
  if (img.intensity.size() != g.size()) throw Error(ErrorCategory::invalid_argument, "image size mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(img.intensity.begin(), img.intensity.end());
  const double lo = *lo_it, hi = *hi_it;
  const std::string base = img.scenario + (img.lensing ? "" : "_nolensing") + "_" +
                           detail::detuning_tag(img.delta_p, gamma_e);
  ImagePaths paths{dir / (base + ".pgm"), dir / (base + ".f64"), dir / (base + ".json")};

  std::string pgm = "P5\n" + std::to_string(g.nx) + " " + std::to_string(g.ny) + "\n65535\n";
  pgm.reserve(pgm.size() + 2 * g.size());
  for (int j = g.ny - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx; ++i) {
      const double u = hi > lo ? (img.at(i, j) - lo) / (hi - lo) : 0.0;
      const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(u, 0.0, 1.0) * 65535.0));
      pgm.push_back(static_cast<char>(v >> 8));
      pgm.push_back(static_cast<char>(v & 0xff));
    }
  }
  detail::write_file(paths.pgm, pgm);

  std::string raw(8 * g.size(), '\0');
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto bits = std::bit_cast<std::uint64_t>(img.intensity[n]);
    for (int b = 0; b < 8; ++b) raw[8 * n + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  detail::write_file(paths.raw, raw);

  json meta = {{"scenario", img.scenario},
               {"lensing", img.lensing},
               {"delta_p_rad_per_s", img.delta_p},
               {"delta_p_in_gamma_e", img.delta_p / gamma_e},
               {"quantity", "exit-plane intensity relative to the incoming probe peak"},
               {"nx", g.nx},
               {"ny", g.ny},
               {"lx_m", g.lx},
               {"ly_m", g.ly},
               {"dx_m", g.dx()},
               {"dy_m", g.dy()},
               {"x0_m", g.x(0)},
               {"y0_m", g.y(0)},
               {"min", lo},
               {"max", hi},
               {"raw", {{"file", paths.raw.filename().string()},
                        {"format", "float64 little-endian"},
                        {"order", "row-major, x fastest, y ascending"}}},
               {"pgm", {{"file", paths.pgm.filename().string()},
                        {"maxval", 65535},
                        {"scale_min", lo},
                        {"scale_max", hi},
                        {"rows", "top row is the largest y"}}}};
  detail::write_file(paths.meta, meta.dump(2) + "\n");
  return paths;
}

/// Reads an image back from its sidecar and raw grid.
inline ImageResult read_raw_grid(const std::filesystem::path& meta_path) {
  json meta;
  try {
    meta = json::parse(detail::read_file(meta_path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCategory::parse_error, meta_path.string() + ": " + e.what());
  }
  ImageResult img;
  try {
    img.scenario = meta.at("scenario").get<std::string>();
    img.lensing = meta.at("lensing").get<bool>();
    img.delta_p = meta.at("delta_p_rad_per_s").get<double>();
    img.grid = TransverseGrid{meta.at("nx").get<int>(), meta.at("ny").get<int>(), meta.at("lx_m").get<double>(),
                              meta.at("ly_m").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::parse_error, meta_path.string() + ": " + e.what());
  }
  const auto raw = detail::read_file(meta_path.parent_path() / meta.at("raw").at("file").get<std::string>());
  if (raw.size() != 8 * img.grid.size()) throw Error(ErrorCategory::parse_error, "raw grid has the wrong size");
  img.intensity.resize(img.grid.size());
  for (std::size_t n = 0; n < img.grid.size(); ++n) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[8 * n + static_cast<std::size_t>(b)])) << (8 * b);
    }
    img.intensity[n] = std::bit_cast<double>(bits);
  }
  return img;
}

// -- run --------------------------------------------------------------------

struct RunManifest {
  json document;
  std::filesystem::path path;
  std::filesystem::path spectrum;
};

/// Creates the directory if needed and checks that a file can be written in it.
inline void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCategory::io_error, "cannot create '" + dir.string() + "': " + ec.message());
  const auto probe = dir / ".eitlens_write_test";
  {
    std::ofstream out(probe);
    if (!out) throw Error(ErrorCategory::io_error, "output directory '" + dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

/// Whether the whole cloud (center +- 4 w_z) lies inside the propagation span, so the
/// analytic thin-cloud transmission is a fair reference.
inline bool thin_cloud_applicable(const Scenario& s) {
  return s.settings.z_start <= s.cloud.center_z - 4.0 * s.cloud.w_z &&
         s.settings.z_end >= s.cloud.center_z + 4.0 * s.cloud.w_z;
}

/// Executes the configured scan and writes the spectrum, optional images and manifest.json.
inline RunManifest run(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(cfg);
  const Scenario s = resolve_scenario(cfg);
  s.validate();
  const std::filesystem::path dir(cfg.out_dir);
  ensure_writable(dir);

  std::vector<std::string> warnings;
  set_warning_sink([&warnings](const std::string& m) { warnings.push_back(m); });
  struct RestoreSink {
    ~RestoreSink() { set_warning_sink({}); }
  } restore;
  const bool dz_ok = step_size_adequate(s.settings, std::min(s.coupling.w_c, s.cloud.w_z), s.levels.lambda_probe);

  RunOptions opt;
  opt.table_nodes = cfg.table_nodes;
  opt.direct = cfg.verify;
  opt.threads = resolved_threads(cfg.threads);
  opt.keep_images = cfg.images;
  const auto result = run_scan(s, cfg.scan.start, cfg.scan.stop, cfg.scan.count, opt);

  RunManifest m;
  m.spectrum = write_spectrum(result, dir);
  json outputs = json::array({m.spectrum.filename().string()});
  for (const auto& img : result.images) {
    const auto p = write_image(img, dir, s.levels.gamma_e);
    outputs.push_back(p.pgm.filename().string());
    outputs.push_back(p.raw.filename().string());
    outputs.push_back(p.meta.filename().string());
  }

  int rebuilds = 0;
  double peak = 0.0, table_max = 0.0;
  json points = json::array();
  for (std::size_t k = 0; k < result.entries.size(); ++k) {
    const auto& d = result.diagnostics[k];
    rebuilds += d.table_rebuilds;
    peak = std::max(peak, d.peak_probe);
    table_max = std::max(table_max, d.table_probe_max);
    points.push_back({{"delta_p_in_gamma_e", result.entries[k].delta_p / s.levels.gamma_e},
                      {"transmission", result.entries[k].transmission},
                      {"peak_probe_in_gamma_e", d.peak_probe / s.levels.gamma_e},
                      {"table_rebuilds", d.table_rebuilds},
                      {"seconds", d.seconds}});
  }

  json thin = "not applicable: cloud extends beyond the propagation span";
  if (thin_cloud_applicable(s)) {
    const double radius = opt.center_radius_fraction * s.coupling.w_c;
    double worst = 0.0;
    bool above_one = false;
    for (const auto& e : result.entries) {
      const double ref = thin_cloud_center_transmission(s, e.delta_p, radius);
      worst = std::max(worst, std::abs(e.transmission - ref) / ref);
      above_one = above_one || e.transmission > 1.0;
    }
    const bool pass = worst <= 0.02 && !above_one;
    thin = {{"status", pass ? "pass" : "fail"},
            {"max_relative_difference", worst},
            {"tolerance", 0.02},
            {"any_transmission_above_one", above_one}};
  }

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json overrides = json::array();
  for (const auto& o : cfg.overrides) {
    overrides.push_back({{"key", o.key}, {"file_value", o.file_value}, {"flag_value", o.flag_value}});
  }
  auto& doc = m.document;
  doc["software"] = {{"name", "eitlens"}, {"version", kVersion}};
  doc["command_line"] = cfg.command_line;
  doc["config_file"] = cfg.config_path.empty() ? json(nullptr) : json(cfg.config_path);
  doc["overrides"] = overrides;
  doc["scenario"] = scenario_to_json(s, false);
  doc["derived"] = {{"gamma_gr_rad_per_s", s.levels.gamma_gr()},
                    {"gamma_ge_rad_per_s", s.levels.gamma_ge()},
                    {"sigma_0_m2", s.levels.sigma_0()},
                    {"coupling_rayleigh_length_m", s.coupling.rayleigh()},
                    {"resonant_optical_depth", s.levels.sigma_0() * column_density(s.cloud)}};
  doc["scan"] = {{"start_in_gamma_e", cfg.scan.start},
                 {"stop_in_gamma_e", cfg.scan.stop},
                 {"count", cfg.scan.count}};
  doc["numerics"] = {{"response", cfg.verify ? "direct steady-state solves" : "interpolated response table"},
                     {"table_nodes_per_axis", cfg.table_nodes},
                     {"steps", s.settings.step_count()},
                     {"center_disk_radius_m", opt.center_radius_fraction * s.coupling.w_c},
                     {"threads", opt.threads}};
  doc["diagnostics"] = {{"step_size_adequate", dz_ok},
                        {"table_rebuilds", rebuilds},
                        {"largest_table_probe_in_gamma_e", table_max / s.levels.gamma_e},
                        {"peak_probe_in_gamma_e", peak / s.levels.gamma_e},
                        {"points", points},
                        {"warnings", warnings}};
  doc["thin_cloud_analytic_comparison"] = thin;
  doc["wall_clock_seconds"] = seconds;
  doc["outputs"] = outputs;
  m.path = dir / "manifest.json";
  detail::write_file(m.path, doc.dump(2) + "\n");
  return m;
}

}  // namespace eitlens
