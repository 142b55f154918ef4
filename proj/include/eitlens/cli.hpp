#pragma once

// Command-line front end: flags, optional config file, error reporting.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eitlens/error.hpp"
#include "eitlens/io.hpp"

namespace eitlens {

/// Outcome of parse_config: either a configuration to run or an early exit (--help).
struct ParsedCommandLine {
  RunConfig config;
  bool exit_now = false;
  int exit_code = 0;
  std::string message;
};

/// Flags override values from --config; each replaced value is recorded.
inline ParsedCommandLine parse_config(int argc, const char* const* argv) {
  CLI::App app{"eitlens: probe lensing in Rydberg EIT, steady-state Maxwell-Bloch propagation", "eitlens"};
  app.set_version_flag("--version", std::string(kVersion));

  std::string scenario, config, scan, out;
  bool no_lensing = false, verify = false, images = false;
  int grid = 0;
  double window = 0.0, dz = 0.0;
  std::size_t table = 0;
  unsigned threads = 0;
  auto* o_scenario = app.add_option("--scenario", scenario, "preset name: fig2, fig3a, fig3b, fig3c, fig4");
  app.add_option("--config", config, "JSON run configuration; flags take precedence");
  auto* o_scan = app.add_option("--scan", scan, "START:STOP:COUNT probe detunings in units of Gamma_e");
  auto* o_nolens = app.add_flag("--no-lensing", no_lensing, "drop the transverse diffraction term");
  auto* o_grid = app.add_option("--grid", grid, "grid points per transverse axis");
  auto* o_window = app.add_option("--window", window, "transverse window [um]");
  auto* o_dz = app.add_option("--dz", dz, "axial step [um]");
  auto* o_table = app.add_option("--table", table, "response table nodes per axis");
  auto* o_verify = app.add_flag("--verify", verify, "direct steady-state solves instead of the table");
  auto* o_out = app.add_option("--out", out, std::string("output directory (default: $") + kOutDirEnv + " or ./eitlens_out)");
  auto* o_threads = app.add_option("--threads", threads, "concurrent spectrum points (default: all cores)");
  auto* o_images = app.add_flag("--images", images, "also write the exit-plane image of every scan point");

  ParsedCommandLine res;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    res.exit_now = true;
    res.message = app.help();
    return res;
  } catch (const CLI::CallForVersion& e) {
    res.exit_now = true;
    res.message = std::string(kVersion) + "\n";
    return res;
  } catch (const CLI::ParseError& e) {
    throw Error(ErrorCategory::parse_error, e.what());
  }

  RunConfig& cfg = res.config;
  cfg.out_dir = default_out_dir();
  for (int k = 0; k < argc; ++k) cfg.command_line.emplace_back(argv[k]);
  json file;
  if (!config.empty()) {
    cfg.config_path = config;
    file = read_json_file(config);
    apply_config_json(cfg, file, config);
  }
  auto record = [&](const char* key, const json& flag_value) {
    if (file.is_object() && file.contains(key) && file[key] != flag_value) {
      cfg.overrides.push_back({key, file[key], flag_value});
    }
  };

  if (o_scenario->count() > 0) {
    record("scenario", scenario);
    cfg.scenario_name = scenario;
    cfg.inline_scenario.reset();
  }
  if (o_scan->count() > 0) {
    cfg.scan = parse_scan(scan);
    record("scan", json({{"start", cfg.scan.start}, {"stop", cfg.scan.stop}, {"count", cfg.scan.count}}));
  }
  if (o_nolens->count() > 0) {
    record("lensing", false);
    cfg.lensing = false;
  }
  if (o_grid->count() > 0) {
    record("grid", grid);
    cfg.grid = grid;
  }
  if (o_window->count() > 0) {
    record("window_um", window);
    cfg.window_um = window;
  }
  if (o_dz->count() > 0) {
    record("dz_um", dz);
    cfg.dz_um = dz;
  }
  if (o_table->count() > 0) {
    record("table", table);
    cfg.table_nodes = table;
  }
  if (o_verify->count() > 0) {
    record("verify", true);
    cfg.verify = true;
  }
  if (o_out->count() > 0) {
    record("out", out);
    cfg.out_dir = out;
  }
  if (o_threads->count() > 0) {
    record("threads", threads);
    cfg.threads = threads;
  }
  if (o_images->count() > 0) {
    record("images", true);
    cfg.images = true;
  }
  validate(cfg);
  return res;
}

/// Full command-line entry point. Failures print "eitlens: error: <category>: ..."
/// on stderr and return the category's exit code.
inline int main_entry(int argc, const char* const* argv) {
  try {
    auto parsed = parse_config(argc, argv);
    if (parsed.exit_now) {
      std::cout << parsed.message;
      return parsed.exit_code;
    }
    const auto manifest = run(parsed.config);
    std::cout << "spectrum: " << manifest.spectrum.string() << "\n"
              << "manifest: " << manifest.path.string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "eitlens: error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "eitlens: error: " << to_string(ErrorCategory::io_error) << ": " << e.what() << "\n";
    return exit_code(ErrorCategory::io_error);
  }
}

}  // namespace eitlens
