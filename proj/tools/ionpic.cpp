#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ionpic/error.hpp"
#include "ionpic/geometry.hpp"
#include "ionpic/library.hpp"
#include "ionpic/pipeline.hpp"

using namespace ionpic;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kUm = 1e-6;

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  bool seed_set = false, jobs_set = false;
};

PipelineConfig load(const Common& c) {
  PipelineConfig cfg;
  if (!c.config.empty()) cfg = load_pipeline_config(c.config);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.seed_set) cfg.seed = c.seed;
  if (c.jobs_set) cfg.jobs = c.jobs;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

// Keeps every written file inside the output directory.
std::string out_file(const PipelineConfig& cfg, const std::string& name) {
  const fs::path p(name);
  if (p.is_absolute() || p.lexically_normal().string().starts_with(".."))
    fail(ErrorCode::InvalidArgument, "output name must be relative to the output directory: " + name);
  const auto full = out_dir(cfg) / p;
  fs::create_directories(full.parent_path());
  return full.string();
}

std::string resolve_library(const PipelineConfig& cfg, const std::string& path, const char* pol) {
  if (path.empty()) fail(ErrorCode::MissingInput, std::string("library required (no ") + pol + " library configured)");
  const auto p = fs::path(path).is_absolute() ? fs::path(path) : fs::path(cfg.base_dir) / path;
  if (!fs::exists(p)) fail(ErrorCode::MissingInput, std::string("library required (") + p.string() + " not found)");
  return p.string();
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

Cladding cladding(const PipelineConfig& cfg) {
  return {cfg.design.pose.cladding_thickness, cfg.design.pose.cladding_index};
}

CollectionMap read_map(const std::string& base) {
  std::ifstream meta_in(base + ".json");
  if (!meta_in) fail(ErrorCode::Io, "cannot open " + base + ".json");
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, base + ".json: " + e.what());
  }
  CollectionMap m;
  try {
    m.nx = meta.at("nx");
    m.ny = meta.at("ny");
    m.x0 = meta.at("x0_m");
    m.y0 = meta.at("y0_m");
    m.step = meta.at("step_m");
    m.eta_max = meta.at("eta_max");
    m.x_max = meta.at("x_max_m");
    m.y_max = meta.at("y_max_m");
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, base + ".json: " + e.what());
  }
  std::ifstream in(base + ".csv");
  if (!in) fail(ErrorCode::Io, "cannot open " + base + ".csv");
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        m.eta.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::Parse, base + ".csv:" + std::to_string(row) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != m.nx) fail(ErrorCode::Parse, base + ".csv:" + std::to_string(row) + ": expected " + std::to_string(m.nx) + " values");
  }
  if (row != m.ny) fail(ErrorCode::Parse, base + ".csv: expected " + std::to_string(m.ny) + " rows");
  return m;
}

LibraryConfig library_config(const PipelineConfig& cfg, const std::string& preset, const std::string& pol,
                             double a_lo, double a_hi, double a_step) {
  LibraryConfig c;
  c.stack = cfg.design.stack;
  c.jobs = cfg.jobs;
  c.swarm.seed = cfg.seed;
  if (pol == "TM") c.pol = Polarization::TM;
  else if (pol != "TE") fail(ErrorCode::InvalidArgument, "polarization must be TE or TM");
  if (preset == "quick") {
    c.fdtd.cell = 15e-9;
    c.swarm.particles = 8;
    c.swarm.iterations = 5;
    c.optimize_each_delta = false;
  } else if (preset != "full") {
    fail(ErrorCode::InvalidArgument, "preset must be quick or full");
  }
  if (!(a_step > 0.0) || a_hi < a_lo) fail(ErrorCode::InvalidArgument, "bad angle range");
  c.angles.clear();
  for (double a = a_lo; a <= a_hi + 1e-9; a += a_step) c.angles.push_back(deg_to_rad(a));
  return c;
}

json library_summary(const ParamLibrary& lib) {
  json j{{"polarization", std::string(to_string(lib.pol))},
         {"angles", lib.angles.size()},
         {"delta_points", lib.delta_fracs.size()},
         {"entries", lib.entries.size()},
         {"complete", lib.complete()},
         {"failures", lib.failures},
         {"kappa_max_per_m", lib.entries.empty() ? 0.0 : lib.kappa_max()}};
  if (!lib.angles.empty()) {
    j["angle_range_deg"] = {lib.angles.front() * 180.0 / kPi, lib.angles.back() * 180.0 / kPi};
    json rows = json::array();
    for (std::size_t a = 0; a < lib.angles.size() && lib.entries.size() == lib.angles.size() * lib.delta_fracs.size();
         ++a) {
      const auto& e0 = lib.at(a, 0);
      const auto& e1 = lib.at(a, lib.delta_fracs.size() - 1);
      rows.push_back({{"angle_deg", lib.angles[a] * 180.0 / kPi},
                      {"pitch_nm", e0.params.pitch * 1e9},
                      {"kappa0_per_m", e0.kappa},
                      {"kappa_half_per_m", e1.kappa},
                      {"fom", e0.fom}});
    }
    j["by_angle"] = rows;
  }
  return j;
}

// Near fields and spectra for both polarizations from the configured design.
struct Beams {
  Design design;
  FieldGrid near_te, near_tm;
};

Beams synthesize(const PipelineConfig& cfg) {
  const auto te = load_library_file(resolve_library(cfg, cfg.library_te, "TE"));
  const auto tm = load_library_file(resolve_library(cfg, cfg.library_tm, "TM"));
  Beams b;
  b.design = run_design(cfg.design, te);
  const auto tm_power = companion_emission(b.design.teeth, tm);
  SlabPhase tm_phase = b.design.phase;
  tm_phase.n_slab = effective_index(grating_region_stack(cfg.design.stack, 0.5, 0.5, cfg.design.pose.cladding_index),
                                    cfg.design.stack.wavelength, Polarization::TM);
  const double z = -cfg.design.pose.cladding_thickness, w = cfg.design.footprint.y_extent;
  const auto& g = cfg.propagation.grid;
  b.near_te = synthesize_near_field(b.design.teeth, b.design.phase, w, z, Polarization::TE, g);
  b.near_tm = synthesize_near_field(b.design.teeth, tm_phase, w, z, Polarization::TM, g, &tm_power);
  return b;
}

// Unit-power map and the same map per watt in the guide.
std::pair<CollectionMap, CollectionMap> map_from_field(const PipelineConfig& cfg, const FieldGrid& near, double z) {
  const AngularSpectrum spec(near);
  const auto clad = cladding(cfg);
  const double power = spec.at(z, clad).power();
  auto v = spec.vector_at(z, clad);
  for (auto& g : v) {
    for (auto& x : g.data) x /= std::sqrt(power);
    g.normalized = true;
  }
  const auto& pose = cfg.design.pose;
  const double hw = cfg.propagation.map_half_width;
  auto m = collection_map(v, cfg.design.axis, pose.x_ion - hw, pose.x_ion + hw, pose.y_ion - hw, pose.y_ion + hw,
                          cfg.propagation.map_stride);
  auto scaled = scaled_map(m, power);
  return {std::move(m), std::move(scaled)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ionpic: integrated-grating ion fluorescence collection toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Configuration file (JSON)");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Random seed")->each([&](const std::string&) { common.seed_set = true; });
    sub->add_option("--jobs", common.jobs, "Worker threads")->each([&](const std::string&) { common.jobs_set = true; });
  };

  // library build / inspect / resume
  auto* library = app.add_subcommand("library", "Build or inspect a unit-cell parameter library");
  library->require_subcommand(1);
  std::string preset = "quick", pol = "TE", lib_name, companion_of, inspect_path;
  double a_lo = -4.0, a_hi = 20.0, a_step = 2.0;
  auto* lib_build = library->add_subcommand("build", "Build a library into the output directory");
  auto* lib_resume = library->add_subcommand("resume", "Continue an interrupted build from its cache");
  for (auto* sub : {lib_build, lib_resume}) {
    add_common(sub);
    sub->add_option("--preset", preset, "quick or full")->capture_default_str();
    sub->add_option("--pol", pol, "TE or TM")->capture_default_str();
    sub->add_option("--angle-min", a_lo, "Lowest angle, deg")->capture_default_str();
    sub->add_option("--angle-max", a_hi, "Highest angle, deg")->capture_default_str();
    sub->add_option("--angle-step", a_step, "Angle step, deg")->capture_default_str();
    sub->add_option("--name", lib_name, "File name inside the output directory");
    sub->add_option("--companion-of", companion_of, "Re-simulate this library's geometries in --pol");
  }
  auto* lib_inspect = library->add_subcommand("inspect", "Summarize a library file");
  lib_inspect->add_option("file", inspect_path, "Library file")->required();

  auto* design = app.add_subcommand("design", "Fit the strength profile and lay out the grating");
  auto* synth = app.add_subcommand("synthesize", "Write the emitted near fields of the design");
  auto* propagate = app.add_subcommand("propagate", "Propagate a saved field");
  std::string field_base, name = "field";
  double dz = 0.0;
  bool find = false;
  propagate->add_option("--field", field_base, "Field base path (<base>.re.csv / .im.csv)")->required();
  propagate->add_option("--dz", dz, "Height above the chip surface, um");
  propagate->add_option("--name", name, "Output base name inside the output directory")->capture_default_str();
  propagate->add_flag("--find-focus", find, "Report the brightest point over the configured search range");
  auto* overlap = app.add_subcommand("overlap", "Efficiency of a saved field (intensity form)");
  std::string tm_field;
  double te_weight = 0.5;
  overlap->add_option("--field", field_base, "Field base path; intensity-only files are accepted")->required();
  overlap->add_option("--tm-field", tm_field, "TM field to combine with --field before applying the formula");
  overlap->add_option("--te-weight", te_weight, "TE share of the combined profile")->capture_default_str();
  auto* map = app.add_subcommand("map", "Collection maps at the ion height for the design");
  auto* crosstalk = app.add_subcommand("crosstalk", "TE/TM crosstalk from two saved maps");
  std::string te_map, tm_map;
  crosstalk->add_option("--te", te_map, "TE map base (<base>.csv / .json)")->required();
  crosstalk->add_option("--tm", tm_map, "TM map base")->required();
  auto* detect = app.add_subcommand("detect", "State-detection fidelity and readout timing");
  auto* ledger = app.add_subcommand("ledger", "Photon-loss tables and ratio calibration");
  auto* rabi = app.add_subcommand("rabi", "Thermal Rabi flopping curve");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage with caching");
  auto* report_cmd = app.add_subcommand("report", "Summarize a pipeline manifest");
  std::string manifest_path;
  report_cmd->add_option("--manifest", manifest_path, "Manifest file (default <out>/manifest.json)");
  for (auto* sub : {design, synth, propagate, overlap, map, crosstalk, detect, ledger, rabi, pipeline, report_cmd})
    add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error E_USAGE " << e.what() << '\n';
    return 2;
  }

  try {
    if (*lib_inspect) {
      print(library_summary(load_library_file(inspect_path)));
    } else if (*lib_build || *lib_resume) {
      const auto cfg = load(common);
      const auto lc = library_config(cfg, preset, pol, a_lo, a_hi, a_step);
      const std::string file = out_file(cfg, lib_name.empty() ? "library_" + pol + ".jsonl" : lib_name);
      ParamLibrary lib;
      if (!companion_of.empty()) {
        lib = companion_library(load_library_file(companion_of), lc);
      } else {
        if (*lib_resume && !fs::exists(file + ".cache"))
          fail(ErrorCode::MissingInput, "nothing to resume: " + file + ".cache not found");
        lib = build_library(lc, file + ".cache");
      }
      std::ofstream out(file);
      save_library(out, lib);
      if (!out) fail(ErrorCode::Io, "cannot write " + file);
      json j = library_summary(lib);
      j.erase("by_angle");
      j["file"] = file;
      print(j);
    } else if (*design) {
      const auto cfg = load(common);
      const auto d = run_design(cfg.design, load_library_file(resolve_library(cfg, cfg.library_te, "TE")));
      std::ofstream a(out_file(cfg, "ansatz.csv")), t(out_file(cfg, "teeth.csv")), l(out_file(cfg, "layout.txt")),
          s(out_file(cfg, "layout.svg"));
      write_ansatz_csv(a, d);
      write_tooth_csv(t, d.teeth);
      export_polygon_table(l, d.layout);
      export_svg(s, d.layout);
      print({{"ideal_relative_l2", d.fit.ideal.relative_l2},
             {"constrained_residual_power", d.fit.constrained.residual_power},
             {"teeth", d.teeth.size()},
             {"polygons", d.layout.polygons.size()},
             {"lambda_y_nm", d.lambda_y * 1e9}});
    } else if (*synth) {
      const auto cfg = load(common);
      const auto b = synthesize(cfg);
      save_field(b.near_te, out_file(cfg, "near_te"));
      save_field(b.near_tm, out_file(cfg, "near_tm"));
      print({{"te", out_file(cfg, "near_te")},
             {"tm", out_file(cfg, "near_tm")},
             {"z_um", b.near_te.z / kUm},
             {"power_te", b.near_te.power()},
             {"power_tm", b.near_tm.power()}});
    } else if (*propagate) {
      const auto cfg = load(common);
      const auto field = load_field(field_base);
      const AngularSpectrum spec(field);
      json j;
      if (find) {
        const auto f = find_focus(spec, cfg.propagation.focus_z_lo, cfg.propagation.focus_z_hi,
                                  cfg.propagation.focus_dz, cladding(cfg));
        j["focus_um"] = {f.x / kUm, f.y / kUm, f.z / kUm};
        if (dz == 0.0) dz = f.z / kUm;
      }
      const auto g = spec.at(dz * kUm, cladding(cfg));
      save_field(g, out_file(cfg, name));
      save_intensity_pgm(g, out_file(cfg, name + ".pgm"));
      const auto cs = beam_cross_section(g);
      j["z_um"] = dz;
      j["power"] = g.power();
      j["peak_um"] = {cs.x / kUm, cs.y / kUm};
      j["file"] = out_file(cfg, name);
      print(j);
    } else if (*overlap) {
      auto field = load_field(field_base);
      if (!tm_field.empty()) field = combine_profiles(field, load_field(tm_field), te_weight);
      field.normalize();
      const auto cs = beam_cross_section(field);
      print({{"eta", efficiency_from_intensity(cs.pixel_fraction, field.step, field.wavelength)},
             {"peak_um", {cs.x / kUm, cs.y / kUm}},
             {"method", "intensity-formula"}});
    } else if (*map) {
      const auto cfg = load(common);
      const auto b = synthesize(cfg);
      const double z = cfg.design.pose.height_above_surface;
      json j;
      for (const auto& [label, near] : {std::pair{"te", &b.near_te}, std::pair{"tm", &b.near_tm}}) {
        const auto [m, scaled] = map_from_field(cfg, *near, z);
        write_map(scaled, out_file(cfg, std::string("map_") + label));
        j[label] = {{"eta_max_unit_power", m.eta_max},
                    {"eta_max_per_watt", scaled.eta_max},
                    {"max_um", {m.x_max / kUm, m.y_max / kUm}}};
      }
      print(j);
    } else if (*crosstalk) {
      const auto r = crosstalk_metrics(read_map(te_map), read_map(tm_map));
      print({{"power_ratio", r.power_ratio}, {"suppression_db", r.suppression_db}, {"offset_um", r.offset / kUm}});
    } else if (*detect) {
      const auto cfg = load(common);
      const auto& t = cfg.detection;
      const auto dark = dark_fidelity_mc(t, cfg.fidelity_trials, cfg.seed, cfg.jobs);
      TimingOptions opt;
      opt.jobs = cfg.jobs;
      const auto timing = adaptive_timing(t, cfg.timing_trials, cfg.seed + 1, opt);
      print({{"bright_fidelity", bright_fidelity_analytic(t)},
             {"dark_fidelity", dark.value},
             {"dark_fidelity_sigma", dark.sigma},
             {"decay_probability", decay_probability(t)},
             {"bright_mean_ms", timing.bright_mean * 1e3},
             {"mixed_mean_ms", timing.mixed_mean * 1e3}});
    } else if (*ledger) {
      const auto cfg = load(common);
      json j;
      for (const auto& [label, table] : {std::pair{"measurement", loss_table_measurement()},
                                          std::pair{"emission", loss_table_emission()},
                                          std::pair{"improvements", loss_table_improvements()}}) {
        std::ofstream f(out_file(cfg, std::string("ledger_") + label + ".csv"));
        write_ledger_csv(f, table);
        const auto tot = ledger_total(table);
        j[label] = {{"total_db", tot.value}, {"sigma_db", tot.sigma}};
      }
      const auto r = ratio_method({9.24e-3, 0.22e-3}, {1.85e-3, 0.02e-3});
      j["ratio_method"] = {{"efficiency", r.value}, {"sigma", r.sigma}};
      print(j);
    } else if (*rabi) {
      const auto cfg = load(common);
      std::ofstream f(out_file(cfg, "rabi.csv"));
      f << "t_us,p_ground\n";
      for (std::size_t i = 0; i < cfg.rabi.points; ++i) {
        const double t = cfg.rabi.t_max * static_cast<double>(i) / static_cast<double>(cfg.rabi.points - 1);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g,%.10g\n", t / kUm, rabi_thermal(t, cfg.rabi.model));
        f << buf;
      }
      print({{"file", out_file(cfg, "rabi.csv")}, {"points", cfg.rabi.points}});
    } else if (*pipeline) {
      const auto run = run_pipeline(load(common));
      std::cout << report(run.manifest);
      std::cerr << "recomputed:";
      for (const auto& s : run.recomputed) std::cerr << ' ' << s;
      std::cerr << (run.recomputed.empty() ? " none\n" : "\n");
    } else if (*report_cmd) {
      std::string path = manifest_path;
      if (path.empty()) path = (fs::path(load(common).out_dir) / "manifest.json").string();
      std::ifstream in(path);
      if (!in) fail(ErrorCode::Io, "cannot open " + path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        fail(ErrorCode::Parse, path + ": " + e.what());
      }
      std::cout << report(Manifest::from_json(j));
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error " << to_string(e.code()) << ' ' << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error E_INTERNAL " << e.what() << '\n';
    return 1;
  }
  return 0;
}
