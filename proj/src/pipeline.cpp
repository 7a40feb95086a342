#include "ionpic/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ionpic/error.hpp"
#include "ionpic/geometry.hpp"
#include "ionpic/hash.hpp"
#include "ionpic/library.hpp"

namespace ionpic {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kUm = 1e-6;
constexpr const char* kManifestFormat = "ionpic-manifest 1";
constexpr const char* kVersion = "0.1.0";

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) fail(ErrorCode::Config, name_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& value, double scale = 1.0) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        value = j_.at(key).get<double>() * scale;
        if (!std::isfinite(value)) throw std::runtime_error("not finite");
      } else {
        value = j_.at(key).get<T>();
      }
    } catch (const std::exception& e) {
      fail(ErrorCode::Config, name_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!k.empty() && k[0] != '_' && !used_.count(k)) fail(ErrorCode::Config, name_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

// Metres to micrometres, rounded to a picometre so defaults print cleanly.
double um(double m) { return std::round(m / kUm * 1e6) / 1e6; }

json config_to_json(const PipelineConfig& c) {
  const auto& d = c.design;
  const auto& p = c.propagation;
  const auto& t = c.detection;
  const auto& a = d.axis.direction;
  return {
      {"out", c.out_dir},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"geometry",
       {{"footprint_x_um", um(d.footprint.x_extent)},
        {"footprint_y_um", um(d.footprint.y_extent)},
        {"x_ion_um", um(d.pose.x_ion)},
        {"y_ion_um", um(d.pose.y_ion)},
        {"height_um", um(d.pose.height_above_surface)},
        {"cladding_um", um(d.pose.cladding_thickness)},
        {"cladding_index", d.pose.cladding_index},
        {"wavelength_um", um(d.stack.wavelength)},
        {"quantization_axis", {a[0], a[1], a[2]}}}},
      {"library", {{"te", c.library_te}, {"tm", c.library_tm}}},
      {"design",
       {{"samples", d.samples},
        {"source_x_um", um(d.source_x)},
        {"collimated", d.collimated},
        {"penalty", d.fit.penalty}}},
      {"propagation",
       {{"nx", p.grid.nx},
        {"ny", p.grid.ny},
        {"step_um", um(p.grid.step)},
        {"x0_um", um(p.grid.x0)},
        {"focus_z_lo_um", um(p.focus_z_lo)},
        {"focus_z_hi_um", um(p.focus_z_hi)},
        {"focus_dz_um", um(p.focus_dz)},
        {"map_half_width_um", um(p.map_half_width)},
        {"map_stride", p.map_stride},
        {"te_weight", p.te_weight}}},
      {"detection",
       {{"bright_rate", t.bright_rate},
        {"dark_scatter", t.dark_scatter},
        {"dark_detector", t.dark_detector},
        {"dark_other", t.dark_other},
        {"window_ms", t.window * 1e3},
        {"threshold", t.threshold},
        {"bins", t.bins},
        {"lifetime_s", t.lifetime},
        {"shelving_failure", t.shelving_failure},
        {"fidelity_trials", c.fidelity_trials},
        {"timing_trials", c.timing_trials}}},
      {"rabi",
       {{"omega0", c.rabi.model.omega0},
        {"eta_ld", c.rabi.model.eta_ld},
        {"nbar", c.rabi.model.nbar},
        {"t_max_us", um(c.rabi.t_max)},
        {"points", c.rabi.points}}},
  };
}

std::string hash_of(const json& j) { return hex64(fnv1a64(j.dump())); }

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

}  // namespace

void PipelineConfig::validate() const {
  design.pose.validate();
  design.axis.validate();
  design.stack.validate();
  detection.validate();
  if (!(design.footprint.x_extent > 0.0 && design.footprint.y_extent > 0.0))
    fail(ErrorCode::Config, "footprint must be positive");
  const auto& p = propagation;
  if (p.grid.nx < 16 || p.grid.ny < 16 || !(p.grid.step > 0.0)) fail(ErrorCode::Config, "propagation grid too small");
  if (!(p.focus_z_hi > p.focus_z_lo) || !(p.focus_dz > 0.0)) fail(ErrorCode::Config, "empty focus search range");
  if (!(p.map_half_width >= 0.0) || p.map_stride == 0) fail(ErrorCode::Config, "bad map raster");
  if (p.te_weight < 0.0 || p.te_weight > 1.0) fail(ErrorCode::Config, "te_weight must lie in [0, 1]");
  if (fidelity_trials == 0 || timing_trials == 0) fail(ErrorCode::Config, "trial counts must be positive");
  if (rabi.points < 2 || !(rabi.t_max > 0.0)) fail(ErrorCode::Config, "bad Rabi scan");
  if (jobs == 0) fail(ErrorCode::Config, "jobs must be positive");
  if (out_dir.empty()) fail(ErrorCode::Config, "output directory must be set");
}

PipelineConfig pipeline_config_from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  Section top(j, "config");
  top.get("out", c.out_dir);
  top.get("seed", c.seed);
  top.get("jobs", c.jobs);
  auto& d = c.design;
  if (const json* g = top.sub("geometry")) {
    Section s(*g, "geometry");
    s.get("footprint_x_um", d.footprint.x_extent, kUm);
    s.get("footprint_y_um", d.footprint.y_extent, kUm);
    s.get("x_ion_um", d.pose.x_ion, kUm);
    s.get("y_ion_um", d.pose.y_ion, kUm);
    s.get("height_um", d.pose.height_above_surface, kUm);
    s.get("cladding_um", d.pose.cladding_thickness, kUm);
    s.get("cladding_index", d.pose.cladding_index);
    s.get("wavelength_um", d.stack.wavelength, kUm);
    std::vector<double> axis;
    s.get("quantization_axis", axis);
    if (!axis.empty()) {
      if (axis.size() != 3) fail(ErrorCode::Config, "geometry.quantization_axis: expected 3 numbers");
      const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
      if (!(n > 0.0)) fail(ErrorCode::Config, "geometry.quantization_axis: zero vector");
      d.axis.direction = {axis[0] / n, axis[1] / n, axis[2] / n};
    }
    s.finish();
  }
  d.stack.cladding_index = d.pose.cladding_index;
  if (const json* l = top.sub("library")) {
    Section s(*l, "library");
    s.get("te", c.library_te);
    s.get("tm", c.library_tm);
    s.finish();
  }
  if (const json* g = top.sub("design")) {
    Section s(*g, "design");
    s.get("samples", d.samples);
    s.get("source_x_um", d.source_x, kUm);
    s.get("collimated", d.collimated);
    s.get("penalty", d.fit.penalty);
    s.finish();
  }
  auto& p = c.propagation;
  if (const json* g = top.sub("propagation")) {
    Section s(*g, "propagation");
    s.get("nx", p.grid.nx);
    s.get("ny", p.grid.ny);
    s.get("step_um", p.grid.step, kUm);
    s.get("x0_um", p.grid.x0, kUm);
    s.get("focus_z_lo_um", p.focus_z_lo, kUm);
    s.get("focus_z_hi_um", p.focus_z_hi, kUm);
    s.get("focus_dz_um", p.focus_dz, kUm);
    s.get("map_half_width_um", p.map_half_width, kUm);
    s.get("map_stride", p.map_stride);
    s.get("te_weight", p.te_weight);
    s.finish();
  }
  auto& t = c.detection;
  if (const json* g = top.sub("detection")) {
    Section s(*g, "detection");
    s.get("bright_rate", t.bright_rate);
    s.get("dark_scatter", t.dark_scatter);
    s.get("dark_detector", t.dark_detector);
    s.get("dark_other", t.dark_other);
    s.get("window_ms", t.window, 1e-3);
    s.get("threshold", t.threshold);
    s.get("bins", t.bins);
    s.get("lifetime_s", t.lifetime);
    s.get("shelving_failure", t.shelving_failure);
    s.get("fidelity_trials", c.fidelity_trials);
    s.get("timing_trials", c.timing_trials);
    s.finish();
  }
  if (const json* g = top.sub("rabi")) {
    Section s(*g, "rabi");
    s.get("omega0", c.rabi.model.omega0);
    s.get("eta_ld", c.rabi.model.eta_ld);
    s.get("nbar", c.rabi.model.nbar);
    s.get("t_max_us", c.rabi.t_max, kUm);
    s.get("points", c.rabi.points);
    s.finish();
  }
  top.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, path + ": " + e.what());
  }
  const auto parent = fs::path(path).parent_path();
  return pipeline_config_from_json(j, parent.empty() ? "." : parent.string());
}

json default_pipeline_config_json() {
  PipelineConfig c;
  c.library_te = "library_te.jsonl";
  c.library_tm = "library_tm.jsonl";
  json j = config_to_json(c);
  j["_note"] = "Lengths in micrometres. Keys starting with '_' are comments. Omitted keys keep these defaults.";
  j["geometry"]["_note"] =
      "30 x 30 um grating, ion 50 um above the surface over x = 28 um, 5 um oxide cladding (index 1.47 assumed "
      "for SiO2 at 422 nm); z quantization axis";
  j["library"]["_note"] = "Parameter libraries: TE design library and its TM companion (same geometries)";
  j["design"]["_note"] = "Slab source 50 um before the grating; penalty weight of the constrained kappa fit";
  j["propagation"]["_note"] =
      "640 x 640 grid at 0.1 um covering the 30 um aperture with margin for the focused beam; focus searched over "
      "30-70 um; equal TE/TM weighting for the intensity form";
  j["detection"]["_note"] =
      "Bright rate 297 /s (mean 2.372 counts in 8 ms), dark backgrounds 4.3 + 3.0 + 0.8 /s, D5/2 lifetime 0.39 s, "
      "threshold 1 count, 10 bins";
  j["rabi"]["_note"] =
      "Mean occupation 19 quanta from the measured fit; Lamb-Dicke parameter 0.05 and 50 kHz carrier Rabi rate are "
      "assumed";
  return j;
}

json Manifest::to_json() const {
  json stages_j = json::array();
  for (const auto& s : stages) {
    json arts = json::array();
    for (const auto& [path, sum] : s.artifacts) arts.push_back({{"path", path}, {"checksum", sum}});
    stages_j.push_back({{"name", s.name}, {"key", s.key}, {"results", s.results}, {"artifacts", arts}});
  }
  return {{"format", kManifestFormat}, {"version", kVersion}, {"inputs_hash", inputs_hash}, {"stages", stages_j}};
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  try {
    if (j.value("format", "") != kManifestFormat) fail(ErrorCode::Parse, "not an ionpic manifest");
    m.inputs_hash = j.at("inputs_hash").get<std::string>();
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.key = s.at("key").get<std::string>();
      r.results = s.at("results");
      for (const auto& a : s.at("artifacts"))
        r.artifacts.emplace_back(a.at("path").get<std::string>(), a.at("checksum").get<std::string>());
      m.stages.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
  return m;
}

const StageRecord* Manifest::find(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

namespace {

// Output helper for one stage: files land under <out>/<stage>/.
struct StageContext {
  fs::path out;
  StageRecord record;

  std::string path(const std::string& file) const { return (out / record.name / file).string(); }

  std::ofstream open(const std::string& file) {
    std::ofstream f(path(file));
    if (!f) fail(ErrorCode::Io, "cannot write " + path(file));
    return f;
  }

  void add(const std::string& file) {
    record.artifacts.emplace_back(record.name + "/" + file, file_checksum(path(file)));
  }
};

bool cached(const fs::path& out, const std::string& name, const std::string& key, StageRecord& record) {
  const auto p = out / name / "stage.json";
  std::ifstream in(p);
  if (!in) return false;
  try {
    const json j = json::parse(in);
    if (j.at("key").get<std::string>() != key) return false;
    StageRecord r;
    r.name = name;
    r.key = key;
    r.results = j.at("results");
    for (const auto& a : j.at("artifacts")) {
      const auto path = a.at("path").get<std::string>(), sum = a.at("checksum").get<std::string>();
      if (!fs::exists(out / path) || file_checksum((out / path).string()) != sum) return false;
      r.artifacts.emplace_back(path, sum);
    }
    record = std::move(r);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void save_stage(const fs::path& out, const StageRecord& r) {
  json arts = json::array();
  for (const auto& [path, sum] : r.artifacts) arts.push_back({{"path", path}, {"checksum", sum}});
  std::ofstream f(out / r.name / "stage.json");
  f << json{{"key", r.key}, {"results", r.results}, {"artifacts", arts}}.dump(2) << '\n';
  if (!f) fail(ErrorCode::Io, "cannot write stage record for " + r.name);
}

void write_manifest(const fs::path& out, const Manifest& m) {
  std::ofstream f(out / "manifest.json");
  f << m.to_json().dump(2) << '\n';
  if (!f) fail(ErrorCode::Io, "cannot write manifest");
}

void stage_solid_angle(const PipelineConfig& c, StageContext& s) {
  const auto& d = c.design;
  const double fraction = solid_angle_fraction(d.footprint, d.pose);
  const auto mc = solid_angle_fraction_mc(d.footprint, d.pose, 1000000, c.seed);
  const auto parts = fraction_on_aperture(d.axis, d.footprint, d.pose);
  s.record.results = {{"fraction", fraction},
                      {"mc_fraction", mc.value},
                      {"mc_sigma", mc.sigma},
                      {"per_polarization_bound", 0.5 * fraction},
                      {"sigma_share", sigma_share(parts)}};
  for (const auto& p : parts)
    s.record.results["aperture"][std::string(to_string(p.kind))] = {
        {"incident", p.fraction_incident}, {"te", p.te_fraction}, {"tm", p.tm_fraction}};
}

struct Libraries {
  ParamLibrary te, tm;
};

void stage_design(const PipelineConfig& c, const Libraries& libs, StageContext& s, Design& d) {
  d = run_design(c.design, libs.te);
  {
    auto f = s.open("ansatz.csv");
    write_ansatz_csv(f, d);
  }
  {
    auto f = s.open("teeth.csv");
    write_tooth_csv(f, d.teeth);
  }
  {
    auto f = s.open("layout.txt");
    export_polygon_table(f, d.layout);
  }
  {
    auto f = s.open("layout.svg");
    export_svg(f, d.layout);
  }
  for (const char* f : {"ansatz.csv", "teeth.csv", "layout.txt", "layout.svg"}) s.add(f);
  double emitted = 0.0;
  for (const auto& t : d.teeth) emitted += t.emitted;
  const auto& a = d.fit.constrained.ansatz;
  s.record.results = {{"ideal_relative_l2", d.fit.ideal.relative_l2},
                      {"ideal_residual_power", d.fit.ideal.residual_power},
                      {"constrained_relative_l2", d.fit.constrained.relative_l2},
                      {"constrained_residual_power", d.fit.constrained.residual_power},
                      {"constrained_feasible", d.fit.constrained.feasible},
                      {"depletion_limited", d.fit.constrained.depletion_limited},
                      {"ansatz", {{"a", a.a}, {"b", a.b}, {"c", a.c}, {"d", a.d}, {"A", a.A}, {"B", a.B}}},
                      {"teeth", d.teeth.size()},
                      {"pitch_first_nm", d.teeth.front().pitch * 1e9},
                      {"pitch_last_nm", d.teeth.back().pitch * 1e9},
                      {"emitted_te", emitted},
                      {"lambda_y_nm", d.lambda_y * 1e9},
                      {"polygons", d.layout.polygons.size()}};
}

void stage_beam(const PipelineConfig& c, const Libraries& libs, const Design& d, StageContext& s) {
  const auto& cfg = c.design;
  const auto& p = c.propagation;
  const Cladding clad{cfg.pose.cladding_thickness, cfg.pose.cladding_index};
  const double z_grating = -clad.thickness;
  const double width = cfg.footprint.y_extent;

  // TM sees the same teeth with its own strength and slab index.
  const auto tm_power = companion_emission(d.teeth, libs.tm);
  SlabPhase tm_phase = d.phase;
  tm_phase.n_slab = effective_index(grating_region_stack(cfg.stack, 0.5, 0.5, cfg.pose.cladding_index),
                                    cfg.stack.wavelength, Polarization::TM);
  const auto near_te = synthesize_near_field(d.teeth, d.phase, width, z_grating, Polarization::TE, p.grid);
  const auto near_tm = synthesize_near_field(d.teeth, tm_phase, width, z_grating, Polarization::TM, p.grid, &tm_power);
  const AngularSpectrum spec_te(near_te), spec_tm(near_tm);

  const auto focus_te = find_focus(spec_te, p.focus_z_lo, p.focus_z_hi, p.focus_dz, clad);
  const auto focus_tm = find_focus(spec_tm, p.focus_z_lo, p.focus_z_hi, p.focus_dz, clad);

  const double z_ion = cfg.pose.height_above_surface;
  auto ion_te = spec_te.at(z_ion, clad), ion_tm = spec_tm.at(z_ion, clad);
  const double power_te = ion_te.power(), power_tm = ion_tm.power();
  auto unit = [](VectorField v, double power) {
    const double f = 1.0 / std::sqrt(power);
    for (auto& g : v) {
      for (auto& x : g.data) x *= f;
      g.normalized = true;
    }
    return v;
  };
  const auto vec_te = unit(spec_te.vector_at(z_ion, clad), power_te);
  const auto vec_tm = unit(spec_tm.vector_at(z_ion, clad), power_tm);

  const double hw = p.map_half_width;
  const auto x_lo = cfg.pose.x_ion - hw, x_hi = cfg.pose.x_ion + hw;
  const auto y_lo = cfg.pose.y_ion - hw, y_hi = cfg.pose.y_ion + hw;
  const auto map_te = collection_map(vec_te, cfg.axis, x_lo, x_hi, y_lo, y_hi, p.map_stride);
  const auto map_tm = collection_map(vec_tm, cfg.axis, x_lo, x_hi, y_lo, y_hi, p.map_stride);
  const auto abs_te = scaled_map(map_te, power_te), abs_tm = scaled_map(map_tm, power_tm);
  const auto xt = crosstalk_metrics(abs_te, abs_tm);

  // The two efficiency forms on the same fields: intensity form at the
  // brightest combined pixel, field form summed over both modes there.
  const auto combined = combine_profiles(ion_te, ion_tm, p.te_weight);
  const auto cs = beam_cross_section(combined);
  const double eta_intensity = efficiency_from_intensity(cs.pixel_fraction, combined.step, combined.wavelength);
  // Same formula with the modes weighted by the power each one delivers.
  const auto weighted = combine_profiles(ion_te, ion_tm, power_te / (power_te + power_tm));
  const auto cs_w = beam_cross_section(weighted);
  const double eta_intensity_weighted =
      efficiency_from_intensity(cs_w.pixel_fraction, weighted.step, weighted.wavelength);
  double eta_field = 0.0;
  for (const auto kind : kAllDipoleKinds)
    eta_field += branching_weight(kind) * (pixel_coupling(vec_te, cs.ix, cs.iy, kind, cfg.axis) +
                                           pixel_coupling(vec_tm, cs.ix, cs.iy, kind, cfg.axis));

  ion_te.normalize();
  ion_tm.normalize();
  save_field(ion_te, s.path("te_ion"));
  save_field(ion_tm, s.path("tm_ion"));
  save_intensity_pgm(ion_te, s.path("te_ion.pgm"));
  save_intensity_pgm(ion_tm, s.path("tm_ion.pgm"));
  // Maps per watt in the guide, so crosstalk can be recomputed from files.
  write_map(abs_te, s.path("map_te"));
  write_map(abs_tm, s.path("map_tm"));
  {
    // Vertical slice through y = y_ion, one row per micrometre of height.
    auto f = s.open("te_xz.csv");
    const auto jy = static_cast<std::size_t>(std::lround((cfg.pose.y_ion - near_te.y0) / near_te.step));
    f << "# rows z_um = 0.." << static_cast<int>(p.focus_z_hi / kUm) << ", columns x from " << near_te.x0 / kUm
      << " um step " << near_te.step / kUm << " um; |E|^2 of the TE field\n";
    char buf[32];
    for (int zi = 0; zi <= static_cast<int>(p.focus_z_hi / kUm); ++zi) {
      const auto g = spec_te.at(zi * kUm, clad);
      for (std::size_t i = 0; i < g.nx; ++i) {
        std::snprintf(buf, sizeof buf, "%.6g", std::norm(g.at(i, jy)));
        if (i) f << ',';
        f << buf;
      }
      f << '\n';
    }
  }
  for (const char* f : {"te_ion.re.csv", "te_ion.im.csv", "tm_ion.re.csv", "tm_ion.im.csv", "te_ion.pgm", "tm_ion.pgm",
                        "map_te.csv", "map_te.json", "map_tm.csv", "map_tm.json", "te_xz.csv"})
    s.add(f);

  double emitted_tm = 0.0;
  for (double v : tm_power) emitted_tm += v;
  auto focus_json = [](const Focus& f) {
    return json{{"x_um", f.x / kUm}, {"y_um", f.y / kUm}, {"z_um", f.z / kUm}};
  };
  s.record.results = {{"focus_te", focus_json(focus_te)},
                      {"focus_tm", focus_json(focus_tm)},
                      {"n_slab_te", d.phase.n_slab},
                      {"n_slab_tm", tm_phase.n_slab},
                      {"emitted_tm", emitted_tm},
                      {"power_at_ion_plane_te", power_te},
                      {"power_at_ion_plane_tm", power_tm},
                      {"eta_te", map_te.eta_max},
                      {"eta_tm", map_tm.eta_max},
                      {"eta_te_absolute", abs_te.eta_max},
                      {"eta_tm_absolute", abs_tm.eta_max},
                      {"map_max_te_um", {map_te.x_max / kUm, map_te.y_max / kUm}},
                      {"map_max_tm_um", {map_tm.x_max / kUm, map_tm.y_max / kUm}},
                      {"crosstalk",
                       {{"power_ratio", xt.power_ratio},
                        {"suppression_db", xt.suppression_db},
                        {"offset_um", xt.offset / kUm}}},
                      {"eta_field_form", eta_field},
                      {"eta_intensity_form", eta_intensity},
                      {"form_relative_difference", eta_field / eta_intensity - 1.0},
                      {"eta_intensity_form_power_weighted", eta_intensity_weighted}};
}

void stage_ledger(StageContext& s) {
  const std::pair<const char*, LossLedger> tables[] = {{"measurement", loss_table_measurement()},
                                                       {"emission", loss_table_emission()},
                                                       {"improvements", loss_table_improvements()}};
  for (const auto& [name, table] : tables) {
    const std::string file = std::string("ledger_") + name + ".csv";
    {
      auto f = s.open(file);
      write_ledger_csv(f, table);
    }
    s.add(file);
    const auto t = ledger_total(table);
    s.record.results[name] = {{"total_db", t.value}, {"sigma_db", t.sigma}};
  }
  const auto r = ratio_method({9.24e-3, 0.22e-3}, {1.85e-3, 0.02e-3});
  s.record.results["ratio_method"] = {{"efficiency", r.value}, {"sigma", r.sigma}, {"db", ratio_to_db(r.value)}};
}

void stage_detection(const PipelineConfig& c, StageContext& s) {
  const auto& t = c.detection;
  const auto dark = dark_fidelity_mc(t, c.fidelity_trials, c.seed, c.jobs);
  TimingOptions opt;
  opt.jobs = c.jobs;
  const auto timing = adaptive_timing(t, c.timing_trials, c.seed + 1, opt);
  for (const auto& [name, state] :
       {std::pair{"bright", DetectionState::Bright}, std::pair{"dark", DetectionState::Dark}}) {
    const std::string file = std::string("histogram_") + name + ".csv";
    const auto h = histogram_sim(t, state, c.fidelity_trials, c.seed + 2, c.jobs);
    {
      auto f = s.open(file);
      write_histogram_csv(f, h);
    }
    s.add(file);
  }
  s.record.results = {{"bright_fidelity", bright_fidelity_analytic(t)},
                      {"dark_fidelity", dark.value},
                      {"dark_fidelity_sigma", dark.sigma},
                      {"decay_probability", decay_probability(t)},
                      {"bright_mean_ms", timing.bright_mean * 1e3},
                      {"mixed_mean_ms", timing.mixed_mean * 1e3}};
}

void stage_rabi(const PipelineConfig& c, StageContext& s) {
  {
    auto f = s.open("rabi.csv");
    f << "t_us,p_ground\n";
    char buf[64];
    for (std::size_t i = 0; i < c.rabi.points; ++i) {
      const double t = c.rabi.t_max * static_cast<double>(i) / static_cast<double>(c.rabi.points - 1);
      std::snprintf(buf, sizeof buf, "%.6g,%.10g\n", t / kUm, rabi_thermal(t, c.rabi.model));
      f << buf;
    }
  }
  s.add("rabi.csv");
  const double t_pi = kPi / c.rabi.model.omega0;
  s.record.results = {{"p_ground_at_pi_time", rabi_thermal(t_pi, c.rabi.model)},
                      {"nbar", c.rabi.model.nbar},
                      {"eta_ld", c.rabi.model.eta_ld}};
}

}  // namespace

PipelineRun run_pipeline(const PipelineConfig& config) {
  config.validate();
  const std::string te_path = resolve(config.base_dir, config.library_te);
  const std::string tm_path = resolve(config.base_dir, config.library_tm);
  for (const auto& [pol, path] : {std::pair{"TE", te_path}, std::pair{"TM", tm_path}})
    if (path.empty() || !fs::exists(path))
      fail(ErrorCode::MissingInput, std::string("design: library required (") + pol + " library " +
                                        (path.empty() ? std::string("not configured") : path + " not found") + ")");

  const fs::path out(config.out_dir);
  fs::create_directories(out);
  json inputs = config_to_json(config);
  inputs.erase("out");
  inputs.erase("jobs");
  inputs["library"] = {{"te", file_checksum(te_path)}, {"tm", file_checksum(tm_path)}};
  inputs["version"] = kVersion;

  PipelineRun run;
  run.manifest.inputs_hash = hash_of(inputs);
  Libraries libs;
  bool libs_loaded = false;
  Design design;
  bool have_design = false;
  std::map<std::string, std::string> keys;

  auto stage_inputs = [&](const std::string& name) -> json {
    json j{{"stage", name}, {"version", kVersion}};
    if (name == "solid_angle") j["in"] = {inputs["geometry"], inputs["seed"]};
    if (name == "design") j["in"] = {inputs["geometry"], inputs["design"], inputs["library"]};
    if (name == "beam") j["in"] = {keys["design"], inputs["propagation"], inputs["library"]};
    if (name == "ledger") j["in"] = json::object();
    if (name == "detection") j["in"] = {inputs["detection"], inputs["seed"]};
    if (name == "rabi") j["in"] = inputs["rabi"];
    return j;
  };

  for (const auto& name : kPipelineStages) {
    const std::string key = hash_of(stage_inputs(name));
    keys[name] = key;
    StageRecord record;
    const bool needs_design_now = name == "beam" && !have_design;
    if (!cached(out, name, key, record) || needs_design_now) {
      if (needs_design_now && cached(out, name, key, record)) {
        // The beam result is cached; the design object is not needed.
      } else {
        StageContext ctx{out, {}};
        ctx.record.name = name;
        ctx.record.key = key;
        fs::create_directories(out / name);
        try {
          if ((name == "design" || name == "beam") && !libs_loaded) {
            libs.te = load_library_file(te_path);
            libs.tm = load_library_file(tm_path);
            if (libs.tm.angles != libs.te.angles || libs.tm.delta_fracs != libs.te.delta_fracs)
              fail(ErrorCode::MissingInput, "TM library does not share the TE library grid");
            libs_loaded = true;
          }
          if (name == "beam" && !have_design) {
            design = run_design(config.design, libs.te);
            have_design = true;
          }
          if (name == "solid_angle") stage_solid_angle(config, ctx);
          if (name == "design") {
            stage_design(config, libs, ctx, design);
            have_design = true;
          }
          if (name == "beam") stage_beam(config, libs, design, ctx);
          if (name == "ledger") stage_ledger(ctx);
          if (name == "detection") stage_detection(config, ctx);
          if (name == "rabi") stage_rabi(config, ctx);
        } catch (const Error& e) {
          write_manifest(out, run.manifest);
          fail(ErrorCode::Stage, name + ": " + std::string(to_string(e.code())) + " " + e.what());
        } catch (const std::exception& e) {
          write_manifest(out, run.manifest);
          fail(ErrorCode::Stage, name + ": " + e.what());
        }
        save_stage(out, ctx.record);
        record = ctx.record;
        run.recomputed.push_back(name);
      }
    }
    run.manifest.stages.push_back(record);
    write_manifest(out, run.manifest);
  }
  std::ofstream(out / "report.txt") << report(run.manifest);
  return run;
}

std::string report(const Manifest& m) {
  if (m.stages.empty()) return "ionpic report: no stages\n";
  std::ostringstream o;
  char buf[256];
  auto line = [&](const char* fmt, auto... v) {
    std::snprintf(buf, sizeof buf, fmt, v...);
    o << buf << '\n';
  };
  auto num = [](const json& r, const char* k) { return r.contains(k) ? r.at(k).get<double>() : std::nan(""); };
  o << "ionpic report (inputs " << m.inputs_hash << ")\n";
  if (const auto* s = m.find("solid_angle")) {
    const auto& r = s->results;
    o << "\n[collection limit]\n";
    line("  solid-angle fraction      %.4f %%", 100.0 * num(r, "fraction"));
    line("  per-polarization bound    %.4f %%", 100.0 * num(r, "per_polarization_bound"));
    line("  sigma share on aperture   %.2f %%", 100.0 * num(r, "sigma_share"));
  }
  if (const auto* s = m.find("design")) {
    const auto& r = s->results;
    o << "\n[grating design]\n";
    line("  ideal fit L2 mismatch     %.2f %%", 100.0 * num(r, "ideal_relative_l2"));
    line("  constrained fit residual  %.2f %% guided power at grating end", 100.0 * num(r, "constrained_residual_power"));
    line("  teeth                     %d (pitch %.1f -> %.1f nm)", r.at("teeth").get<int>(), num(r, "pitch_first_nm"),
         num(r, "pitch_last_nm"));
    line("  zone period               %.0f nm", num(r, "lambda_y_nm"));
  }
  if (const auto* s = m.find("beam")) {
    const auto& r = s->results;
    const auto& f = r.at("focus_te");
    o << "\n[beam and collection]\n";
    line("  TE focus                  x %.2f um, y %.2f um, z %.2f um", f.at("x_um").get<double>(),
         f.at("y_um").get<double>(), f.at("z_um").get<double>());
    line("  peak eta TE / TM          %.3f %% / %.3f %% (unit-power fields)", 100.0 * num(r, "eta_te"),
         100.0 * num(r, "eta_tm"));
    line("  peak eta TE / TM          %.3f %% / %.3f %% (per watt in the guide)", 100.0 * num(r, "eta_te_absolute"),
         100.0 * num(r, "eta_tm_absolute"));
    const auto& x = r.at("crosstalk");
    line("  TM/TE power ratio         %.3f", x.at("power_ratio").get<double>());
    line("  TM at TE maximum          %.2f dB", x.at("suppression_db").get<double>());
    line("  TE/TM maxima offset       %.2f um", x.at("offset_um").get<double>());
    line("  field vs intensity form   %.5f vs %.5f (%+.2f %%)", num(r, "eta_field_form"), num(r, "eta_intensity_form"),
         100.0 * num(r, "form_relative_difference"));
  }
  if (const auto* s = m.find("ledger")) {
    const auto& r = s->results;
    o << "\n[photon-loss ledger]\n";
    for (const char* k : {"measurement", "emission", "improvements"})
      line("  %-24s  %.2f +/- %.2f dB", k, r.at(k).at("total_db").get<double>(), r.at(k).at("sigma_db").get<double>());
    const auto& q = r.at("ratio_method");
    line("  ratio-method efficiency   (%.3f +/- %.3f) x 1e-5", q.at("efficiency").get<double>() * 1e5,
         q.at("sigma").get<double>() * 1e5);
  }
  if (const auto* s = m.find("detection")) {
    const auto& r = s->results;
    o << "\n[state detection]\n";
    line("  bright fidelity           %.4f", num(r, "bright_fidelity"));
    line("  dark fidelity             %.4f +/- %.4f", num(r, "dark_fidelity"), num(r, "dark_fidelity_sigma"));
    line("  mean decision time        %.2f ms bright, %.2f ms mixed", num(r, "bright_mean_ms"), num(r, "mixed_mean_ms"));
  }
  if (const auto* s = m.find("rabi")) {
    const auto& r = s->results;
    o << "\n[thermal Rabi flopping]\n";
    line("  P(ground) at the pi time  %.4f (nbar %.0f, eta_LD %.3f)", num(r, "p_ground_at_pi_time"), num(r, "nbar"),
         num(r, "eta_ld"));
  }
  std::vector<std::string> missing;
  for (const auto& n : kPipelineStages)
    if (!m.find(n)) missing.push_back(n);
  if (!missing.empty()) {
    o << "\nmissing stages:";
    for (const auto& n : missing) o << ' ' << n;
    o << '\n';
  }
  return o.str();
}

}  // namespace ionpic
