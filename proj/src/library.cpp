#include "ionpic/library.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ionpic/error.hpp"
#include "ionpic/hash.hpp"
#include "ionpic/numeric/philox.hpp"
#include "ionpic/parallel.hpp"

namespace ionpic {

using nlohmann::json;

double figure_of_merit(double kappa, double alpha) {
  if (kappa < 0.0 || alpha < 0.0) fail(ErrorCode::InvalidArgument, "kappa and alpha must be >= 0");
  if (!(kappa + alpha > 0.0)) fail(ErrorCode::UndefinedFigureOfMerit, "kappa + alpha is zero");
  return kappa / (kappa + alpha);
}

namespace {

bool better(const SwarmScore& a, const SwarmScore& b) {
  return a.value > b.value || (a.value == b.value && a.tiebreak > b.tiebreak);
}

}  // namespace

SwarmResult pso_maximize(const SwarmObjective& objective, const std::vector<double>& lower,
                         const std::vector<double>& upper, const SwarmConfig& cfg) {
  const std::size_t dim = lower.size();
  if (dim == 0 || upper.size() != dim) fail(ErrorCode::InvalidArgument, "swarm bounds must be nonempty and matched");
  for (std::size_t d = 0; d < dim; ++d)
    if (!(upper[d] >= lower[d])) fail(ErrorCode::InvalidArgument, "swarm upper bound below lower bound");
  if (cfg.particles < 1 || cfg.iterations < 0) fail(ErrorCode::InvalidArgument, "swarm needs particles");

  numeric::CounterRng rng(cfg.seed, 0);
  const auto n = static_cast<std::size_t>(cfg.particles);
  std::vector<std::vector<double>> x(n, std::vector<double>(dim)), v = x, pbest;
  std::vector<SwarmScore> pscore(n);
  SwarmResult out;
  bool any_feasible = false;

  auto score = [&](const std::vector<double>& p) {
    ++out.evaluations;
    const auto s = objective(p);
    if (!s) return SwarmScore{};
    ++out.feasible;
    any_feasible = true;
    return *s;
  };

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      const double w = upper[d] - lower[d];
      x[i][d] = lower[d] + w * rng.uniform();
      v[i][d] = w * (rng.uniform() - 0.5) * 0.2;
    }
  pbest = x;
  std::size_t g = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pscore[i] = score(x[i]);
    if (i == 0 || better(pscore[i], pscore[g])) g = i;
  }
  std::vector<double> gbest = pbest[g];
  SwarmScore gscore = pscore[g];

  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double w = upper[d] - lower[d];
        const double r1 = rng.uniform(), r2 = rng.uniform();
        double vel = cfg.inertia * v[i][d] + cfg.cognitive * r1 * (pbest[i][d] - x[i][d]) +
                     cfg.social * r2 * (gbest[d] - x[i][d]);
        vel = std::clamp(vel, -w, w);
        v[i][d] = vel;
        x[i][d] = std::clamp(x[i][d] + vel, lower[d], upper[d]);
      }
      const SwarmScore s = score(x[i]);
      if (better(s, pscore[i])) {
        pscore[i] = s;
        pbest[i] = x[i];
      }
    }
    // Global best is updated once per sweep so the result does not depend on
    // the order particles are visited in.
    for (std::size_t i = 0; i < n; ++i)
      if (better(pscore[i], gscore)) {
        gscore = pscore[i];
        gbest = pbest[i];
      }
  }
  if (!any_feasible) fail(ErrorCode::NoFeasibleParticles, "no feasible point found by the swarm");
  out.best = gbest;
  out.score = gscore;
  return out;
}

std::vector<double> LibraryConfig::delta_fracs() const {
  if (delta_points < 1) fail(ErrorCode::InvalidArgument, "delta grid needs at least one point");
  std::vector<double> d(static_cast<std::size_t>(delta_points), 0.0);
  for (int j = 1; j < delta_points; ++j) d[static_cast<std::size_t>(j)] = 0.5 * j / (delta_points - 1);
  return d;
}

UnitCellParams cell_for_angle(const LibraryConfig& c, double angle, double dcu, double dcl, double dx_frac,
                              double delta_frac) {
  const LayerStack region = grating_region_stack(c.stack, dcu, dcl, c.fdtd.gap_index, c.fdtd.layout);
  const double n_eff = effective_index(region, c.stack.wavelength, c.pol);
  UnitCellParams p;
  p.pitch = grating_pitch(n_eff, c.stack.cladding_index, angle, c.stack.wavelength);
  p.dcu = dcu;
  p.dcl = dcl;
  p.dx = dx_frac * p.pitch;
  p.delta = delta_frac * p.pitch;
  return p;
}

LibraryEntry evaluate_cell(const LibraryConfig& c, double angle, double delta_frac, const UnitCellParams& params) {
  FdtdOptions o = c.fdtd;
  o.target_angle = angle;
  const CellResult r = run_unit_cell(params, c.stack, c.pol, o);
  const KappaAlpha ka = extract_kappa_alpha(r);
  LibraryEntry e;
  e.angle = angle;
  e.delta_frac = delta_frac;
  e.params = params;
  e.kappa = ka.kappa;
  e.alpha = ka.alpha;
  e.fom = ka.kappa + ka.alpha > 0.0 ? figure_of_merit(ka.kappa, ka.alpha) : 0.0;
  return e;
}

std::pair<std::vector<double>, std::vector<double>> swarm_bounds(const LibraryConfig& c, double angle) {
  const double pitch = cell_for_angle(c, angle, 0.5, 0.5, 0.0, 0.0).pitch;
  const auto feasible = feasible_duty_range(pitch, c.min_feature);
  double lo = std::max(c.duty_min, feasible.first), hi = std::min(c.duty_max, feasible.second);
  if (lo > hi) lo = hi = 0.5;  // only the offset is left to optimize
  return {{lo, lo, -0.5}, {hi, hi, 0.5}};
}

LibraryEntry pso_optimize(const LibraryConfig& c, double angle, double delta_frac, std::uint64_t seed) {
  SwarmConfig swarm = c.swarm;
  swarm.seed = seed;
  std::map<std::vector<double>, LibraryEntry> seen;
  auto objective = [&](const std::vector<double>& x) -> std::optional<SwarmScore> {
    const UnitCellParams p = cell_for_angle(c, angle, x[0], x[1], x[2], delta_frac);
    if (!feature_check(p, c.min_feature).empty()) return std::nullopt;
    try {
      const LibraryEntry e = evaluate_cell(c, angle, delta_frac, p);
      seen.emplace(x, e);
      return SwarmScore{e.fom, e.kappa};
    } catch (const Error& err) {
      if (err.code() == ErrorCode::Depletion) return std::nullopt;
      std::ostringstream msg;
      msg << "particle dcu=" << x[0] << " dcl=" << x[1] << " dx/pitch=" << x[2] << ": " << err.what();
      throw Error(err.code(), msg.str());
    }
  };
  const auto box = swarm_bounds(c, angle);
  const auto best = pso_maximize(objective, box.first, box.second, swarm);
  return seen.at(best.best);
}

const LibraryEntry& ParamLibrary::at(std::size_t ia, std::size_t id) const {
  if (ia >= angles.size() || id >= delta_fracs.size()) fail(ErrorCode::InvalidArgument, "library index out of range");
  return entries.at(ia * delta_fracs.size() + id);
}

double ParamLibrary::kappa_max() const {
  double k = 0.0;
  for (const auto& e : entries) k = std::max(k, e.kappa);
  return k;
}

namespace {

json settings_json(const LibraryConfig& c) {
  json layers = json::array();
  for (const auto& l : c.stack.layers) layers.push_back({{"name", l.name}, {"thickness", l.thickness}, {"index", l.index}});
  const auto& f = c.fdtd;
  return {{"stack", {{"layers", layers}, {"substrate_index", c.stack.substrate_index},
                     {"cladding_index", c.stack.cladding_index}, {"wavelength", c.stack.wavelength}}},
          {"polarization", std::string(to_string(c.pol))},
          {"min_feature", c.min_feature},
          {"duty", {c.duty_min, c.duty_max}},
          {"swarm", {{"particles", c.swarm.particles}, {"iterations", c.swarm.iterations},
                     {"inertia", c.swarm.inertia}, {"cognitive", c.swarm.cognitive},
                     {"social", c.swarm.social}, {"seed", c.swarm.seed}}},
          {"optimize_each_delta", c.optimize_each_delta},
          {"fdtd", {{"cells_per_wavelength", f.cells_per_wavelength}, {"cell", f.cell}, {"pml_cells", f.pml_cells},
                    {"n_periods", f.n_periods}, {"window_half_width", f.window_half_width},
                    {"convergence", f.convergence}, {"gap_index", f.gap_index}}}};
}

json entry_json(const LibraryEntry& e) {
  return {{"angle", e.angle}, {"delta_frac", e.delta_frac}, {"pitch", e.params.pitch}, {"dcu", e.params.dcu},
          {"dcl", e.params.dcl}, {"dx", e.params.dx}, {"delta", e.params.delta}, {"kappa", e.kappa},
          {"alpha", e.alpha}, {"fom", e.fom}};
}

LibraryEntry entry_from(const json& j) {
  LibraryEntry e;
  e.angle = j.at("angle").get<double>();
  e.delta_frac = j.at("delta_frac").get<double>();
  e.params.pitch = j.at("pitch").get<double>();
  e.params.dcu = j.at("dcu").get<double>();
  e.params.dcl = j.at("dcl").get<double>();
  e.params.dx = j.at("dx").get<double>();
  e.params.delta = j.at("delta").get<double>();
  e.kappa = j.at("kappa").get<double>();
  e.alpha = j.at("alpha").get<double>();
  e.fom = j.at("fom").get<double>();
  return e;
}

}  // namespace

std::string library_entry_key(const LibraryConfig& c, double angle, double delta_frac) {
  json k = settings_json(c);
  k["angle"] = angle;
  k["delta_frac"] = delta_frac;
  return hex64(fnv1a64(k.dump()));
}

ParamLibrary build_library(const LibraryConfig& c, const std::string& cache_path) {
  if (c.angles.empty()) fail(ErrorCode::InvalidArgument, "library needs at least one angle");
  ParamLibrary lib;
  lib.angles = c.angles;
  lib.delta_fracs = c.delta_fracs();
  lib.min_feature = c.min_feature;
  lib.pol = c.pol;
  lib.settings = settings_json(c).dump();

  std::map<std::string, LibraryEntry> cache;
  std::mutex mutex;
  if (!cache_path.empty()) {
    std::ifstream in(cache_path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        cache.emplace(j.at("key").get<std::string>(), entry_from(j));
      } catch (const std::exception& e) {
        fail(ErrorCode::Parse, cache_path + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }
  std::ofstream append;
  if (!cache_path.empty()) {
    append.open(cache_path, std::ios::app);
    if (!append) fail(ErrorCode::Io, "cannot write library cache " + cache_path);
  }

  const std::size_t na = lib.angles.size(), nd = lib.delta_fracs.size();
  std::vector<std::optional<LibraryEntry>> slots(na * nd);
  std::vector<std::string> failures(na * nd);

  auto lookup = [&](const std::string& key) -> std::optional<LibraryEntry> {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    return std::nullopt;
  };
  auto store = [&](const std::string& key, const LibraryEntry& e) {
    std::lock_guard lock(mutex);
    if (!cache.emplace(key, e).second) return;
    if (append.is_open()) {
      json j = entry_json(e);
      j["key"] = key;
      append << j.dump() << '\n' << std::flush;
    }
  };

  // One task per angle: in the re-simulation mode the delta > 0 nodes need
  // that angle's delta = 0 optimum.
  parallel_for(na, c.jobs, [&](std::size_t ia) {
    const double angle = lib.angles[ia];
    std::optional<LibraryEntry> base;
    for (std::size_t id = 0; id < nd; ++id) {
      const double frac = lib.delta_fracs[id];
      const std::string key = library_entry_key(c, angle, frac);
      try {
        auto e = lookup(key);
        if (!e) {
          if (c.optimize_each_delta || id == 0) {
            e = pso_optimize(c, angle, frac, fnv1a64(key, c.swarm.seed));
          } else {
            if (!base) fail(ErrorCode::Stage, "delta = 0 optimum unavailable");
            UnitCellParams p = base->params;
            p.delta = frac * p.pitch;
            e = evaluate_cell(c, angle, frac, p);
          }
          store(key, *e);
        }
        if (id == 0) base = e;
        slots[ia * nd + id] = e;
      } catch (const Error& err) {
        failures[ia * nd + id] = key + ": " + std::string(to_string(err.code())) + " " + err.what();
      }
    }
  });
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s]) lib.entries.push_back(*slots[s]);
    if (!failures[s].empty()) lib.failures.push_back(failures[s]);
  }
  return lib;
}

void save_library(std::ostream& out, const ParamLibrary& lib) {
  json head{{"format", "ionpic-library"},
            {"version", 1},
            {"angles", lib.angles},
            {"delta_fracs", lib.delta_fracs},
            {"min_feature", lib.min_feature},
            {"polarization", std::string(to_string(lib.pol))},
            {"settings", json::parse(lib.settings.empty() ? "{}" : lib.settings)},
            {"failures", lib.failures}};
  out << head.dump() << '\n';
  for (const auto& e : lib.entries) out << entry_json(e).dump() << '\n';
}

ParamLibrary load_library(std::istream& in) {
  ParamLibrary lib;
  std::string line;
  int n = 0;
  try {
    if (!std::getline(in, line)) fail(ErrorCode::Parse, "empty library file");
    ++n;
    const json head = json::parse(line);
    if (head.at("format") != "ionpic-library") fail(ErrorCode::Parse, "not a library file");
    if (head.at("version").get<int>() != 1) fail(ErrorCode::Parse, "unsupported library version");
    lib.angles = head.at("angles").get<std::vector<double>>();
    lib.delta_fracs = head.at("delta_fracs").get<std::vector<double>>();
    lib.min_feature = head.at("min_feature").get<double>();
    lib.pol = head.at("polarization") == "TM" ? Polarization::TM : Polarization::TE;
    lib.settings = head.at("settings").dump();
    lib.failures = head.value("failures", std::vector<std::string>{});
    while (std::getline(in, line)) {
      ++n;
      if (!line.empty()) lib.entries.push_back(entry_from(json::parse(line)));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::Parse, "library line " + std::to_string(n) + ": " + e.what());
  }
  if (lib.entries.size() != lib.angles.size() * lib.delta_fracs.size())
    fail(ErrorCode::Parse, "library grid has holes");
  for (std::size_t ia = 0; ia < lib.angles.size(); ++ia)
    for (std::size_t id = 0; id < lib.delta_fracs.size(); ++id) {
      const auto& e = lib.at(ia, id);
      if (e.angle != lib.angles[ia] || e.delta_frac != lib.delta_fracs[id])
        fail(ErrorCode::Parse, "library entries are not in grid order");
    }
  return lib;
}

ParamLibrary load_library_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open library " + path);
  return load_library(in);
}

Interpolated interpolate(const ParamLibrary& lib, double angle, double kappa_target) {
  const auto& a = lib.angles;
  const std::size_t nd = lib.delta_fracs.size();
  if (a.empty() || nd == 0 || lib.entries.size() != a.size() * nd)
    fail(ErrorCode::InvalidArgument, "library is incomplete");
  if (kappa_target < 0.0) fail(ErrorCode::InvalidArgument, "kappa target must be >= 0");
  if (angle < a.front() || angle > a.back())
    fail(ErrorCode::Extrapolation, "angle " + std::to_string(rad_to_deg(angle)) + " deg outside the library grid");

  std::size_t ia = 0;
  while (ia + 2 < a.size() && angle > a[ia + 1]) ++ia;
  const std::size_t ib = std::min(ia + 1, a.size() - 1);
  const double t = ib == ia ? 0.0 : (angle - a[ia]) / (a[ib] - a[ia]);
  auto mix_a = [&](std::size_t id, auto field) {
    const double u = field(lib.at(ia, id)), w = field(lib.at(ib, id));
    return t == 0.0 ? u : (t == 1.0 ? w : (1.0 - t) * u + t * w);
  };
  std::vector<double> kappa(nd);
  for (std::size_t id = 0; id < nd; ++id) kappa[id] = mix_a(id, [](const LibraryEntry& e) { return e.kappa; });

  // Search down the delta grid from the strongest node.
  const std::size_t top = static_cast<std::size_t>(std::max_element(kappa.begin(), kappa.end()) - kappa.begin());
  Interpolated out;
  out.clamped = kappa_target > kappa[top];
  const double k = std::min(kappa_target, kappa[top]);
  std::size_t j = top;
  double s = 0.0;
  if (k <= kappa[top]) {
    j = nd - 1;
    for (std::size_t m = top; m + 1 < nd; ++m)
      if (kappa[m] >= k && k >= kappa[m + 1]) {
        j = m;
        const double span = kappa[m] - kappa[m + 1];
        s = span > 0.0 ? (kappa[m] - k) / span : 0.0;
        break;
      }
    if (j == nd - 1) s = 0.0;  // below every node: strongest suppression
  }
  const std::size_t j1 = std::min(j + 1, nd - 1);
  auto mix = [&](auto field) {
    const double u = mix_a(j, field), w = mix_a(j1, field);
    return s == 0.0 ? u : (s == 1.0 ? w : (1.0 - s) * u + s * w);
  };
  out.params.pitch = mix([](const LibraryEntry& e) { return e.params.pitch; });
  out.params.dcu = mix([](const LibraryEntry& e) { return e.params.dcu; });
  out.params.dcl = mix([](const LibraryEntry& e) { return e.params.dcl; });
  out.params.dx = mix([](const LibraryEntry& e) { return e.params.dx; });
  out.params.delta = mix([](const LibraryEntry& e) { return e.params.delta; });
  out.delta_frac = mix([](const LibraryEntry& e) { return e.delta_frac; });
  out.kappa = mix([](const LibraryEntry& e) { return e.kappa; });
  out.alpha = mix([](const LibraryEntry& e) { return e.alpha; });
  return out;
}


ParamLibrary companion_library(const ParamLibrary& src, const LibraryConfig& c) {
  if (!src.complete()) fail(ErrorCode::InvalidArgument, "source library is incomplete");
  ParamLibrary lib;
  lib.angles = src.angles;
  lib.delta_fracs = src.delta_fracs;
  lib.min_feature = src.min_feature;
  lib.pol = c.pol;
  json settings = settings_json(c);
  settings["companion_of"] = src.settings.empty() ? json(nullptr) : json::parse(src.settings, nullptr, false);
  lib.settings = settings.dump();
  for (const auto& e : src.entries) {
    try {
      const LayerStack region =
          grating_region_stack(c.stack, e.params.dcu, e.params.dcl, c.fdtd.gap_index, c.fdtd.layout);
      const double n_eff = effective_index(region, c.stack.wavelength, c.pol);
      const double s = (n_eff - c.stack.wavelength / e.params.pitch) / c.stack.cladding_index;
      const double emit = std::asin(std::clamp(s, -1.0, 1.0));
      LibraryEntry out = evaluate_cell(c, emit, e.delta_frac, e.params);
      out.angle = e.angle;
      lib.entries.push_back(out);
    } catch (const Error& err) {
      lib.failures.push_back(library_entry_key(c, e.angle, e.delta_frac) + ": " + err.what());
      LibraryEntry blank = e;
      blank.kappa = blank.alpha = blank.fom = 0.0;
      lib.entries.push_back(blank);
    }
  }
  return lib;
}

Interpolated interpolate_at(const ParamLibrary& lib, double angle, double delta_frac) {
  const auto& a = lib.angles;
  const auto& d = lib.delta_fracs;
  if (a.empty() || d.empty() || lib.entries.size() != a.size() * d.size())
    fail(ErrorCode::InvalidArgument, "library is incomplete");
  if (angle < a.front() || angle > a.back() || delta_frac < d.front() || delta_frac > d.back())
    fail(ErrorCode::Extrapolation, "(angle, delta) outside the library grid");
  auto bracket = [](const std::vector<double>& g, double v) {
    std::size_t i = 0;
    while (i + 2 < g.size() && v > g[i + 1]) ++i;
    const std::size_t j = std::min(i + 1, g.size() - 1);
    return std::tuple{i, j, j == i ? 0.0 : (v - g[i]) / (g[j] - g[i])};
  };
  const auto [ia, ib, t] = bracket(a, angle);
  const auto [ja, jb, s] = bracket(d, delta_frac);
  auto mix = [&](auto field) {
    const double u = (1.0 - s) * field(lib.at(ia, ja)) + s * field(lib.at(ia, jb));
    const double w = (1.0 - s) * field(lib.at(ib, ja)) + s * field(lib.at(ib, jb));
    return (1.0 - t) * u + t * w;
  };
  Interpolated out;
  out.params.pitch = mix([](const LibraryEntry& e) { return e.params.pitch; });
  out.params.dcu = mix([](const LibraryEntry& e) { return e.params.dcu; });
  out.params.dcl = mix([](const LibraryEntry& e) { return e.params.dcl; });
  out.params.dx = mix([](const LibraryEntry& e) { return e.params.dx; });
  out.params.delta = mix([](const LibraryEntry& e) { return e.params.delta; });
  out.delta_frac = delta_frac;
  out.kappa = mix([](const LibraryEntry& e) { return e.kappa; });
  out.alpha = mix([](const LibraryEntry& e) { return e.alpha; });
  return out;
}

}  // namespace ionpic
