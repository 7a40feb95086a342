#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "ionpic/error.hpp"
#include "ionpic/fdtd.hpp"

namespace ionpic {

AngleSpectrum far_field_angle_spectrum(const std::vector<Complex>& field, double step, double k0,
                                       double n, Polarization pol, int n_angles) {
  if (field.empty() || n_angles < 3 || !(step > 0.0) || !(k0 > 0.0))
    fail(ErrorCode::InvalidArgument, "angle spectrum needs a field, a step and at least 3 angles");
  AngleSpectrum s;
  s.angle.resize(n_angles);
  s.power.resize(n_angles);
  const std::size_t m = field.size();
  // Per-radian density: the flux is (1/2pi) int (kz / 2 w mu|eps) |A|^2 dkx
  // with kx = n k0 sin(theta).
  const double pref = (pol == Polarization::TE ? n * n : 1.0) * k0 / (4.0 * kPi);
  const double dth = kPi / (n_angles - 1);
  for (int j = 0; j < n_angles; ++j) {
    const double th = -0.5 * kPi + j * dth;
    const double kx = n * k0 * std::sin(th);
    Complex a{};
    const Complex w = std::polar(1.0, -kx * step);
    Complex phase{1.0, 0.0};
    for (std::size_t i = 0; i < m; ++i) {
      a += field[i] * phase;
      phase *= w;
      if ((i & 63) == 63) phase /= std::abs(phase);
    }
    a *= step;
    const double c = std::cos(th);
    s.angle[j] = th;
    s.power[j] = pref * c * c * std::norm(a);
  }
  for (int j = 0; j + 1 < n_angles; ++j) s.total += 0.5 * (s.power[j] + s.power[j + 1]) * dth;

  const std::size_t edge = std::max<std::size_t>(1, m / 20);
  double all = 0.0, outer = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double v = std::norm(field[i]);
    all += v;
    if (i < edge || i >= m - edge) outer += v;
  }
  s.edge_fraction = all > 0.0 ? outer / all : 0.0;
  s.truncated = s.edge_fraction > 0.05;
  return s;
}

double window_power(const AngleSpectrum& s, double center, double half_width) {
  const double lo = center - half_width, hi = center + half_width;
  double p = 0.0;
  for (std::size_t j = 0; j + 1 < s.angle.size(); ++j) {
    const double a = std::max(lo, s.angle[j]), b = std::min(hi, s.angle[j + 1]);
    if (b <= a) continue;
    // Linear interpolation of the density over the clipped sub-interval.
    const double w = s.angle[j + 1] - s.angle[j];
    auto at = [&](double x) { return s.power[j] + (s.power[j + 1] - s.power[j]) * (x - s.angle[j]) / w; };
    p += 0.5 * (at(a) + at(b)) * (b - a);
  }
  return p;
}

namespace {

struct Layout {
  SimulationGrid grid;
  double h = 0.0;
  double z_stack = 0.0;  // m from node row 0 to the bottom of the lower layer
  double x_grating = 0.0;
  double length = 0.0;
  int i_src = 0, i_l = 0, i_r = 0, k_b = 0, k_t = 0;
  LayerStack stack;      // as simulated (lower layer possibly removed)
};

int cells(double length, double h) { return static_cast<int>(std::lround(length / h)); }

Layout make_layout(const UnitCellParams& p, const LayerStack& base, const FdtdOptions& o) {
  base.validate();
  if (o.n_periods < 4) fail(ErrorCode::InvalidArgument, "a unit-cell run needs at least 4 grating periods");
  if (!(p.pitch > 0.0) || p.dcu < 0.0 || p.dcu > 1.0 || p.dcl < 0.0 || p.dcl > 1.0 || p.delta < 0.0 || std::abs(p.dx) >= p.pitch)
    fail(ErrorCode::InvalidArgument, "invalid unit-cell parameters");
  if (o.pml_cells < 8) fail(ErrorCode::InvalidArgument, "absorbing layers need at least 8 cells");
  Layout L;
  L.stack = base;
  if (o.lower_layer_removed) L.stack.layers.at(o.layout.lower).index = o.gap_index;
  const double lambda = base.wavelength;
  L.h = o.cell > 0.0 ? o.cell : lambda / (o.cells_per_wavelength * base.max_index());

  // Every tooth and gap must span min_feature_cells.
  for (const auto& issue : feature_check(p, o.min_feature_cells * L.h - 1e-12)) {
    std::ostringstream msg;
    msg << issue.feature << " of " << issue.width * 1e9 << " nm is below " << o.min_feature_cells
        << " cells of " << L.h * 1e9 << " nm";
    fail(ErrorCode::Unresolvable, msg.str());
  }

  const double h = L.h;
  const int pml = o.pml_cells;
  const int gap = std::max(2, cells(o.pml_gap, h));
  L.k_b = pml + gap;
  L.z_stack = L.k_b * h + o.monitor_gap;
  L.k_t = L.k_b + cells(2.0 * o.monitor_gap + L.stack.guiding_thickness(), h);
  L.grid.nz = L.k_t + gap + pml + 1;

  L.i_src = pml + gap;
  L.i_l = L.i_src + std::max(5, cells(0.2e-6, h));
  L.length = o.n_periods * p.pitch;
  // Both layers' teeth start at least lead_in after the left monitor.
  L.x_grating = (L.i_l + cells(o.lead_in, h)) * h + std::max(0.0, -p.dx);
  L.i_r = static_cast<int>(std::ceil((L.x_grating + L.length + std::max(0.0, p.dx) + p.delta + o.lead_out) / h));
  // Round the box up to whole 32-cell blocks so nearby pitches share a
  // cached reference run.
  L.i_r = L.i_l + (L.i_r - L.i_l + 31) / 32 * 32;
  L.grid.nx = L.i_r + gap + pml + 1;
  L.grid.cell = h;
  L.grid.pml = pml;
  return L;
}

// Permittivity of one patterned layer at x: teeth of the given duty cycle
// starting at `start`, unpatterned outside [start, start + length).
double layer_eps(double x, double start, double length, double pitch, double dc, double n_tooth, double n_gap) {
  if (dc >= 1.0 || x < start || x >= start + length) return n_tooth * n_tooth;
  const double frac = std::fmod(x - start, pitch) / pitch;
  return frac < dc ? n_tooth * n_tooth : n_gap * n_gap;
}

IndexFunction index_function(const UnitCellParams& p, const Layout& L, Polarization pol, const FdtdOptions& o,
                             bool patterned) {
  return [p, &L, pol, o, patterned](double x, double z_abs) {
    const double z = z_abs - L.z_stack;
    if (z < 0.0) return L.stack.substrate_index;
    double top = 0.0;
    for (std::size_t j = 0; j < L.stack.layers.size(); ++j) {
      const auto& layer = L.stack.layers[j];
      top += layer.thickness;
      if (z >= top) continue;
      const bool upper = j == o.layout.upper;
      const bool lower = j == o.layout.lower && !o.lower_layer_removed;
      if (!patterned || (!upper && !lower)) return layer.index;
      const double dc = upper ? p.dcu : p.dcl;
      const double start = L.x_grating + (lower ? p.dx : 0.0);
      const double ea = layer_eps(x, start, L.length, p.pitch, dc, layer.index, o.gap_index);
      if (p.delta <= 0.0) return std::sqrt(ea);
      // Zone B is zone A shifted by delta. The zones alternate across y on a
      // sub-wavelength scale: Ey crosses their boundaries (harmonic mean),
      // TM's in-plane E runs along them (arithmetic mean).
      const double eb = layer_eps(x, start + p.delta, L.length, p.pitch, dc, layer.index, o.gap_index);
      const double e = pol == Polarization::TE ? 2.0 / (1.0 / ea + 1.0 / eb) : 0.5 * (ea + eb);
      return std::sqrt(e);
    }
    return L.stack.cladding_index;
  };
}

struct Monitors {
  Fdtd2d::LinePhasors left, right, top, bottom;
};

Monitors read(const Fdtd2d& sim) { return {sim.column(0), sim.column(1), sim.row(0), sim.row(1)}; }

Fdtd2d::LinePhasors minus(const Fdtd2d::LinePhasors& a, const Fdtd2d::LinePhasors& b) {
  Fdtd2d::LinePhasors d = a;
  for (std::size_t j = 0; j < d.f.size(); ++j) {
    d.f[j] -= b.f[j];
    d.gx[j] -= b.gx[j];
    d.gz[j] -= b.gz[j];
  }
  return d;
}

struct Run {
  Monitors mon;
  int periods = 0;
};

// Launches the fundamental mode and steps until every monitor flux settles.
Run simulate(const Layout& L, MaterialMap map, Polarization pol, const FdtdOptions& o, double p_scale) {
  const double lambda = L.stack.wavelength;
  const double n_eff = effective_index(L.stack, lambda, pol);
  Fdtd2d sim(std::move(map), lambda);
  const int k0 = L.grid.pml + 1, k1 = L.grid.nz - L.grid.pml - 1;
  std::vector<double> z(k1 - k0);
  for (int k = k0; k < k1; ++k) z[k - k0] = k * L.h - L.z_stack;
  auto profile = mode_profile(L.stack, lambda, pol, n_eff, z);
  sim.add_line_source(L.i_src, k0, std::move(profile));
  sim.watch_column(L.i_l, L.k_b, L.k_t + 1);
  sim.watch_column(L.i_r, L.k_b, L.k_t + 1);
  sim.watch_row(L.k_t, L.i_l, L.i_r + 1);
  sim.watch_row(L.k_b, L.i_l, L.i_r + 1);

  const double ramp = 5.0;
  const double lambda_cells = lambda / L.h;
  const double transit = L.grid.nx * L.stack.max_index() / lambda_cells;  // periods to cross the domain
  const int min_periods = static_cast<int>(std::ceil(ramp + 3.0 * transit));
  std::array<double, 4> prev{};
  bool have_prev = false;
  for (int period = 1; period <= o.max_periods; ++period) {
    sim.run_period(ramp);
    const Monitors m = read(sim);
    const std::array<double, 4> now{Fdtd2d::flux_x(m.left, pol), Fdtd2d::flux_x(m.right, pol),
                                    Fdtd2d::flux_z(m.top, pol), Fdtd2d::flux_z(m.bottom, pol)};
    const double scale = p_scale > 0.0 ? p_scale : std::abs(now[0]);
    if (period >= min_periods && have_prev && scale > 0.0) {
      double change = 0.0;
      for (int j = 0; j < 4; ++j) change = std::max(change, std::abs(now[j] - prev[j]));
      if (change < o.convergence * scale) return {m, period};
    }
    prev = now;
    have_prev = true;
  }
  fail(ErrorCode::NotConverged, "monitor powers still changing after " + std::to_string(o.max_periods) + " periods");
}

std::mutex cache_mutex;
std::map<std::string, Run> reference_cache;

std::string reference_key(const Layout& L, Polarization pol, const FdtdOptions& o) {
  std::ostringstream k;
  k.precision(17);
  k << to_string(pol) << '|' << L.grid.nx << '|' << L.grid.nz << '|' << L.grid.pml << '|' << L.h << '|'
    << L.stack.wavelength << '|' << L.stack.substrate_index << '|' << L.stack.cladding_index << '|' << L.z_stack
    << '|' << L.i_src << '|' << L.i_l << '|' << L.i_r << '|' << L.k_b << '|' << L.k_t << '|' << o.convergence
    << '|' << o.max_periods;
  for (const auto& layer : L.stack.layers) k << '|' << layer.thickness << ':' << layer.index;
  return k.str();
}

Run reference_run(const Layout& L, Polarization pol, const FdtdOptions& o) {
  const std::string key = reference_key(L, pol, o);
  {
    std::lock_guard lock(cache_mutex);
    if (auto it = reference_cache.find(key); it != reference_cache.end()) return it->second;
  }
  const UnitCellParams flat{};
  Run r = simulate(L, build_material_map(L.grid, pol, index_function(flat, L, pol, o, false)), pol, o, 0.0);
  std::lock_guard lock(cache_mutex);
  return reference_cache.emplace(key, std::move(r)).first->second;
}

}  // namespace

void clear_reference_cache() {
  std::lock_guard lock(cache_mutex);
  reference_cache.clear();
}

MaterialMap unit_cell_material(const UnitCellParams& params, const LayerStack& stack, Polarization pol,
                               const FdtdOptions& options) {
  const Layout L = make_layout(params, stack, options);
  return build_material_map(L.grid, pol, index_function(params, L, pol, options, true));
}

CellResult run_unit_cell(const UnitCellParams& params, const LayerStack& stack, Polarization pol,
                         const FdtdOptions& options) {
  const Layout L = make_layout(params, stack, options);
  const Run ref = reference_run(L, pol, options);
  // The line source also radiates a little; that power leaves the box before
  // the right monitor, so the guided input is what reaches it in the
  // reference run.
  const double p_in = Fdtd2d::flux_x(ref.mon.right, pol);
  const double p_ref_out = p_in;
  if (!(p_in > 0.0)) fail(ErrorCode::InvalidArgument, "reference run carries no forward power");

  const Run run = simulate(L, build_material_map(L.grid, pol, index_function(params, L, pol, options, true)), pol,
                           options, p_in);
  const Monitors& tot = run.mon;
  const bool sub = options.subtract_reference;
  const auto left = minus(tot.left, ref.mon.left);
  const auto top = sub ? minus(tot.top, ref.mon.top) : tot.top;
  const auto bottom = sub ? minus(tot.bottom, ref.mon.bottom) : tot.bottom;

  // Overlap with the reference output field gives the surviving mode amplitude.
  Complex num{};
  double den = 0.0;
  const auto& a = tot.right;
  const auto& r = ref.mon.right;
  for (std::size_t j = 0; j < a.f.size(); ++j) {
    num += 0.25 * (a.f[j] * std::conj(r.gz[j]) + std::conj(r.f[j]) * a.gz[j]);
    den += 0.5 * (r.f[j] * std::conj(r.gz[j])).real();
  }
  const double amp2 = std::norm(num / den);

  CellResult out;
  out.cell = L.h;
  out.length = L.length;
  out.periods = run.periods;
  out.p_in = 1.0;
  out.p_reflected = -Fdtd2d::flux_x(left, pol) / p_in;
  out.p_forward_total = Fdtd2d::flux_x(tot.right, pol) / p_in;
  out.p_transmitted = amp2 * p_ref_out / p_in;
  out.p_t = std::clamp(1.0 - out.p_transmitted, 0.0, 1.0);
  out.p_up = Fdtd2d::flux_z(top, pol) / p_in;
  out.p_down = -Fdtd2d::flux_z(bottom, pol) / p_in;
  out.energy_error = std::abs(1.0 - (out.p_reflected + out.p_forward_total + out.p_up + out.p_down));

  const double k0 = 2.0 * kPi * L.h / stack.wavelength;
  out.spectrum = far_field_angle_spectrum(top.f, 1.0, k0, stack.cladding_index, pol);
  for (auto& v : out.spectrum.power) v /= p_in;
  out.spectrum.total /= p_in;
  out.truncation_warning = out.spectrum.truncated;
  out.p_d = std::clamp(window_power(out.spectrum, options.target_angle, options.window_half_width), 0.0, out.p_t);
  const auto peak = std::max_element(out.spectrum.power.begin(), out.spectrum.power.end());
  out.peak_angle = out.spectrum.angle[static_cast<std::size_t>(peak - out.spectrum.power.begin())];
  return out;
}

KappaAlpha extract_kappa_alpha(const CellResult& r) {
  if (!(r.length > 0.0) || r.p_in <= 0.0) fail(ErrorCode::InvalidArgument, "result has no length or input power");
  if (r.p_t >= r.p_in) fail(ErrorCode::Depletion, "grating depletes the guide over the simulated length");
  if (r.p_t <= 0.0) return {0.0, 0.0};
  const double total = -std::log(1.0 - r.p_t / r.p_in) / r.length;
  const double kappa = total * std::clamp(r.p_d / r.p_t, 0.0, 1.0);
  return {kappa, std::max(0.0, total - kappa)};
}

double directivity(const CellResult& r) {
  const double s = r.p_d + r.p_down;
  if (!(s > 0.0)) fail(ErrorCode::UndefinedDirectivity, "no diffracted power");
  return std::clamp(r.p_d / s, 0.0, 1.0);
}

void write_material_csv(std::ostream& out, const MaterialMap& map, double z_offset) {
  const auto& g = map.grid;
  out << "# nx=" << g.nx << " nz=" << g.nz << " cell=" << g.cell << " z_offset=" << z_offset
      << " pol=" << to_string(map.pol) << '\n';
  const auto& eps = map.pol == Polarization::TE ? map.eps_y : map.eps_x;
  for (int k = 0; k < g.nz; ++k) {
    for (int i = 0; i < g.nx; ++i) {
      if (i) out << ',';
      out << std::sqrt(eps[static_cast<std::size_t>(k) * g.nx + i]);
    }
    out << '\n';
  }
}

void write_cell_result(std::ostream& out, const CellResult& r) {
  out << "p_in " << r.p_in << "\np_t " << r.p_t << "\np_d " << r.p_d << "\np_up " << r.p_up << "\np_down "
      << r.p_down << "\np_reflected " << r.p_reflected << "\np_transmitted " << r.p_transmitted
      << "\np_forward_total " << r.p_forward_total << "\nlength_m " << r.length << "\npeak_angle_deg "
      << rad_to_deg(r.peak_angle) << "\nenergy_error " << r.energy_error << "\ncell_m " << r.cell
      << "\nperiods " << r.periods << "\ntruncation_warning " << (r.truncation_warning ? 1 : 0) << '\n';
}

}  // namespace ionpic
