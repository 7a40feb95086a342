#include <algorithm>
#include <cmath>

#include "ionpic/error.hpp"
#include "ionpic/fdtd.hpp"

namespace ionpic {

MaterialMap build_material_map(const SimulationGrid& grid, Polarization pol, const IndexFunction& index) {
  if (grid.nx < 2 * grid.pml + 3 || grid.nz < 2 * grid.pml + 3)
    fail(ErrorCode::InvalidArgument, "grid too small for its absorbing layers");
  constexpr int kSub = 4;
  const double h = grid.cell;
  MaterialMap m;
  m.grid = grid;
  m.pol = pol;
  const std::size_t n = static_cast<std::size_t>(grid.nx) * grid.nz;

  // eps on a kSub x kSub sub-grid of the cell centered at (xc, zc).
  auto sample = [&](double xc, double zc, double (&eps)[kSub][kSub]) {
    for (int a = 0; a < kSub; ++a)
      for (int b = 0; b < kSub; ++b) {
        const double x = xc + h * ((a + 0.5) / kSub - 0.5);
        const double z = zc + h * ((b + 0.5) / kSub - 0.5);
        const double nn = index(x, z);
        if (!(nn >= 1.0)) fail(ErrorCode::InvalidArgument, "refractive index below 1 in material map");
        eps[a][b] = nn * nn;
      }
  };
  double eps[kSub][kSub];
  if (pol == Polarization::TE) {
    m.eps_y.resize(n);
    for (int k = 0; k < grid.nz; ++k)
      for (int i = 0; i < grid.nx; ++i) {
        sample(i * h, k * h, eps);
        double s = 0.0;
        for (auto& row : eps)
          for (double e : row) s += e;
        m.eps_y[static_cast<std::size_t>(k) * grid.nx + i] = s / (kSub * kSub);
      }
    return m;
  }
  // Ex is normal to x = const walls and tangential to z = const layers:
  // harmonic along x of arithmetic means along z. Ez is the transpose.
  m.eps_x.resize(n);
  m.eps_z.resize(n);
  for (int k = 0; k < grid.nz; ++k)
    for (int i = 0; i < grid.nx; ++i) {
      const std::size_t id = static_cast<std::size_t>(k) * grid.nx + i;
      sample(i * h, (k + 0.5) * h, eps);
      double inv = 0.0;
      for (int a = 0; a < kSub; ++a) {
        double col = 0.0;
        for (int b = 0; b < kSub; ++b) col += eps[a][b];
        inv += kSub / col;
      }
      m.eps_x[id] = kSub / inv;
      sample((i + 0.5) * h, k * h, eps);
      inv = 0.0;
      for (int b = 0; b < kSub; ++b) {
        double row = 0.0;
        for (int a = 0; a < kSub; ++a) row += eps[a][b];
        inv += kSub / row;
      }
      m.eps_z[id] = kSub / inv;
    }
  return m;
}

struct Fdtd2d::Impl {
  MaterialMap mat;
  SimulationGrid g;
  Polarization pol;
  double lambda_cells = 0.0;
  double omega = 0.0;
  double dt = 0.0;
  int steps = 0;  // per period
  long step_count = 0;
  int periods = 0;

  // Out-of-plane field split into x and z parts; in-plane gx (on x-edges
  // at k+1/2) and gz (on z-edges at i+1/2).
  std::vector<double> fx, fz, gx, gz;
  // Update coefficients: a = exp(-s dt), b = (1 - a)/s, per column/row for
  // integer (e) and half-integer (h) positions.
  std::vector<double> ax_e, bx_e, az_e, bz_e, ax_h, bx_h, az_h, bz_h;
  std::vector<double> inv_f;             // 1/eps for TE's out-of-plane E, else 1
  std::vector<double> inv_gx, inv_gz;    // 1/eps for TM's in-plane E, else 1

  struct LineSource {
    int i, k0;
    std::vector<double> profile;
  };
  std::vector<LineSource> line_sources;
  struct PointSource {
    int i, k;
    double amp;
  };
  std::vector<PointSource> point_sources;

  struct Line {
    bool is_column;
    int fixed, a0, a1;
    std::vector<Complex> acc_f, acc_gx, acc_gz;
    LinePhasors last;
  };
  std::vector<Line> columns, rows;
  struct Point {
    int i, k;
    Complex acc, last;
  };
  std::vector<Point> points;

  std::size_t id(int i, int k) const { return static_cast<std::size_t>(k) * g.nx + i; }
  double f_at(int i, int k) const { return fx[id(i, k)] + fz[id(i, k)]; }

  void init_pml(double reflection) {
    const int L = g.pml;
    const double order = 4.0;
    const double s_max = (order + 1.0) * std::log(1.0 / reflection) / (2.0 * L);
    auto rate = [&](double p, int n) {
      const double inner_lo = L, inner_hi = n - 1 - L;
      double d = 0.0;
      if (p < inner_lo) d = (inner_lo - p) / L;
      if (p > inner_hi) d = (p - inner_hi) / L;
      return s_max * std::pow(std::min(d, 1.0), order);
    };
    auto fill = [&](int n, double offset, std::vector<double>& a, std::vector<double>& b) {
      a.resize(n);
      b.resize(n);
      for (int j = 0; j < n; ++j) {
        const double s = rate(j + offset, n);
        a[j] = std::exp(-s * dt);
        b[j] = s > 0.0 ? (1.0 - a[j]) / s : dt;
      }
    };
    fill(g.nx, 0.0, ax_e, bx_e);
    fill(g.nz, 0.0, az_e, bz_e);
    fill(g.nx, 0.5, ax_h, bx_h);
    fill(g.nz, 0.5, az_h, bz_h);
  }

  double ramp(double t, double ramp_periods) const {
    const double tr = ramp_periods * steps * dt;
    if (t >= tr) return 1.0;
    return 0.5 * (1.0 - std::cos(kPi * t / tr));
  }

  void step(double ramp_periods) {
    const int nx = g.nx, nz = g.nz;
    const double sign_g = pol == Polarization::TE ? 1.0 : -1.0;
    double* __restrict FX = fx.data();
    double* __restrict FZ = fz.data();
    double* __restrict GX = gx.data();
    double* __restrict GZ = gz.data();
    const double* __restrict IF = inv_f.data();
    const double* __restrict IGX = inv_gx.data();
    const double* __restrict IGZ = inv_gz.data();
    // In-plane fields from the out-of-plane one.
    // TE: dHx/dt = dEy/dz, dHz/dt = -dEy/dx.  TM: eps dEx/dt = -dHy/dz, eps dEz/dt = dHy/dx.
    for (int k = 0; k < nz - 1; ++k) {
      const double a = az_h[k], b = sign_g * bz_h[k];
      const std::size_t r = id(0, k);
      for (int i = 1; i < nx - 1; ++i) {
        const std::size_t c = r + i;
        const double df = (FX[c + nx] + FZ[c + nx]) - (FX[c] + FZ[c]);
        GX[c] = a * GX[c] + b * IGX[c] * df;
      }
    }
    const double* __restrict AXH = ax_h.data();
    const double* __restrict BXH = bx_h.data();
    for (int k = 1; k < nz - 1; ++k) {
      const std::size_t r = id(0, k);
      for (int i = 0; i < nx - 1; ++i) {
        const std::size_t c = r + i;
        const double df = (FX[c + 1] + FZ[c + 1]) - (FX[c] + FZ[c]);
        GZ[c] = AXH[i] * GZ[c] - sign_g * BXH[i] * IGZ[c] * df;
      }
    }
    // Out-of-plane field from the in-plane ones.
    // TE: eps dEy/dt = dHx/dz - dHz/dx.  TM: dHy/dt = dEz/dx - dEx/dz.
    const double* __restrict AXE = ax_e.data();
    const double* __restrict BXE = bx_e.data();
    for (int k = 1; k < nz - 1; ++k) {
      const double a = az_e[k], b = sign_g * bz_e[k];
      const std::size_t r = id(0, k);
      for (int i = 1; i < nx - 1; ++i) {
        const std::size_t c = r + i;
        FX[c] = AXE[i] * FX[c] - sign_g * BXE[i] * IF[c] * (GZ[c] - GZ[c - 1]);
        FZ[c] = a * FZ[c] + b * IF[c] * (GX[c] - GX[c - nx]);
      }
    }
    ++step_count;
    const double t = step_count * dt;
    const double drive = ramp(t, ramp_periods) * std::sin(omega * t) * dt;
    for (const auto& s : line_sources)
      for (std::size_t j = 0; j < s.profile.size(); ++j)
        fx[id(s.i, s.k0 + static_cast<int>(j))] += drive * s.profile[j] * inv_f[id(s.i, s.k0 + static_cast<int>(j))];
    for (const auto& s : point_sources) fx[id(s.i, s.k)] += drive * s.amp * inv_f[id(s.i, s.k)];

    accumulate(t, t - 0.5 * dt);
  }

  void accumulate(double tf, double tg) {
    const Complex wf = std::polar(1.0, omega * tf), wg = std::polar(1.0, omega * tg);
    auto do_line = [&](Line& L) {
      for (int a = L.a0; a < L.a1; ++a) {
        const int i = L.is_column ? L.fixed : a;
        const int k = L.is_column ? a : L.fixed;
        const std::size_t c = id(i, k);
        const std::size_t j = static_cast<std::size_t>(a - L.a0);
        L.acc_f[j] += f_at(i, k) * wf;
        L.acc_gx[j] += 0.5 * (gx[c] + gx[c - g.nx]) * wg;
        L.acc_gz[j] += 0.5 * (gz[c] + gz[c - 1]) * wg;
      }
    };
    for (auto& L : columns) do_line(L);
    for (auto& L : rows) do_line(L);
    for (auto& p : points) p.acc += f_at(p.i, p.k) * wf;
  }

  void close_period() {
    const double norm = 2.0 / steps;
    auto finish = [&](Line& L) {
      L.last.f = L.acc_f;
      L.last.gx = L.acc_gx;
      L.last.gz = L.acc_gz;
      for (auto* v : {&L.last.f, &L.last.gx, &L.last.gz})
        for (auto& x : *v) x *= norm;
      std::fill(L.acc_f.begin(), L.acc_f.end(), Complex{});
      std::fill(L.acc_gx.begin(), L.acc_gx.end(), Complex{});
      std::fill(L.acc_gz.begin(), L.acc_gz.end(), Complex{});
    };
    for (auto& L : columns) finish(L);
    for (auto& L : rows) finish(L);
    for (auto& p : points) {
      p.last = p.acc * norm;
      p.acc = {};
    }
  }
};

Fdtd2d::Fdtd2d(MaterialMap materials, double wavelength, double pml_reflection)
    : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.g = materials.grid;
  m.pol = materials.pol;
  const std::size_t n = static_cast<std::size_t>(m.g.nx) * m.g.nz;
  if (m.g.pml < 8) fail(ErrorCode::InvalidArgument, "absorbing layers need at least 8 cells");
  m.lambda_cells = wavelength / m.g.cell;
  m.omega = 2.0 * kPi / m.lambda_cells;
  // Integer steps per period below the 2D Courant limit dt <= 1/sqrt(2).
  const double courant = 1.0 / std::sqrt(2.0);
  m.steps = static_cast<int>(std::ceil(m.lambda_cells / (0.95 * courant)));
  m.dt = m.lambda_cells / m.steps;
  if (m.dt > courant) fail(ErrorCode::Courant, "time step exceeds the Courant limit");
  m.init_pml(pml_reflection);
  m.fx.assign(n, 0.0);
  m.fz.assign(n, 0.0);
  m.gx.assign(n, 0.0);
  m.gz.assign(n, 0.0);
  m.inv_f.assign(n, 1.0);
  m.inv_gx.assign(n, 1.0);
  m.inv_gz.assign(n, 1.0);
  if (m.pol == Polarization::TE) {
    if (materials.eps_y.size() != n) fail(ErrorCode::InvalidArgument, "material map size mismatch");
    for (std::size_t c = 0; c < n; ++c) m.inv_f[c] = 1.0 / materials.eps_y[c];
  } else {
    if (materials.eps_x.size() != n || materials.eps_z.size() != n)
      fail(ErrorCode::InvalidArgument, "material map size mismatch");
    for (std::size_t c = 0; c < n; ++c) {
      m.inv_gx[c] = 1.0 / materials.eps_x[c];
      m.inv_gz[c] = 1.0 / materials.eps_z[c];
    }
  }
  m.mat = std::move(materials);
}

Fdtd2d::~Fdtd2d() = default;
Fdtd2d::Fdtd2d(Fdtd2d&&) noexcept = default;
Fdtd2d& Fdtd2d::operator=(Fdtd2d&&) noexcept = default;

int Fdtd2d::steps_per_period() const { return impl_->steps; }
double Fdtd2d::dt() const { return impl_->dt; }
const SimulationGrid& Fdtd2d::grid() const { return impl_->g; }
int Fdtd2d::periods_run() const { return impl_->periods; }

void Fdtd2d::add_line_source(int i, int k0, std::vector<double> profile) {
  const auto& g = impl_->g;
  if (i < 1 || i >= g.nx - 1 || k0 < 1 || k0 + static_cast<int>(profile.size()) > g.nz - 1)
    fail(ErrorCode::InvalidArgument, "line source outside the grid");
  impl_->line_sources.push_back({i, k0, std::move(profile)});
}

void Fdtd2d::add_point_source(int i, int k, double amplitude) {
  const auto& g = impl_->g;
  if (i < 1 || i >= g.nx - 1 || k < 1 || k >= g.nz - 1) fail(ErrorCode::InvalidArgument, "point source outside the grid");
  impl_->point_sources.push_back({i, k, amplitude});
}

void Fdtd2d::run_period(double ramp_periods) {
  for (int s = 0; s < impl_->steps; ++s) impl_->step(ramp_periods);
  impl_->close_period();
  ++impl_->periods;
}

void Fdtd2d::watch_column(int i, int k0, int k1) {
  const auto& g = impl_->g;
  if (i < 1 || i >= g.nx - 1 || k0 < 1 || k1 > g.nz - 1 || k0 >= k1) fail(ErrorCode::InvalidArgument, "monitor outside the grid");
  Impl::Line L{true, i, k0, k1, {}, {}, {}, {}};
  L.acc_f.assign(k1 - k0, {});
  L.acc_gx = L.acc_gz = L.acc_f;
  impl_->columns.push_back(std::move(L));
}

void Fdtd2d::watch_row(int k, int i0, int i1) {
  const auto& g = impl_->g;
  if (k < 1 || k >= g.nz - 1 || i0 < 1 || i1 > g.nx - 1 || i0 >= i1) fail(ErrorCode::InvalidArgument, "monitor outside the grid");
  Impl::Line L{false, k, i0, i1, {}, {}, {}, {}};
  L.acc_f.assign(i1 - i0, {});
  L.acc_gx = L.acc_gz = L.acc_f;
  impl_->rows.push_back(std::move(L));
}

void Fdtd2d::watch_point(int i, int k) { impl_->points.push_back({i, k, {}, {}}); }

Fdtd2d::LinePhasors Fdtd2d::column(std::size_t which) const { return impl_->columns.at(which).last; }
Fdtd2d::LinePhasors Fdtd2d::row(std::size_t which) const { return impl_->rows.at(which).last; }

Complex Fdtd2d::point(int i, int k) const {
  for (const auto& p : impl_->points)
    if (p.i == i && p.k == k) return p.last;
  fail(ErrorCode::InvalidArgument, "point is not watched");
}

double Fdtd2d::flux_x(const LinePhasors& p, Polarization pol) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.f.size(); ++j) s += 0.5 * (p.f[j] * std::conj(p.gz[j])).real();
  return pol == Polarization::TE ? s : -s;
}

double Fdtd2d::flux_z(const LinePhasors& p, Polarization pol) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.f.size(); ++j) s -= 0.5 * (p.f[j] * std::conj(p.gx[j])).real();
  return pol == Polarization::TE ? s : -s;
}

std::vector<double> Fdtd2d::field_snapshot() const {
  std::vector<double> out(impl_->fx.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = impl_->fx[c] + impl_->fz[c];
  return out;
}

}  // namespace ionpic
