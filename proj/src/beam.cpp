#include "ionpic/beam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ionpic/dipole.hpp"
#include "ionpic/error.hpp"
#include "ionpic/numeric/fft.hpp"

namespace ionpic {

using cplx = std::complex<double>;

FieldGrid::FieldGrid(std::size_t nx_, std::size_t ny_, double step_, double x0_, double y0_)
    : nx(nx_), ny(ny_), step(step_), x0(x0_), y0(y0_), data(nx_ * ny_) {}

double FieldGrid::power() const {
  double s = 0.0;
  for (const auto& v : data) s += std::norm(v);
  return s * step * step;
}

void FieldGrid::normalize() {
  const double p = power();
  if (!(p > 0.0) || !std::isfinite(p)) fail(ErrorCode::Normalization, "cannot normalize a zero field");
  const double f = 1.0 / std::sqrt(p);
  for (auto& v : data) v *= f;
  normalized = true;
}

FieldGrid synthesize_near_field(const std::vector<ToothSpec>& teeth, const SlabPhase& phase, double width,
                                double z_grating, Polarization pol, const NearFieldOptions& o,
                                const std::vector<double>* power) {
  if (teeth.empty()) fail(ErrorCode::Normalization, "no teeth to synthesize");
  if (power && power->size() != teeth.size()) fail(ErrorCode::InvalidArgument, "power list size mismatch");
  FieldGrid f(o.nx, o.ny, o.step, o.x0, -0.5 * o.step * static_cast<double>(o.ny));
  f.z = z_grating;
  f.wavelength = phase.wavelength;
  f.pol = pol;
  const std::size_t n = teeth.size();
  std::vector<double> amp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = power ? (*power)[i] : teeth[i].emitted;
    if (p < 0.0 || !(teeth[i].pitch > 0.0)) fail(ErrorCode::InvalidArgument, "bad tooth power or pitch");
    amp[i] = std::sqrt(p / (teeth[i].pitch * width));
  }
  std::vector<double> edge(n + 1);
  for (std::size_t j = 0; j < f.ny; ++j) {
    const double y = f.y(j);
    if (std::abs(y) > 0.5 * width) continue;
    for (std::size_t i = 0; i < n; ++i) edge[i] = teeth[i].x + tooth_offset(teeth[i], y);
    edge[n] = teeth[n - 1].x + teeth[n - 1].pitch + tooth_offset(teeth[n - 1], y);
    for (std::size_t i = 0; i < f.nx; ++i) {
      const double x = f.x(i);
      if (x < edge[0] || x >= edge[n]) continue;
      const auto t = static_cast<std::size_t>(std::upper_bound(edge.begin(), edge.end(), x) - edge.begin()) - 1;
      const double frac = (x - edge[t]) / (edge[t + 1] - edge[t]);
      const double ph = phase(x, y) - 2.0 * kPi * (static_cast<double>(t) + frac);
      f.at(i, j) = std::polar(amp[t], ph);
    }
  }
  if (!(f.power() > 0.0)) fail(ErrorCode::Normalization, "synthesized field is zero");
  return f;
}

namespace {

double edge_fraction(const FieldGrid& f) {
  double edge = 0.0, total = 0.0;
  for (std::size_t j = 0; j < f.ny; ++j)
    for (std::size_t i = 0; i < f.nx; ++i) {
      const double p = std::norm(f.at(i, j));
      total += p;
      if (i < 2 || j < 2 || i + 2 >= f.nx || j + 2 >= f.ny) edge += p;
    }
  return total > 0.0 ? edge / total : 0.0;
}

void check_aliasing(const FieldGrid& f) {
  const double e = edge_fraction(f);
  if (e > 0.01)
    fail(ErrorCode::Aliasing, "field at z = " + std::to_string(f.z * 1e6) + " um has " + std::to_string(100.0 * e) +
                                  "% of its power at the grid edge; pad the grid");
}

void check_sampling(const FieldGrid& f, double index) {
  if (f.step > 0.5 * f.wavelength / index + 1e-15)
    fail(ErrorCode::InvalidArgument, "grid undersamples the wavelength in the medium");
}

// z-wavenumber in a medium; imaginary part > 0 for evanescent waves.
cplx kz_of(double k, double kt2) {
  const double d = k * k - kt2;
  return d >= 0.0 ? cplx(std::sqrt(d), 0.0) : cplx(0.0, std::sqrt(-d));
}

}  // namespace

AngularSpectrum::AngularSpectrum(const FieldGrid& field) : source_(field), spectrum_(field.data) {
  if (field.intensity_only) fail(ErrorCode::InvalidArgument, "intensity-only data cannot be propagated");
  if (field.nx == 0 || field.ny == 0 || field.data.size() != field.nx * field.ny)
    fail(ErrorCode::InvalidArgument, "field grid is empty or inconsistent");
  numeric::fft2d(spectrum_, field.nx, field.ny, false);
  source_.data.clear();
}

FieldGrid AngularSpectrum::at(double z, const Cladding& cladding) const {
  const auto& s = source_;
  check_sampling(s, std::max(1.0, cladding.index));
  const double k0 = 2.0 * kPi / s.wavelength;
  const double dc = std::min(z, 0.0) - std::min(s.z, 0.0);
  const double dv = std::max(z, 0.0) - std::max(s.z, 0.0);
  FieldGrid out(s.nx, s.ny, s.step, s.x0, s.y0);
  out.z = z;
  out.wavelength = s.wavelength;
  out.pol = s.pol;
  out.normalized = s.normalized;
  out.data = spectrum_;
  for (std::size_t j = 0; j < s.ny; ++j) {
    const double ky = numeric::fft_frequency(j, s.ny, s.step);
    for (std::size_t i = 0; i < s.nx; ++i) {
      const double kx = numeric::fft_frequency(i, s.nx, s.step);
      const double kt2 = kx * kx + ky * ky;
      const cplx kc = kz_of(k0 * cladding.index, kt2), kv = kz_of(k0, kt2);
      const bool drop = (kc.imag() > 0.0 && dc < 0.0) || (kv.imag() > 0.0 && dv < 0.0);
      auto& a = out.data[j * s.nx + i];
      a = drop ? cplx(0.0) : a * std::exp(cplx(0.0, 1.0) * (kc * dc + kv * dv));
    }
  }
  numeric::fft2d(out.data, s.nx, s.ny, true);
  const double inv = 1.0 / static_cast<double>(s.nx * s.ny);
  for (auto& v : out.data) v *= inv;
  check_aliasing(out);
  return out;
}

std::array<FieldGrid, 3> AngularSpectrum::vector_at(double z, const Cladding& cladding) const {
  const auto& s = source_;
  const double k0 = 2.0 * kPi / s.wavelength;
  const double dc = std::min(z, 0.0) - std::min(s.z, 0.0);
  const double dv = std::max(z, 0.0) - std::max(s.z, 0.0);
  const double n_here = z < 0.0 ? cladding.index : 1.0;
  std::array<FieldGrid, 3> out;
  for (auto& f : out) {
    f = FieldGrid(s.nx, s.ny, s.step, s.x0, s.y0);
    f.z = z;
    f.wavelength = s.wavelength;
    f.pol = s.pol;
    f.normalized = s.normalized;
  }
  for (std::size_t j = 0; j < s.ny; ++j) {
    const double ky = numeric::fft_frequency(j, s.ny, s.step);
    for (std::size_t i = 0; i < s.nx; ++i) {
      const double kx = numeric::fft_frequency(i, s.nx, s.step);
      const double kt2 = kx * kx + ky * ky;
      const cplx kc = kz_of(k0 * cladding.index, kt2), kv = kz_of(k0, kt2);
      const cplx kh = kz_of(k0 * n_here, kt2);
      if (kh.imag() > 0.0) continue;  // no transverse polarization for evanescent waves
      if ((kc.imag() > 0.0 && dc < 0.0) || (kv.imag() > 0.0 && dv < 0.0)) continue;
      const cplx a = spectrum_[j * s.nx + i] * std::exp(cplx(0.0, 1.0) * (kc * dc + kv * dv));
      const double kn = k0 * n_here;
      const Vec3 k{kx / kn, ky / kn, kh.real() / kn};
      const auto [te, tm] = te_tm_basis(k);
      const Vec3& e = s.pol == Polarization::TE ? te : tm;
      for (int c = 0; c < 3; ++c) out[c].data[j * s.nx + i] = a * e[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(s.nx * s.ny);
  for (auto& f : out) {
    numeric::fft2d(f.data, s.nx, s.ny, true);
    for (auto& v : f.data) v *= inv;
  }
  return out;
}

double AngularSpectrum::propagating_power() const {
  const auto& s = source_;
  const double k0 = 2.0 * kPi / s.wavelength;
  double p = 0.0;
  for (std::size_t j = 0; j < s.ny; ++j) {
    const double ky = numeric::fft_frequency(j, s.ny, s.step);
    for (std::size_t i = 0; i < s.nx; ++i) {
      const double kx = numeric::fft_frequency(i, s.nx, s.step);
      if (kx * kx + ky * ky <= k0 * k0) p += std::norm(spectrum_[j * s.nx + i]);
    }
  }
  return p * s.step * s.step / static_cast<double>(s.nx * s.ny);
}

FieldGrid angular_spectrum_propagate(const FieldGrid& field, double dz, double index) {
  check_sampling(field, index);
  if (dz == 0.0) return field;
  // Shift the plane into a uniform medium: vacuum above 0, index below.
  FieldGrid src = field;
  const Cladding medium{0.0, index};
  if (index == 1.0) {
    src.z = 0.0;
    auto out = AngularSpectrum(src).at(dz, medium);
    out.z = field.z + dz;
    return out;
  }
  src.z = -std::abs(dz) - 1.0;
  auto out = AngularSpectrum(src).at(src.z + dz, medium);
  out.z = field.z + dz;
  return out;
}

CrossSection beam_cross_section(const FieldGrid& field) {
  CrossSection c;
  const double p = field.power();
  if (!(p > 0.0)) fail(ErrorCode::Normalization, "zero field has no cross section");
  c.intensity.resize(field.data.size());
  std::size_t best = 0;
  for (std::size_t k = 0; k < field.data.size(); ++k) {
    c.intensity[k] = std::norm(field.data[k]) / p;
    if (c.intensity[k] > c.intensity[best]) best = k;
  }
  c.i_max = c.intensity[best];
  c.pixel_fraction = c.i_max * field.step * field.step;
  c.ix = best % field.nx;
  c.iy = best / field.nx;
  c.x = field.x(c.ix);
  c.y = field.y(c.iy);
  return c;
}

namespace {

Focus brightest(const FieldGrid& f) {
  Focus out;
  out.z = f.z;
  std::size_t best = 0;
  for (std::size_t k = 0; k < f.data.size(); ++k)
    if (std::norm(f.data[k]) > std::norm(f.data[best])) best = k;
  out.intensity = std::norm(f.data[best]);
  out.x = f.x(best % f.nx);
  out.y = f.y(best / f.nx);
  return out;
}

}  // namespace

Focus find_focus(const AngularSpectrum& spectrum, double z_lo, double z_hi, double dz, const Cladding& cladding) {
  if (!(z_hi > z_lo) || !(dz > 0.0)) fail(ErrorCode::InvalidArgument, "empty focus search range");
  std::map<double, Focus> seen;
  auto probe = [&](double z) {
    auto it = seen.find(z);
    if (it == seen.end()) it = seen.emplace(z, brightest(spectrum.at(z, cladding))).first;
    return it->second;
  };
  Focus best = probe(z_lo);
  for (double z = z_lo + dz; z <= z_hi + 1e-12; z += dz) {
    const auto f = probe(z);
    if (f.intensity > best.intensity) best = f;
  }
  double lo = std::max(z_lo, best.z - dz), hi = std::min(z_hi, best.z + dz);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  while (hi - lo > 0.01e-6) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (probe(a).intensity > probe(b).intensity)
      hi = b;
    else
      lo = a;
  }
  for (const auto& [z, f] : seen)
    if (f.intensity > best.intensity) best = f;
  return best;
}

namespace {

std::string header_line(const FieldGrid& f, const char* kind) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# ionpic-field v1 nx=%zu ny=%zu step=%.17g x0=%.17g y0=%.17g z=%.17g wavelength=%.17g pol=%s "
                "normalized=%d kind=%s",
                f.nx, f.ny, f.step, f.x0, f.y0, f.z, f.wavelength, std::string(to_string(f.pol)).c_str(),
                f.normalized ? 1 : 0, kind);
  return buf;
}

void write_matrix(const FieldGrid& f, const std::string& path, const char* kind, double (*pick)(const cplx&)) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << header_line(f, kind) << '\n';
  char buf[32];
  for (std::size_t j = 0; j < f.ny; ++j) {
    for (std::size_t i = 0; i < f.nx; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", pick(f.at(i, j)));
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

struct Matrix {
  FieldGrid meta;
  std::string kind;
  std::vector<double> values;
};

Matrix read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  Matrix m;
  std::string line;
  auto where = [&](std::size_t n) { return path + ":" + std::to_string(n) + ": "; };
  if (!std::getline(in, line) || line.rfind("# ionpic-field v1", 0) != 0)
    fail(ErrorCode::Parse, where(1) + "missing '# ionpic-field v1' header");
  std::map<std::string, std::string> kv;
  std::istringstream h(line.substr(17));
  std::string tok;
  while (h >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Parse, where(1) + "bad header token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"nx", "ny", "step", "x0", "y0", "z", "wavelength", "pol", "normalized", "kind"})
    if (!kv.count(key)) fail(ErrorCode::Parse, where(1) + "header lacks '" + key + "'");
  try {
    m.meta.nx = std::stoull(kv["nx"]);
    m.meta.ny = std::stoull(kv["ny"]);
    m.meta.step = std::stod(kv["step"]);
    m.meta.x0 = std::stod(kv["x0"]);
    m.meta.y0 = std::stod(kv["y0"]);
    m.meta.z = std::stod(kv["z"]);
    m.meta.wavelength = std::stod(kv["wavelength"]);
    m.meta.normalized = kv["normalized"] == "1";
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, where(1) + "bad header value");
  }
  if (kv["pol"] != "TE" && kv["pol"] != "TM") fail(ErrorCode::Parse, where(1) + "pol must be TE or TM");
  m.meta.pol = kv["pol"] == "TE" ? Polarization::TE : Polarization::TM;
  if (!(m.meta.step > 0.0)) fail(ErrorCode::Parse, where(1) + "step must be positive");
  m.kind = kv["kind"];
  m.values.reserve(m.meta.nx * m.meta.ny);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::size_t count = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) fail(ErrorCode::Parse, where(row + 1) + "bad number '" + cell + "'");
      m.values.push_back(v);
      ++count;
    }
    if (count != m.meta.nx)
      fail(ErrorCode::Parse, where(row + 1) + "expected " + std::to_string(m.meta.nx) + " values, got " +
                                 std::to_string(count));
  }
  if (row != m.meta.ny)
    fail(ErrorCode::Parse, path + ": expected " + std::to_string(m.meta.ny) + " rows, got " + std::to_string(row));
  return m;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

void save_field(const FieldGrid& f, const std::string& base) {
  if (f.data.size() != f.nx * f.ny) fail(ErrorCode::InvalidArgument, "field grid is inconsistent");
  if (f.intensity_only) {
    write_matrix(f, base + ".intensity.csv", "intensity-only", [](const cplx& v) { return std::norm(v); });
    return;
  }
  write_matrix(f, base + ".re.csv", "re", [](const cplx& v) { return v.real(); });
  write_matrix(f, base + ".im.csv", "im", [](const cplx& v) { return v.imag(); });
}

FieldGrid load_field(const std::string& base) {
  if (file_exists(base + ".intensity.csv")) {
    auto m = read_matrix(base + ".intensity.csv");
    if (m.kind != "intensity-only") fail(ErrorCode::Parse, base + ".intensity.csv:1: kind must be intensity-only");
    FieldGrid f = m.meta;
    f.intensity_only = true;
    f.data.resize(m.values.size());
    for (std::size_t k = 0; k < m.values.size(); ++k) {
      if (m.values[k] < 0.0) fail(ErrorCode::Parse, base + ".intensity.csv: negative intensity");
      f.data[k] = std::sqrt(m.values[k]);
    }
    return f;
  }
  auto re = read_matrix(base + ".re.csv");
  auto im = read_matrix(base + ".im.csv");
  if (re.kind != "re" || im.kind != "im") fail(ErrorCode::Parse, base + ": kinds must be re and im");
  if (re.meta.nx != im.meta.nx || re.meta.ny != im.meta.ny)
    fail(ErrorCode::Parse, base + ": real and imaginary dimensions differ");
  FieldGrid f = re.meta;
  f.data.resize(re.values.size());
  for (std::size_t k = 0; k < re.values.size(); ++k) f.data[k] = cplx(re.values[k], im.values[k]);
  return f;
}

void save_intensity_pgm(const FieldGrid& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  double peak = 0.0;
  for (const auto& v : f.data) peak = std::max(peak, std::norm(v));
  out << "P5\n" << f.nx << ' ' << f.ny << "\n255\n";
  // Top row of the image is the largest y.
  for (std::size_t j = f.ny; j-- > 0;)
    for (std::size_t i = 0; i < f.nx; ++i) {
      const double v = peak > 0.0 ? std::norm(f.at(i, j)) / peak : 0.0;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

}  // namespace ionpic
