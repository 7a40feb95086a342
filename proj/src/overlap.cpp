#include "ionpic/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ionpic/error.hpp"

namespace ionpic {

using cplx = std::complex<double>;

double coupling_field_overlap(const CVec3& p, const CVec3& e_g, double wavelength) {
  const double omega = 2.0 * kPi * kSpeedOfLight / wavelength;
  cplx dot = 0.0;
  for (int c = 0; c < 3; ++c) dot += p[c] * std::conj(e_g[c]);
  return omega * omega * std::norm(dot) / 16.0;
}

double field_amplitude_from_intensity(double i_g) {
  if (i_g < 0.0) fail(ErrorCode::InvalidArgument, "intensity must be >= 0");
  return std::sqrt(2.0 * kSpeedOfLight * kMu0) * std::sqrt(i_g);
}

double efficiency_from_intensity(double i_max, double step, double wavelength) {
  if (!(i_max >= 0.0 && i_max <= 1.0))
    fail(ErrorCode::Normalization, "brightest-pixel share must lie in [0, 1]; is the profile normalized?");
  if (!(step > 0.0)) fail(ErrorCode::InvalidArgument, "pixel size must be positive");
  return wavelength * wavelength * i_max / (4.0 * kPi * step * step);
}

FieldGrid combine_profiles(const FieldGrid& te, const FieldGrid& tm, double w_te) {
  if (te.nx != tm.nx || te.ny != tm.ny || te.step != tm.step)
    fail(ErrorCode::InvalidArgument, "TE and TM grids differ");
  if (w_te < 0.0 || w_te > 1.0) fail(ErrorCode::InvalidArgument, "TE weight must lie in [0, 1]");
  const double pte = te.power(), ptm = tm.power();
  if (!(pte > 0.0) || !(ptm > 0.0)) fail(ErrorCode::Normalization, "cannot normalize a zero profile");
  FieldGrid out = te;
  out.intensity_only = true;
  out.normalized = true;
  for (std::size_t k = 0; k < out.data.size(); ++k)
    out.data[k] = std::sqrt(w_te * std::norm(te.data[k]) / pte + (1.0 - w_te) * std::norm(tm.data[k]) / ptm);
  return out;
}

namespace {

CVec3 scaled_field(const VectorField& f, std::size_t i, std::size_t j) {
  for (const auto& c : f)
    if (c.intensity_only) fail(ErrorCode::InvalidArgument, "the field-overlap path needs phase information");
  if (!f[0].normalized) fail(ErrorCode::Normalization, "field must be normalized to unit power");
  const double g = std::sqrt(2.0 * kSpeedOfLight * kMu0);
  return {g * f[0].at(i, j), g * f[1].at(i, j), g * f[2].at(i, j)};
}

CVec3 scaled_dipole(DipoleKind kind, const QuantizationAxis& axis, double wavelength) {
  CVec3 p = dipole_vector(kind, axis);
  const double p0 = unit_power_dipole_norm(wavelength);
  for (auto& c : p) c *= p0;
  return p;
}

}  // namespace

double pixel_coupling(const VectorField& f, std::size_t i, std::size_t j, DipoleKind kind,
                      const QuantizationAxis& axis) {
  const double lambda = f[0].wavelength;
  return coupling_field_overlap(scaled_dipole(kind, axis, lambda), scaled_field(f, i, j), lambda);
}

double pixel_coupling_reciprocal(const VectorField& f, std::size_t i, std::size_t j, DipoleKind kind,
                                 const QuantizationAxis& axis) {
  const double lambda = f[0].wavelength;
  const CVec3 p = scaled_dipole(kind, axis, lambda), e = scaled_field(f, i, j);
  cplx dot = 0.0;
  for (int c = 0; c < 3; ++c) dot += e[c] * std::conj(p[c]);
  const double omega = 2.0 * kPi * kSpeedOfLight / lambda;
  return omega * omega * std::norm(dot) / 16.0;
}

CollectionMap collection_map(const VectorField& f, const QuantizationAxis& axis, double x_lo, double x_hi,
                             double y_lo, double y_hi, std::size_t stride) {
  axis.validate();
  const auto& g = f[0];
  if (stride == 0) fail(ErrorCode::InvalidArgument, "stride must be positive");
  const double tol = 1e-9 * g.step;
  if (x_lo < g.x(0) - tol || x_hi > g.x(g.nx - 1) + tol || y_lo < g.y(0) - tol || y_hi > g.y(g.ny - 1) + tol ||
      x_hi < x_lo || y_hi < y_lo)
    fail(ErrorCode::InvalidArgument, "raster exceeds the field grid");
  const auto i0 = static_cast<std::size_t>(std::ceil((x_lo - g.x0) / g.step - 1e-9));
  const auto i1 = static_cast<std::size_t>(std::floor((x_hi - g.x0) / g.step + 1e-9));
  const auto j0 = static_cast<std::size_t>(std::ceil((y_lo - g.y0) / g.step - 1e-9));
  const auto j1 = static_cast<std::size_t>(std::floor((y_hi - g.y0) / g.step + 1e-9));
  CollectionMap m;
  m.pol = g.pol;
  m.step = g.step * static_cast<double>(stride);
  m.x0 = g.x(i0);
  m.y0 = g.y(j0);
  m.nx = (i1 - i0) / stride + 1;
  m.ny = (j1 - j0) / stride + 1;
  for (auto& c : m.component) c.assign(m.nx * m.ny, 0.0);
  m.eta.assign(m.nx * m.ny, 0.0);
  std::size_t best = 0;
  for (std::size_t b = 0; b < m.ny; ++b)
    for (std::size_t a = 0; a < m.nx; ++a) {
      const std::size_t k = b * m.nx + a;
      for (std::size_t c = 0; c < 3; ++c) {
        const auto kind = kAllDipoleKinds[c];
        m.component[c][k] = branching_weight(kind) * pixel_coupling(f, i0 + a * stride, j0 + b * stride, kind, axis);
        m.eta[k] += m.component[c][k];
      }
      if (m.eta[k] > m.eta[best]) best = k;
    }
  m.eta_max = m.eta[best];
  m.x_max = m.x(best % m.nx);
  m.y_max = m.y(best / m.nx);
  return m;
}

CrosstalkReport crosstalk_metrics(const CollectionMap& te, const CollectionMap& tm) {
  if (te.nx != tm.nx || te.ny != tm.ny || te.step != tm.step || te.x0 != tm.x0 || te.y0 != tm.y0)
    fail(ErrorCode::InvalidArgument, "maps do not share a grid");
  double ste = 0.0, stm = 0.0;
  std::size_t best = 0;
  for (std::size_t k = 0; k < te.eta.size(); ++k) {
    ste += te.eta[k];
    stm += tm.eta[k];
    if (te.eta[k] > te.eta[best]) best = k;
  }
  if (!(ste > 0.0) || !(te.eta[best] > 0.0)) fail(ErrorCode::Normalization, "TE map carries no power");
  CrosstalkReport r;
  r.power_ratio = stm / ste;
  r.suppression_db = 10.0 * std::log10(tm.eta[best] / te.eta[best]);
  r.offset = std::hypot(tm.x_max - te.x_max, tm.y_max - te.y_max);
  return r;
}

CollectionMap scaled_map(const CollectionMap& map, double power) {
  if (!(power >= 0.0)) fail(ErrorCode::InvalidArgument, "power must be >= 0");
  CollectionMap out = map;
  for (auto& c : out.component)
    for (auto& v : c) v *= power;
  for (auto& v : out.eta) v *= power;
  out.eta_max *= power;
  return out;
}

void write_map(const CollectionMap& m, const std::string& base) {
  {
    std::ofstream out(base + ".csv");
    if (!out) fail(ErrorCode::Io, "cannot write " + base + ".csv");
    char buf[32];
    for (std::size_t j = 0; j < m.ny; ++j) {
      for (std::size_t i = 0; i < m.nx; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", m.eta[j * m.nx + i]);
        if (i) out << ',';
        out << buf;
      }
      out << '\n';
    }
    if (!out) fail(ErrorCode::Io, "write failed for " + base + ".csv");
  }
  nlohmann::json meta{{"nx", m.nx},         {"ny", m.ny},       {"x0_m", m.x0},
                      {"y0_m", m.y0},       {"step_m", m.step}, {"polarization", std::string(to_string(m.pol))},
                      {"eta_max", m.eta_max}, {"x_max_m", m.x_max}, {"y_max_m", m.y_max}};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& v = m.component[c];
    meta["component_max"][std::string(to_string(kAllDipoleKinds[c]))] =
        v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  }
  std::ofstream out(base + ".json");
  out << meta.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + base + ".json");
}

}  // namespace ionpic
