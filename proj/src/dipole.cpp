#include "ionpic/dipole.hpp"

#include <cmath>
#include <ostream>

#include "ionpic/error.hpp"
#include "ionpic/numeric/gauss_legendre.hpp"

namespace ionpic {

namespace {

constexpr double kFieldNorm = 0.19947114020071635;  // 1/sqrt(8 pi)

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

std::complex<double> cdot(const CVec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Panels for one axis, split at the ion's foot so the integrand peak lies on
// a panel edge.
std::vector<std::pair<double, double>> panels(double a, double b, double split) {
  if (split > a && split < b) return {{a, split}, {split, b}};
  return {{a, b}};
}

struct ApertureSums {
  std::array<double, 3> total{}, te{}, tm{};
};

ApertureSums integrate_aperture(const QuantizationAxis& axis, const GratingFootprint& fp,
                                const IonPose& pose, int order) {
  const auto rule = numeric::gauss_legendre(static_cast<std::size_t>(order));
  ApertureSums s;
  for (auto [xa, xb] : panels(0.0, fp.x_extent, pose.x_ion)) {
    for (auto [ya, yb] : panels(-0.5 * fp.y_extent, 0.5 * fp.y_extent, pose.y_ion)) {
      const double hx = 0.5 * (xb - xa), hy = 0.5 * (yb - ya);
      for (int i = 0; i < order; ++i) {
        const double x = 0.5 * (xa + xb) + hx * rule.nodes[i];
        for (int j = 0; j < order; ++j) {
          const double y = 0.5 * (ya + yb) + hy * rule.nodes[j];
          const auto ray = aperture_ray(pose, x, y);
          const Vec3 k = downward_direction(ray.theta, ray.phi);
          const auto [te, tm] = te_tm_basis(k);
          const double w = rule.weights[i] * rule.weights[j] * hx * hy * ray.domega_da;
          for (std::size_t c = 0; c < 3; ++c) {
            const CVec3 e = far_field(kAllDipoleKinds[c], axis, k);
            const double ite = std::norm(cdot(e, te)), itm = std::norm(cdot(e, tm));
            s.te[c] += w * ite;
            s.tm[c] += w * itm;
            s.total[c] += w * (ite + itm);
          }
        }
      }
    }
  }
  return s;
}

}  // namespace

std::string_view to_string(DipoleKind kind) {
  switch (kind) {
    case DipoleKind::Pi: return "pi";
    case DipoleKind::SigmaPlus: return "sigma+";
    case DipoleKind::SigmaMinus: return "sigma-";
  }
  return "?";
}

void QuantizationAxis::validate() const {
  if (std::abs(std::sqrt(dot(direction, direction)) - 1.0) > 1e-12)
    fail(ErrorCode::InvalidArgument, "quantization axis must be a unit vector");
}

AngularField dipole_field(DipoleKind kind, double theta, double phi) {
  using namespace std::complex_literals;
  if (kind == DipoleKind::Pi) return {kFieldNorm * std::sin(theta), 0.0};
  const double sign = kind == DipoleKind::SigmaPlus ? 1.0 : -1.0;
  const std::complex<double> phase = std::exp(sign * 1i * phi) * (kFieldNorm / std::sqrt(2.0));
  return {phase * std::cos(theta), phase * (sign * 1i)};
}

CVec3 dipole_vector(DipoleKind kind, const QuantizationAxis& axis) {
  axis.validate();
  const Vec3& q = axis.direction;
  const Vec3 ref = std::abs(q[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 0.0, 1.0};
  const double rq = dot(ref, q);
  const Vec3 u = normalized({ref[0] - rq * q[0], ref[1] - rq * q[1], ref[2] - rq * q[2]});
  const Vec3 v = cross(q, u);
  if (kind == DipoleKind::Pi) return {q[0], q[1], q[2]};
  using namespace std::complex_literals;
  const double sign = kind == DipoleKind::SigmaPlus ? 1.0 : -1.0;
  const double r = 1.0 / std::sqrt(2.0);
  return {r * (u[0] + sign * 1i * v[0]), r * (u[1] + sign * 1i * v[1]), r * (u[2] + sign * 1i * v[2])};
}

CVec3 far_field(DipoleKind kind, const QuantizationAxis& axis, const Vec3& k) {
  const CVec3 d = dipole_vector(kind, axis);
  const std::complex<double> dk = cdot(d, k);
  CVec3 e;
  for (int i = 0; i < 3; ++i) e[i] = kFieldNorm * (d[i] - dk * k[i]);
  return e;
}

std::pair<Vec3, Vec3> te_tm_basis(const Vec3& k) {
  const Vec3 y{0.0, 1.0, 0.0};
  const double yk = dot(y, k);
  Vec3 te{-yk * k[0], 1.0 - yk * k[1], -yk * k[2]};
  if (dot(te, te) < 1e-24) te = {1.0, 0.0, 0.0};  // k along y: any transverse choice
  te = normalized(te);
  return {te, cross(k, te)};
}

Vec3 downward_direction(double theta, double phi) {
  const double s = std::sin(theta);
  return {s * std::cos(phi), s * std::sin(phi), -std::cos(theta)};
}

std::array<ApertureDecomposition, 3> fraction_on_aperture(const QuantizationAxis& axis,
                                                          const GratingFootprint& footprint,
                                                          const IonPose& pose,
                                                          const ApertureOptions& options) {
  axis.validate();
  pose.validate();
  std::array<ApertureDecomposition, 3> out;
  for (std::size_t c = 0; c < 3; ++c) out[c].kind = kAllDipoleKinds[c];
  if (!(footprint.x_extent > 0.0) || !(footprint.y_extent > 0.0)) return out;

  const auto coarse = integrate_aperture(axis, footprint, pose, options.order);
  const auto fine = integrate_aperture(axis, footprint, pose, options.check_order);
  for (std::size_t c = 0; c < 3; ++c) {
    const double w = branching_weight(kAllDipoleKinds[c]);
    if (std::abs(coarse.total[c] - fine.total[c]) / w > options.tolerance ||
        std::abs(coarse.te[c] - fine.te[c]) / w > options.tolerance)
      fail(ErrorCode::Tolerance, "aperture quadrature did not converge for " +
                                     std::string(to_string(kAllDipoleKinds[c])));
    out[c].fraction_incident = fine.total[c] / w;
    out[c].te_fraction = fine.te[c] / w;
    out[c].tm_fraction = fine.tm[c] / w;
  }
  return out;
}

double sigma_share(const std::array<ApertureDecomposition, 3>& parts) {
  double sigma = 0.0, total = 0.0;
  for (const auto& p : parts) {
    const double v = p.of_total(p.fraction_incident);
    total += v;
    if (p.kind != DipoleKind::Pi) sigma += v;
  }
  return total > 0.0 ? sigma / total : 0.0;
}

IntensityProfile ion_intensity_profile(const QuantizationAxis& axis,
                                       const GratingFootprint& footprint, const IonPose& pose,
                                       std::size_t n_points, std::optional<Polarization> pol) {
  axis.validate();
  pose.validate();
  if (n_points < 2) fail(ErrorCode::InvalidArgument, "profile needs at least 2 points");
  const int order = 128;
  const auto rule = numeric::gauss_legendre(order);
  IntensityProfile p;
  p.x.resize(n_points);
  p.value.resize(n_points);
  const double dx = footprint.x_extent / static_cast<double>(n_points - 1);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double x = dx * static_cast<double>(i);
    double sum = 0.0;
    for (auto [ya, yb] : panels(-0.5 * footprint.y_extent, 0.5 * footprint.y_extent, pose.y_ion)) {
      const double hy = 0.5 * (yb - ya);
      for (int j = 0; j < order; ++j) {
        const double y = 0.5 * (ya + yb) + hy * rule.nodes[j];
        const auto ray = aperture_ray(pose, x, y);
        const Vec3 k = downward_direction(ray.theta, ray.phi);
        const auto [te, tm] = te_tm_basis(k);
        double intensity = 0.0;
        for (auto kind : kAllDipoleKinds) {
          const CVec3 e = far_field(kind, axis, k);
          if (!pol || *pol == Polarization::TE) intensity += std::norm(cdot(e, te));
          if (!pol || *pol == Polarization::TM) intensity += std::norm(cdot(e, tm));
        }
        sum += rule.weights[j] * hy * ray.domega_da * intensity;
      }
    }
    p.x[i] = x;
    p.value[i] = sum;
  }
  double integral = 0.0;
  for (std::size_t i = 1; i < n_points; ++i) integral += 0.5 * dx * (p.value[i] + p.value[i - 1]);
  if (integral > 0.0)
    for (double& v : p.value) v /= integral;
  return p;
}

double unit_power_dipole_norm(double wavelength) {
  if (!(wavelength > 0.0)) fail(ErrorCode::InvalidArgument, "wavelength must be > 0");
  const double l2 = wavelength * wavelength;
  const double c3 = kSpeedOfLight * kSpeedOfLight * kSpeedOfLight;
  return std::sqrt(3.0 * l2 * l2 / (4.0 * kPi * kPi * kPi * c3 * kMu0));
}

void write_profile_csv(std::ostream& out, const IntensityProfile& profile) {
  out << "x_m,intensity_per_m\n";
  out.precision(12);
  for (std::size_t i = 0; i < profile.x.size(); ++i) out << profile.x[i] << ',' << profile.value[i] << '\n';
}

void write_decomposition_csv(std::ostream& out, const std::array<ApertureDecomposition, 3>& parts) {
  out << "component,fraction_of_component,te_of_component,tm_of_component,"
         "fraction_of_total,te_of_total,tm_of_total\n";
  out.precision(10);
  for (const auto& p : parts) {
    out << to_string(p.kind) << ',' << p.fraction_incident << ',' << p.te_fraction << ','
        << p.tm_fraction << ',' << p.of_total(p.fraction_incident) << ','
        << p.of_total(p.te_fraction) << ',' << p.of_total(p.tm_fraction) << '\n';
  }
}

}  // namespace ionpic
