#include "ionpic/geometry.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>

#include "ionpic/error.hpp"
#include "ionpic/numeric/philox.hpp"

namespace ionpic {

double LayerStack::max_index() const {
  double n = std::max(substrate_index, cladding_index);
  for (const auto& l : layers) n = std::max(n, l.index);
  return n;
}

double LayerStack::guiding_thickness() const {
  double t = 0.0;
  for (const auto& l : layers) t += l.thickness;
  return t;
}

void LayerStack::validate() const {
  if (layers.empty()) fail(ErrorCode::InvalidArgument, "layer stack has no guiding layers");
  for (const auto& l : layers) {
    if (!(l.thickness > 0.0)) fail(ErrorCode::InvalidArgument, "layer '" + l.name + "' thickness must be > 0");
    if (!(l.index >= 1.0)) fail(ErrorCode::InvalidArgument, "layer '" + l.name + "' index must be >= 1");
  }
  if (!(substrate_index >= 1.0) || !(cladding_index >= 1.0))
    fail(ErrorCode::InvalidArgument, "cladding indices must be >= 1");
  if (!(wavelength > 0.0)) fail(ErrorCode::InvalidArgument, "wavelength must be > 0");
}

LayerStack LayerStack::default_bilayer() {
  LayerStack s;
  s.layers = {{"SiN lower", 100e-9, 2.0}, {"SiO2 spacer", 90e-9, 1.47}, {"SiN upper", 100e-9, 2.0}};
  return s;
}

void IonPose::validate() const {
  if (!(height_above_surface > 0.0)) fail(ErrorCode::InvalidArgument, "ion height must be > 0");
  if (!(cladding_thickness >= 0.0)) fail(ErrorCode::InvalidArgument, "cladding thickness must be >= 0");
  if (!(cladding_index >= 1.0)) fail(ErrorCode::InvalidArgument, "cladding index must be >= 1");
}

namespace {

// State (u, w) with u the tangential field and w = u'/p, p = 1 (TE) or n^2 (TM).
// Marches through each layer; returns the mismatch against a decaying tail
// in the cladding. Renormalized per layer so thick evanescent layers cannot
// overflow; only the sign and root of the result matter.
double dispersion_mismatch(const LayerStack& stack, double k0, Polarization pol, double n_eff) {
  auto weight = [pol](double n) { return pol == Polarization::TE ? 1.0 : n * n; };
  const double gs = k0 * std::sqrt(n_eff * n_eff - stack.substrate_index * stack.substrate_index);
  double u = 1.0, w = gs / weight(stack.substrate_index);
  for (const auto& layer : stack.layers) {
    const double p = weight(layer.index);
    const double d2 = layer.index * layer.index - n_eff * n_eff;
    const double t = layer.thickness;
    double u1, w1;
    if (d2 > 0.0) {
      const double k = k0 * std::sqrt(d2);
      u1 = u * std::cos(k * t) + p * w / k * std::sin(k * t);
      w1 = -k / p * u * std::sin(k * t) + w * std::cos(k * t);
    } else if (d2 < 0.0) {
      const double g = k0 * std::sqrt(-d2);
      u1 = u * std::cosh(g * t) + p * w / g * std::sinh(g * t);
      w1 = g / p * u * std::sinh(g * t) + w * std::cosh(g * t);
    } else {
      u1 = u + p * w * t;
      w1 = w;
    }
    const double scale = std::max(std::abs(u1), std::abs(w1) / k0);
    u = u1 / scale;
    w = w1 / scale;
  }
  const double gc = k0 * std::sqrt(n_eff * n_eff - stack.cladding_index * stack.cladding_index);
  return (w + gc / weight(stack.cladding_index) * u) / k0;
}

}  // namespace

double effective_index(const LayerStack& stack, double wavelength, Polarization pol) {
  stack.validate();
  if (!(wavelength > 0.0)) fail(ErrorCode::InvalidArgument, "wavelength must be > 0");
  const double k0 = 2.0 * kPi / wavelength;
  const double n_low = std::max(stack.substrate_index, stack.cladding_index);
  const double n_high = stack.max_index();
  if (!(n_high > n_low)) fail(ErrorCode::NoGuidedMode, "no guided mode: no layer exceeds the cladding index");

  // Scan downward from the core index: the first sign change is the
  // fundamental mode.
  const int samples = 4000;
  const double span = n_high - n_low;
  auto at = [&](int i) { return n_high - span * i / samples; };
  double prev_n = at(0) - 1e-14 * n_high;
  double prev_f = dispersion_mismatch(stack, k0, pol, prev_n);
  for (int i = 1; i < samples; ++i) {
    const double n = at(i);
    const double f = dispersion_mismatch(stack, k0, pol, n);
    if ((f > 0.0) != (prev_f > 0.0)) {
      double lo = n, hi = prev_n, flo = f;
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        const double fm = dispersion_mismatch(stack, k0, pol, mid);
        if ((fm > 0.0) == (flo > 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
    prev_n = n;
    prev_f = f;
  }
  fail(ErrorCode::NoGuidedMode, "no guided mode above the cladding index");
}

std::vector<double> mode_profile(const LayerStack& stack, double wavelength, Polarization pol,
                                 double n_eff, const std::vector<double>& z) {
  const double k0 = 2.0 * kPi / wavelength;
  auto weight = [pol](double n) { return pol == Polarization::TE ? 1.0 : n * n; };
  // Field state at each interface, without renormalization (stacks are thin).
  std::vector<double> z0{0.0}, u0, w0;
  double u = 1.0;
  double w = k0 * std::sqrt(n_eff * n_eff - stack.substrate_index * stack.substrate_index) /
             weight(stack.substrate_index);
  auto propagate = [&](double n, double dz, double uu, double ww, double& uo, double& wo) {
    const double p = weight(n), d2 = n * n - n_eff * n_eff;
    if (d2 > 0.0) {
      const double k = k0 * std::sqrt(d2);
      uo = uu * std::cos(k * dz) + p * ww / k * std::sin(k * dz);
      wo = -k / p * uu * std::sin(k * dz) + ww * std::cos(k * dz);
    } else if (d2 < 0.0) {
      const double g = k0 * std::sqrt(-d2);
      uo = uu * std::cosh(g * dz) + p * ww / g * std::sinh(g * dz);
      wo = g / p * uu * std::sinh(g * dz) + ww * std::cosh(g * dz);
    } else {
      uo = uu + p * ww * dz;
      wo = ww;
    }
  };
  for (const auto& l : stack.layers) {
    u0.push_back(u);
    w0.push_back(w);
    double uo, wo;
    propagate(l.index, l.thickness, u, w, uo, wo);
    u = uo;
    w = wo;
    z0.push_back(z0.back() + l.thickness);
  }
  const double u_top = u;
  const double gs = k0 * std::sqrt(n_eff * n_eff - stack.substrate_index * stack.substrate_index);
  const double gc = k0 * std::sqrt(n_eff * n_eff - stack.cladding_index * stack.cladding_index);

  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    if (zi <= 0.0) {
      out[i] = std::exp(gs * zi);
    } else if (zi >= z0.back()) {
      out[i] = u_top * std::exp(-gc * (zi - z0.back()));
    } else {
      std::size_t j = 0;
      while (zi > z0[j + 1]) ++j;
      double uo, wo;
      propagate(stack.layers[j].index, zi - z0[j], u0[j], w0[j], uo, wo);
      out[i] = uo;
    }
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v /= peak;
  return out;
}

double wavelength_in_medium(double wavelength, double n_medium) {
  if (!(n_medium >= 1.0)) fail(ErrorCode::InvalidArgument, "medium index must be >= 1");
  return wavelength / n_medium;
}

double footprint_offset(const IonPose& pose, double theta) {
  const double s = std::sin(theta) / pose.cladding_index;
  return pose.height_above_surface * std::tan(theta) +
         pose.cladding_thickness * s / std::sqrt(1.0 - s * s);
}

double vacuum_angle_for_offset(const IonPose& pose, double rho) {
  if (rho <= 0.0) return 0.0;
  const double hv = pose.height_above_surface, hc = pose.cladding_thickness, n = pose.cladding_index;
  // Safeguarded Newton on the increasing map theta -> rho(theta).
  double lo = 0.0, hi = 0.5 * kPi;
  double theta = std::atan(rho / (hv + hc));
  for (int i = 0; i < 100; ++i) {
    const double f = footprint_offset(pose, theta) - rho;
    (f < 0.0 ? lo : hi) = theta;
    const double c = std::cos(theta), sc = std::sin(theta) / n;
    const double cc = std::sqrt(1.0 - sc * sc);
    const double slope = hv / (c * c) + hc * (c / n) / (cc * cc * cc);
    double next = theta - f / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - theta) < 1e-15) return next;
    theta = next;
  }
  return theta;
}

ApertureRay aperture_ray(const IonPose& pose, double x, double y) {
  const double dx = x - pose.x_ion, dy = y - pose.y_ion;
  const double rho = std::hypot(dx, dy);
  const double hv = pose.height_above_surface, hc = pose.cladding_thickness, n = pose.cladding_index;
  ApertureRay ray;
  ray.phi = std::atan2(dy, dx);
  if (rho < 1e-9 * (hv + hc)) {
    const double d = hv + hc / n;
    ray.domega_da = 1.0 / (d * d);
    return ray;
  }
  ray.theta = vacuum_angle_for_offset(pose, rho);
  const double c = std::cos(ray.theta), sc = std::sin(ray.theta) / n;
  const double cc = std::sqrt(1.0 - sc * sc);
  const double drho = hv / (c * c) + hc * (c / n) / (cc * cc * cc);
  ray.domega_da = std::sin(ray.theta) / (rho * drho);
  return ray;
}

double solid_angle_fraction(const GratingFootprint& footprint, const IonPose& pose) {
  pose.validate();
  if (!(footprint.x_extent > 0.0) || !(footprint.y_extent > 0.0)) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  // Omega = int dphi [cos theta(rho_near) - cos theta(rho_far)], where the
  // azimuthal ray from the ion's foot crosses the footprint on
  // [rho_near, rho_far]. The integrand is smooth between the corner
  // directions, so panels are split there.
  const double x0 = -pose.x_ion, x1 = footprint.x_extent - pose.x_ion;
  const double y0 = -0.5 * footprint.y_extent - pose.y_ion, y1 = 0.5 * footprint.y_extent - pose.y_ion;
  auto clip = [&](double phi, double& near, double& far) {
    const double dx = std::cos(phi), dy = std::sin(phi);
    near = 0.0;
    far = std::numeric_limits<double>::infinity();
    auto slab = [&](double d, double a, double b) {
      if (std::abs(d) < 1e-300) return a <= 0.0 && b >= 0.0;
      double t0 = a / d, t1 = b / d;
      if (t0 > t1) std::swap(t0, t1);
      near = std::max(near, t0);
      far = std::min(far, t1);
      return true;
    };
    const bool hit_x = slab(dx, x0, x1);
    const bool hit_y = slab(dy, y0, y1);
    return hit_x && hit_y && far > near;
  };
  auto integrand = [&](double phi) {
    double near, far;
    if (!clip(phi, near, far)) return 0.0;
    return std::cos(vacuum_angle_for_offset(pose, near)) - std::cos(vacuum_angle_for_offset(pose, far));
  };
  std::vector<double> cuts{0.0, 2.0 * kPi};
  for (double cx : {x0, x1})
    for (double cy : {y0, y1}) {
      double a = std::atan2(cy, cx);
      if (a < 0.0) a += 2.0 * kPi;
      cuts.push_back(a);
    }
  std::sort(cuts.begin(), cuts.end());
  double omega = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] - cuts[i] < 1e-15) continue;
    omega += gauss_kronrod<double, 31>::integrate(integrand, cuts[i], cuts[i + 1], 15, 1e-12);
  }
  return omega / (4.0 * kPi);
}

MonteCarloEstimate solid_angle_fraction_mc(const GratingFootprint& footprint, const IonPose& pose,
                                           std::uint64_t rays, std::uint64_t seed) {
  pose.validate();
  if (rays == 0) fail(ErrorCode::InvalidArgument, "ray count must be > 0");
  constexpr std::uint64_t kChunk = 1u << 16;
  std::uint64_t hits = 0;
  for (std::uint64_t start = 0, stream = 0; start < rays; start += kChunk, ++stream) {
    numeric::CounterRng rng(seed, stream);
    const std::uint64_t end = std::min(rays, start + kChunk);
    for (std::uint64_t i = start; i < end; ++i) {
      const double cz = 2.0 * rng.uniform() - 1.0;
      const double phi = 2.0 * kPi * rng.uniform();
      if (cz >= 0.0) continue;  // heading away from the chip
      const double theta = std::acos(-cz);
      const double rho = footprint_offset(pose, theta);
      const double x = pose.x_ion + rho * std::cos(phi);
      const double y = pose.y_ion + rho * std::sin(phi);
      if (x >= 0.0 && x <= footprint.x_extent && std::abs(y) <= 0.5 * footprint.y_extent) ++hits;
    }
  }
  const double p = static_cast<double>(hits) / static_cast<double>(rays);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(rays))};
}

}  // namespace ionpic
