#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ionpic/dipole.hpp"
#include "ionpic/numeric/gauss_legendre.hpp"
#include "ionpic/numeric/philox.hpp"

using namespace ionpic;

namespace {

double intensity(const AngularField& f) { return std::norm(f.e_theta) + std::norm(f.e_phi); }

double intensity(const CVec3& e) { return std::norm(e[0]) + std::norm(e[1]) + std::norm(e[2]); }

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("pattern shapes") {
  CHECK(intensity(dipole_field(DipoleKind::Pi, 0.0, 0.3)) == doctest::Approx(0.0));
  double best = 0.0, best_theta = 0.0;
  for (int i = 0; i <= 180; ++i) {
    const double t = i * M_PI / 180.0;
    const double v = intensity(dipole_field(DipoleKind::Pi, t, 0.0));
    if (v > best) {
      best = v;
      best_theta = t;
    }
  }
  CHECK(best_theta == doctest::Approx(M_PI / 2));
  const double top = intensity(dipole_field(DipoleKind::SigmaPlus, 0.0, 0.0));
  const double side = intensity(dipole_field(DipoleKind::SigmaPlus, M_PI / 2, 0.0));
  CHECK(top / side == doctest::Approx(2.0));
}

TEST_CASE("each component integrates to its branching weight") {
  const auto rule = numeric::gauss_legendre(64);
  for (auto kind : kAllDipoleKinds) {
    double sum = 0.0;
    const int nphi = 64;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double t = 0.5 * M_PI * (rule.nodes[i] + 1.0);
      for (int j = 0; j < nphi; ++j) {
        const double p = 2.0 * M_PI * j / nphi;
        sum += rule.weights[i] * 0.5 * M_PI * std::sin(t) * (2.0 * M_PI / nphi) *
               intensity(dipole_field(kind, t, p));
      }
    }
    CHECK(sum == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  }
}

TEST_CASE("vector form agrees with the angular form and is transverse") {
  numeric::CounterRng rng(5, 0);
  for (int i = 0; i < 200; ++i) {
    const double t = std::acos(2.0 * rng.uniform() - 1.0), p = 2.0 * M_PI * rng.uniform();
    const Vec3 k{std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)};
    for (auto kind : kAllDipoleKinds) {
      const CVec3 e = far_field(kind, QuantizationAxis::z(), k);
      CHECK(intensity(e) == doctest::Approx(intensity(dipole_field(kind, t, p))).epsilon(1e-12));
      CHECK(std::abs(e[0] * k[0] + e[1] * k[1] + e[2] * k[2]) < 1e-14);
    }
  }
}

TEST_CASE("summed pattern is isotropic for any axis") {
  numeric::CounterRng rng(9, 1);
  const QuantizationAxis tilted{{0.6, 0.0, 0.8}};
  double mean = 0.0, sq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double cz = 2.0 * rng.uniform() - 1.0, p = 2.0 * M_PI * rng.uniform();
    const double s = std::sqrt(1.0 - cz * cz);
    const Vec3 k{s * std::cos(p), s * std::sin(p), cz};
    double v = 0.0;
    for (auto kind : kAllDipoleKinds) v += intensity(far_field(kind, tilted, k));
    mean += v;
    sq += v * v;
  }
  mean /= n;
  const double var = sq / n - mean * mean;
  CHECK(mean == doctest::Approx(1.0 / (4.0 * M_PI)).epsilon(1e-12));
  CHECK(var < 1e-10 * mean);
}

TEST_CASE("aperture decomposition with z quantization") {
  const auto parts = fraction_on_aperture(QuantizationAxis::z(), {}, {});
  CHECK(sigma_share(parts) == doctest::Approx(0.956).epsilon(0.005 / 0.956));
  double weighted = 0.0;
  for (const auto& p : parts) {
    weighted += p.of_total(p.fraction_incident);
    CHECK(p.te_fraction + p.tm_fraction == doctest::Approx(p.fraction_incident).epsilon(1e-12));
  }
  const double omega = solid_angle_fraction({}, {});
  CHECK(std::abs(weighted - omega) < 1e-3 * omega);
  // sigma+ and sigma- are mirror images.
  CHECK(parts[1].fraction_incident == doctest::Approx(parts[2].fraction_incident).epsilon(1e-12));

  std::ostringstream csv;
  write_decomposition_csv(csv, parts);
  CHECK(csv.str().find("sigma+") != std::string::npos);
}

TEST_CASE("zero-area aperture and mirror symmetry") {
  const auto empty = fraction_on_aperture(QuantizationAxis::z(), {0.0, 30e-6}, {});
  for (const auto& p : empty) CHECK(p.fraction_incident == 0.0);

  IonPose up, down;
  up.y_ion = 3e-6;
  down.y_ion = -3e-6;
  const auto a = fraction_on_aperture(QuantizationAxis::x(), {}, up);
  const auto b = fraction_on_aperture(QuantizationAxis::x(), {}, down);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(a[c].te_fraction == doctest::Approx(b[c].te_fraction).epsilon(1e-9));
    CHECK(a[c].tm_fraction == doctest::Approx(b[c].tm_fraction).epsilon(1e-9));
  }
}

TEST_CASE("ion intensity profile") {
  const GratingFootprint fp;
  const auto prof = ion_intensity_profile(QuantizationAxis::z(), fp, {}, 301);
  double integral = 0.0;
  for (std::size_t i = 1; i < prof.x.size(); ++i)
    integral += 0.5 * (prof.x[i] - prof.x[i - 1]) * (prof.value[i] + prof.value[i - 1]);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
  const double step = prof.x[1] - prof.x[0];
  const double peak = prof.x[argmax(prof.value)];
  CHECK(std::abs(peak - 28e-6) <= 0.5 * step + 1e-12);

  IonPose shifted;
  shifted.x_ion = 26e-6;
  const auto moved = ion_intensity_profile(QuantizationAxis::z(), fp, shifted, 301);
  CHECK(std::abs((peak - moved.x[argmax(moved.value)]) - 2e-6) <= step + 1e-12);
}

TEST_CASE("unit-power dipole norm") {
  // Closed form evaluated once at 30 digits with CODATA 2018 constants.
  CHECK(unit_power_dipole_norm(422e-9) == doctest::Approx(4.75986612544309e-24).epsilon(1e-13));
  CHECK(unit_power_dipole_norm(844e-9) / unit_power_dipole_norm(422e-9) == doctest::Approx(4.0));
  CHECK(unit_power_dipole_norm(1e-12) > 0.0);
}
