#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "ionpic/error.hpp"
#include "ionpic/overlap.hpp"

using namespace ionpic;
using cplx = std::complex<double>;

namespace {

constexpr double kLambda = 422e-9;

FieldGrid gaussian_profile(std::size_t n, double step, double w) {
  const double half = 0.5 * step * static_cast<double>(n - 1);
  FieldGrid f(n, n, step, -half, -half);
  f.wavelength = kLambda;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) f.at(i, j) = std::exp(-(f.x(i) * f.x(i) + f.y(j) * f.y(j)) / (w * w));
  f.normalize();
  return f;
}

// Uniform vector field with polarization e, intensity |E|^2 = i0 in 1/m^2.
VectorField uniform_field(const Vec3& e, double i0, Polarization pol) {
  VectorField v;
  for (int c = 0; c < 3; ++c) {
    v[c] = FieldGrid(5, 4, 0.1e-6, 0.0, 0.0);
    v[c].wavelength = kLambda;
    v[c].pol = pol;
    v[c].normalized = true;
    for (auto& d : v[c].data) d = std::sqrt(i0) * e[c] * std::polar(1.0, 0.4);
  }
  return v;
}

}  // namespace

TEST_CASE("field overlap: orthogonality, phase invariance, closed form") {
  const CVec3 p{1.0, 0.0, 0.0};
  CHECK(coupling_field_overlap(p, {0.0, 2.0, 0.0}, kLambda) == 0.0);
  const CVec3 e{cplx(0.3, 0.1), cplx(0.0, 0.5), 1.0};
  const double base = coupling_field_overlap(p, e, kLambda);
  CVec3 e2 = e;
  for (auto& c : e2) c *= std::polar(1.0, 1.3);
  CHECK(coupling_field_overlap(p, e2, kLambda) == doctest::Approx(base).epsilon(1e-12));
  const double omega = 2.0 * kPi * kSpeedOfLight / kLambda;
  CHECK(base == doctest::Approx(omega * omega * std::norm(e[0]) / 16.0).epsilon(1e-12));
}

TEST_CASE("field amplitude from intensity") {
  const double a = field_amplitude_from_intensity(1e10);
  CHECK(a == doctest::Approx(std::sqrt(2.0 * kSpeedOfLight * kMu0 * 1e10)));
  CHECK(field_amplitude_from_intensity(4e10) == doctest::Approx(2.0 * a));
  CHECK(field_amplitude_from_intensity(0.0) == 0.0);
  CHECK_THROWS_AS(field_amplitude_from_intensity(-1.0), Error);
  const auto g = gaussian_profile(101, 0.1e-6, 1.5e-6);
  double sum = 0.0;
  for (const auto& v : g.data) sum += std::pow(field_amplitude_from_intensity(std::norm(v)), 2) * g.step * g.step;
  CHECK(std::abs(sum / (2.0 * kSpeedOfLight * kMu0) - 1.0) < 1e-9);
}

TEST_CASE("profile efficiency is resolution independent") {
  // Unit-power Gaussian whose peak intensity gives 4.1e-4.
  const double i_peak = 4.1e-4 * 4.0 * kPi / (kLambda * kLambda);
  const double w = std::sqrt(2.0 / (kPi * i_peak));
  CHECK(w == doctest::Approx(4.69e-6).epsilon(2e-3));
  const auto fine = beam_cross_section(gaussian_profile(301, 0.1e-6, w));
  const auto coarse = beam_cross_section(gaussian_profile(151, 0.2e-6, w));
  const double eta_fine = efficiency_from_intensity(fine.pixel_fraction, 0.1e-6, kLambda);
  const double eta_coarse = efficiency_from_intensity(coarse.pixel_fraction, 0.2e-6, kLambda);
  CHECK(eta_fine == doctest::Approx(4.1e-4).epsilon(5e-3));
  CHECK(eta_coarse == doctest::Approx(eta_fine).epsilon(5e-3));
  try {
    (void)efficiency_from_intensity(1.5, 0.1e-6, kLambda);
    FAIL("expected Normalization");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Normalization);
  }
}

TEST_CASE("combined profiles are unit power and weight each mode") {
  const auto te = gaussian_profile(41, 0.1e-6, 0.8e-6);
  auto tm = gaussian_profile(41, 0.1e-6, 0.5e-6);
  for (auto& v : tm.data) v *= 3.0;
  const auto c = combine_profiles(te, tm);
  CHECK(c.intensity_only);
  CHECK(c.power() == doctest::Approx(1.0));
  const std::size_t mid = 20 * 41 + 20;
  CHECK(std::norm(c.data[mid]) ==
        doctest::Approx(0.5 * std::norm(te.data[mid]) + 0.5 * std::norm(tm.data[mid]) / tm.power()));
  const auto only_te = combine_profiles(te, tm, 1.0);
  CHECK(std::norm(only_te.data[mid]) == doctest::Approx(std::norm(te.data[mid])));
  FieldGrid bad(3, 3, 0.1e-6, 0.0, 0.0);
  CHECK_THROWS_AS(combine_profiles(te, bad), Error);
}

TEST_CASE("summed components of a plane wave give lambda^2 I / (8 pi) per mode") {
  const double i0 = 3e10;
  const double expect = kLambda * kLambda * i0 / (8.0 * kPi);
  const double t = 0.3;
  const Vec3 te{0.0, 1.0, 0.0}, tm{std::cos(t), 0.0, -std::sin(t)};
  for (const auto& axis : {QuantizationAxis::z(), QuantizationAxis::x(), QuantizationAxis{{0.6, 0.0, 0.8}}}) {
    const auto m_te = collection_map(uniform_field(te, i0, Polarization::TE), axis, 0.0, 0.4e-6, 0.0, 0.3e-6);
    const auto m_tm = collection_map(uniform_field(tm, i0, Polarization::TM), axis, 0.0, 0.4e-6, 0.0, 0.3e-6);
    CHECK(m_te.nx == 5);
    CHECK(m_te.ny == 4);
    CHECK(m_te.eta_max == doctest::Approx(expect).epsilon(1e-10));
    CHECK(m_tm.eta_max == doctest::Approx(expect).epsilon(1e-10));
  }
  // With z quantization, in-plane y light couples only to the sigma pair.
  const auto m = collection_map(uniform_field(te, i0, Polarization::TE), QuantizationAxis::z(), 0.0, 0.0, 0.0, 0.0);
  CHECK(m.component[0][0] < 1e-12 * expect);
  CHECK(m.component[1][0] == doctest::Approx(0.5 * expect));
  CHECK(m.component[2][0] == doctest::Approx(0.5 * expect));
}

TEST_CASE("equal TE and TM modes: field and intensity forms agree") {
  const double i0 = 2.5e10;
  const auto te = collection_map(uniform_field({0.0, 1.0, 0.0}, i0, Polarization::TE), QuantizationAxis::z(), 0.0,
                                 0.0, 0.0, 0.0);
  const auto tm = collection_map(uniform_field({1.0, 0.0, 0.0}, i0, Polarization::TM), QuantizationAxis::z(), 0.0,
                                 0.0, 0.0, 0.0);
  const double step = 0.1e-6;
  const double eq5 = efficiency_from_intensity(i0 * step * step, step, kLambda);
  CHECK(te.eta_max + tm.eta_max == doctest::Approx(eq5).epsilon(1e-10));
  CHECK(kSigmaProjection == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("coupling is reciprocal") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  VectorField v;
  for (auto& c : v) {
    c = FieldGrid(3, 3, 0.1e-6, 0.0, 0.0);
    c.wavelength = kLambda;
    c.normalized = true;
    for (auto& d : c.data) d = cplx(g(rng), g(rng)) * 1e5;
  }
  const QuantizationAxis axis{{0.2, -0.5, std::sqrt(0.71)}};
  for (const auto kind : kAllDipoleKinds)
    for (std::size_t i = 0; i < 3; ++i) {
      const double a = pixel_coupling(v, i, 1, kind, axis);
      CHECK(a > 0.0);
      CHECK(pixel_coupling_reciprocal(v, i, 1, kind, axis) == doctest::Approx(a).epsilon(1e-12));
    }
  CHECK_THROWS_AS(collection_map(v, axis, 0.0, 1e-6, 0.0, 0.1e-6), Error);
  v[0].normalized = false;
  try {
    (void)pixel_coupling(v, 0, 0, DipoleKind::Pi, axis);
    FAIL("expected Normalization");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Normalization);
  }
  v[0].intensity_only = true;
  CHECK_THROWS_AS(pixel_coupling(v, 0, 0, DipoleKind::Pi, axis), Error);
}

TEST_CASE("crosstalk metrics") {
  CollectionMap te;
  te.nx = 3;
  te.ny = 2;
  te.step = 1e-6;
  te.eta = {1.0, 2.0, 8.0, 1.0, 0.5, 0.0};
  te.x_max = 2e-6;
  CollectionMap tm = te;
  auto r = crosstalk_metrics(te, tm);
  CHECK(r.power_ratio == doctest::Approx(1.0));
  CHECK(std::abs(r.suppression_db) < 1e-12);
  CHECK(r.offset == 0.0);
  for (auto& v : tm.eta) v *= 0.05;
  r = crosstalk_metrics(te, tm);
  CHECK(r.power_ratio == doctest::Approx(0.05));
  CHECK(r.suppression_db == doctest::Approx(-13.0103).epsilon(1e-4));
  tm.x_max = 1e-6;
  tm.y_max = 1e-6;
  CHECK(crosstalk_metrics(te, tm).offset == doctest::Approx(std::sqrt(2.0) * 1e-6));
  for (auto& v : te.eta) v = 0.0;
  CHECK_THROWS_AS(crosstalk_metrics(te, tm), Error);
}
