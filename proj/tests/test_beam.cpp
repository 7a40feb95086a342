#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ionpic/beam.hpp"
#include "ionpic/error.hpp"

using namespace ionpic;
using cplx = std::complex<double>;

namespace {

constexpr double kLambda = 422e-9;

FieldGrid gaussian(std::size_t n, double step, double w0, double xc = 0.0, double yc = 0.0) {
  const double half = 0.5 * step * static_cast<double>(n);
  FieldGrid f(n, n, step, -half, -half);
  f.wavelength = kLambda;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = f.x(i) - xc, dy = f.y(j) - yc;
      f.at(i, j) = std::exp(-(dx * dx + dy * dy) / (w0 * w0));
    }
  return f;
}

// Intensity second moment along x: <x^2> = w^2 / 4 for exp(-2 r^2 / w^2).
double beam_radius_x(const FieldGrid& f) {
  double s = 0.0, sx = 0.0, sxx = 0.0;
  for (std::size_t j = 0; j < f.ny; ++j)
    for (std::size_t i = 0; i < f.nx; ++i) {
      const double p = std::norm(f.at(i, j)), x = f.x(i);
      s += p;
      sx += p * x;
      sxx += p * x * x;
    }
  const double m = sx / s;
  return 2.0 * std::sqrt(sxx / s - m * m);
}

std::string temp_base(const char* name) {
  return (std::filesystem::temp_directory_path() / (std::string("ionpic_test_") + name)).string();
}

}  // namespace

TEST_CASE("zero distance is the identity") {
  auto f = gaussian(128, 0.1e-6, 2e-6, 0.3e-6);
  f.at(10, 20) = cplx(0.0, 0.0);
  const auto g = AngularSpectrum(f).at(0.0);
  double err = 0.0;
  for (std::size_t k = 0; k < f.data.size(); ++k) err = std::max(err, std::abs(g.data[k] - f.data[k]));
  CHECK(err < 1e-12);
  const auto h = angular_spectrum_propagate(f, 0.0);
  CHECK(h.data == f.data);
}

TEST_CASE("gaussian beam widens by sqrt 2 at the Rayleigh range") {
  const double w0 = 2e-6;
  const double zr = kPi * w0 * w0 / kLambda;
  const auto f = gaussian(512, 0.1e-6, w0);
  CHECK(std::abs(beam_radius_x(f) / w0 - 1.0) < 1e-3);
  const auto g = angular_spectrum_propagate(f, zr);
  CHECK(std::abs(beam_radius_x(g) / (w0 * std::sqrt(2.0)) - 1.0) < 0.01);
  CHECK(std::abs(g.power() / f.power() - 1.0) < 1e-6);
}

TEST_CASE("forward then backward propagation is unitary") {
  auto f = gaussian(256, 0.1e-6, 2e-6, 1e-6, -0.5e-6);
  for (std::size_t k = 0; k < f.data.size(); ++k) f.data[k] *= std::polar(1.0, 1e5 * f.x(k % f.nx));
  const auto g = angular_spectrum_propagate(angular_spectrum_propagate(f, 7e-6), -7e-6);
  double err = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < f.data.size(); ++k) {
    err = std::max(err, std::abs(g.data[k] - f.data[k]));
    ref = std::max(ref, std::abs(f.data[k]));
  }
  CHECK(err / ref < 1e-9);
}

TEST_CASE("propagation is linear and conserves power through the cladding") {
  const auto a = gaussian(256, 0.1e-6, 2.5e-6, -2e-6);
  const auto b = gaussian(256, 0.1e-6, 1.5e-6, 3e-6, 1e-6);
  FieldGrid c = a;
  const cplx ca(0.7, -0.2), cb(-0.3, 1.1);
  for (std::size_t k = 0; k < c.data.size(); ++k) c.data[k] = ca * a.data[k] + cb * b.data[k];
  const Cladding clad{5e-6, 1.47};
  auto at = [&](FieldGrid f) {
    f.z = -5e-6;
    return AngularSpectrum(f).at(12e-6, clad);
  };
  const auto pa = at(a), pb = at(b), pc = at(c);
  double err = 0.0;
  for (std::size_t k = 0; k < c.data.size(); ++k)
    err = std::max(err, std::abs(pc.data[k] - ca * pa.data[k] - cb * pb.data[k]));
  CHECK(err < 1e-12);
  CHECK(std::abs(pa.power() / a.power() - 1.0) < 1e-6);
  CHECK(std::abs(pc.power() / c.power() - 1.0) < 1e-6);
}

TEST_CASE("slit diffraction matches the Fresnel integral") {
  const double step = 0.1e-6, a = 2e-6, z = 50e-6, wy = 3e-6;
  FieldGrid f(2048, 256, step, -102.4e-6, -12.8e-6);
  f.wavelength = kLambda;
  for (std::size_t j = 0; j < f.ny; ++j)
    for (std::size_t i = 0; i < f.nx; ++i) {
      const double x = std::abs(f.x(i));
      const double t = x < a - 1e-3 * step ? 1.0 : (x < a + 1e-3 * step ? 0.5 : 0.0);
      f.at(i, j) = t * std::exp(-f.y(j) * f.y(j) / (wy * wy));
    }
  const auto g = angular_spectrum_propagate(f, z);
  const std::size_t jc = f.ny / 2;
  // Paraxial 1D Fresnel integral by composite Simpson over the aperture.
  auto fresnel = [&](double x) {
    const int n = 4000;
    cplx s = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double xp = -a + 2.0 * a * k / n;
      const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      s += w * std::polar(1.0, kPi * (x - xp) * (x - xp) / (kLambda * z));
    }
    return std::norm(s);
  };
  std::vector<double> as, fr;
  double as_max = 0.0, fr_max = 0.0;
  for (std::size_t i = 0; i < f.nx; ++i) {
    if (std::abs(f.x(i)) > 10e-6) continue;
    as.push_back(std::norm(g.at(i, jc)));
    fr.push_back(fresnel(f.x(i)));
    as_max = std::max(as_max, as.back());
    fr_max = std::max(fr_max, fr.back());
  }
  double rms = 0.0;
  for (std::size_t k = 0; k < as.size(); ++k) rms += std::pow(as[k] / as_max - fr[k] / fr_max, 2);
  rms = std::sqrt(rms / static_cast<double>(as.size()));
  CHECK(rms < 0.02);
}

TEST_CASE("power at the grid edge raises Aliasing") {
  auto f = gaussian(128, 0.1e-6, 1e-6);
  f.at(0, 64) = cplx(100.0, 0.0);
  try {
    (void)AngularSpectrum(f).at(1e-6);
    FAIL("expected Aliasing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Aliasing);
  }
}

TEST_CASE("focus finder locates a converging beam") {
  // A Gaussian waist at z = 20 um, back-propagated to the source plane.
  auto waist = gaussian(256, 0.1e-6, 1.5e-6, 2e-6, -1e-6);
  auto src = angular_spectrum_propagate(waist, -20e-6);
  src.z = 0.0;
  const auto focus = find_focus(AngularSpectrum(src), 5e-6, 35e-6, 2e-6, {0.0, 1.0});
  CHECK(std::abs(focus.z - 20e-6) < 0.05e-6);
  CHECK(std::abs(focus.x - 2e-6) < 1e-9);
  CHECK(std::abs(focus.y + 1e-6) < 1e-9);
}

TEST_CASE("vector field is transverse and carries the scalar power") {
  auto f = gaussian(128, 0.1e-6, 2e-6);
  for (std::size_t k = 0; k < f.data.size(); ++k) f.data[k] *= std::polar(1.0, 4e6 * f.x(k % f.nx));
  for (const auto pol : {Polarization::TE, Polarization::TM}) {
    f.pol = pol;
    const AngularSpectrum spec(f);
    const auto v = spec.vector_at(3e-6);
    const double pv = v[0].power() + v[1].power() + v[2].power();
    CHECK(std::abs(pv / spec.at(3e-6).power() - 1.0) < 1e-9);
    if (pol == Polarization::TE) {
      CHECK(v[1].power() / pv > 0.99);
    } else {
      CHECK(v[0].power() / pv > 0.9);
      CHECK(v[2].power() > 0.0);
    }
  }
}

TEST_CASE("cross section of a single pixel and of a uniform field") {
  FieldGrid f(8, 4, 0.2e-6, 0.0, 0.0);
  f.at(3, 2) = cplx(0.0, 2.0);
  auto c = beam_cross_section(f);
  CHECK(c.pixel_fraction == doctest::Approx(1.0));
  CHECK(c.ix == 3);
  CHECK(c.iy == 2);
  CHECK(c.i_max == doctest::Approx(1.0 / (0.2e-6 * 0.2e-6)));
  for (auto& v : f.data) v = cplx(1.5, 0.0);
  c = beam_cross_section(f);
  CHECK(c.pixel_fraction == doctest::Approx(1.0 / 32.0));
  for (auto& v : f.data) v = 0.0;
  CHECK_THROWS_AS(beam_cross_section(f), Error);
}

TEST_CASE("near field of straight teeth") {
  const double pitch = 0.3e-6, width = 4e-6;
  std::vector<ToothSpec> teeth(20);
  for (std::size_t i = 0; i < teeth.size(); ++i) {
    teeth[i].index = static_cast<int>(i);
    teeth[i].x = static_cast<double>(i) * pitch;
    teeth[i].pitch = pitch;
    teeth[i].emitted = 1e-3 * static_cast<double>(i + 1);
  }
  SlabPhase phase;
  phase.collimated = true;
  NearFieldOptions o;
  o.nx = 128;
  o.ny = 64;
  o.step = 0.1e-6;
  o.x0 = -1e-6;
  const auto f = synthesize_near_field(teeth, phase, width, -5e-6, Polarization::TE, o);
  double total = 0.0;
  for (const auto& t : teeth) total += t.emitted;
  CHECK(std::abs(f.power() / total - 1.0) < 0.05);
  // Inside a tooth the phase advances at k0 n - 2 pi / pitch.
  const double k0 = 2.0 * kPi / kLambda;
  const double slope = k0 * phase.n_slab - 2.0 * kPi / pitch;
  const std::size_t j = o.ny / 2, i = 40;
  const double dphi = std::arg(f.at(i + 1, j) / f.at(i, j));
  CHECK(std::abs(std::remainder(dphi - slope * o.step, 2.0 * kPi)) < 1e-9);
  CHECK(std::norm(f.at(i, 0)) == 0.0);
  CHECK_THROWS_AS(synthesize_near_field({}, phase, width, 0.0, Polarization::TE, o), Error);
}

TEST_CASE("field files round trip exactly") {
  auto f = gaussian(6, 0.1e-6, 0.2e-6, 0.05e-6);
  f.pol = Polarization::TM;
  f.z = 50e-6;
  f.normalized = true;
  for (std::size_t k = 0; k < f.data.size(); ++k) f.data[k] *= std::polar(1.0, 0.37 * static_cast<double>(k));
  const auto base = temp_base("roundtrip");
  save_field(f, base);
  const auto g = load_field(base);
  CHECK(g.nx == f.nx);
  CHECK(g.ny == f.ny);
  CHECK(g.step == f.step);
  CHECK(g.x0 == f.x0);
  CHECK(g.z == f.z);
  CHECK(g.pol == Polarization::TM);
  CHECK(g.normalized);
  CHECK(g.data == f.data);
  std::filesystem::remove(base + ".re.csv");
  std::filesystem::remove(base + ".im.csv");
}

TEST_CASE("corrupt field files name the offending line") {
  const auto base = temp_base("corrupt");
  {
    std::ofstream(base + ".re.csv") << "# ionpic-field v1 nx=2 ny=1 step=1e-7 x0=0 y0=0 z=0\n1,2\n";
    std::ofstream(base + ".im.csv") << "# ionpic-field v1 nx=2 ny=1 step=1e-7 x0=0 y0=0 z=0\n1,2\n";
  }
  try {
    (void)load_field(base);
    FAIL("expected Parse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find(".re.csv:1") != std::string::npos);
  }
  {
    const char* h = "# ionpic-field v1 nx=2 ny=2 step=1e-7 x0=0 y0=0 z=0 wavelength=4.22e-7 pol=TE normalized=0 ";
    std::ofstream(base + ".re.csv") << h << "kind=re\n1,2\n3,x\n";
    std::ofstream(base + ".im.csv") << h << "kind=im\n1,2\n3,4\n";
  }
  try {
    (void)load_field(base);
    FAIL("expected Parse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find(".re.csv:3") != std::string::npos);
  }
  std::filesystem::remove(base + ".re.csv");
  std::filesystem::remove(base + ".im.csv");
}

TEST_CASE("intensity-only fixture loads and refuses propagation") {
  const auto f = load_field(std::string(IONPIC_TEST_DATA) + "/intensity_fixture");
  CHECK(f.intensity_only);
  CHECK(f.nx == 4);
  CHECK(f.ny == 3);
  CHECK(std::norm(f.at(1, 1)) == doctest::Approx(4.0));
  CHECK_THROWS_AS(AngularSpectrum{f}, Error);
}

TEST_CASE("near field: flat phase at normal emission and exponential envelope") {
  SlabPhase phase;
  phase.collimated = true;
  const double pitch0 = kLambda / phase.n_slab;
  NearFieldOptions o;
  o.nx = 256;
  o.ny = 32;
  o.step = 0.05e-6;
  o.x0 = -0.5e-6;
  std::vector<ToothSpec> one(1);
  one[0].pitch = pitch0;
  one[0].emitted = 1e-3;
  const auto f = synthesize_near_field(one, phase, 1e-6, 0.0, Polarization::TE, o);
  const std::size_t j = o.ny / 2;
  std::vector<double> ph;
  for (std::size_t i = 0; i < o.nx; ++i)
    if (std::abs(f.at(i, j)) > 0.0) ph.push_back(std::arg(f.at(i, j) / f.at(10, j)));
  REQUIRE(ph.size() >= 4);
  for (double p : ph) CHECK(std::abs(p) < 1e-9);

  const double kappa = 2e5, pitch = 0.3e-6;
  std::vector<ToothSpec> teeth(40);
  double power = 1.0;
  for (std::size_t i = 0; i < teeth.size(); ++i) {
    teeth[i].x = static_cast<double>(i) * pitch;
    teeth[i].pitch = pitch;
    teeth[i].emitted = kappa * pitch * power;
    power *= std::exp(-kappa * pitch);
  }
  o.nx = 512;
  const auto g = synthesize_near_field(teeth, phase, 1e-6, 0.0, Polarization::TE, o);
  auto amp_at = [&](double x) { return std::abs(g.at(static_cast<std::size_t>(std::lround((x - o.x0) / o.step)), j)); };
  const double a0 = amp_at(0.5 * pitch);
  for (std::size_t i = 5; i < teeth.size(); i += 5) {
    const double x = (static_cast<double>(i) + 0.5) * pitch;
    CHECK(amp_at(x) / a0 == doctest::Approx(std::exp(-0.5 * kappa * (x - 0.5 * pitch))).epsilon(1e-9));
  }
}
