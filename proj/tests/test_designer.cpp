#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ionpic/designer.hpp"
#include "ionpic/error.hpp"
#include "ionpic/unit_cell.hpp"

using namespace ionpic;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

double trapz(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

// Fermat: minimize the travel time from (x, 0) to the ion over the crossing
// point on the cladding surface, by golden section.
double fermat_angle(double x, const IonPose& pose) {
  const double rho = pose.x_ion - x, hc = pose.cladding_thickness, hv = pose.height_above_surface;
  const double n = pose.cladding_index;
  auto time = [&](double u) { return n * std::hypot(u, hc) + std::hypot(rho - u, hv); };
  double lo = std::min(0.0, rho), hi = std::max(0.0, rho);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200 && hi - lo > 1e-18; ++it) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (time(a) < time(b))
      hi = b;
    else
      lo = a;
  }
  const double u = 0.5 * (lo + hi);
  return std::atan2(u, hc);
}

// Synthetic library spanning -10..30 deg with grating-equation pitches and
// kappa falling with delta.
ParamLibrary synthetic_library() {
  ParamLibrary lib;
  const LayerStack stack = LayerStack::default_bilayer();
  const double n_eff = effective_index(grating_region_stack(stack, 0.5, 0.5, 1.47), stack.wavelength,
                                       Polarization::TE);
  for (int a = -10; a <= 30; a += 5) lib.angles.push_back(deg_to_rad(a));
  lib.delta_fracs = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  for (double angle : lib.angles)
    for (double df : lib.delta_fracs) {
      LibraryEntry e;
      e.angle = angle;
      e.delta_frac = df;
      e.params.pitch = grating_pitch(n_eff, 1.47, angle, stack.wavelength);
      e.params.dcu = e.params.dcl = 0.5;
      e.params.dx = 0.25 * e.params.pitch;
      e.params.delta = df * e.params.pitch;
      e.kappa = 4e5 * std::cos(kPi * df) + 2e3;
      e.alpha = 0.05 * e.kappa;
      e.fom = figure_of_merit(e.kappa, e.alpha);
      lib.entries.push_back(e);
    }
  return lib;
}

ToothSpec flat_tooth(double x, double pitch) {
  ToothSpec t;
  t.x = x;
  t.pitch = pitch;
  t.dx = 0.25 * pitch;
  return t;
}

}  // namespace

TEST_CASE("diffraction angle follows the refracted ray to the ion") {
  IonPose bare;
  bare.cladding_thickness = 0.0;
  CHECK(std::abs(diffraction_angle_at(bare.x_ion, bare)) < 1e-12);

  const IonPose pose;
  for (double x : {0.0, 10e-6, 27e-6, 30e-6})
    CHECK(std::abs(diffraction_angle_at(x, pose) - fermat_angle(x, pose)) < 2e-7);  // golden section resolves ~1e-7
  // Regression pin at the leading edge of the default footprint.
  CHECK(rad_to_deg(diffraction_angle_at(0.0, pose)) == doctest::Approx(18.5).epsilon(0.02));

  double prev = 10.0;
  for (double x = 0.0; x <= pose.x_ion; x += 0.5e-6) {
    const double a = diffraction_angle_at(x, pose);
    CHECK(a < prev);
    prev = a;
  }
  CHECK(diffraction_angle_at(30e-6, pose) < 0.0);
}

TEST_CASE("diffracted intensity closed forms and power bookkeeping") {
  const auto x = linspace(0.0, 30e-6, 512);
  const double k = 1e5;
  std::vector<double> kc(x.size(), k), zero(x.size(), 0.0);
  for (auto model : {EmissionModel::Literal, EmissionModel::Integral}) {
    const auto I = diffracted_intensity(x, kc, zero, model);
    for (std::size_t i = 0; i < x.size(); i += 37) CHECK(I[i] == doctest::Approx(k * std::exp(-k * x[i])));
    const auto none = diffracted_intensity(x, zero, zero, model);
    CHECK(*std::max_element(none.begin(), none.end()) == 0.0);
  }

  // A strongly varying profile: 1 - emitted equals the power left over.
  std::vector<double> kv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) kv[i] = 2e4 + 3e5 * std::pow(x[i] / 30e-6, 3);
  const auto I = diffracted_intensity(x, kv, zero);
  const double emitted = trapz(x, I);
  CHECK(emitted <= 1.0);
  CHECK(std::abs(1.0 - emitted - (guided_power(x, kv, zero).back())) < 1e-3);
}

TEST_CASE("fit recovers a constant kappa exactly") {
  const auto x = linspace(0.0, 30e-6, 512);
  const double k = 8e4;
  std::vector<double> target(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) target[i] = k * std::exp(-k * x[i]);
  const auto fit = fit_kappa(x, target);
  CHECK(fit.relative_l2 < 1e-5);
  CHECK(fit.objective * 30e-6 < 1e-6);  // dimensionless squared mismatch
  for (double xx : {0.0, 15e-6, 30e-6}) CHECK(fit.ansatz(xx) == doctest::Approx(k).epsilon(1e-3));
  CHECK(fit.feasible);
  CHECK(fit.literal_l2 < 1e-5);  // identical models for constant kappa
}

TEST_CASE("default ion profile: ideal fit and bounds") {
  const GratingFootprint fp;
  const IonPose pose;
  const auto prof = ion_intensity_profile(QuantizationAxis::z(), fp, pose, 512);
  const auto ideal = fit_kappa(prof.x, prof.value);
  CHECK(ideal.relative_l2 < 0.05);
  CHECK(ideal.feasible);
  const double k0 = ideal.ansatz(0.0), kl = ideal.ansatz(fp.x_extent);
  CHECK(k0 >= 0.0);
  CHECK(kl > 10.0 * k0);  // weak at the leading edge, strongest at the end
  // The literal pointwise form cannot carry this profile.
  CHECK(ideal.literal_l2 > 0.2);

  SUBCASE("a kappa bound too low to deplete is flagged") {
    const auto capped = fit_kappa(prof.x, prof.value, {}, [](double) { return 3e4; });
    CHECK(capped.depletion_limited);
    CHECK(capped.residual_power > 0.1);
    CHECK(capped.max_violation < 0.01 * 3e4);
  }
}

TEST_CASE("slab phase models") {
  SlabPhase cyl;
  SlabPhase col = cyl;
  col.collimated = true;
  for (double y : {-10e-6, 0.0, 12e-6}) CHECK(col(5e-6, y) == col(5e-6, 0.0));
  for (double x : {0.0, 17e-6, 30e-6}) CHECK(cyl(x, 0.0) == doctest::Approx(col(x, 0.0)).epsilon(1e-14));
  const auto xs = linspace(0.0, 30e-6, 601), ys = linspace(-15e-6, 15e-6, 601);
  const auto map = slab_phase_map(cyl, xs, ys);
  REQUIRE(map.size() == xs.size() * ys.size());
  double jump = 0.0;
  for (std::size_t j = 0; j < ys.size(); ++j)
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double v = map[j * xs.size() + i];
      if (i > 0) jump = std::max(jump, std::abs(v - map[j * xs.size() + i - 1]));
      if (j > 0) jump = std::max(jump, std::abs(v - map[(j - 1) * xs.size() + i]));
    }
  CHECK(jump < kPi);
}

TEST_CASE("tooth curvature: equal optical path") {
  const double n = 1.62, z = 50e-6;
  SlabPhase flat{-50e-6, n, 422e-9, true};
  IonPose focus;
  focus.cladding_thickness = 0.0;
  focus.height_above_surface = z;
  focus.x_ion = 12e-6;
  const auto y = linspace(-15e-6, 15e-6, 121);
  bool truncated = true;
  const auto curve = curve_tooth(12e-6, y, flat, focus, &truncated);
  CHECK_FALSE(truncated);
  REQUIRE(curve.size() == y.size());
  for (const auto& c : curve) CHECK(std::abs(c.offset - (flat_curve_offset(c.y, z, n))) < 2e-10);
  // The offset pulls the tooth back toward the source at large |y|.
  CHECK(curve.front().offset < -1e-6);

  const IonPose pose;
  SlabPhase cyl{-50e-6, n, 422e-9, false};
  const auto c2 = curve_tooth(5e-6, y, cyl, pose);
  REQUIRE(c2.size() == y.size());
  CHECK(std::abs(c2[60].offset) < 1e-10);  // y = 0
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(c2[i].offset - (c2[y.size() - 1 - i].offset)) < 2e-10);
}

TEST_CASE("zone period and stripes") {
  CHECK(zone_period(422e-9, 1.60, 0.12e-6) == doctest::Approx(240e-9));
  CHECK(zone_period(422e-9, 1.60, 0.10e-6) == doctest::Approx(0.9 * 422e-9 / 1.60));
  CHECK_THROWS_AS(zone_period(422e-9, 1.60, 0.14e-6), Error);
  const auto e = stripe_edges(GratingFootprint{}, 240e-9);
  CHECK(e.size() == 251);
  CHECK(e.front() == doctest::Approx(-15e-6));
  CHECK(e.back() == doctest::Approx(15e-6));
}

TEST_CASE("layout zones, audits and codecs") {
  const auto edges = linspace(-0.6e-6, 0.6e-6, 11);  // 10 stripes of 120 nm
  std::vector<ToothSpec> teeth;
  for (int i = 0; i < 6; ++i) teeth.push_back(flat_tooth(0.3e-6 * i, 0.3e-6));

  const auto plain = emit_layout(teeth, edges, 240e-9, 0.12e-6);
  CHECK(plain.polygons.size() == 2 * 10 * 6);
  CHECK(audit_layout(plain, 0.12e-6).empty());
  // With delta = 0 zone B repeats zone A.
  const std::size_t per_stripe = teeth.size();
  for (std::size_t t = 0; t < per_stripe; ++t)
    CHECK(plain.polygons[t].vertices[0].x == plain.polygons[per_stripe + t].vertices[0].x);

  // Shift the tail of the grating, since a lone shifted tooth would close
  // the gap to its neighbour.
  for (std::size_t t = 3; t < teeth.size(); ++t) teeth[t].delta = 0.15e-6;
  const auto shifted = emit_layout(teeth, edges, 240e-9, 0.12e-6);
  const double a = shifted.polygons[3].vertices[0].x, b = shifted.polygons[per_stripe + 3].vertices[0].x;
  CHECK(b - a == doctest::Approx(0.15e-6).epsilon(1e-6));
  CHECK(shifted.polygons[2].vertices[0].x == shifted.polygons[per_stripe + 2].vertices[0].x);

  // A narrowed gap is caught.
  auto bad = teeth;
  bad[3].dcu = 0.7;
  CHECK_THROWS_AS(emit_layout(bad, edges, 240e-9, 0.12e-6), Error);

  std::stringstream table;
  export_polygon_table(table, shifted);
  const auto back = import_polygon_table(table);
  CHECK(back == shifted);

  std::stringstream empty_table;
  export_polygon_table(empty_table, GratingLayout{});
  const auto empty = import_polygon_table(empty_table);
  CHECK(empty.polygons.empty());

  std::stringstream svg;
  export_svg(svg, shifted);
  const std::string text = svg.str();
  std::size_t count = 0;
  for (auto pos = text.find("<polygon"); pos != std::string::npos; pos = text.find("<polygon", pos + 1)) ++count;
  CHECK(count == shifted.polygons.size());

  std::istringstream junk("# ionpic-layout 1\nlambda_y_nm 240\nmetadata \"{}\"\npolygons 2\n1 4 0 0 1 0\n");
  CHECK_THROWS_AS(import_polygon_table(junk), Error);
}

TEST_CASE("discretization against a synthetic library") {
  const auto lib = synthetic_library();
  const GratingFootprint fp;

  SUBCASE("uniform pitch at a constant angle") {
    ParamLibrary flat = lib;
    for (auto& e : flat.entries) e.params.pitch = 0.31e-6;
    KappaAnsatz k;
    k.d = 1e5;
    const auto teeth = discretize(k, flat, fp, IonPose{});
    CHECK(teeth.size() == static_cast<std::size_t>(std::floor(fp.x_extent / 0.31e-6)));
    for (const auto& t : teeth) CHECK(t.pitch == doctest::Approx(0.31e-6));
  }

  SUBCASE("full design") {
    DesignConfig cfg;
    const auto d = run_design(cfg, lib);
    CHECK(d.fit.ideal.relative_l2 < 0.05);
    CHECK(d.fit.constrained.residual_power < 0.10);

    const auto& teeth = d.teeth;
    REQUIRE(teeth.size() > 50);
    double mean_pitch = 0.0;
    for (const auto& t : teeth) mean_pitch += t.pitch;
    mean_pitch /= static_cast<double>(teeth.size());
    CHECK(std::abs(static_cast<double>(teeth.size()) - fp.x_extent / mean_pitch) <= 1.0);
    bool monotone = true;
    for (std::size_t i = 1; i < teeth.size(); ++i) monotone = monotone && teeth[i].pitch <= teeth[i - 1].pitch;
    CHECK(monotone);
    for (std::size_t i = 1; i < teeth.size(); ++i)
      CHECK(teeth[i].x == doctest::Approx(teeth[i - 1].x + teeth[i - 1].pitch));

    // Per-tooth bookkeeping against the continuous profile over the same span.
    double emitted = 0.0;
    for (const auto& t : teeth) emitted += t.emitted;
    const double end = teeth.back().x + teeth.back().pitch;
    std::vector<double> xs, is;
    for (std::size_t i = 0; i < d.x.size() && d.x[i] <= end + 1e-12; ++i) {
      xs.push_back(d.x[i]);
      is.push_back(d.i_diffraction[i]);
    }
    CHECK(emitted == doctest::Approx(trapz(xs, is)).epsilon(0.02));

    CHECK(d.lambda_y == doctest::Approx(240e-9));
    CHECK(audit_layout(d.layout, lib.min_feature).empty());
    for (const auto& t : teeth) CHECK_FALSE(t.truncated);

    // The design library as its own companion reproduces the tooth powers.
    const auto same = companion_emission(teeth, lib);
    REQUIRE(same.size() == teeth.size());
    for (std::size_t i = 0; i < teeth.size(); i += 7) CHECK(same[i] == doctest::Approx(teeth[i].emitted).epsilon(1e-9));
    ParamLibrary weak = lib;
    for (auto& e : weak.entries) e.kappa *= 0.1;
    const auto low = companion_emission(teeth, weak);
    CHECK(std::accumulate(low.begin(), low.end(), 0.0) < 0.5 * emitted);
  }
}
