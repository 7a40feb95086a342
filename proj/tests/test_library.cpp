#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ionpic/error.hpp"
#include "ionpic/hash.hpp"
#include "ionpic/library.hpp"

using namespace ionpic;

namespace {

// Synthetic 2 x 3 library with kappa falling along delta.
ParamLibrary toy_library() {
  ParamLibrary lib;
  lib.angles = {0.0, deg_to_rad(4.0)};
  lib.delta_fracs = {0.0, 0.25, 0.5};
  const double kappa[2][3] = {{4e5, 2e5, 1e4}, {3e5, 1e5, 5e3}};
  for (int a = 0; a < 2; ++a)
    for (int d = 0; d < 3; ++d) {
      LibraryEntry e;
      e.angle = lib.angles[a];
      e.delta_frac = lib.delta_fracs[d];
      e.params = {0.30e-6 + 0.01e-6 * a, 0.45 + 0.01 * d, 0.55, 0.07e-6, 0.0};
      e.params.delta = e.delta_frac * e.params.pitch;
      e.kappa = kappa[a][d];
      e.alpha = 1e5;
      e.fom = figure_of_merit(e.kappa, e.alpha);
      lib.entries.push_back(e);
    }
  return lib;
}

LibraryConfig tiny_config() {
  LibraryConfig c;
  c.fdtd.cell = 20e-9;
  c.fdtd.n_periods = 4;
  c.swarm.particles = 3;
  c.swarm.iterations = 1;
  c.delta_points = 2;
  c.optimize_each_delta = false;
  return c;
}

}  // namespace

TEST_CASE("figure of merit") {
  CHECK(figure_of_merit(3.0, 0.0) == 1.0);
  CHECK(figure_of_merit(2.0, 2.0) == 0.5);
  try {
    figure_of_merit(0.0, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndefinedFigureOfMerit);
  }
}

TEST_CASE("feature check examples") {
  CHECK(feature_check({0.24e-6, 0.5, 0.5, 0.0, 0.0}, 0.12e-6).empty());
  const auto bad = feature_check({0.24e-6, 0.4, 0.5, 0.0, 0.0}, 0.12e-6);
  REQUIRE(bad.size() == 1);
  CHECK(bad[0].feature == "upper tooth");
  CHECK(bad[0].width == doctest::Approx(0.096e-6));
  CHECK(feature_check({0.4e-6, 0.3, 0.3, 0.0, 0.0}, 0.12e-6).empty());
}

TEST_CASE("swarm finds the optimum of a sphere function") {
  const std::vector<double> c{0.3, -1.2, 2.5};
  auto sphere = [&](const std::vector<double>& x) -> std::optional<SwarmScore> {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) s += (x[d] - c[d]) * (x[d] - c[d]);
    return SwarmScore{-s, 0.0};
  };
  SwarmConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 7;
  const auto r = pso_maximize(sphere, {-5, -5, -5}, {5, 5, 5}, cfg);
  for (std::size_t d = 0; d < c.size(); ++d) CHECK(std::abs(r.best[d] - c[d]) < 1e-3);
  const auto again = pso_maximize(sphere, {-5, -5, -5}, {5, 5, 5}, cfg);
  CHECK(again.best == r.best);
  auto never = [](const std::vector<double>&) -> std::optional<SwarmScore> { return std::nullopt; };
  CHECK_THROWS_AS(pso_maximize(never, {0}, {1}, cfg), Error);
}

TEST_CASE("swarm prefers larger kappa on exact ties") {
  // Flat objective; the tiebreak pulls toward x = 1.
  auto flat = [](const std::vector<double>& x) -> std::optional<SwarmScore> { return SwarmScore{1.0, x[0]}; };
  SwarmConfig cfg;
  cfg.iterations = 30;
  CHECK(pso_maximize(flat, {0}, {1}, cfg).best[0] > 0.99);
}

TEST_CASE("swarm box follows the minimum feature") {
  LibraryConfig c;
  // Angle whose pitch leaves room for duty cycles around 0.5.
  auto box = swarm_bounds(c, deg_to_rad(10.0));
  CHECK(box.first[0] < 0.5);
  CHECK(box.second[0] > 0.5);
  CHECK(box.first[2] == -0.5);
  // Steep backward emission pushes the pitch to about 240 nm: nothing but
  // 50% duty cycles fits and only the offset remains free.
  double angle = 0.0;
  while (cell_for_angle(c, angle, 0.5, 0.5, 0.0, 0.0).pitch > 0.245e-6) angle -= deg_to_rad(0.5);
  box = swarm_bounds(c, angle);
  CHECK(box.first[0] == doctest::Approx(0.5).epsilon(0.02));
  CHECK(box.second[0] == doctest::Approx(0.5).epsilon(0.02));
  CHECK(box.first[1] == box.first[0]);
  CHECK(box.second[2] - box.first[2] == 1.0);
}

TEST_CASE("interpolation returns nodes exactly and honours kappa limits") {
  const auto lib = toy_library();
  const auto node = interpolate(lib, lib.angles[1], 1e5);
  CHECK(node.kappa == 1e5);
  CHECK(node.params.pitch == lib.at(1, 1).params.pitch);
  CHECK(node.params.dcu == lib.at(1, 1).params.dcu);
  CHECK(node.params.delta == lib.at(1, 1).params.delta);
  CHECK_FALSE(node.clamped);

  const auto zero = interpolate(lib, 0.0, 0.0);
  CHECK(zero.delta_frac == 0.5);
  CHECK(zero.kappa == lib.at(0, 2).kappa);

  const auto over = interpolate(lib, 0.0, 1e6);
  CHECK(over.clamped);
  CHECK(over.kappa == 4e5);

  // Midway in angle: kappa_max is the mean of the two delta = 0 nodes.
  const auto mid = interpolate(lib, deg_to_rad(2.0), 1e6);
  CHECK(mid.kappa == doctest::Approx(3.5e5));
  CHECK(mid.params.pitch == doctest::Approx(0.305e-6));
  const auto between = interpolate(lib, 0.0, 3e5);
  CHECK(between.delta_frac == doctest::Approx(0.125));

  try {
    interpolate(lib, deg_to_rad(5.0), 1e5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Extrapolation);
  }
}

TEST_CASE("library file round trip is exact") {
  const auto lib = toy_library();
  std::stringstream ss;
  save_library(ss, lib);
  const auto back = load_library(ss);
  REQUIRE(back.entries.size() == lib.entries.size());
  for (std::size_t i = 0; i < lib.entries.size(); ++i) {
    CHECK(back.entries[i].kappa == lib.entries[i].kappa);
    CHECK(back.entries[i].params.pitch == lib.entries[i].params.pitch);
    CHECK(back.entries[i].params.dx == lib.entries[i].params.dx);
  }
  std::stringstream bad("{\"format\":\"other\"}\n");
  CHECK_THROWS_AS(load_library(bad), Error);
}

TEST_CASE("library build: single node, resume and job-order independence") {
  clear_reference_cache();
  auto c = tiny_config();
  c.delta_points = 1;
  const auto single = build_library(c);
  REQUIRE(single.complete());
  const auto direct = pso_optimize(c, 0.0, 0.0, fnv1a64(library_entry_key(c, 0.0, 0.0), c.swarm.seed));
  CHECK(single.entries[0].kappa == direct.kappa);
  CHECK(single.entries[0].params.dx == direct.params.dx);

  c = tiny_config();
  c.angles = {deg_to_rad(6.0), deg_to_rad(10.0)};
  const std::string path = "library_cache_test.jsonl";
  std::remove(path.c_str());
  const auto first = build_library(c, path);
  REQUIRE(first.complete());
  auto count_lines = [&] {
    std::ifstream in(path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    return n;
  };
  CHECK(count_lines() == 4);
  const auto resumed = build_library(c, path);
  CHECK(count_lines() == 4);
  c.jobs = 2;
  const auto parallel = build_library(c);
  for (std::size_t i = 0; i < first.entries.size(); ++i) {
    CHECK(resumed.entries[i].kappa == first.entries[i].kappa);
    CHECK(parallel.entries[i].kappa == first.entries[i].kappa);
    CHECK(parallel.entries[i].params.dcu == first.entries[i].params.dcu);
  }
  std::remove(path.c_str());
}

TEST_CASE("fixed-delta lookup is bilinear") {
  const auto lib = toy_library();
  const auto node = interpolate_at(lib, deg_to_rad(4.0), 0.25);
  CHECK(node.kappa == doctest::Approx(1e5));
  const auto mid = interpolate_at(lib, deg_to_rad(2.0), 0.125);
  CHECK(mid.kappa == doctest::Approx(0.25 * (4e5 + 2e5 + 3e5 + 1e5)));
  CHECK(mid.params.pitch == doctest::Approx(0.305e-6));
  CHECK(mid.delta_frac == 0.125);
  try {
    (void)interpolate_at(lib, deg_to_rad(5.0), 0.1);
    FAIL("expected Extrapolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Extrapolation);
  }
  CHECK_THROWS_AS(interpolate_at(lib, 0.0, 0.6), Error);
}

TEST_CASE("companion library re-simulates the same cells in TM") {
  clear_reference_cache();
  auto c = tiny_config();
  c.angles = {deg_to_rad(8.0)};
  const auto te = build_library(c);
  REQUIRE(te.complete());
  c.pol = Polarization::TM;
  const auto tm = companion_library(te, c);
  REQUIRE(tm.complete());
  CHECK(tm.pol == Polarization::TM);
  for (std::size_t i = 0; i < te.entries.size(); ++i) {
    CHECK(tm.entries[i].params.pitch == te.entries[i].params.pitch);
    CHECK(tm.entries[i].params.dx == te.entries[i].params.dx);
    CHECK(tm.entries[i].angle == te.entries[i].angle);
    CHECK(tm.entries[i].kappa >= 0.0);
    CHECK(tm.entries[i].kappa != te.entries[i].kappa);
  }
  CHECK(tm.settings.find("companion_of") != std::string::npos);
}
