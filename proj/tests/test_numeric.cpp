#include <doctest.h>

#include <cmath>
#include <complex>
#include <set>

#include "ionpic/hash.hpp"
#include "ionpic/numeric/fft.hpp"
#include "ionpic/numeric/gauss_legendre.hpp"
#include "ionpic/numeric/nelder_mead.hpp"
#include "ionpic/numeric/philox.hpp"
#include "ionpic/parallel.hpp"

using namespace ionpic;

TEST_CASE("gauss-legendre integrates polynomials exactly") {
  const auto rule = numeric::gauss_legendre(8);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * std::pow(rule.nodes[i], 14);
  CHECK(sum == doctest::Approx(2.0 / 15.0).epsilon(1e-14));
  const auto one = numeric::gauss_legendre(1);
  CHECK(one.nodes[0] == doctest::Approx(0.0));
  CHECK(one.weights[0] == doctest::Approx(2.0));
  const double area = numeric::integrate_2d(numeric::gauss_legendre(16), 0, 1, 0, 2,
                                            [](double x, double y) { return x * y; });
  CHECK(area == doctest::Approx(1.0));
}

TEST_CASE("nelder-mead finds the Rosenbrock minimum") {
  auto rosen = [](const std::vector<double>& v) {
    return 100.0 * std::pow(v[1] - v[0] * v[0], 2) + std::pow(1.0 - v[0], 2);
  };
  const auto r = numeric::nelder_mead(rosen, {-1.2, 1.0}, {0.5, 0.5});
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("philox known-answer vectors") {
  const auto zero = numeric::philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(zero[0] == 0x6627e8d5u);
  CHECK(zero[1] == 0xe169c58du);
  CHECK(zero[2] == 0xbc57ac4cu);
  CHECK(zero[3] == 0x9b00dbd8u);
  const auto pi = numeric::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                         {0xa4093822u, 0x299f31d0u});
  CHECK(pi[0] == 0xd16cfe09u);
  CHECK(pi[1] == 0x94fdccebu);
  CHECK(pi[2] == 0x5001e420u);
  CHECK(pi[3] == 0x24126ea1u);
}

TEST_CASE("counter rng streams are reproducible and distinct") {
  numeric::CounterRng a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
  numeric::CounterRng d(7, 3);
  CHECK(d() != c());

  numeric::CounterRng rng(42, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(rng.poisson(2.372));
  CHECK(sum / n == doctest::Approx(2.372).epsilon(0.01));
  double big = 0.0;
  for (int i = 0; i < 2000; ++i) big += static_cast<double>(rng.poisson(400.0));
  CHECK(big / 2000 == doctest::Approx(400.0).epsilon(0.01));
}

TEST_CASE("fft round trip and frequencies") {
  std::vector<std::complex<double>> data(8 * 4);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = {std::sin(0.3 * i), std::cos(0.7 * i)};
  auto copy = data;
  numeric::fft2d(data, 8, 4, false);
  numeric::fft2d(data, 8, 4, true);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(std::abs(data[i] / 32.0 - copy[i]) < 1e-12);
  CHECK(numeric::fft_frequency(5, 8, 1.0) == doctest::Approx(-3.0 * 2.0 * M_PI / 8.0));
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> seen(1000, 0);
  parallel_for(seen.size(), 4, [&](std::size_t i) { seen[i] += 1; });
  for (int v : seen) CHECK(v == 1);
  CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(hex64(0xabcull) == "0000000000000abc");
}
