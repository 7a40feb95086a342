#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ionpic/detection.hpp"
#include "ionpic/error.hpp"

using namespace ionpic;

namespace {

DetectionConfig measured_bright() {
  DetectionConfig c;
  c.bright_rate = 2.372 / c.window;
  return c;
}

double contrast(const RabiModel& m, double from, double to) {
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double p = rabi_thermal(from + (to - from) * i / 400.0, m);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  return hi - lo;
}

}  // namespace

TEST_CASE("ledger totals") {
  CHECK(ledger_total({}).value == 0.0);
  CHECK(ledger_total({}).sigma == 0.0);
  const auto m = ledger_total(loss_table_measurement());
  CHECK(m.value == doctest::Approx(-47.68).epsilon(1e-12));
  CHECK(m.sigma == doctest::Approx(0.11).epsilon(0.05));
  CHECK(ledger_total(loss_table_emission()).value == doctest::Approx(-47.9).epsilon(1e-12));
  CHECK(ledger_total(loss_table_emission()).sigma == doctest::Approx(0.7));
  CHECK(ledger_total(loss_table_improvements()).value == doctest::Approx(-28.1).epsilon(1e-12));

  auto shuffled = loss_table_emission();
  std::swap(shuffled.entries[0], shuffled.entries[2]);
  CHECK(ledger_total(shuffled).value == doctest::Approx(ledger_total(loss_table_emission()).value));
}

TEST_CASE("ledger csv round trip and parse errors") {
  std::stringstream ss;
  write_ledger_csv(ss, loss_table_emission());
  const auto back = read_ledger_csv(ss);
  REQUIRE(back.entries.size() == 3);
  CHECK(back.entries[2].db == -33.9);
  CHECK(back.entries[0].sigma_db == 0.7);
  std::stringstream bad("label,db,sigma_db,tag\nfoo,notanumber,0,x\n");
  try {
    read_ledger_csv(bad);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("ratio method") {
  const auto r = ratio_method({9.24e-3, 0.22e-3}, {1.85e-3, 0.02e-3});
  CHECK(r.value == doctest::Approx(1.7094e-5).epsilon(1e-4));
  CHECK(r.sigma == doctest::Approx(4.4699e-7).epsilon(1e-3));
  CHECK(ratio_method({0.3, 0.01}, {1.0, 0.0}).value == doctest::Approx(0.3));
  CHECK(ratio_method({0.3, 0.0}, {0.2, 0.0}).sigma == 0.0);
  CHECK_THROWS_AS(ratio_method({0.0, 0.0}, {0.2, 0.0}), Error);
  CHECK(ratio_to_db(r.value) == doctest::Approx(-47.67).epsilon(1e-3));
}

TEST_CASE("poisson helpers") {
  // pmf(k; 2.372) evaluated independently.
  CHECK(poisson_pmf(0, 2.372) == doctest::Approx(0.093294).epsilon(1e-5));
  CHECK(poisson_pmf(1, 2.372) == doctest::Approx(0.221293).epsilon(1e-5));
  CHECK(poisson_pmf(2, 2.372) == doctest::Approx(0.262454).epsilon(1e-5));
  CHECK(poisson_pmf(3, 2.372) == doctest::Approx(0.207513).epsilon(1e-5));
}

TEST_CASE("bright fidelity") {
  CHECK(bright_fidelity_analytic(measured_bright()) == doctest::Approx(0.906706048).epsilon(1e-8));
  DetectionConfig zero;
  zero.bright_rate = 0.0;
  CHECK(bright_fidelity_analytic(zero) == 0.0);
  DetectionConfig none;
  none.threshold = 0;
  CHECK(bright_fidelity_analytic(none) == 1.0);
}

TEST_CASE("bright histogram") {
  const auto c = measured_bright();
  const auto h = histogram_sim(c, DetectionState::Bright, 100000, 3);
  std::size_t mode = 0;
  for (std::size_t k = 1; k < h.size(); ++k)
    if (h[k] > h[mode]) mode = k;
  CHECK(mode == 2);
  const double tail = 1.0 - static_cast<double>(h[0]) / 1e5;
  const double p = bright_fidelity_analytic(c);
  CHECK(std::abs(tail - p) < 3.0 * std::sqrt(p * (1 - p) / 1e5));
  CHECK(poisson_chi_square(h, 2.372).p_value > 0.01);

  DetectionConfig dead = c;
  dead.bright_rate = 0.0;
  const auto z = histogram_sim(dead, DetectionState::Bright, 1000, 3);
  REQUIRE(z.size() == 1);
  CHECK(z[0] == 1000);
}

TEST_CASE("dark fidelity and histogram") {
  DetectionConfig c;
  CHECK(decay_probability(c) == doctest::Approx(0.02030386).epsilon(1e-6));
  const auto f = dark_fidelity_mc(c, 200000, 17);
  CHECK(f.value == doctest::Approx(0.925).epsilon(0.010 / 0.925));
  // Worker count does not change the draw.
  CHECK(dark_fidelity_mc(c, 20000, 5, 1).value == dark_fidelity_mc(c, 20000, 5, 3).value);

  DetectionConfig ideal;
  ideal.lifetime = std::numeric_limits<double>::max();
  ideal.dark_scatter = ideal.dark_detector = ideal.dark_other = 0.0;
  ideal.shelving_failure = 0.0;
  CHECK(dark_fidelity_mc(ideal, 10000, 1).value == 1.0);

  const auto h = histogram_sim(c, DetectionState::Dark, 200000, 8);
  const double above = 1.0 - static_cast<double>(h[0]) / 2e5;
  CHECK(above == doctest::Approx(0.075).epsilon(0.4));
  // Excess tail: more mass at high counts than a Poisson of the same mean.
  double mean = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) mean += k * static_cast<double>(h[k]) / 2e5;
  double far = 0.0;
  for (std::size_t k = 3; k < h.size(); ++k) far += static_cast<double>(h[k]) / 2e5;
  CHECK(far > 10.0 * (1.0 - poisson_cdf(2, mean)));
}

TEST_CASE("dark fidelity is monotone in dark rate and window") {
  DetectionConfig a, b, w;
  b.dark_scatter = 20.0;
  w.window = 16e-3;
  const double fa = dark_fidelity_mc(a, 100000, 4).value;
  CHECK(dark_fidelity_mc(b, 100000, 4).value < fa);
  CHECK(dark_fidelity_mc(w, 100000, 4).value < fa);
}

TEST_CASE("adaptive timing") {
  DetectionConfig c;
  const auto r = adaptive_timing(c, 200000, 21);
  CHECK(r.bright_mean * 1e3 == doctest::Approx(2.66).epsilon(0.15 / 2.66));
  CHECK(r.mixed_mean * 1e3 == doctest::Approx(5.33).epsilon(0.1 / 5.33));
  CHECK(r.mixed_mean == doctest::Approx(0.5 * (r.bright_mean + c.window)));
  CHECK(r.bright_mean == doctest::Approx(adaptive_timing_expected(c, {})).epsilon(0.01));

  for (auto conv : {TimingConvention::BinEnd, TimingConvention::BinMidpoint, TimingConvention::PhotonArrival}) {
    for (auto pol : {UndetectedPolicy::Exclude, UndetectedPolicy::Zero}) {
      TimingOptions o{conv, pol, 2};
      CHECK(adaptive_timing(c, 100000, 9, o).bright_mean ==
            doctest::Approx(adaptive_timing_expected(c, o)).epsilon(0.01));
    }
  }

  DetectionConfig fast;
  fast.bright_rate = std::numeric_limits<double>::infinity();
  TimingOptions end{TimingConvention::BinEnd, UndetectedPolicy::FullWindow, 1};
  CHECK(adaptive_timing(fast, 1000, 1, end).bright_mean == doctest::Approx(0.8e-3));
  fast.bright_rate = 1e7;
  CHECK(adaptive_timing(fast, 1000, 1, end).bright_mean == doctest::Approx(0.8e-3));
}

TEST_CASE("signal to background") {
  DetectionConfig c;
  CHECK(c.dark_rate() == doctest::Approx(8.1));
  CHECK(c.bright_rate / c.dark_rate() == doctest::Approx(36.7).epsilon(0.002));
}

TEST_CASE("thermal rabi flopping") {
  RabiModel bare{2.0 * M_PI, 0.0, 0.0, 0};
  for (double t : {0.0, 0.1, 0.37, 1.0, 2.5})
    CHECK(rabi_thermal(t, bare) == doctest::Approx(std::pow(std::cos(M_PI * t), 2)).epsilon(1e-12));
  CHECK(rabi_thermal(0.0, {2.0, 0.05, 19.0, 0}) == doctest::Approx(1.0));

  // Thermal envelope over ten Rabi periods.
  RabiModel hot{2.0 * M_PI, 0.05, 19.0, 0};
  CHECK(contrast(hot, 9.0, 10.0) < 0.5);
  CHECK(contrast(bare, 9.0, 10.0) > 0.99);
  for (int i = 0; i < 100; ++i) {
    const double p = rabi_thermal(0.1 * i, hot);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  // Periodic when eta = 0 even with thermal occupation.
  RabiModel cold_eta{2.0 * M_PI, 0.0, 19.0, 0};
  CHECK(rabi_thermal(0.3, cold_eta) == doctest::Approx(rabi_thermal(1.3, cold_eta)));
  CHECK_THROWS_AS(rabi_thermal(1.0, {1.0, 0.05, 19.0, 5}), Error);
}
