#include "ionpic/detection.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "ionpic/error.hpp"
#include "ionpic/numeric/philox.hpp"
#include "ionpic/parallel.hpp"

namespace ionpic {

Measured ledger_total(const LossLedger& ledger) {
  Measured t;
  double var = 0.0;
  for (const auto& e : ledger.entries) {
    t.value += e.db;
    var += e.sigma_db * e.sigma_db;
  }
  t.sigma = std::sqrt(var);
  return t;
}

LossLedger loss_table_measurement() {
  return {{{"count ratio (integrated to free-space)", -27.34, 0.04, "measurement"},
           {"detection efficiency (free-space)", -20.34, 0.1, "measurement"}}};
}

LossLedger loss_table_emission() {
  return {{{"loss from grating input to detector", -8.5, 0.7, "routing"},
           {"detector quantum efficiency (PMT)", -5.5, 0.0, "detector"},
           {"collection calculated from emission profile", -33.9, 0.0, "collection"}}};
}

LossLedger loss_table_improvements() {
  return {{{"loss from grating input to detector", -5.0, 0.0, "routing"},
           {"detector quantum efficiency (SPAD)", -1.6, 0.0, "detector"},
           {"collection calculated from emission profile", -21.5, 0.0, "collection"}}};
}

void write_ledger_csv(std::ostream& out, const LossLedger& ledger) {
  out << "label,db,sigma_db,tag\n";
  out.precision(10);
  for (const auto& e : ledger.entries) {
    if (e.label.find_first_of(",\n") != std::string::npos || e.tag.find_first_of(",\n") != std::string::npos)
      fail(ErrorCode::InvalidArgument, "ledger labels may not contain commas or newlines");
    out << e.label << ',' << e.db << ',' << e.sigma_db << ',' << e.tag << '\n';
  }
}

LossLedger read_ledger_csv(std::istream& in) {
  LossLedger ledger;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("label,db", 0) != 0) fail(ErrorCode::Parse, "ledger line 1: expected header 'label,db,...'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() < 2) fail(ErrorCode::Parse, "ledger line " + std::to_string(line_no) + ": too few columns");
    LedgerEntry e;
    e.label = cols[0];
    try {
      e.db = std::stod(cols[1]);
      if (cols.size() > 2 && !cols[2].empty()) e.sigma_db = std::stod(cols[2]);
    } catch (const std::exception&) {
      fail(ErrorCode::Parse, "ledger line " + std::to_string(line_no) + ": bad number");
    }
    if (cols.size() > 3) e.tag = cols[3];
    ledger.entries.push_back(e);
  }
  return ledger;
}

double ratio_to_db(double ratio) { return 10.0 * std::log10(ratio); }
double db_to_ratio(double db) { return std::pow(10.0, db / 10.0); }

Measured ratio_method(Measured eff, Measured ratio) {
  if (!(eff.value > 0.0) || !(ratio.value > 0.0) || eff.sigma < 0.0 || ratio.sigma < 0.0)
    fail(ErrorCode::InvalidArgument, "ratio method needs positive efficiencies");
  const double v = eff.value * ratio.value;
  const double rel = std::hypot(eff.sigma / eff.value, ratio.sigma / ratio.value);
  return {v, v * rel};
}

void DetectionConfig::validate() const {
  if (bright_rate < 0.0 || dark_scatter < 0.0 || dark_detector < 0.0 || dark_other < 0.0)
    fail(ErrorCode::InvalidArgument, "count rates must be >= 0");
  if (!(window > 0.0)) fail(ErrorCode::InvalidArgument, "detection window must be > 0");
  if (bins < 1) fail(ErrorCode::InvalidArgument, "bins must be >= 1");
  if (!(lifetime > 0.0)) fail(ErrorCode::InvalidArgument, "lifetime must be > 0");
  if (shelving_failure < 0.0 || shelving_failure > 1.0)
    fail(ErrorCode::InvalidArgument, "shelving failure must be a probability");
}

double poisson_pmf(unsigned k, double mean) {
  if (mean <= 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

double poisson_cdf(unsigned k, double mean) {
  double s = 0.0;
  for (unsigned i = 0; i <= k; ++i) s += poisson_pmf(i, mean);
  return std::min(1.0, s);
}

double bright_fidelity_analytic(const DetectionConfig& config) {
  config.validate();
  if (config.threshold == 0) return 1.0;
  double mean = config.bright_rate * config.window;
  if (config.background_in_bright) mean += config.dark_rate() * config.window;
  return 1.0 - poisson_cdf(config.threshold - 1, mean);
}

double decay_probability(const DetectionConfig& config) {
  config.validate();
  return -std::expm1(-config.window / config.lifetime);
}

namespace {

std::uint64_t dark_trial_counts(const DetectionConfig& c, numeric::CounterRng& rng) {
  const double w = c.window;
  std::uint64_t n = rng.poisson(c.dark_rate() * w);
  if (rng.uniform() < c.shelving_failure) return n + rng.poisson(c.bright_rate * w);
  const double t = rng.exponential(c.lifetime);
  return n + rng.poisson(c.bright_rate * std::max(0.0, w - t));
}

std::uint64_t bright_trial_counts(const DetectionConfig& c, numeric::CounterRng& rng) {
  std::uint64_t n = rng.poisson(c.bright_rate * c.window);
  if (c.background_in_bright) n += rng.poisson(c.dark_rate() * c.window);
  return n;
}

// Runs fn(trial, rng) over all trials in fixed blocks and reduces the
// per-block partial sums in block order.
template <class Acc, class Fn>
Acc run_trials(std::uint64_t trials, std::uint64_t seed, unsigned jobs, Fn fn) {
  constexpr std::uint64_t kBlock = 4096;
  const std::uint64_t blocks = (trials + kBlock - 1) / kBlock;
  std::vector<Acc> partial(blocks);
  parallel_for(blocks, jobs, [&](std::size_t b) {
    const std::uint64_t end = std::min(trials, (b + 1) * kBlock);
    for (std::uint64_t i = b * kBlock; i < end; ++i) {
      numeric::CounterRng rng(seed, i);
      fn(partial[b], rng);
    }
  });
  Acc total{};
  for (auto& p : partial) total += p;
  return total;
}

struct CountAcc {
  std::uint64_t hits = 0;
  CountAcc& operator+=(const CountAcc& o) {
    hits += o.hits;
    return *this;
  }
};

struct HistAcc {
  std::vector<std::uint64_t> h;
  HistAcc& operator+=(const HistAcc& o) {
    if (o.h.size() > h.size()) h.resize(o.h.size(), 0);
    for (std::size_t i = 0; i < o.h.size(); ++i) h[i] += o.h[i];
    return *this;
  }
  void add(std::uint64_t k) {
    if (k >= h.size()) h.resize(k + 1, 0);
    ++h[k];
  }
};

struct TimeAcc {
  double sum = 0.0;
  std::uint64_t counted = 0, undetected = 0;
  TimeAcc& operator+=(const TimeAcc& o) {
    sum += o.sum;
    counted += o.counted;
    undetected += o.undetected;
    return *this;
  }
};

}  // namespace

Measured dark_fidelity_mc(const DetectionConfig& config, std::uint64_t trials, std::uint64_t seed,
                          unsigned jobs) {
  config.validate();
  if (trials == 0) fail(ErrorCode::InvalidArgument, "trials must be > 0");
  const auto acc = run_trials<CountAcc>(trials, seed, jobs, [&](CountAcc& a, numeric::CounterRng& rng) {
    if (dark_trial_counts(config, rng) < config.threshold) ++a.hits;
  });
  const double p = static_cast<double>(acc.hits) / static_cast<double>(trials);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(trials))};
}

std::vector<std::uint64_t> histogram_sim(const DetectionConfig& config, DetectionState state,
                                         std::uint64_t trials, std::uint64_t seed, unsigned jobs) {
  config.validate();
  if (trials == 0) fail(ErrorCode::InvalidArgument, "trials must be > 0");
  auto acc = run_trials<HistAcc>(trials, seed, jobs, [&](HistAcc& a, numeric::CounterRng& rng) {
    a.add(state == DetectionState::Bright ? bright_trial_counts(config, rng)
                                          : dark_trial_counts(config, rng));
  });
  return acc.h;
}

ChiSquare poisson_chi_square(const std::vector<std::uint64_t>& histogram, double mean) {
  std::uint64_t n = 0;
  for (auto v : histogram) n += v;
  if (n == 0) fail(ErrorCode::InvalidArgument, "empty histogram");
  const double total = static_cast<double>(n);
  std::vector<double> obs, exp;
  double o = 0.0, e = 0.0, cum = 0.0;
  for (unsigned k = 0;; ++k) {
    o += k < histogram.size() ? static_cast<double>(histogram[k]) : 0.0;
    const double p = poisson_pmf(k, mean);
    e += total * p;
    cum += p;
    if (e >= 5.0 && total * (1.0 - cum) >= 5.0) {
      obs.push_back(o);
      exp.push_back(e);
      o = e = 0.0;
    }
    if (total * (1.0 - cum) < 5.0) break;
  }
  // Everything past the last full bin goes into one tail bin.
  double counted = 0.0;
  for (double v : obs) counted += v;
  const double tail_obs = total - counted;
  double tail_exp = total;
  for (double v : exp) tail_exp -= v;
  obs.push_back(tail_obs);
  exp.push_back(tail_exp);

  ChiSquare r;
  for (std::size_t i = 0; i < obs.size(); ++i) r.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  r.dof = static_cast<int>(obs.size()) - 1;
  if (r.dof > 0) {
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  }
  return r;
}

void write_histogram_csv(std::ostream& out, const std::vector<std::uint64_t>& histogram) {
  std::uint64_t n = 0;
  for (auto v : histogram) n += v;
  out << "count,frequency\n";
  out.precision(10);
  for (std::size_t k = 0; k < histogram.size(); ++k)
    out << k << ',' << (n ? static_cast<double>(histogram[k]) / static_cast<double>(n) : 0.0) << '\n';
}

namespace {

double bin_offset(TimingConvention c) {
  switch (c) {
    case TimingConvention::BinStart: return 0.0;
    case TimingConvention::BinMidpoint: return 0.5;
    case TimingConvention::BinEnd: return 1.0;
    case TimingConvention::PhotonArrival: return 0.0;
  }
  return 0.0;
}

double detection_rate(const DetectionConfig& c) {
  return c.bright_rate + (c.background_in_bright ? c.dark_rate() : 0.0);
}

}  // namespace

TimingResult adaptive_timing(const DetectionConfig& config, std::uint64_t trials, std::uint64_t seed,
                             const TimingOptions& options) {
  config.validate();
  if (config.bins < 2) fail(ErrorCode::InvalidArgument, "adaptive timing needs at least 2 bins");
  if (trials == 0) fail(ErrorCode::InvalidArgument, "trials must be > 0");
  const double rate = detection_rate(config);
  const double w = config.window, bin = w / config.bins;
  const auto acc = run_trials<TimeAcc>(trials, seed, options.jobs, [&](TimeAcc& a, numeric::CounterRng& rng) {
    // First arrival of a Poisson process; infinite rate means an immediate count.
    const double t = std::isinf(rate) ? 0.0 : rate > 0.0 ? rng.exponential(1.0 / rate) : w;
    if (t >= w) {
      ++a.undetected;
      if (options.undetected == UndetectedPolicy::FullWindow) {
        a.sum += w;
        ++a.counted;
      } else if (options.undetected == UndetectedPolicy::Zero) {
        ++a.counted;
      }
      return;
    }
    ++a.counted;
    if (options.convention == TimingConvention::PhotonArrival) {
      a.sum += t;
    } else {
      const double b = std::min(std::floor(t / bin), static_cast<double>(config.bins - 1));
      a.sum += (b + bin_offset(options.convention)) * bin;
    }
  });
  TimingResult r;
  r.bright_mean = acc.counted ? acc.sum / static_cast<double>(acc.counted) : 0.0;
  r.mixed_mean = 0.5 * (r.bright_mean + w);
  r.undetected_fraction = static_cast<double>(acc.undetected) / static_cast<double>(trials);
  return r;
}

double adaptive_timing_expected(const DetectionConfig& config, const TimingOptions& options) {
  config.validate();
  const double r = detection_rate(config), w = config.window, bin = w / config.bins;
  const double q = std::exp(-r * w);
  double s = 0.0;  // E[time; detected]
  if (options.convention == TimingConvention::PhotonArrival) {
    s = r > 0.0 ? (1.0 - q * (1.0 + r * w)) / r : 0.0;
  } else {
    const double p1 = -std::expm1(-r * bin);
    for (unsigned b = 0; b < config.bins; ++b)
      s += std::exp(-r * bin * b) * p1 * (b + bin_offset(options.convention)) * bin;
  }
  switch (options.undetected) {
    case UndetectedPolicy::FullWindow: return s + q * w;
    case UndetectedPolicy::Exclude: return q < 1.0 ? s / (1.0 - q) : 0.0;
    case UndetectedPolicy::Zero: return s;
  }
  return s;
}

double rabi_thermal(double t, const RabiModel& m) {
  if (t < 0.0) fail(ErrorCode::InvalidArgument, "pulse length must be >= 0");
  if (m.eta_ld < 0.0 || m.nbar < 0.0) fail(ErrorCode::InvalidArgument, "eta and nbar must be >= 0");
  const double ratio = m.nbar / (m.nbar + 1.0);
  const double eta2 = m.eta_ld * m.eta_ld;
  double weight = 0.0, sum = 0.0, pn = 1.0 / (m.nbar + 1.0);
  const unsigned hard_limit = 100000;
  for (unsigned n = 0; n < hard_limit; ++n) {
    const double omega = m.omega0 * std::exp(-0.5 * eta2) * std::laguerre(n, eta2);
    const double c = std::cos(0.5 * omega * t);
    sum += pn * c * c;
    weight += pn;
    const bool done = m.n_cutoff ? n + 1 >= m.n_cutoff : weight > 0.999;
    if (done) break;
    pn *= ratio;
  }
  if (!(weight > 0.999))
    fail(ErrorCode::Tolerance, "thermal cutoff keeps only " + std::to_string(weight) + " of the weight");
  return sum / weight;
}

}  // namespace ionpic
