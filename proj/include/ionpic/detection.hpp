#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ionpic {

struct Measured {
  double value = 0.0;
  double sigma = 0.0;
};

struct LedgerEntry {
  std::string label;
  double db = 0.0;
  double sigma_db = 0.0;
  std::string tag;  // grouping, e.g. "routing" or "detector"
};

struct LossLedger {
  std::vector<LedgerEntry> entries;
};

/// Sum of entries, uncertainty combined in quadrature.
Measured ledger_total(const LossLedger& ledger);

/// The three columns of the published photon-loss summary.
LossLedger loss_table_measurement();
LossLedger loss_table_emission();
LossLedger loss_table_improvements();

/// CSV with header "label,db,sigma_db,tag".
void write_ledger_csv(std::ostream& out, const LossLedger& ledger);
LossLedger read_ledger_csv(std::istream& in);

double ratio_to_db(double ratio);
double db_to_ratio(double db);

/// Product of two independent measured efficiencies with relative
/// uncertainties added in quadrature. Throws on nonpositive inputs.
Measured ratio_method(Measured efficiency_free_space, Measured count_ratio);

struct DetectionConfig {
  double bright_rate = 297.0;      // counts/s
  double dark_scatter = 4.3;       // counts/s, laser scatter
  double dark_detector = 3.0;      // counts/s, detector dark counts
  double dark_other = 0.8;         // counts/s
  double window = 8e-3;            // s
  unsigned threshold = 1;          // counts needed to call "bright"
  unsigned bins = 10;
  double lifetime = 0.39;          // D5/2 lifetime, s
  double shelving_failure = 0.005;
  bool background_in_bright = false;

  double dark_rate() const { return dark_scatter + dark_detector + dark_other; }
  void validate() const;
};

double poisson_pmf(unsigned k, double mean);
double poisson_cdf(unsigned k, double mean);  // P(X <= k)

/// P(Poisson(bright_rate * window) >= threshold).
double bright_fidelity_analytic(const DetectionConfig& config);

/// 1 - exp(-window / lifetime).
double decay_probability(const DetectionConfig& config);

/// Dark-state Monte Carlo: shelving fails with the configured probability,
/// otherwise the ion may decay at Exp(lifetime) and then scatter at the
/// bright rate. Returns P(counts < threshold) with its binomial sigma.
/// Trial i draws from its own counter stream, so `jobs` does not change the result.
Measured dark_fidelity_mc(const DetectionConfig& config, std::uint64_t trials, std::uint64_t seed,
                          unsigned jobs = 1);

enum class DetectionState { Bright, Dark };

/// Count histogram; entry k is the number of trials with k counts.
std::vector<std::uint64_t> histogram_sim(const DetectionConfig& config, DetectionState state,
                                         std::uint64_t trials, std::uint64_t seed,
                                         unsigned jobs = 1);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson test of a histogram against Poisson(mean); tail bins are pooled
/// until every expected count is at least 5.
ChiSquare poisson_chi_square(const std::vector<std::uint64_t>& histogram, double mean);

void write_histogram_csv(std::ostream& out, const std::vector<std::uint64_t>& histogram);

/// When a bright decision made in bin b is timestamped.
enum class TimingConvention { BinStart, BinMidpoint, BinEnd, PhotonArrival };

/// How trials with no count inside the window enter the bright mean.
enum class UndetectedPolicy { FullWindow, Exclude, Zero };

struct TimingOptions {
  TimingConvention convention = TimingConvention::BinStart;
  UndetectedPolicy undetected = UndetectedPolicy::FullWindow;
  unsigned jobs = 1;
};

struct TimingResult {
  double bright_mean = 0.0;       // s
  double mixed_mean = 0.0;        // s, equal bright/dark mixture
  double undetected_fraction = 0.0;
};

TimingResult adaptive_timing(const DetectionConfig& config, std::uint64_t trials, std::uint64_t seed,
                             const TimingOptions& options = {});

/// Closed-form expectation of adaptive_timing's bright mean (no sampling).
double adaptive_timing_expected(const DetectionConfig& config, const TimingOptions& options);

struct RabiModel {
  double omega0 = 1.0;       // bare carrier Rabi frequency, rad/s
  double eta_ld = 0.0;       // Lamb-Dicke parameter
  double nbar = 0.0;         // mean thermal occupation
  unsigned n_cutoff = 0;     // 0 = choose automatically
};

/// Thermally averaged carrier Rabi flop, P(ground) at pulse length t.
/// Throws Tolerance if an explicit cutoff keeps < 0.999 of the weight.
double rabi_thermal(double t, const RabiModel& model);

}  // namespace ionpic
