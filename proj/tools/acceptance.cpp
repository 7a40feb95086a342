#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ionpic/beam.hpp"
#include "ionpic/detection.hpp"
#include "ionpic/dipole.hpp"
#include "ionpic/error.hpp"
#include "ionpic/fdtd.hpp"
#include "ionpic/geometry.hpp"
#include "ionpic/library.hpp"
#include "ionpic/overlap.hpp"
#include "ionpic/pipeline.hpp"

using namespace ionpic;
using cplx = std::complex<double>;
namespace fs = std::filesystem;

namespace {

constexpr double kLambda = 422e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<int> failed;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) failed.push_back(id);
  std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), dt);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... v) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

FieldGrid gaussian(std::size_t n, double step, double w0) {
  const double half = 0.5 * step * static_cast<double>(n);
  FieldGrid f(n, n, step, -half, -half);
  f.wavelength = kLambda;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) f.at(i, j) = std::exp(-(f.x(i) * f.x(i) + f.y(j) * f.y(j)) / (w0 * w0));
  return f;
}

// 1/e^2 intensity radius from the second moment along x.
double beam_radius_x(const FieldGrid& f) {
  double s = 0.0, sxx = 0.0;
  for (std::size_t j = 0; j < f.ny; ++j)
    for (std::size_t i = 0; i < f.nx; ++i) {
      const double p = std::norm(f.at(i, j));
      s += p;
      sxx += p * f.x(i) * f.x(i);
    }
  return 2.0 * std::sqrt(sxx / s);
}

// Normalized RMS difference between angular-spectrum and paraxial Fresnel
// slit patterns, |x| < 10 um at 50 um distance.
double slit_rms() {
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
    as.push_back(std::norm(g.at(i, f.ny / 2)));
    fr.push_back(fresnel(f.x(i)));
    as_max = std::max(as_max, as.back());
    fr_max = std::max(fr_max, fr.back());
  }
  double rms = 0.0;
  for (std::size_t k = 0; k < as.size(); ++k) rms += std::pow(as[k] / as_max - fr[k] / fr_max, 2);
  return std::sqrt(rms / static_cast<double>(as.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
  std::string data_dir = IONPIC_DATA_DIR;
  std::string out_dir = (fs::temp_directory_path() / "ionpic-acceptance").string();
  unsigned jobs = 1;
  std::vector<int> known;
  app.add_option("--data", data_dir, "Directory holding library_te.jsonl and library_tm.jsonl")->capture_default_str();
  app.add_option("--out", out_dir, "Scratch output directory")->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  app.add_option("--known-failure", known,
                 "Criteria whose failure is documented; they still print FAIL but do not set the exit code");
  CLI11_PARSE(app, argc, argv);

  const PipelineConfig defaults;
  const auto& fp = defaults.design.footprint;
  const auto& pose = defaults.design.pose;
  double fdtd_energy_error = -1.0;
  int fdtd_runs = 0;

  criterion(1, "solid angle", [&] {
    auto t0 = std::chrono::steady_clock::now();
    const double f = solid_angle_fraction(fp, pose);
    const double t_quad = seconds_since(t0);
    const auto mc = solid_angle_fraction_mc(fp, pose, 10000000, 1);
    const double z = std::abs(mc.value - f) / mc.sigma;
    const bool ok = std::abs(f - 0.0218) <= 0.0005 && z <= 3.0 && t_quad < 5.0;
    return Outcome{ok, fmt("fraction %.5f (target 0.0218 +/- 0.0005), 1e7-ray MC %.5f +/- %.5f (%.2f sigma, limit 3), "
                           "quadrature %.3f s (limit 5 s)",
                           f, mc.value, mc.sigma, z, t_quad)};
  });

  criterion(2, "sigma dominance", [&] {
    auto t0 = std::chrono::steady_clock::now();
    const double s = sigma_share(fraction_on_aperture(QuantizationAxis::z(), fp, pose));
    const double t = seconds_since(t0);
    return Outcome{std::abs(s - 0.956) <= 0.005 && t < 30.0,
                   fmt("sigma share %.4f (target 0.956 +/- 0.005), %.2f s (limit 30 s)", s, t)};
  });

  criterion(3, "bright fidelity", [&] {
    DetectionConfig c;
    c.bright_rate = 2.372 / c.window;
    const double f = bright_fidelity_analytic(c);
    const std::uint64_t n = 100000;
    const auto h = histogram_sim(c, DetectionState::Bright, n, 3, jobs);
    const double mc = 1.0 - static_cast<double>(h[0]) / static_cast<double>(n);
    const double sigma = std::sqrt(f * (1.0 - f) / static_cast<double>(n));
    const double z = std::abs(mc - f) / sigma;
    return Outcome{std::abs(f - 0.9067) <= 0.0005 && z <= 3.0,
                   fmt("analytic %.5f (target 0.9067 +/- 0.0005), MC %.5f at 1e5 trials (%.2f binomial sigma, limit 3)",
                       f, mc, z)};
  });

  criterion(4, "dark fidelity", [&] {
    const DetectionConfig c;
    const auto f = dark_fidelity_mc(c, 1000000, 17, jobs);
    const double p = decay_probability(c);
    const double expect = 1.0 - std::exp(-0.008 / 0.39);
    const bool ok = std::abs(f.value - 0.925) <= 0.010 && std::abs(p - expect) < 1e-12 && std::abs(p - 0.02) < 0.005;
    return Outcome{ok, fmt("MC %.4f +/- %.4f at 1e6 trials (target 0.925 +/- 0.010), decay probability %.4f%% "
                           "(closed form %.4f%%, rounds to 2%%)",
                           f.value, f.sigma, 100.0 * p, 100.0 * expect)};
  });

  criterion(5, "adaptive timing", [&] {
    auto t0 = std::chrono::steady_clock::now();
    TimingOptions o;
    o.jobs = jobs;
    const auto r = adaptive_timing(DetectionConfig{}, 1000000, 21, o);
    const double t = seconds_since(t0);
    const double b = r.bright_mean * 1e3, m = r.mixed_mean * 1e3;
    return Outcome{std::abs(b - 2.66) <= 0.15 && std::abs(m - 5.33) <= 0.1 && t < 60.0,
                   fmt("bright %.3f ms (target 2.66 +/- 0.15), mixed %.3f ms (target 5.33 +/- 0.1), %.1f s (limit 60 s)",
                       b, m, t)};
  });

  criterion(6, "loss ledger", [&] {
    const auto a = ledger_total(loss_table_measurement());
    const auto b = ledger_total(loss_table_emission());
    const auto c = ledger_total(loss_table_improvements());
    // Table values are quoted to 0.01 dB; dB arithmetic must land on them.
    const double tol = 0.005;
    const bool ok = std::abs(a.value + 47.68) <= tol && std::abs(a.sigma - 0.11) <= tol &&
                    std::abs(b.value + 47.9) <= tol && std::abs(b.sigma - 0.7) <= tol && std::abs(c.value + 28.1) <= tol;
    return Outcome{ok, fmt("measurement %.3f +/- %.3f dB, emission %.3f +/- %.3f dB, improvements %.3f dB "
                           "(targets -47.68 +/- 0.11, -47.9 +/- 0.7, -28.1; tolerance 0.005 dB)",
                           a.value, a.sigma, b.value, b.sigma, c.value)};
  });

  criterion(7, "ratio calibration", [&] {
    const auto r = ratio_method({9.24e-3, 0.22e-3}, {1.85e-3, 0.02e-3});
    const bool ok = std::abs(r.value - 1.71e-5) <= 0.005e-5 && std::abs(r.sigma - 0.04e-5) <= 0.005e-5;
    return Outcome{ok, fmt("(%.4f +/- %.4f) x 1e-5 (target 1.71 +/- 0.04, tolerance 0.005)", r.value * 1e5,
                           r.sigma * 1e5)};
  });

  // The default pipeline supplies the design and beam numbers for 8, 10 and 12.
  Manifest manifest;
  std::string pipeline_error;
  try {
    PipelineConfig c = defaults;
    c.library_te = (fs::path(data_dir) / "library_te.jsonl").string();
    c.library_tm = (fs::path(data_dir) / "library_tm.jsonl").string();
    c.out_dir = out_dir;
    c.jobs = jobs;
    c.fidelity_trials = 10000;
    c.timing_trials = 10000;
    manifest = run_pipeline(c).manifest;
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto stage = [&](const char* name) -> const nlohmann::json& {
    if (!pipeline_error.empty()) fail(ErrorCode::Stage, "pipeline failed: " + pipeline_error);
    const auto* s = manifest.find(name);
    if (!s) fail(ErrorCode::Stage, std::string("pipeline has no ") + name + " stage");
    return s->results;
  };

  criterion(8, "field vs intensity efficiency", [&] {
    const auto& b = stage("beam");
    const double d = b.at("form_relative_difference").get<double>();
    const double sigma = stage("solid_angle").at("sigma_share").get<double>();
    return Outcome{std::abs(d) < 0.02 && sigma > 0.5,
                   fmt("field overlap %.5f vs intensity formula %.5f at the brightest pixel of the designed beam: "
                       "%+.2f%% (limit 2%%; sigma share %.3f)",
                       b.at("eta_field_form").get<double>(), b.at("eta_intensity_form").get<double>(), 100.0 * d,
                       sigma)};
  });

  criterion(9, "apodization physics", [&] {
    // Live FDTD of each angle's delta = 0 cell from the design library,
    // shifted across the delta grid.
    const auto lib = load_library_file((fs::path(data_dir) / "library_te.jsonl").string());
    double worst_ratio = 0.0, worst_rise = 0.0, worst_rise_angle = 0.0;
    std::vector<double> bad_angles;
    FdtdOptions o;
    o.cell = 15e-9;
    for (std::size_t a = 0; a < lib.angles.size(); ++a) {
      o.target_angle = lib.angles[a];
      std::vector<double> kappa;
      for (double df : lib.delta_fracs) {
        auto p = lib.at(a, 0).params;
        p.delta = df * p.pitch;
        const auto r = run_unit_cell(p, LayerStack::default_bilayer(), Polarization::TE, o);
        fdtd_energy_error = std::max(fdtd_energy_error, r.energy_error);
        ++fdtd_runs;
        kappa.push_back(extract_kappa_alpha(r).kappa);
      }
      worst_ratio = std::max(worst_ratio, kappa.back() / kappa.front());
      bool mono = true;
      for (std::size_t k = 1; k < kappa.size(); ++k) {
        const double rise = kappa[k] / kappa[k - 1] - 1.0;
        if (rise > 0.0) mono = false;
        if (rise > worst_rise) {
          worst_rise = rise;
          worst_rise_angle = lib.angles[a];
        }
      }
      if (!mono) bad_angles.push_back(lib.angles[a] * 180.0 / kPi);
    }
    std::string bad;
    for (double a : bad_angles) bad += fmt("%s%.0f", bad.empty() ? "" : ",", a);
    const bool ok = worst_ratio <= 0.05 && bad_angles.empty();
    return Outcome{ok, fmt("%zu angles x %zu shifts: max kappa(L/2)/kappa(0) %.4f (limit 0.05); non-monotone at "
                           "%s deg (largest step rise %+.1f%% at %.0f deg)",
                           lib.angles.size(), lib.delta_fracs.size(), worst_ratio, bad.empty() ? "no" : bad.c_str(),
                           100.0 * worst_rise, worst_rise_angle * 180.0 / kPi)};
  });

  criterion(10, "longitudinal fit", [&] {
    const auto& d = stage("design");
    const double l2 = d.at("ideal_relative_l2").get<double>();
    const double res = d.at("constrained_residual_power").get<double>();
    return Outcome{l2 < 0.05 && res < 0.10,
                   fmt("unconstrained alpha = 0 fit L2 %.2f%% (limit 5%%), constrained residual guided power %.2f%% "
                       "(limit 10%%)",
                       100.0 * l2, 100.0 * res)};
  });

  criterion(11, "propagation oracles", [&] {
    const double w0 = 2e-6;
    const auto f = gaussian(512, 0.1e-6, w0);
    const auto g = angular_spectrum_propagate(f, kPi * w0 * w0 / kLambda);
    const double waist = std::abs(beam_radius_x(g) / (w0 * std::sqrt(2.0)) - 1.0);
    const double rms = slit_rms();
    if (fdtd_runs == 0) {
      const auto r = run_unit_cell({0.3e-6, 0.5, 0.5, 0.0, 0.0}, LayerStack::default_bilayer(), Polarization::TE);
      fdtd_energy_error = r.energy_error;
      fdtd_runs = 1;
    }
    return Outcome{waist < 0.01 && rms < 0.02 && fdtd_energy_error < 0.01,
                   fmt("Gaussian radius at the Rayleigh range off by %.3f%% (limit 1%%), slit vs Fresnel RMS %.3f%% "
                       "(limit 2%%), worst FDTD energy error %.3f%% over %d runs (limit 1%%)",
                       100.0 * waist, 100.0 * rms, 100.0 * fdtd_energy_error, fdtd_runs)};
  });

  criterion(12, "end-to-end focus", [&] {
    const auto& b = stage("beam");
    const double bound = stage("solid_angle").at("per_polarization_bound").get<double>();
    const auto& f = b.at("focus_te");
    const double x = f.at("x_um").get<double>(), z = f.at("z_um").get<double>();
    const double te = b.at("eta_te").get<double>(), tm = b.at("eta_tm").get<double>();
    const bool ok = std::abs(x - 28.0) <= 2.0 && std::abs(z - 50.0) <= 2.0 && te <= 0.0109 && tm <= 0.0109 &&
                    te <= bound && tm <= bound;
    return Outcome{ok, fmt("TE focus x %.2f um, z %.2f um (target 28, 50 +/- 2); peak eta TE %.3f%%, TM %.3f%% "
                           "(limit 1.09%%, solid-angle bound %.3f%%)",
                           x, z, 100.0 * te, 100.0 * tm, 100.0 * bound)};
  });

  criterion(13, "non-reproducible references", [&] {
    namespace r = reference;
    const bool ok = r::kProfileEfficiency.value == 4.1e-4 && r::kIonEfficiency.value == 4.3e-4 &&
                    r::kMeasuredCrosstalk.value == -5.3 && r::kFabricationDeltas[0].value == -0.3 &&
                    r::kFabricationDeltas[1].value == -2.9 && r::kFabricationDeltas[2].value == -2.3 &&
                    r::kFabricationDeltas[3].value == -4.7;
    return Outcome{ok, fmt("recorded as labeled constants, not asserted against the model: %.3f%%/%.3f%% measured "
                           "efficiency, %.1f dB measured crosstalk, fabrication deltas %.1f/%.1f/%.1f/%.1f dB",
                           100.0 * r::kProfileEfficiency.value, 100.0 * r::kIonEfficiency.value,
                           r::kMeasuredCrosstalk.value, r::kFabricationDeltas[0].value, r::kFabricationDeltas[1].value,
                           r::kFabricationDeltas[2].value, r::kFabricationDeltas[3].value)};
  });

  int unexpected = 0;
  for (int id : failed)
    if (std::find(known.begin(), known.end(), id) == known.end()) ++unexpected;
  std::printf("%zu of 13 criteria failed (%d not on the known-failure list)\n", failed.size(), unexpected);
  return unexpected ? 1 : 0;
}
