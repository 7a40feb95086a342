#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ionpic/fdtd.hpp"
#include "ionpic/unit_cell.hpp"

namespace ionpic {

/// kappa / (kappa + alpha). Throws UndefinedFigureOfMerit when both are 0.
double figure_of_merit(double kappa, double alpha);

struct SwarmConfig {
  int particles = 24;
  int iterations = 60;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  std::uint64_t seed = 1;
};

/// Objective value with a secondary key compared on exact ties.
struct SwarmScore {
  double value = 0.0;
  double tiebreak = 0.0;
};

struct SwarmResult {
  std::vector<double> best;
  SwarmScore score;
  int evaluations = 0;
  int feasible = 0;
};

/// Objective returning nullopt for an infeasible point (scored as zero).
using SwarmObjective = std::function<std::optional<SwarmScore>(const std::vector<double>&)>;

/// Global-best particle swarm, maximizing. Positions are clamped to the box;
/// velocities to its width. Deterministic for a fixed seed. Throws
/// NoFeasibleParticles if no evaluated point was feasible.
SwarmResult pso_maximize(const SwarmObjective& objective, const std::vector<double>& lower,
                         const std::vector<double>& upper, const SwarmConfig& config);

struct LibraryEntry {
  double angle = 0.0;       // rad, in the cladding
  double delta_frac = 0.0;  // delta / pitch, in [0, 0.5]
  UnitCellParams params;    // params.delta = delta_frac * params.pitch
  double kappa = 0.0;       // 1/m
  double alpha = 0.0;       // 1/m
  double fom = 0.0;
};

struct LibraryConfig {
  std::vector<double> angles{0.0};  // rad
  int delta_points = 6;             // uniform on [0, pitch/2]
  double min_feature = 0.12e-6;
  double duty_min = 0.2;
  double duty_max = 0.8;
  SwarmConfig swarm;
  FdtdOptions fdtd;
  LayerStack stack = LayerStack::default_bilayer();
  Polarization pol = Polarization::TE;
  /// Optimize every (angle, delta) node. When false the delta = 0 optimum
  /// is kept and only re-simulated across the delta grid.
  bool optimize_each_delta = true;
  unsigned jobs = 1;

  std::vector<double> delta_fracs() const;
};

/// Unit cell for the given duty cycles and offset, with the pitch set by the
/// grating equation at `angle` for the grating-region effective index.
UnitCellParams cell_for_angle(const LibraryConfig& config, double angle, double dcu, double dcl, double dx_frac,
                              double delta_frac);

/// Simulates one cell and derives kappa, alpha and the figure of merit.
LibraryEntry evaluate_cell(const LibraryConfig& config, double angle, double delta_frac, const UnitCellParams& params);

/// Search box for (DCU, DCL, dx / pitch): duty cycles limited to what the
/// minimum feature allows at the angle's pitch, collapsing to 0.5 when
/// nothing fits.
std::pair<std::vector<double>, std::vector<double>> swarm_bounds(const LibraryConfig& config, double angle);

/// Swarm search over (DCU, DCL, dx / pitch) for one grid node. The objective
/// is the figure of merit; infeasible geometries score zero; ties go to the
/// larger kappa.
LibraryEntry pso_optimize(const LibraryConfig& config, double angle, double delta_frac, std::uint64_t seed);

struct ParamLibrary {
  std::vector<double> angles;
  std::vector<double> delta_fracs;
  std::vector<LibraryEntry> entries;  // angle-major
  double min_feature = 0.12e-6;
  Polarization pol = Polarization::TE;
  std::string settings;               // JSON text describing how it was built
  std::vector<std::string> failures;  // "key: message" for entries that failed

  bool complete() const { return failures.empty() && entries.size() == angles.size() * delta_fracs.size(); }
  const LibraryEntry& at(std::size_t angle_index, std::size_t delta_index) const;
  double kappa_max() const;
};

/// Content key of one grid node: stack, kernel, swarm and node coordinates.
std::string library_entry_key(const LibraryConfig& config, double angle, double delta_frac);

/// Builds the full grid. Entries found in `cache_path` (JSON lines keyed by
/// library_entry_key) are reused and new ones appended, so an interrupted
/// build resumes. Entry seeds derive from their key, so the result does not
/// depend on job order. Failed entries are listed in `failures`.
ParamLibrary build_library(const LibraryConfig& config, const std::string& cache_path = "");

void save_library(std::ostream& out, const ParamLibrary& library);
ParamLibrary load_library(std::istream& in);
ParamLibrary load_library_file(const std::string& path);

struct Interpolated {
  UnitCellParams params;
  double kappa = 0.0;
  double alpha = 0.0;
  double delta_frac = 0.0;
  bool clamped = false;  // kappa_target exceeded the angle's kappa_max
};

/// Bilinear lookup in (angle, delta): delta is chosen so that kappa(delta)
/// equals min(kappa_target, kappa_max(angle)). Throws Extrapolation outside
/// the angle grid.
Interpolated interpolate(const ParamLibrary& library, double angle, double kappa_target);

}  // namespace ionpic

namespace ionpic {

/// The same cell geometries re-simulated in `config.pol`, indexed by the
/// source library's (angle, delta) grid. Each cell's angular window is
/// centred on its own emission angle for that polarization.
ParamLibrary companion_library(const ParamLibrary& library, const LibraryConfig& config);

/// Bilinear kappa and alpha at a given (angle, delta / pitch). Throws
/// Extrapolation outside the grid.
Interpolated interpolate_at(const ParamLibrary& library, double angle, double delta_frac);

}  // namespace ionpic
