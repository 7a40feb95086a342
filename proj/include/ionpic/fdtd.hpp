#pragma once

#include <complex>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ionpic/constants.hpp"
#include "ionpic/geometry.hpp"
#include "ionpic/unit_cell.hpp"

namespace ionpic {

using Complex = std::complex<double>;

/// Yee grid in the x-z plane. Lengths are in cells and time in cells/c
/// internally; `cell` converts to meters.
struct SimulationGrid {
  int nx = 0;
  int nz = 0;
  double cell = 10e-9;  // m
  int pml = 12;         // absorbing cells on every side
};

/// Cell-averaged relative permittivity for the components a polarization
/// uses. TE needs the out-of-plane E (eps_y); TM needs the in-plane E
/// (eps_x on Ex nodes, eps_z on Ez nodes).
struct MaterialMap {
  SimulationGrid grid;
  Polarization pol = Polarization::TE;
  std::vector<double> eps_y, eps_x, eps_z;
};

/// Index as a function of position in meters; (0, 0) is node (0, 0).
using IndexFunction = std::function<double(double x, double z)>;

/// Samples `index` on a 4x4 sub-grid per cell. Components tangential to an
/// interface take the arithmetic mean of eps, normal ones the harmonic mean.
MaterialMap build_material_map(const SimulationGrid& grid, Polarization pol, const IndexFunction& index);

/// Single-frequency 2D FDTD engine with split-field graded PML. The
/// out-of-plane field (Ey for TE, Hy for TM) carries the sources. Phasors
/// follow F(t) = Re(F e^{-i w t}) and are taken over one full period, which
/// is exact because a period is an integer number of steps.
class Fdtd2d {
 public:
  Fdtd2d(MaterialMap materials, double wavelength, double pml_reflection = 1e-8);
  ~Fdtd2d();
  Fdtd2d(Fdtd2d&&) noexcept;
  Fdtd2d& operator=(Fdtd2d&&) noexcept;

  int steps_per_period() const;
  double dt() const;  // cells / c
  const SimulationGrid& grid() const;

  /// Soft CW source on the out-of-plane field along column i, rows k0.. .
  void add_line_source(int i, int k0, std::vector<double> profile);
  void add_point_source(int i, int k, double amplitude = 1.0);

  /// Advances one optical period. `ramp_periods` sets the raised-cosine
  /// turn-on of all sources.
  void run_period(double ramp_periods = 5.0);
  int periods_run() const;

  /// Phasors of the last complete period, co-located at out-of-plane nodes.
  /// For a vertical line at column i over rows [k0, k1): out-of-plane field
  /// and the in-plane fields interpolated to those nodes.
  struct LinePhasors {
    std::vector<Complex> f;   // Ey (TE) or Hy (TM)
    std::vector<Complex> gx;  // Hx (TE) or Ex (TM)
    std::vector<Complex> gz;  // Hz (TE) or Ez (TM)
  };
  void watch_column(int i, int k0, int k1);
  void watch_row(int k, int i0, int i1);
  LinePhasors column(std::size_t which) const;
  LinePhasors row(std::size_t which) const;
  Complex point(int i, int k) const;  // out-of-plane phasor, needs watch_point
  void watch_point(int i, int k);

  /// Time-averaged Poynting flux through a watched line (per unit y, in
  /// internal units): +x for columns, +z for rows.
  static double flux_x(const LinePhasors& p, Polarization pol);
  static double flux_z(const LinePhasors& p, Polarization pol);

  /// Out-of-plane field snapshot (for material/field CSV export).
  std::vector<double> field_snapshot() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct FdtdOptions {
  double cells_per_wavelength = 20.0;  // cell = lambda / (this * n_max)
  double cell = 0.0;                   // explicit cell size in m, overrides the above
  int pml_cells = 12;
  int n_periods = 8;                   // grating periods simulated
  double target_angle = 0.0;           // rad in the cladding, centers the P_D window
  double window_half_width = deg_to_rad(20.0);
  double convergence = 1e-3;           // relative power change per optical period
  int max_periods = 800;
  double lead_in = 0.7e-6;             // guide length before the teeth
  double lead_out = 0.8e-6;            // guide length after the teeth
  double monitor_gap = 0.45e-6;        // top/bottom monitor distance from the layers
  double pml_gap = 0.15e-6;            // monitor to PML spacing
  double min_feature_cells = 4.0;
  bool lower_layer_removed = false;    // single-layer comparison case
  bool subtract_reference = true;
  BilayerIndices layout{};
  double gap_index = 1.47;             // etched-gap fill (SiO2)
};

struct AngleSpectrum {
  std::vector<double> angle;  // rad, in the monitor medium
  std::vector<double> power;  // power per radian, same units as the flux
  double total = 0.0;         // integral over all propagating angles
  double edge_fraction = 0.0; // share of |field|^2 in the outer 5% of the monitor
  bool truncated = false;     // edge_fraction > 5%
};

/// Plane-wave decomposition of an upward-travelling monitor phasor.
/// `step` and `k0` share a length unit; n is the monitor medium index.
AngleSpectrum far_field_angle_spectrum(const std::vector<Complex>& field, double step, double k0,
                                       double n, Polarization pol, int n_angles = 1441);

/// Power inside [center - half, center + half] of a spectrum.
double window_power(const AngleSpectrum& s, double center, double half_width);

struct CellResult {
  double p_in = 1.0;          // all powers normalized to the launched mode
  double p_t = 0.0;           // lost from the forward guided mode over length
  double p_d = 0.0;           // upward power inside the angular window
  double p_up = 0.0;          // all upward power
  double p_down = 0.0;
  double p_reflected = 0.0;
  double p_transmitted = 0.0; // remaining in the forward guided mode
  double p_forward_total = 0.0;
  double length = 0.0;        // m
  double peak_angle = 0.0;    // rad, in the cladding
  double energy_error = 0.0;  // |P_in - sum of outputs| / P_in
  double cell = 0.0;
  int periods = 0;            // optical periods simulated
  bool truncation_warning = false;
  AngleSpectrum spectrum;
};

/// Simulates n_periods of the grating between unpatterned input and output
/// guides, launching the fundamental mode from the left.
CellResult run_unit_cell(const UnitCellParams& params, const LayerStack& stack, Polarization pol,
                         const FdtdOptions& options = {});

/// The index map run_unit_cell simulates, on the same grid.
MaterialMap unit_cell_material(const UnitCellParams& params, const LayerStack& stack, Polarization pol,
                               const FdtdOptions& options = {});

struct KappaAlpha {
  double kappa = 0.0;  // 1/m
  double alpha = 0.0;  // 1/m
};

KappaAlpha extract_kappa_alpha(const CellResult& result);

/// P_D / (P_D + P_down).
double directivity(const CellResult& result);

void write_material_csv(std::ostream& out, const MaterialMap& map, double z_offset = 0.0);
void write_cell_result(std::ostream& out, const CellResult& result);

/// Drops cached reference (no-grating) runs.
void clear_reference_cache();

}  // namespace ionpic
