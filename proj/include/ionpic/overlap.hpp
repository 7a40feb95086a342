#pragma once

#include <array>
#include <complex>
#include <string>
#include <string_view>
#include <vector>

#include "ionpic/beam.hpp"
#include "ionpic/dipole.hpp"

namespace ionpic {

/// |p.E|^2 for sigma light split between two guided modes: the 2/3 sigma
/// share times 1/2 for one of the two polarizations.
inline constexpr double kSigmaProjection = (2.0 / 3.0) * 0.5;

/// eta = omega^2 |p . conj(E_g)|^2 / 16, p in A m s / sqrt(W) (scaled by
/// unit_power_dipole_norm), E_g in V / (m sqrt(W)) for unit input power.
double coupling_field_overlap(const CVec3& p, const CVec3& e_g, double wavelength);

/// E_g = sqrt(2 c mu0 I_g), I_g in 1/m^2.
double field_amplitude_from_intensity(double i_g);

/// eta = lambda^2 I_max / (4 pi s^2), I_max the unitless brightest-pixel share
/// of a combined, unit-power TE+TM profile. Throws Normalization unless
/// 0 <= I_max <= 1.
double efficiency_from_intensity(double i_max, double step, double wavelength);

/// w_te * |TE|^2 + (1 - w_te) * |TM|^2 after normalizing each to unit power;
/// w_te = 1/2 is the equal-weight combination. The result is intensity-only.
FieldGrid combine_profiles(const FieldGrid& te, const FieldGrid& tm, double w_te = 0.5);

/// Vector field of one grating polarization at the ion plane, in sqrt(1/m^2)
/// per sqrt(W) of that field's power.
using VectorField = std::array<FieldGrid, 3>;

/// Field-overlap coupling at pixel (i, j) for one dipole component, unit-power dipole.
double pixel_coupling(const VectorField& field, std::size_t i, std::size_t j, DipoleKind kind,
                      const QuantizationAxis& axis);

/// The same with receiver and source swapped: |E_g . conj(p)|^2.
double pixel_coupling_reciprocal(const VectorField& field, std::size_t i, std::size_t j, DipoleKind kind,
                                 const QuantizationAxis& axis);

struct CollectionMap {
  std::size_t nx = 0, ny = 0;
  double x0 = 0.0, y0 = 0.0, step = 0.0;
  Polarization pol = Polarization::TE;
  std::array<std::vector<double>, 3> component;  // per DipoleKind, branching weight applied
  std::vector<double> eta;                       // sum over components
  double eta_max = 0.0;
  double x_max = 0.0, y_max = 0.0;

  double x(std::size_t i) const { return x0 + step * static_cast<double>(i); }
  double y(std::size_t j) const { return y0 + step * static_cast<double>(j); }
};

/// Field-overlap coupling over a raster of ion positions (every `stride`-th pixel of the field
/// grid inside [x_lo, x_hi] x [y_lo, y_hi]). Throws InvalidArgument when the
/// raster leaves the grid.
CollectionMap collection_map(const VectorField& field, const QuantizationAxis& axis, double x_lo, double x_hi,
                             double y_lo, double y_hi, std::size_t stride = 1);

struct CrosstalkReport {
  double power_ratio = 0.0;     // total TM / total TE over the maps
  double suppression_db = 0.0;  // 10 log10(TM / TE) at the TE maximum
  double offset = 0.0;          // distance between the two maxima, m
};

/// Throws Normalization when the TE map carries no power.
CrosstalkReport crosstalk_metrics(const CollectionMap& te, const CollectionMap& tm);

/// The map scaled by the field's share of the input power, for comparing
/// polarizations on an absolute scale.
CollectionMap scaled_map(const CollectionMap& map, double power);

/// <base>.csv holds eta on the raster (ny rows of nx values, %.17g);
/// <base>.json the grid, polarization, maximum and per-component maxima.
void write_map(const CollectionMap& map, const std::string& base);

/// Measured-device and fabrication values, kept as labeled reference data.
namespace reference {

struct Constant {
  std::string_view label;
  double value;
  std::string_view unit;
};

inline constexpr Constant kProfileEfficiency{"efficiency from imaged emission profile", 4.1e-4, "fraction"};
inline constexpr Constant kIonEfficiency{"single-mode efficiency measured with the ion", 4.3e-4, "fraction"};
inline constexpr Constant kMeasuredCrosstalk{"measured TM crosstalk at TE maximum", -5.3, "dB"};
inline constexpr Constant kDesignedPowerRatio{"designed TM/TE diffracted power ratio", 0.12, "ratio"};
inline constexpr Constant kDesignedSuppression{"designed TM suppression at TE maximum", -13.0, "dB"};
inline constexpr Constant kDesignedOffset{"designed TE/TM focus offset", 0.3e-6, "m"};
inline constexpr Constant kSimulatedCoupling{"3D FDTD designed coupling", 6.7e-3, "fraction"};
inline constexpr std::array<Constant, 4> kFabricationDeltas{{
    {"fabrication delta: ITO surface film", -0.3, "dB"},
    {"fabrication delta: surface divot", -2.9, "dB"},
    {"fabrication delta: triangular tooth deformation", -2.3, "dB"},
    {"fabrication delta: ellipsoidal tooth deformation", -4.7, "dB"},
}};

}  // namespace reference

}  // namespace ionpic
