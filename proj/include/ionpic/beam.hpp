#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "ionpic/constants.hpp"
#include "ionpic/designer.hpp"

namespace ionpic {

/// Complex scalar field on a uniform (x, y) grid, row-major with x fastest.
/// z is the height above the chip surface (the grating plane sits at minus
/// the cladding thickness). Power is sum |E|^2 s^2.
struct FieldGrid {
  std::size_t nx = 0, ny = 0;
  double step = 0.1e-6;  // pixel size s, m
  double x0 = 0.0, y0 = 0.0;
  double z = 0.0;
  double wavelength = 422e-9;
  Polarization pol = Polarization::TE;
  bool normalized = false;
  bool intensity_only = false;  // phase-free data: |data|^2 is the intensity
  std::vector<std::complex<double>> data;

  FieldGrid() = default;
  FieldGrid(std::size_t nx, std::size_t ny, double step, double x0, double y0);

  double x(std::size_t i) const { return x0 + step * static_cast<double>(i); }
  double y(std::size_t j) const { return y0 + step * static_cast<double>(j); }
  std::complex<double>& at(std::size_t i, std::size_t j) { return data[j * nx + i]; }
  const std::complex<double>& at(std::size_t i, std::size_t j) const { return data[j * nx + i]; }
  double power() const;

  /// Scales to unit power and sets `normalized`. Throws Normalization on a
  /// zero field.
  void normalize();
};

/// Grid for the synthesized near field: 640 x 640 at 0.1 um, x from -17 um,
/// y centred.
struct NearFieldOptions {
  std::size_t nx = 640, ny = 640;
  double step = 0.1e-6;
  double x0 = -17e-6;
};

/// First-order emitted field of a curved grating at the grating plane. Tooth
/// i carries intensity power[i] / (pitch_i * width), uniform across |y| <
/// width / 2, and phase phase(x, y) - 2 pi (i + f), f the fractional
/// position between the curved tooth lines. `power` defaults to each tooth's
/// `emitted`. Throws Normalization if nothing is emitted.
FieldGrid synthesize_near_field(const std::vector<ToothSpec>& teeth, const SlabPhase& phase, double width,
                                double z_grating, Polarization pol, const NearFieldOptions& options = {},
                                const std::vector<double>* power = nullptr);

/// Layered medium between the grating and vacuum.
struct Cladding {
  double thickness = 5e-6;
  double index = 1.47;
};

/// Spectrum-domain view of a field, for repeated propagation from one plane.
class AngularSpectrum {
 public:
  explicit AngularSpectrum(const FieldGrid& field);

  /// Field at height z (above the chip surface) given that the source plane
  /// lies at field.z. Below z = 0 the medium is the cladding, above it
  /// vacuum; Fresnel reflection at the surface is neglected. Evanescent
  /// components decay going forward and are dropped going backward. Throws
  /// Aliasing when more than 1% of the power lands within two pixels of the
  /// grid edge.
  FieldGrid at(double z, const Cladding& cladding = {0.0, 1.0}) const;

  /// Ex, Ey, Ez at height z. Each plane wave carries the TE (y projected
  /// transverse to k) or TM (k x TE) polarization of the source's tag.
  std::array<FieldGrid, 3> vector_at(double z, const Cladding& cladding = {0.0, 1.0}) const;

  double propagating_power() const;

 private:
  FieldGrid source_;
  std::vector<std::complex<double>> spectrum_;
};

/// Propagation by dz through a uniform medium of the given index.
FieldGrid angular_spectrum_propagate(const FieldGrid& field, double dz, double index = 1.0);

struct CrossSection {
  std::vector<double> intensity;  // I_g, 1/m^2, sum I_g s^2 = 1
  double i_max = 0.0;             // 1/m^2
  double pixel_fraction = 0.0;    // I_max s^2, unitless
  std::size_t ix = 0, iy = 0;
  double x = 0.0, y = 0.0;
};

/// Throws Normalization on a zero field.
CrossSection beam_cross_section(const FieldGrid& field);

struct Focus {
  double x = 0.0, y = 0.0, z = 0.0;
  double intensity = 0.0;  // |E|^2 at the maximum, 1/m^2 for the field's power
};

/// Brightest point over heights in [z_lo, z_hi]: scan at dz, then refine by
/// golden section to 0.01 um.
Focus find_focus(const AngularSpectrum& spectrum, double z_lo, double z_hi, double dz, const Cladding& cladding);

/// CSV pair: <base>.re.csv and <base>.im.csv, each a "# ionpic-field" header
/// line followed by ny rows of nx values (%.17g). Intensity-only grids write
/// <base>.intensity.csv holding |E|^2.
void save_field(const FieldGrid& field, const std::string& base);
FieldGrid load_field(const std::string& base);

/// 8-bit grayscale PGM of |E|^2 scaled to its maximum.
void save_intensity_pgm(const FieldGrid& field, const std::string& path);

}  // namespace ionpic
