#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ionpic/constants.hpp"

namespace ionpic {

struct Layer {
  std::string name;
  double thickness = 0.0;  // m
  double index = 1.0;
};

/// Chip cross-section around the grating. `layers` are the guiding layers,
/// listed bottom to top (lower grating layer, spacer, upper grating layer);
/// they sit between a semi-infinite substrate and a cladding that is thick
/// compared with the mode tail.
struct LayerStack {
  std::vector<Layer> layers;
  double substrate_index = 1.47;
  double cladding_index = 1.47;
  double wavelength = 422e-9;  // design wavelength, m

  double max_index() const;
  double guiding_thickness() const;
  void validate() const;

  /// Two 100 nm SiN layers around a 90 nm SiO2 spacer. The 422 nm indices
  /// (SiN 2.00, SiO2 1.47) are assumptions; see the config schema.
  static LayerStack default_bilayer();
};

/// Grating aperture: x in [0, x_extent], y in [-y_extent/2, y_extent/2].
struct GratingFootprint {
  double x_extent = 30e-6;
  double y_extent = 30e-6;
};

struct IonPose {
  double x_ion = 28e-6;
  double y_ion = 0.0;
  double height_above_surface = 50e-6;  // vacuum gap
  double cladding_thickness = 5e-6;
  double cladding_index = 1.47;         // set to 1 to ignore refraction

  double z_ion() const { return height_above_surface + cladding_thickness; }
  void validate() const;
};

/// Fundamental slab-mode effective index by transfer-matrix shooting and
/// bisection (tolerance 1e-10). Throws ErrorCode::NoGuidedMode.
double effective_index(const LayerStack& stack, double wavelength, Polarization pol);

/// Transverse mode profile (Ey for TE, Hy for TM) at heights z measured from
/// the bottom of the first guiding layer, normalized to unit peak.
std::vector<double> mode_profile(const LayerStack& stack, double wavelength,
                                 Polarization pol, double n_eff,
                                 const std::vector<double>& z);

double wavelength_in_medium(double wavelength, double n_medium);

/// Horizontal offset on the grating plane reached by a ray leaving the ion at
/// vacuum polar angle theta (refracted once at the cladding surface).
double footprint_offset(const IonPose& pose, double theta_vacuum);

/// Inverse of footprint_offset; returns the vacuum polar angle in [0, pi/2).
double vacuum_angle_for_offset(const IonPose& pose, double rho);

/// Vacuum emission direction from the ion toward footprint point (x, y) and
/// the local solid-angle density dOmega/dA (1/m^2), refraction included.
struct ApertureRay {
  double theta = 0.0;      // vacuum polar angle from the downward vertical
  double phi = 0.0;        // azimuth of the footprint point about the ion
  double domega_da = 0.0;
};
ApertureRay aperture_ray(const IonPose& pose, double x, double y);

/// Solid angle (as a fraction of 4 pi) of the footprint seen from the ion,
/// with rays refracted at the cladding/vacuum interface. The area integral
/// is reduced to an azimuthal one (the polar integral is closed form) and
/// evaluated by adaptive Gauss-Kronrod, well inside 1e-5 absolute.
double solid_angle_fraction(const GratingFootprint& footprint, const IonPose& pose);

struct MonteCarloEstimate {
  double value = 0.0;
  double sigma = 0.0;
};

/// Isotropic ray-tracing estimate of solid_angle_fraction.
MonteCarloEstimate solid_angle_fraction_mc(const GratingFootprint& footprint,
                                           const IonPose& pose, std::uint64_t rays,
                                           std::uint64_t seed);

}  // namespace ionpic
