#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "ionpic/constants.hpp"
#include "ionpic/geometry.hpp"

namespace ionpic {

using Vec3 = std::array<double, 3>;
using CVec3 = std::array<std::complex<double>, 3>;

enum class DipoleKind { Pi, SigmaPlus, SigmaMinus };

std::string_view to_string(DipoleKind kind);

inline constexpr std::array<DipoleKind, 3> kAllDipoleKinds{DipoleKind::Pi, DipoleKind::SigmaPlus,
                                                           DipoleKind::SigmaMinus};

/// Branching weight: 1/3 for each of pi, sigma+, sigma-.
constexpr double branching_weight(DipoleKind) { return 1.0 / 3.0; }

struct QuantizationAxis {
  Vec3 direction{0.0, 0.0, 1.0};

  /// Throws InvalidArgument unless |direction| = 1 within 1e-12.
  void validate() const;
  static QuantizationAxis x() { return {{1.0, 0.0, 0.0}}; }
  static QuantizationAxis y() { return {{0.0, 1.0, 0.0}}; }
  static QuantizationAxis z() { return {{0.0, 0.0, 1.0}}; }
};

/// Far-field amplitude in the local spherical basis about the quantization axis.
struct AngularField {
  std::complex<double> e_theta;
  std::complex<double> e_phi;
};

/// pi: (sin t, 0); sigma+-: (cos t, +-i)/sqrt2, both scaled by 1/sqrt(8 pi) so
/// that |E|^2 integrates over the sphere to the branching weight 1/3.
AngularField dipole_field(DipoleKind kind, double theta, double phi);

/// Complex dipole unit vector in the lab frame for the given axis.
CVec3 dipole_vector(DipoleKind kind, const QuantizationAxis& axis);

/// Transverse far-field vector along unit direction k (lab frame), same
/// normalization as dipole_field. Has no component along k.
CVec3 far_field(DipoleKind kind, const QuantizationAxis& axis, const Vec3& k);

/// Grating-frame polarization basis for light travelling along k:
/// TE is the projection of y-hat transverse to k, TM = k x TE.
std::pair<Vec3, Vec3> te_tm_basis(const Vec3& k);

/// Downward vacuum unit vector for a ray with polar angle theta, azimuth phi.
Vec3 downward_direction(double theta, double phi);

struct ApertureDecomposition {
  DipoleKind kind = DipoleKind::Pi;
  double fraction_incident = 0.0;  // of this component's own emission
  double te_fraction = 0.0;
  double tm_fraction = 0.0;

  /// Same quantities as a share of the total ion fluorescence.
  double of_total(double f) const { return branching_weight(kind) * f; }
};

struct ApertureOptions {
  int order = 128;          // Gauss-Legendre points per axis
  int check_order = 192;    // Richardson-style refinement check
  double tolerance = 1e-6;  // absolute, on each fraction
};

/// Integrates each component's intensity over the footprint. Throws
/// ErrorCode::Tolerance when the two quadrature orders disagree.
std::array<ApertureDecomposition, 3> fraction_on_aperture(const QuantizationAxis& axis,
                                                          const GratingFootprint& footprint,
                                                          const IonPose& pose,
                                                          const ApertureOptions& options = {});

/// Share of aperture-incident light carried by sigma+ and sigma-.
double sigma_share(const std::array<ApertureDecomposition, 3>& parts);

struct IntensityProfile {
  std::vector<double> x;      // m
  std::vector<double> value;  // 1/m, unit trapezoid integral over the footprint
};

/// y-integrated aperture-plane intensity versus x (all components, or one
/// grating polarization if requested).
IntensityProfile ion_intensity_profile(const QuantizationAxis& axis,
                                       const GratingFootprint& footprint, const IonPose& pose,
                                       std::size_t n_points,
                                       std::optional<Polarization> pol = std::nullopt);

/// Dipole moment amplitude radiating one watt: sqrt(3 lambda^4 / (4 pi^3 c^3 mu0)).
double unit_power_dipole_norm(double wavelength);

void write_profile_csv(std::ostream& out, const IntensityProfile& profile);
void write_decomposition_csv(std::ostream& out, const std::array<ApertureDecomposition, 3>& parts);

}  // namespace ionpic
