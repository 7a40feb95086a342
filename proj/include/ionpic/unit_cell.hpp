#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ionpic/geometry.hpp"

namespace ionpic {

/// One grating period of the bilayer. Duty cycles of exactly 0 or 1 mean an
/// unpatterned layer. dx shifts the lower teeth relative to the upper ones;
/// delta is the zone-B longitudinal shift of the phase-shift apodization.
struct UnitCellParams {
  double pitch = 0.3e-6;
  double dcu = 0.5;
  double dcl = 0.5;
  double dx = 0.0;
  double delta = 0.0;
};

struct FeatureIssue {
  std::string feature;  // e.g. "upper tooth"
  double width = 0.0;   // m
};

/// Lists every tooth or gap narrower than min_feature (1e-12 m slack).
std::vector<FeatureIssue> feature_check(const UnitCellParams& params, double min_feature);

/// Duty-cycle interval whose tooth and gap both meet min_feature at this
/// pitch. Empty (first > second) when no duty cycle fits.
std::pair<double, double> feasible_duty_range(double pitch, double min_feature);

/// Layer indices of the default bilayer: lower, spacer, upper.
struct BilayerIndices {
  std::size_t lower = 0, spacer = 1, upper = 2;
};

/// The stack with each patterned layer replaced by its period-averaged
/// permittivity (zeroth-order effective medium). Used for the local
/// effective index that sets the pitch.
LayerStack grating_region_stack(const LayerStack& base, double dcu, double dcl,
                                double gap_index, BilayerIndices layout = {});

/// First-order grating equation, pitch * (n_eff - n_clad sin(theta)) = lambda,
/// with theta in the cladding, positive for forward emission.
double grating_pitch(double n_eff, double n_clad, double theta, double wavelength);
double grating_angle(double pitch, double n_eff, double n_clad, double wavelength);

}  // namespace ionpic
