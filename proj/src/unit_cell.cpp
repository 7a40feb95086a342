#include "ionpic/unit_cell.hpp"

#include <algorithm>
#include <cmath>

#include "ionpic/error.hpp"

namespace ionpic {

namespace {
constexpr double kSlack = 1e-12;

bool patterned(double dc) { return dc > 0.0 && dc < 1.0; }
}  // namespace

std::vector<FeatureIssue> feature_check(const UnitCellParams& p, double min_feature) {
  std::vector<FeatureIssue> issues;
  auto check = [&](const char* name, double width) {
    if (width < min_feature - kSlack) issues.push_back({name, width});
  };
  if (patterned(p.dcu)) {
    check("upper tooth", p.dcu * p.pitch);
    check("upper gap", (1.0 - p.dcu) * p.pitch);
  }
  if (patterned(p.dcl)) {
    check("lower tooth", p.dcl * p.pitch);
    check("lower gap", (1.0 - p.dcl) * p.pitch);
  }
  return issues;
}

std::pair<double, double> feasible_duty_range(double pitch, double min_feature) {
  if (!(pitch > 0.0)) fail(ErrorCode::InvalidArgument, "pitch must be > 0");
  const double f = min_feature / pitch;
  return {f, 1.0 - f};
}

LayerStack grating_region_stack(const LayerStack& base, double dcu, double dcl, double gap_index,
                                BilayerIndices layout) {
  if (base.layers.size() <= std::max(layout.lower, layout.upper))
    fail(ErrorCode::InvalidArgument, "stack does not have the bilayer layout");
  LayerStack s = base;
  auto mix = [gap_index](Layer& l, double dc) {
    l.index = std::sqrt(dc * l.index * l.index + (1.0 - dc) * gap_index * gap_index);
  };
  mix(s.layers[layout.upper], dcu);
  mix(s.layers[layout.lower], dcl);
  return s;
}

double grating_pitch(double n_eff, double n_clad, double theta, double wavelength) {
  const double d = n_eff - n_clad * std::sin(theta);
  if (!(d > 0.0)) fail(ErrorCode::InvalidArgument, "grating equation has no first-order solution");
  return wavelength / d;
}

double grating_angle(double pitch, double n_eff, double n_clad, double wavelength) {
  const double s = (n_eff - wavelength / pitch) / n_clad;
  if (std::abs(s) > 1.0) fail(ErrorCode::InvalidArgument, "first order is evanescent in the cladding");
  return std::asin(s);
}

}  // namespace ionpic
