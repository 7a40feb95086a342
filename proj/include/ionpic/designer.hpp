#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ionpic/dipole.hpp"
#include "ionpic/geometry.hpp"
#include "ionpic/library.hpp"
#include "ionpic/numeric/nelder_mead.hpp"

namespace ionpic {

/// kappa(x) = a x^3 + b x^2 + c x + d + A exp(B x), x in m from the grating
/// start, kappa in 1/m. Valid on [0, length].
struct KappaAnsatz {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0, A = 0.0, B = 0.0;
  double length = 30e-6;

  double operator()(double x) const;
};

/// Cladding-side polar angle of the ray from grating point x to the ion,
/// refracted at the cladding surface. Positive when the ion lies ahead (+x).
double diffraction_angle_at(double x, const IonPose& pose);

/// How the guided power decays under the grating. Literal evaluates
/// kappa(x) exp(-(kappa(x) + alpha(x)) x) pointwise; Integral uses
/// kappa(x) exp(-int_0^x (kappa + alpha)), which conserves power.
enum class EmissionModel { Literal, Integral };

/// Diffracted intensity (1/m) on the samples x; kappa, alpha in 1/m.
std::vector<double> diffracted_intensity(const std::vector<double>& x, const std::vector<double>& kappa,
                                         const std::vector<double>& alpha,
                                         EmissionModel model = EmissionModel::Integral);

/// Guided power left at each sample, exp(-int_0^x (kappa + alpha)).
std::vector<double> guided_power(const std::vector<double>& x, const std::vector<double>& kappa,
                                 const std::vector<double>& alpha);

/// alpha(x, kappa) and kappa_max(x), both in 1/m. Empty functions mean
/// alpha = 0 and no upper bound.
using AlphaModel = std::function<double(double x, double kappa)>;
using KappaLimit = std::function<double(double x)>;

struct FitOptions {
  EmissionModel model = EmissionModel::Integral;
  double penalty = 100.0;  // weight on squared bound violations
  numeric::NelderMeadOptions simplex{1e-10, 1e-12, 40000, 12};
};

struct KappaFit {
  KappaAnsatz ansatz;
  double objective = 0.0;      // sum of squared mismatch, trapezoid-weighted
  double relative_l2 = 0.0;    // ||I_diff - I_ion|| / ||I_ion||
  double literal_l2 = 0.0;     // same, evaluating the literal model
  double residual_power = 0.0; // guided power left at the grating end
  double max_violation = 0.0;  // largest bound violation, 1/m
  bool feasible = true;
  bool depletion_limited = false;  // even kappa_max everywhere leaves > 10%
  int evaluations = 0;
  std::vector<double> trace;   // best objective after each simplex restart
};

/// Least-squares fit of the ansatz to the target on the samples x (uniform,
/// starting at 0). Throws NotConverged if the simplex produces no finite
/// value. Bound violations left after the fit set feasible = false.
KappaFit fit_kappa(const std::vector<double>& x, const std::vector<double>& target,
                   const AlphaModel& alpha = {}, const KappaLimit& kappa_max = {},
                   const KappaAnsatz* init = nullptr, const FitOptions& options = {});

struct TwoStageFit {
  KappaFit ideal;        // alpha = 0, unbounded kappa
  KappaFit constrained;  // library alpha and kappa_max
};

TwoStageFit fit_kappa_two_stage(const std::vector<double>& x, const std::vector<double>& target,
                                const AlphaModel& alpha, const KappaLimit& kappa_max,
                                const FitOptions& options = {});

/// (y, x-offset) pair on a curved tooth line, both in m.
struct CurvePoint {
  double y = 0.0;
  double offset = 0.0;
};

struct ToothSpec {
  int index = 0;
  double x = 0.0;      // tooth start (upper-layer left edge) at y = 0, m
  double pitch = 0.0;  // m
  double dcu = 0.5, dcl = 0.5;
  double dx = 0.0;     // m, lower layer relative to upper
  double delta = 0.0;  // m, zone-B shift
  double angle = 0.0;  // rad, in the cladding
  double kappa_target = 0.0;  // ansatz value at the tooth centre, 1/m
  double kappa = 0.0;         // library value realized, 1/m
  double alpha = 0.0;
  bool clamped = false;
  double power_in = 0.0;  // guided power reaching the tooth
  double emitted = 0.0;   // kappa * pitch * power_in
  std::vector<CurvePoint> curve;
  bool truncated = false;  // curvature root-find failed beyond some |y|
};

/// Tooth-line offset at y, linear between curve samples and held constant
/// beyond them; 0 for a straight tooth.
double tooth_offset(const ToothSpec& tooth, double y);

/// Per-tooth emitted power of the same teeth in the companion library's
/// polarization, marching the guided power with that polarization's kappa
/// and alpha looked up at each tooth's (angle, delta / pitch).
std::vector<double> companion_emission(const std::vector<ToothSpec>& teeth, const ParamLibrary& companion);

/// Marches teeth from x = 0 to the end of the footprint: angle from the ion
/// position, pitch and cell from the library at the ansatz kappa of the tooth
/// centre. Throws Extrapolation outside the library hull and
/// FeatureViolation when a selected cell breaks the feature rule.
std::vector<ToothSpec> discretize(const KappaAnsatz& ansatz, const ParamLibrary& library,
                                  const GratingFootprint& footprint, const IonPose& pose);

/// In-plane phase of the guided light. Cylindrical: a wave diverging from the
/// aperture at (source_x, 0); collimated: a plane wave along x.
struct SlabPhase {
  double source_x = -50e-6;
  double n_slab = 1.6;
  double wavelength = 422e-9;
  bool collimated = false;

  double operator()(double x, double y) const;
};

/// Unwrapped phase sampled on a rectangular grid, row-major in y.
std::vector<double> slab_phase_map(const SlabPhase& phase, const std::vector<double>& x,
                                   const std::vector<double>& y);

/// Optical phase from grating point (x, y) to the focus, through the cladding
/// and vacuum along the Snell-refracted ray. pose.x_ion/y_ion/height give the
/// focus.
double path_phase(double x, double y, const IonPose& focus, double wavelength);

/// For each y, the x-offset of tooth line that keeps slab phase plus path
/// phase equal to its y = 0 value. Bisection to 1e-10 m on +-10 um; samples
/// without a root are dropped from the outermost in and flag truncation.
std::vector<CurvePoint> curve_tooth(double x_tooth, const std::vector<double>& y, const SlabPhase& phase,
                                    const IonPose& focus, bool* truncated = nullptr);

/// Closed-form offset for zero cladding, collimated input and a focus right
/// above the tooth at height z: the root of (n^2 - 1) d^2 - 2 z n d - y^2 = 0
/// with d <= 0.
double flat_curve_offset(double y, double z, double n_slab);

/// Transverse zone period: max(2 min_feature, 0.9 lambda_m), with
/// lambda_m = wavelength / n_grating. Throws FeatureViolation if that is not
/// sub-wavelength.
double zone_period(double wavelength, double n_grating, double min_feature);

/// Stripe edges across the footprint: an integer number of half-periods,
/// centred on y = 0.
std::vector<double> stripe_edges(const GratingFootprint& footprint, double lambda_y);

struct Point2 {
  double x = 0.0, y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct LayoutPolygon {
  int layer = 0;  // 0 lower, 1 upper
  std::vector<Point2> vertices;
  bool operator==(const LayoutPolygon&) const = default;
};

struct GratingLayout {
  std::vector<LayoutPolygon> polygons;
  double lambda_y = 0.0;
  std::string metadata;  // JSON text
  bool operator==(const GratingLayout&) const = default;
};

/// One quadrilateral per (tooth, layer, stripe), vertices snapped to whole
/// nanometres. Even stripes are zone A; odd stripes are zone B and carry the
/// tooth's delta. Throws FeatureViolation on any audit failure.
GratingLayout emit_layout(const std::vector<ToothSpec>& teeth, const std::vector<double>& edges,
                          double lambda_y, double min_feature, const std::string& metadata = "{}");

struct LayoutIssue {
  std::size_t polygon = 0;
  std::string what;
};

/// Simple-polygon check on every polygon, plus minimum width and minimum gap
/// to the next polygon of the same layer and stripe, measured along x.
std::vector<LayoutIssue> audit_layout(const GratingLayout& layout, double min_feature);

/// Polygon table: a "# ionpic-layout" header, "lambda_y_nm", "metadata", and
/// one line per polygon "layer n x0 y0 x1 y1 ..." in integer nanometres.
void export_polygon_table(std::ostream& out, const GratingLayout& layout);
GratingLayout import_polygon_table(std::istream& in);
void export_svg(std::ostream& out, const GratingLayout& layout);

struct DesignConfig {
  GratingFootprint footprint;
  IonPose pose;
  QuantizationAxis axis = QuantizationAxis::z();
  LayerStack stack = LayerStack::default_bilayer();
  std::size_t samples = 512;
  double source_x = -50e-6;
  bool collimated = false;
  FitOptions fit;
};

struct Design {
  std::vector<double> x;        // m
  std::vector<double> i_ion;    // 1/m
  TwoStageFit fit;
  std::vector<double> kappa;    // constrained ansatz, clipped to the bounds
  std::vector<double> alpha;
  std::vector<double> i_diffraction;
  std::vector<double> guided;
  std::vector<ToothSpec> teeth;
  SlabPhase phase;
  double lambda_y = 0.0;
  GratingLayout layout;
};

/// Full longitudinal + transverse design against a library.
Design run_design(const DesignConfig& config, const ParamLibrary& library);

void write_ansatz_csv(std::ostream& out, const Design& design);
void write_tooth_csv(std::ostream& out, const std::vector<ToothSpec>& teeth);

}  // namespace ionpic
