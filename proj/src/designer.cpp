#include "ionpic/designer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ionpic/error.hpp"
#include "ionpic/unit_cell.hpp"

namespace ionpic {

double KappaAnsatz::operator()(double x) const {
  return ((a * x + b) * x + c) * x + d + A * std::exp(B * x);
}

double diffraction_angle_at(double x, const IonPose& pose) {
  const double rho = pose.x_ion - x;
  const double theta_v = vacuum_angle_for_offset(pose, std::abs(rho));
  const double theta_c = std::asin(std::sin(theta_v) / pose.cladding_index);
  return rho < 0.0 ? -theta_c : theta_c;
}

std::vector<double> guided_power(const std::vector<double>& x, const std::vector<double>& kappa,
                                 const std::vector<double>& alpha) {
  std::vector<double> p(x.size(), 1.0);
  double g = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double lo = kappa[i - 1] + (alpha.empty() ? 0.0 : alpha[i - 1]);
    const double hi = kappa[i] + (alpha.empty() ? 0.0 : alpha[i]);
    g += 0.5 * (lo + hi) * (x[i] - x[i - 1]);
    p[i] = std::exp(-g);
  }
  return p;
}

std::vector<double> diffracted_intensity(const std::vector<double>& x, const std::vector<double>& kappa,
                                         const std::vector<double>& alpha, EmissionModel model) {
  if (kappa.size() != x.size() || (!alpha.empty() && alpha.size() != x.size()))
    fail(ErrorCode::InvalidArgument, "diffracted_intensity: size mismatch");
  std::vector<double> out(x.size());
  if (model == EmissionModel::Literal) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double al = alpha.empty() ? 0.0 : alpha[i];
      out[i] = kappa[i] * std::exp(-(kappa[i] + al) * x[i]);
    }
    return out;
  }
  const auto p = guided_power(x, kappa, alpha);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = kappa[i] * p[i];
  return out;
}

namespace {

double trapz_weight(std::size_t i, std::size_t n, double h) {
  return (i == 0 || i + 1 == n) ? 0.5 * h : h;
}

// Work in normalized units: u = x / L, kappa and intensity times L. The
// coefficient vector is (a, b, c, d, A, B) of the ansatz in u.
struct Problem {
  std::vector<double> x;       // m
  std::vector<double> target;  // times L
  std::vector<double> kmax;    // times L, inf when unbounded
  AlphaModel alpha;
  double length = 0.0;
  FitOptions options;

  std::size_t n() const { return x.size(); }

  double kappa_u(const std::vector<double>& p, double u) const {
    return ((p[0] * u + p[1]) * u + p[2]) * u + p[3] + p[4] * std::exp(p[5] * u);
  }

  struct Eval {
    double mismatch = 0.0, penalty = 0.0, max_violation = 0.0;
    std::vector<double> kappa, alpha, intensity;
  };

  Eval evaluate(const std::vector<double>& p, EmissionModel model, bool keep) const {
    const std::size_t m = n();
    const double h = 1.0 / static_cast<double>(m - 1);
    Eval e;
    e.kappa.resize(m);
    e.alpha.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double k = kappa_u(p, static_cast<double>(i) * h);
      const double over = std::max(0.0, k - kmax[i]), under = std::max(0.0, -k);
      const double w = trapz_weight(i, m, h);
      e.penalty += w * (over * over + under * under);
      e.max_violation = std::max(e.max_violation, std::max(over, under));
      e.kappa[i] = std::clamp(k, 0.0, kmax[i]);
      if (alpha) e.alpha[i] = alpha(x[i], e.kappa[i] / length) * length;
    }
    std::vector<double> u(m);
    for (std::size_t i = 0; i < m; ++i) u[i] = static_cast<double>(i) * h;
    e.intensity = diffracted_intensity(u, e.kappa, e.alpha, model);
    for (std::size_t i = 0; i < m; ++i) {
      const double r = e.intensity[i] - target[i];
      e.mismatch += trapz_weight(i, m, h) * r * r;
    }
    if (!keep) {
      e.kappa.clear();
      e.alpha.clear();
      e.intensity.clear();
    }
    return e;
  }

  double objective(const std::vector<double>& p) const {
    const auto e = evaluate(p, options.model, false);
    return e.mismatch + options.penalty * e.penalty;
  }
};

KappaAnsatz to_ansatz(const std::vector<double>& p, double L) {
  KappaAnsatz k;
  k.a = p[0] / (L * L * L * L);
  k.b = p[1] / (L * L * L);
  k.c = p[2] / (L * L);
  k.d = p[3] / L;
  k.A = p[4] / L;
  k.B = p[5] / L;
  k.length = L;
  return k;
}

std::vector<double> from_ansatz(const KappaAnsatz& k, double L) {
  return {k.a * L * L * L * L, k.b * L * L * L, k.c * L * L, k.d * L, k.A * L, k.B * L};
}

// Starting point: least-squares match of the ansatz to the kappa that would
// reproduce the target exactly with alpha = 0, over the part of the grating
// where that kappa is still finite.
std::vector<double> initial_guess(const Problem& pr) {
  const std::size_t m = pr.n();
  const double h = 1.0 / static_cast<double>(m - 1);
  std::vector<double> ideal(m, 0.0), w(m, 0.0);
  double emitted = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i > 0) emitted += 0.5 * h * (pr.target[i - 1] + pr.target[i]);
    const double left = 1.0 - emitted;
    if (left > 0.05) {
      ideal[i] = std::min(pr.target[i] / left, pr.kmax[i]);
      w[i] = trapz_weight(i, m, h);
    }
  }
  auto misfit = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (w[i] == 0.0) continue;
      const double r = pr.kappa_u(p, static_cast<double>(i) * h) - ideal[i];
      s += w[i] * r * r;
    }
    return s;
  };
  double scale = 0.0;
  for (double v : ideal) scale = std::max(scale, v);
  scale = std::max(scale, 1e-3);
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (double b0 : {1.0, 3.0, 6.0}) {
    std::vector<double> start{0.0, 0.0, 0.0, ideal[0], 0.01 * scale, b0};
    const auto r = numeric::nelder_mead(misfit, start, {0.1 * scale, 0.1 * scale, 0.1 * scale, 0.1 * scale,
                                                        0.01 * scale, 0.5},
                                        {1e-14, 1e-12, 8000, 4});
    if (r.value < best_value) {
      best_value = r.value;
      best = r.x;
    }
  }
  return best;
}

}  // namespace

KappaFit fit_kappa(const std::vector<double>& x, const std::vector<double>& target, const AlphaModel& alpha,
                   const KappaLimit& kappa_max, const KappaAnsatz* init, const FitOptions& options) {
  const std::size_t m = x.size();
  if (m < 8 || target.size() != m) fail(ErrorCode::InvalidArgument, "fit_kappa: need >= 8 matching samples");
  if (x.front() != 0.0) fail(ErrorCode::InvalidArgument, "fit_kappa: samples must start at x = 0");
  const double L = x.back();
  if (!(L > 0.0)) fail(ErrorCode::InvalidArgument, "fit_kappa: empty domain");

  Problem pr;
  pr.x = x;
  pr.length = L;
  pr.alpha = alpha;
  pr.options = options;
  pr.target.resize(m);
  pr.kmax.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(target[i] >= 0.0)) fail(ErrorCode::InvalidArgument, "fit_kappa: target must be >= 0");
    pr.target[i] = target[i] * L;
    pr.kmax[i] = kappa_max ? kappa_max(x[i]) * L : std::numeric_limits<double>::infinity();
  }

  std::vector<double> start = init ? from_ansatz(*init, L) : initial_guess(pr);
  double scale = 0.0;
  for (double v : pr.target) scale = std::max(scale, v);
  std::vector<double> step(6);
  for (int i = 0; i < 5; ++i) step[i] = 0.05 * std::max(scale, std::abs(start[i]));
  step[5] = 0.2;

  auto f = [&](const std::vector<double>& p) { return pr.objective(p); };
  const auto r = numeric::nelder_mead(f, start, step, options.simplex);
  if (!std::isfinite(r.value) || r.value == std::numeric_limits<double>::max()) {
    std::ostringstream msg;
    msg << "kappa fit diverged; trace:";
    for (double t : r.trace) msg << ' ' << t;
    fail(ErrorCode::NotConverged, msg.str());
  }

  KappaFit fit;
  fit.ansatz = to_ansatz(r.x, L);
  fit.objective = r.value / L;
  fit.evaluations = r.evaluations;
  fit.trace = r.trace;
  const auto e = pr.evaluate(r.x, options.model, true);
  const auto lit = pr.evaluate(r.x, EmissionModel::Literal, true);
  const auto integral = pr.evaluate(r.x, EmissionModel::Integral, true);
  double norm = 0.0;
  const double h = 1.0 / static_cast<double>(m - 1);
  for (std::size_t i = 0; i < m; ++i) norm += trapz_weight(i, m, h) * pr.target[i] * pr.target[i];
  fit.relative_l2 = std::sqrt(e.mismatch / norm);
  fit.literal_l2 = std::sqrt(lit.mismatch / norm);
  std::vector<double> u(m);
  for (std::size_t i = 0; i < m; ++i) u[i] = static_cast<double>(i) * h;
  fit.residual_power = guided_power(u, integral.kappa, integral.alpha).back();
  fit.max_violation = e.max_violation / L;
  double kscale = 0.0;
  for (double v : e.kappa) kscale = std::max(kscale, v);
  fit.feasible = e.max_violation <= 1e-3 * std::max(kscale, 1e-12);
  double reach = 0.0;
  for (std::size_t i = 0; i < m; ++i) reach += trapz_weight(i, m, h) * pr.kmax[i];
  fit.depletion_limited = std::exp(-reach) > 0.1;
  return fit;
}

TwoStageFit fit_kappa_two_stage(const std::vector<double>& x, const std::vector<double>& target,
                                const AlphaModel& alpha, const KappaLimit& kappa_max, const FitOptions& options) {
  TwoStageFit out;
  out.ideal = fit_kappa(x, target, {}, {}, nullptr, options);
  out.constrained = fit_kappa(x, target, alpha, kappa_max, &out.ideal.ansatz, options);
  // The ideal optimum can sit in a poor basin once bounds apply; keep the
  // better of a warm and a cold start.
  const auto cold = fit_kappa(x, target, alpha, kappa_max, nullptr, options);
  if (cold.objective < out.constrained.objective) out.constrained = cold;
  return out;
}

std::vector<ToothSpec> discretize(const KappaAnsatz& ansatz, const ParamLibrary& library,
                                  const GratingFootprint& footprint, const IonPose& pose) {
  std::vector<ToothSpec> teeth;
  const double L = footprint.x_extent;
  double x = 0.0, power = 1.0;
  while (true) {
    const auto first = interpolate(library, diffraction_angle_at(x, pose), 0.0);
    const double guess = first.params.pitch;
    if (x + guess > L * (1.0 + 1e-12)) break;
    ToothSpec t;
    t.index = static_cast<int>(teeth.size());
    t.x = x;
    const double centre = x + 0.5 * guess;
    t.angle = diffraction_angle_at(centre, pose);
    t.kappa_target = std::max(0.0, ansatz(centre));
    const auto cell = interpolate(library, t.angle, t.kappa_target);
    t.pitch = cell.params.pitch;
    t.dcu = cell.params.dcu;
    t.dcl = cell.params.dcl;
    t.dx = cell.params.dx;
    t.delta = cell.delta_frac * t.pitch;
    t.kappa = cell.kappa;
    t.alpha = cell.alpha;
    t.clamped = cell.clamped;
    UnitCellParams p{t.pitch, t.dcu, t.dcl, t.dx, t.delta};
    const auto issues = feature_check(p, library.min_feature);
    if (!issues.empty())
      fail(ErrorCode::FeatureViolation, "tooth " + std::to_string(t.index) + ": " + issues.front().feature + " " +
                                            std::to_string(issues.front().width * 1e9) + " nm");
    t.power_in = power;
    t.emitted = t.kappa * t.pitch * power;
    power *= std::exp(-(t.kappa + t.alpha) * t.pitch);
    x += t.pitch;
    teeth.push_back(std::move(t));
  }
  return teeth;
}

std::vector<double> companion_emission(const std::vector<ToothSpec>& teeth, const ParamLibrary& companion) {
  std::vector<double> out;
  out.reserve(teeth.size());
  double power = 1.0;
  for (const auto& t : teeth) {
    const double df = std::clamp(t.delta / t.pitch, companion.delta_fracs.front(), companion.delta_fracs.back());
    const auto cell = interpolate_at(companion, t.angle, df);
    out.push_back(cell.kappa * t.pitch * power);
    power *= std::exp(-(cell.kappa + cell.alpha) * t.pitch);
  }
  return out;
}

double SlabPhase::operator()(double x, double y) const {
  const double k = 2.0 * kPi * n_slab / wavelength;
  if (collimated) return k * (x - source_x);
  return k * std::hypot(x - source_x, y);
}

std::vector<double> slab_phase_map(const SlabPhase& phase, const std::vector<double>& x,
                                   const std::vector<double>& y) {
  std::vector<double> out;
  out.reserve(x.size() * y.size());
  for (double yy : y)
    for (double xx : x) out.push_back(phase(xx, yy));
  return out;
}

double path_phase(double x, double y, const IonPose& f, double wavelength) {
  const double rho = std::hypot(f.x_ion - x, f.y_ion - y);
  const double tv = vacuum_angle_for_offset(f, rho);
  const double sc = std::sin(tv) / f.cladding_index;
  const double cc = std::sqrt(1.0 - sc * sc);
  const double opl = f.cladding_index * f.cladding_thickness / cc + f.height_above_surface / std::cos(tv);
  return 2.0 * kPi * opl / wavelength;
}

std::vector<CurvePoint> curve_tooth(double x_tooth, const std::vector<double>& y, const SlabPhase& phase,
                                    const IonPose& focus, bool* truncated) {
  auto total = [&](double d, double yy) {
    return phase(x_tooth + d, yy) + path_phase(x_tooth + d, yy, focus, phase.wavelength);
  };
  const double goal = total(0.0, 0.0);
  const double span = 10e-6;
  std::vector<CurvePoint> out;
  bool cut = false;
  for (double yy : y) {
    double lo = -span, hi = span;
    double flo = total(lo, yy) - goal, fhi = total(hi, yy) - goal;
    if (flo * fhi > 0.0) {
      cut = true;
      continue;
    }
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      const double fm = total(mid, yy) - goal;
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    out.push_back({yy, 0.5 * (lo + hi)});
  }
  if (truncated) *truncated = cut;
  return out;
}

double flat_curve_offset(double y, double z, double n) {
  const double q = n * n - 1.0;
  if (std::abs(q) < 1e-12) return -y * y / (2.0 * z);
  return (z * n - std::sqrt(z * z * n * n + q * y * y)) / q;
}

double zone_period(double wavelength, double n_grating, double min_feature) {
  const double lambda_m = wavelength / n_grating;
  const double period = std::max(2.0 * min_feature, 0.9 * lambda_m);
  if (period >= lambda_m)
    fail(ErrorCode::FeatureViolation, "zone period " + std::to_string(period * 1e9) +
                                          " nm is not below the guided wavelength " +
                                          std::to_string(lambda_m * 1e9) + " nm");
  return period;
}

std::vector<double> stripe_edges(const GratingFootprint& fp, double lambda_y) {
  const double half = 0.5 * lambda_y;
  const auto n = static_cast<std::size_t>(std::floor(fp.y_extent / half + 1e-9));
  std::vector<double> edges(n + 1);
  const double y0 = -0.5 * static_cast<double>(n) * half;
  for (std::size_t j = 0; j <= n; ++j) edges[j] = y0 + static_cast<double>(j) * half;
  return edges;
}

namespace {

double snap_nm(double v) { return std::round(v * 1e9) * 1e-9; }

double offset_at(const std::vector<CurvePoint>& curve, double y) {
  if (curve.empty()) return 0.0;
  auto it = std::lower_bound(curve.begin(), curve.end(), y,
                             [](const CurvePoint& c, double v) { return c.y < v; });
  if (it != curve.end() && std::abs(it->y - y) < 1e-15) return it->offset;
  if (it == curve.begin()) return it->offset;
  if (it == curve.end()) return curve.back().offset;
  const auto& a = *(it - 1);
  const auto& b = *it;
  return a.offset + (b.offset - a.offset) * (y - a.y) / (b.y - a.y);
}

}  // namespace

double tooth_offset(const ToothSpec& tooth, double y) { return offset_at(tooth.curve, y); }

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_cross(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2) {
  const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

bool is_simple(const std::vector<Point2>& v) {
  const std::size_t n = v.size();
  if (n < 3) return false;
  double area = 0.0;
  for (std::size_t i = 0; i < n; ++i) area += cross({0, 0}, v[i], v[(i + 1) % n]);
  if (std::abs(area) < 1e-30) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j + 1 == n) continue;
      if (segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
    }
  return true;
}

}  // namespace

GratingLayout emit_layout(const std::vector<ToothSpec>& teeth, const std::vector<double>& edges, double lambda_y,
                          double min_feature, const std::string& metadata) {
  GratingLayout layout;
  layout.lambda_y = snap_nm(lambda_y);
  layout.metadata = metadata;
  if (edges.size() < 2) return layout;
  // Polygons are ordered layer, stripe, tooth so that neighbours along x
  // are adjacent in the list.
  for (int layer = 0; layer < 2; ++layer)
    for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
      const bool zone_b = j % 2 == 1;
      for (const auto& t : teeth) {
        const double dc = layer == 1 ? t.dcu : t.dcl;
        if (dc <= 0.0) continue;
        const double shift = (layer == 0 ? t.dx : 0.0) + (zone_b ? t.delta : 0.0);
        const double w = dc >= 1.0 ? t.pitch : dc * t.pitch;
        const double y0 = edges[j], y1 = edges[j + 1];
        const double x0 = t.x + shift + offset_at(t.curve, y0);
        const double x1 = t.x + shift + offset_at(t.curve, y1);
        LayoutPolygon poly;
        poly.layer = layer;
        poly.vertices = {{snap_nm(x0), snap_nm(y0)},
                         {snap_nm(x0 + w), snap_nm(y0)},
                         {snap_nm(x1 + w), snap_nm(y1)},
                         {snap_nm(x1), snap_nm(y1)}};
        layout.polygons.push_back(std::move(poly));
      }
    }
  const auto issues = audit_layout(layout, min_feature);
  if (!issues.empty())
    fail(ErrorCode::FeatureViolation, "polygon " + std::to_string(issues.front().polygon) + ": " +
                                          issues.front().what + " (" + std::to_string(issues.size()) + " issues)");
  return layout;
}

std::vector<LayoutIssue> audit_layout(const GratingLayout& layout, double min_feature) {
  std::vector<LayoutIssue> issues;
  // Snapping to whole nanometres may shave up to 1 nm off a feature.
  const double limit = min_feature - 1.0e-9 - 1e-15;
  const auto& P = layout.polygons;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const auto& v = P[i].vertices;
    if (!is_simple(v)) {
      issues.push_back({i, "not a simple polygon"});
      continue;
    }
    if (v.size() != 4) continue;
    const double w0 = v[1].x - v[0].x, w1 = v[2].x - v[3].x, hgt = v[3].y - v[0].y;
    if (std::min(w0, w1) < limit) issues.push_back({i, "width " + std::to_string(std::min(w0, w1) * 1e9) + " nm"});
    if (hgt < limit) issues.push_back({i, "stripe height " + std::to_string(hgt * 1e9) + " nm"});
    if (i + 1 < P.size()) {
      const auto& u = P[i + 1].vertices;
      if (P[i + 1].layer == P[i].layer && u.size() == 4 && u[0].y == v[0].y && u[3].y == v[3].y) {
        const double g = std::min(u[0].x - v[1].x, u[3].x - v[2].x);
        if (g < limit) issues.push_back({i, "gap " + std::to_string(g * 1e9) + " nm"});
      }
    }
  }
  return issues;
}

namespace {
long long to_nm(double v) { return std::llround(v * 1e9); }
}  // namespace

void export_polygon_table(std::ostream& out, const GratingLayout& layout) {
  out << "# ionpic-layout 1\n";
  out << "lambda_y_nm " << to_nm(layout.lambda_y) << "\n";
  out << "metadata " << nlohmann::json(layout.metadata).dump() << "\n";
  out << "polygons " << layout.polygons.size() << "\n";
  for (const auto& p : layout.polygons) {
    out << p.layer << ' ' << p.vertices.size();
    for (const auto& v : p.vertices) out << ' ' << to_nm(v.x) << ' ' << to_nm(v.y);
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "layout write failed");
}

GratingLayout import_polygon_table(std::istream& in) {
  GratingLayout layout;
  std::string line;
  auto expect = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key, 0) != 0) fail(ErrorCode::Parse, "layout: expected " + key);
    return line.substr(key.size());
  };
  if (expect("# ionpic-layout ") != "1") fail(ErrorCode::Parse, "layout: unsupported version");
  layout.lambda_y = std::stod(expect("lambda_y_nm ")) * 1e-9;
  try {
    layout.metadata = nlohmann::json::parse(expect("metadata ")).get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("layout metadata: ") + e.what());
  }
  const auto count = std::stoull(expect("polygons "));
  layout.polygons.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) fail(ErrorCode::Parse, "layout: truncated polygon list");
    std::istringstream row(line);
    LayoutPolygon p;
    std::size_t n = 0;
    if (!(row >> p.layer >> n)) fail(ErrorCode::Parse, "layout: bad polygon line " + std::to_string(i));
    p.vertices.resize(n);
    for (auto& v : p.vertices) {
      long long x = 0, y = 0;
      if (!(row >> x >> y)) fail(ErrorCode::Parse, "layout: bad vertex in polygon " + std::to_string(i));
      v = {static_cast<double>(x) * 1e-9, static_cast<double>(y) * 1e-9};
    }
    layout.polygons.push_back(std::move(p));
  }
  return layout;
}

void export_svg(std::ostream& out, const GratingLayout& layout) {
  double x0 = 0, x1 = 1e-6, y0 = 0, y1 = 1e-6;
  bool first = true;
  for (const auto& p : layout.polygons)
    for (const auto& v : p.vertices) {
      if (first) {
        x0 = x1 = v.x;
        y0 = y1 = v.y;
        first = false;
      }
      x0 = std::min(x0, v.x), x1 = std::max(x1, v.x), y0 = std::min(y0, v.y), y1 = std::max(y1, v.y);
    }
  // One SVG unit per nanometre.
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << to_nm(x0) << ' ' << to_nm(y0) << ' '
      << to_nm(x1 - x0) << ' ' << to_nm(y1 - y0) << "\">\n";
  static const char* fill[2] = {"#3b6ea5", "#d9822b"};
  for (int layer = 0; layer < 2; ++layer) {
    out << "<g id=\"layer" << layer << "\" fill=\"" << fill[layer] << "\" fill-opacity=\"0.6\">\n";
    for (const auto& p : layout.polygons) {
      if (p.layer != layer) continue;
      out << "<polygon points=\"";
      for (std::size_t i = 0; i < p.vertices.size(); ++i)
        out << (i ? " " : "") << to_nm(p.vertices[i].x) << ',' << to_nm(p.vertices[i].y);
      out << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  if (!out) fail(ErrorCode::Io, "svg write failed");
}

Design run_design(const DesignConfig& cfg, const ParamLibrary& library) {
  cfg.pose.validate();
  if (cfg.samples < 8) fail(ErrorCode::InvalidArgument, "design needs at least 8 samples");
  Design d;
  const double L = cfg.footprint.x_extent;
  const auto profile = ion_intensity_profile(cfg.axis, cfg.footprint, cfg.pose, cfg.samples);
  d.x = profile.x;
  d.i_ion = profile.value;
  if (d.x.front() != 0.0 || std::abs(d.x.back() - L) > 1e-12 * L)
    fail(ErrorCode::InvalidArgument, "ion profile must span the footprint");

  const std::size_t m = d.x.size();
  std::vector<double> angle(m), kmax(m);
  for (std::size_t i = 0; i < m; ++i) {
    angle[i] = diffraction_angle_at(d.x[i], cfg.pose);
    kmax[i] = interpolate(library, angle[i], std::numeric_limits<double>::max()).kappa;
  }
  const double h = d.x[1] - d.x[0];
  auto index_of = [&](double x) {
    return std::min(m - 1, static_cast<std::size_t>(std::llround(std::max(0.0, x) / h)));
  };
  AlphaModel alpha = [&](double x, double k) { return interpolate(library, angle[index_of(x)], k).alpha; };
  KappaLimit limit = [&](double x) { return kmax[index_of(x)]; };
  d.fit = fit_kappa_two_stage(d.x, d.i_ion, alpha, limit, cfg.fit);

  d.kappa.resize(m);
  d.alpha.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    d.kappa[i] = std::clamp(d.fit.constrained.ansatz(d.x[i]), 0.0, kmax[i]);
    d.alpha[i] = alpha(d.x[i], d.kappa[i]);
  }
  d.i_diffraction = diffracted_intensity(d.x, d.kappa, d.alpha, cfg.fit.model);
  d.guided = guided_power(d.x, d.kappa, d.alpha);

  d.teeth = discretize(d.fit.constrained.ansatz, library, cfg.footprint, cfg.pose);

  const LayerStack region = grating_region_stack(cfg.stack, 0.5, 0.5, cfg.pose.cladding_index);
  const double n_grating = effective_index(region, cfg.stack.wavelength, library.pol);
  d.phase = SlabPhase{cfg.source_x, n_grating, cfg.stack.wavelength, cfg.collimated};
  d.lambda_y = zone_period(cfg.stack.wavelength, n_grating, library.min_feature);
  const auto edges = stripe_edges(cfg.footprint, d.lambda_y);
  IonPose focus = cfg.pose;
  for (auto& t : d.teeth) t.curve = curve_tooth(t.x, edges, d.phase, focus, &t.truncated);

  nlohmann::json meta;
  meta["library_settings"] = library.settings;
  meta["teeth"] = d.teeth.size();
  meta["lambda_y_nm"] = d.lambda_y * 1e9;
  meta["n_grating"] = n_grating;
  meta["source_x_um"] = cfg.source_x * 1e6;
  meta["collimated"] = cfg.collimated;
  d.layout = emit_layout(d.teeth, edges, d.lambda_y, library.min_feature, meta.dump());
  return d;
}

void write_ansatz_csv(std::ostream& out, const Design& d) {
  out << "x_um,kappa_per_m,alpha_per_m,i_diffraction_per_m,i_ion_per_m,guided_power\n";
  out.precision(10);
  for (std::size_t i = 0; i < d.x.size(); ++i)
    out << d.x[i] * 1e6 << ',' << d.kappa[i] << ',' << d.alpha[i] << ',' << d.i_diffraction[i] << ','
        << d.i_ion[i] << ',' << d.guided[i] << '\n';
}

void write_tooth_csv(std::ostream& out, const std::vector<ToothSpec>& teeth) {
  out << "index,x_um,pitch_nm,dcu,dcl,dx_nm,delta_nm,angle_deg,kappa_target,kappa,alpha,clamped,power_in,emitted,"
         "truncated\n";
  out.precision(10);
  for (const auto& t : teeth)
    out << t.index << ',' << t.x * 1e6 << ',' << t.pitch * 1e9 << ',' << t.dcu << ',' << t.dcl << ','
        << t.dx * 1e9 << ',' << t.delta * 1e9 << ',' << rad_to_deg(t.angle) << ',' << t.kappa_target << ','
        << t.kappa << ',' << t.alpha << ',' << (t.clamped ? 1 : 0) << ',' << t.power_in << ',' << t.emitted
        << ',' << (t.truncated ? 1 : 0) << '\n';
}

}  // namespace ionpic
