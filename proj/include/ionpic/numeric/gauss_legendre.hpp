#pragma once

#include <cstddef>
#include <vector>

namespace ionpic::numeric {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Newton iteration on P_n; accurate to ~1e-15 for n up to several hundred.
GaussLegendreRule gauss_legendre(std::size_t n);

/// Tensor-product integral of f(x, y) over [x0,x1]x[y0,y1].
template <class F>
double integrate_2d(const GaussLegendreRule& rule, double x0, double x1, double y0,
                    double y1, F&& f) {
  const double hx = 0.5 * (x1 - x0), cx = 0.5 * (x1 + x0);
  const double hy = 0.5 * (y1 - y0), cy = 0.5 * (y1 + y0);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = cx + hx * rule.nodes[i];
    double row = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      row += rule.weights[j] * f(x, cy + hy * rule.nodes[j]);
    }
    sum += rule.weights[i] * row;
  }
  return sum * hx * hy;
}

}  // namespace ionpic::numeric
