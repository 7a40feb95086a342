#include "ionpic/numeric/nelder_mead.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ionpic::numeric {
namespace {

struct Simplex {
  std::vector<std::vector<double>> x;
  std::vector<double> f;
};

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> start, std::vector<double> step,
                             const NelderMeadOptions& options) {
  const std::size_t n = start.size();
  if (n == 0 || step.size() != n) {
    throw std::invalid_argument("nelder_mead: start/step dimension mismatch");
  }
  NelderMeadResult result;
  auto eval = [&](const std::vector<double>& p) {
    ++result.evaluations;
    const double v = f(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  };

  std::vector<double> best = std::move(start);
  double best_f = eval(best);

  for (int restart = 0; restart <= options.max_restarts; ++restart) {
    Simplex s;
    s.x.push_back(best);
    s.f.push_back(best_f);
    for (std::size_t i = 0; i < n; ++i) {
      auto p = best;
      p[i] += step[i];
      s.f.push_back(eval(p));
      s.x.push_back(std::move(p));
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    bool converged = false;
    while (result.evaluations < options.max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return s.f[a] < s.f[b]; });
      const std::size_t lo = order.front(), hi = order.back(), nh = order[n - 1];

      double xspread = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t d = 0; d < n; ++d) {
          xspread = std::max(xspread, std::abs(s.x[i][d] - s.x[lo][d]));
        }
      }
      if (std::abs(s.f[hi] - s.f[lo]) <= options.f_tolerance ||
          xspread <= options.x_tolerance) {
        converged = true;
        break;
      }

      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == hi) continue;
        for (std::size_t d = 0; d < n; ++d) centroid[d] += s.x[i][d] / n;
      }
      for (std::size_t d = 0; d < n; ++d) {
        trial[d] = centroid[d] + (centroid[d] - s.x[hi][d]);
      }
      const double fr = eval(trial);
      if (fr < s.f[lo]) {
        for (std::size_t d = 0; d < n; ++d) {
          trial2[d] = centroid[d] + 2.0 * (centroid[d] - s.x[hi][d]);
        }
        const double fe = eval(trial2);
        if (fe < fr) {
          s.x[hi] = trial2;
          s.f[hi] = fe;
        } else {
          s.x[hi] = trial;
          s.f[hi] = fr;
        }
      } else if (fr < s.f[nh]) {
        s.x[hi] = trial;
        s.f[hi] = fr;
      } else {
        const bool outside = fr < s.f[hi];
        for (std::size_t d = 0; d < n; ++d) {
          trial2[d] = outside ? centroid[d] + 0.5 * (trial[d] - centroid[d])
                              : centroid[d] + 0.5 * (s.x[hi][d] - centroid[d]);
        }
        const double fc = eval(trial2);
        if (fc < std::min(fr, s.f[hi])) {
          s.x[hi] = trial2;
          s.f[hi] = fc;
        } else {
          for (std::size_t i = 0; i <= n; ++i) {
            if (i == lo) continue;
            for (std::size_t d = 0; d < n; ++d) {
              s.x[i][d] = s.x[lo][d] + 0.5 * (s.x[i][d] - s.x[lo][d]);
            }
            s.f[i] = eval(s.x[i]);
          }
        }
      }
    }

    const auto it = std::min_element(s.f.begin(), s.f.end());
    const double gain = best_f - *it;
    if (*it < best_f) {
      best_f = *it;
      best = s.x[static_cast<std::size_t>(it - s.f.begin())];
    }
    result.trace.push_back(best_f);
    result.restarts = restart;
    result.converged = converged;
    if (!converged || gain <= options.f_tolerance) break;
  }
  result.x = std::move(best);
  result.value = best_f;
  return result;
}

}  // namespace ionpic::numeric
