#include "ionpic/numeric/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <stdexcept>
#include <tuple>

namespace ionpic::numeric {
namespace {

using PlanKey = std::tuple<std::size_t, std::size_t, bool>;

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t nx, std::size_t ny, bool inverse) {
    const PlanKey key{nx, ny, inverse};
    {
      std::shared_lock lock(mutex_);
      if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    }
    std::unique_lock lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    // FFTW_ESTIMATE never touches the arrays, so scratch buffers suffice.
    std::vector<std::complex<double>> scratch(nx * ny);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), buf, buf,
                                      inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw std::runtime_error("fftw: plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::shared_mutex mutex_;
  std::map<PlanKey, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

}  // namespace

void fft2d(std::vector<std::complex<double>>& data, std::size_t nx, std::size_t ny,
           bool inverse) {
  if (data.size() != nx * ny) throw std::invalid_argument("fft2d: size mismatch");
  fftw_plan plan = cache().get(nx, ny, inverse);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, buf, buf);
}

double fft_frequency(std::size_t i, std::size_t n, double step) {
  const auto signed_i = static_cast<double>(i < (n + 1) / 2 ? static_cast<long>(i)
                                                           : static_cast<long>(i) - static_cast<long>(n));
  return 2.0 * std::numbers::pi * signed_i / (static_cast<double>(n) * step);
}

}  // namespace ionpic::numeric
