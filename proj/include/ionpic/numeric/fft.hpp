#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace ionpic::numeric {

/// In-place unnormalized 2D DFT on row-major data (x fastest, index iy*nx+ix).
/// Plans are created once per shape and reused across threads.
void fft2d(std::vector<std::complex<double>>& data, std::size_t nx, std::size_t ny,
           bool inverse);

/// Wavenumber of FFT bin i for an n-point grid with spacing `step`.
double fft_frequency(std::size_t i, std::size_t n, double step);

}  // namespace ionpic::numeric
