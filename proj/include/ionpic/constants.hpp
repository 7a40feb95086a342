#pragma once

#include <numbers>
#include <string_view>

namespace ionpic {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;       // m/s
inline constexpr double kMu0 = 1.25663706212e-6;           // N/A^2, CODATA 2018
inline constexpr double kEps0 = 1.0 / (kMu0 * kSpeedOfLight * kSpeedOfLight);

inline constexpr double kMicron = 1e-6;
inline constexpr double kNanometer = 1e-9;

enum class Polarization { TE, TM };

constexpr std::string_view to_string(Polarization p) {
  return p == Polarization::TE ? "TE" : "TM";
}

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace ionpic
