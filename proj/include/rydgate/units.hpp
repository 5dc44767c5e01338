#pragma once

#include <numbers>

// Internal units: lengths in um, times in us, angular frequencies in rad/us.
// User-facing quantities (2pi x MHz, ns) convert here.
namespace rydgate::units {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double from_two_pi_mhz(double value) { return kTwoPi * value; }
constexpr double to_two_pi_mhz(double rad_per_us) { return rad_per_us / kTwoPi; }
constexpr double ns_to_us(double ns) { return ns * 1e-3; }
constexpr double us_to_ns(double us) { return us * 1e3; }

}  // namespace rydgate::units
