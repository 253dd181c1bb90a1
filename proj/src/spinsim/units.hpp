#pragma once

#include <cmath>

namespace spinsim {

inline constexpr double kTwoPi = 6.28318530717958647692528676655900577;

// Two-sided vacuum PSD of a light quadrature; squeezing means dropping below it.
inline constexpr double kShotNoise = 0.25;

// All internal rates and frequencies are angular (rad/s). File formats and the
// C API speak ordinary Hz; these are the only two conversion points.
inline constexpr double hz_to_rad(double f) { return kTwoPi * f; }
inline constexpr double rad_to_hz(double w) { return w / kTwoPi; }

inline double sn_to_db(double s_sn) { return 10.0 * std::log10(s_sn); }
inline double db_to_sn(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace spinsim
