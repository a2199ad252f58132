#pragma once

namespace cfpi {

// Numeric guard rails shared across modules.

// Variances are floored to this on model construction so log-densities and
// trust-region radii stay finite.
inline constexpr double kVarFloor = 1e-8;

// Below this Sigma-norm a critic gradient is treated as zero and improvement
// operators return their anchor unchanged.
inline constexpr double kGradEps = 1e-12;

// Mixture weights must sum to one within this tolerance.
inline constexpr double kWeightTol = 1e-12;

// Default mixture-weight threshold for mode filtering.
inline constexpr double kModeWeightThreshold = 0.05;

}  // namespace cfpi
