#pragma once

#include "tailbreak/changepoints.hpp"
#include "tailbreak/tails.hpp"

#include <span>

namespace tailbreak {

// Distance assigned between a nonempty break set and an empty one.
inline constexpr double kEmptySetDistance = 0.5;

// Normalized averaged minimal-distance semi-metric between two break sets on
// the same series length T:
//   (1/2T) * ( mean_{b in s2} d(b, s1) + mean_{a in s1} d(a, s2) ).
// D(empty, empty) = 0 and D(S, empty) = kEmptySetDistance.
double mj_distance(const BreakSet& s1, const BreakSet& s2);

DistanceMatrix break_distance_matrix(std::span<const BreakSet> sets);

}  // namespace tailbreak
