#include "tailbreak/setdist.hpp"

#include "tailbreak/error.hpp"

#include <algorithm>
#include <cstdlib>
#include <iterator>
#include <limits>

namespace tailbreak {

namespace {

// Sum over a in from of min_{b in to} |a - b|; `to` is sorted.
double sum_min_distances(const std::vector<int>& from, const std::vector<int>& to) {
    double total = 0.0;
    for (int a : from) {
        const auto it = std::lower_bound(to.begin(), to.end(), a);
        int best = std::numeric_limits<int>::max();
        if (it != to.end()) {
            best = *it - a;
        }
        if (it != to.begin()) {
            best = std::min(best, a - *std::prev(it));
        }
        total += best;
    }
    return total;
}

}  // namespace

double mj_distance(const BreakSet& s1, const BreakSet& s2) {
    if (s1.series_length != s2.series_length || s1.series_length <= 0) {
        throw Error(ErrorCode::argument, "break sets must share a positive series length (" +
                                             std::to_string(s1.series_length) + " vs " +
                                             std::to_string(s2.series_length) + ")");
    }
    if (s1.breaks.empty() && s2.breaks.empty()) {
        return 0.0;
    }
    if (s1.breaks.empty() || s2.breaks.empty()) {
        return kEmptySetDistance;
    }
    const double forward = sum_min_distances(s2.breaks, s1.breaks) / static_cast<double>(s2.breaks.size());
    const double backward = sum_min_distances(s1.breaks, s2.breaks) / static_cast<double>(s1.breaks.size());
    return (forward + backward) / (2.0 * static_cast<double>(s1.series_length));
}

DistanceMatrix break_distance_matrix(std::span<const BreakSet> sets) {
    if (sets.size() < 2) {
        throw Error(ErrorCode::argument, "break distance matrix needs at least 2 sets");
    }
    std::vector<std::string> labels;
    for (const auto& s : sets) {
        labels.push_back(s.ticker);
    }
    DistanceMatrix d(std::move(labels));
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            const double v = mj_distance(sets[i], sets[j]);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

}  // namespace tailbreak
