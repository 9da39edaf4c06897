#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tailbreak {

struct DetectorConfig {
    double arl0 = 500.0;
    int burn_in = 20;
    int mc_replications = 10000;
    std::uint64_t rng_seed = 20200624;

    // Throws Error(config) when arl0 < 50, burn_in < 4 or mc_replications < 1000.
    void validate() const;
};

// Standardized Mann-Whitney statistic for a split after the first k of n
// observations: |W - k(n+1)/2| / sqrt(k(n-k)(n+1)/12), W the midrank sum of
// x[0..k). Requires 2 <= k <= n-2.
double mann_whitney_statistic(std::span<const double> x, int k);

struct SplitStatistic {
    int k = 0;
    double value = 0.0;
};

// max over k = 2..n-2 of the split statistic; smallest k wins ties.
SplitStatistic max_split_statistic(std::span<const double> x);

// Incremental form of max_split_statistic for a growing window. Each push is
// O(t); rank sums are tracked exactly as doubled integers so the statistic
// depends on the order of the data only.
template <typename T>
class SplitMonitor {
public:
    explicit SplitMonitor(std::size_t capacity = 0) {
        values_.reserve(capacity);
        rank_sums2_.reserve(capacity);
    }

    void push(T value);
    void clear() {
        values_.clear();
        rank_sums2_.clear();
    }
    std::size_t size() const noexcept { return values_.size(); }

    // Requires size() >= 4.
    SplitStatistic current() const;

private:
    std::vector<T> values_;
    // rank_sums2_[k-1] = 2 * (midrank sum of the first k values).
    std::vector<std::int64_t> rank_sums2_;
};

class ThresholdTable {
public:
    ThresholdTable(int burn_in, std::vector<double> thresholds);

    int burn_in() const noexcept { return burn_in_; }
    int t_max() const noexcept { return burn_in_ + static_cast<int>(thresholds_.size()) - 1; }
    std::span<const double> values() const noexcept { return thresholds_; }

    // h_t for burn_in <= t; beyond t_max the last threshold is reused.
    double at(int t) const;

    bool operator==(const ThresholdTable&) const = default;

private:
    int burn_in_;
    std::vector<double> thresholds_;
};

// Monte-Carlo calibration of h_t, t = burn_in..t_max, so that the conditional
// false-alarm probability given no earlier alarm is 1/arl0. Deterministic in
// (cfg, t_max).
ThresholdTable calibrate_thresholds(const DetectorConfig& cfg, int t_max);

// As above, but reads/writes a text cache file under cache_dir keyed by the
// full configuration.
ThresholdTable calibrate_thresholds_cached(const DetectorConfig& cfg, int t_max,
                                           const std::filesystem::path& cache_dir);
std::filesystem::path threshold_cache_path(const DetectorConfig& cfg, int t_max,
                                           const std::filesystem::path& cache_dir);

void write_thresholds(std::ostream& out, const DetectorConfig& cfg, const ThresholdTable& table);
ThresholdTable read_thresholds(std::istream& in);

// Upper-alpha quantile of D_n under the null for fixed n (Phase I).
double batch_threshold(int n, double alpha, const DetectorConfig& cfg);

struct BatchResult {
    double statistic = 0.0;
    double threshold = 0.0;
    std::optional<int> change;  // 1-based last index of the first segment
};

BatchResult batch_detect(std::span<const double> x, double alpha, const DetectorConfig& cfg);

struct BreakSet {
    std::string ticker;
    std::vector<int> breaks;  // 1-based, strictly increasing
    int series_length = 0;
};

// Phase II monitoring with restarts. A break at index b means observation b is
// the last one before the change; monitoring resumes at b + 1.
BreakSet sequential_detect(std::span<const double> x, const DetectorConfig& cfg,
                           const ThresholdTable& thresholds, std::string ticker = {});

using PreTransform = std::function<std::vector<double>(std::span<const double>)>;

// sequential_detect on transform(x), e.g. residuals of a user drift model.
BreakSet sequential_detect(std::span<const double> x, const DetectorConfig& cfg,
                           const ThresholdTable& thresholds, std::string ticker,
                           const PreTransform& transform);

// One line per set: "ticker,series_length,b1 b2 ...".
void write_break_sets(std::ostream& out, std::span<const BreakSet> sets);
std::vector<BreakSet> read_break_sets(std::istream& in);

}  // namespace tailbreak
