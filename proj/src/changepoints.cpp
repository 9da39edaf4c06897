#include "tailbreak/changepoints.hpp"

#include "tailbreak/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

namespace tailbreak {

namespace {

// Stateless stream generator: value(stream, t) is a mixed hash of the seed
// and coordinates, so every null stream is reproducible on its own.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint32_t null_draw(std::uint64_t seed, std::uint64_t salt, std::uint64_t stream, std::uint64_t t) {
    const std::uint64_t key = mix64(mix64(seed ^ salt) + stream);
    return static_cast<std::uint32_t>(mix64(key + t) >> 32);
}

constexpr std::uint64_t kSequentialSalt = 0x5345515543414cULL;
constexpr std::uint64_t kBatchSalt = 0x4241544348ULL;

// Best split from doubled rank sums: rank_sums2[k-1] = 2 * W_k over a window
// of n values. (W - mu)^2 / sigma^2 = 3 num^2 / (k (n-k) (n+1)) with
// num = 2W - k(n+1).
SplitStatistic best_split(std::span<const std::int64_t> rank_sums2, int n) {
    SplitStatistic best{2, -1.0};
    double best_ratio = -1.0;
    const std::int64_t n1 = n + 1;
    for (int k = 2; k <= n - 2; ++k) {
        const auto num = static_cast<double>(rank_sums2[k - 1] - k * n1);
        const double ratio = num * num / (static_cast<double>(k) * static_cast<double>(n - k));
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best.k = k;
        }
    }
    best.value = std::sqrt(3.0 * best_ratio / static_cast<double>(n1));
    return best;
}

std::vector<std::int64_t> doubled_rank_prefix(std::span<const double> x) {
    const auto n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<std::int64_t> rank2(n);
    for (std::size_t lo = 0; lo < n;) {
        std::size_t hi = lo;
        while (hi + 1 < n && x[order[hi + 1]] == x[order[lo]]) {
            ++hi;
        }
        // midrank of 1-based ranks lo+1..hi+1, doubled
        const auto mid2 = static_cast<std::int64_t>(lo + hi + 2);
        for (std::size_t r = lo; r <= hi; ++r) {
            rank2[order[r]] = mid2;
        }
        lo = hi + 1;
    }
    std::partial_sum(rank2.begin(), rank2.end(), rank2.begin());
    return rank2;
}

void check_values(std::span<const double> x) {
    for (double v : x) {
        if (std::isnan(v)) {
            throw Error(ErrorCode::validation, "NaN in change-point input");
        }
    }
}

std::size_t exceedance_index(std::size_t count, double alpha) {
    const auto exceed = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(count) + 1e-9));
    return exceed >= count ? 0 : count - exceed - 1;
}

}  // namespace

void DetectorConfig::validate() const {
    if (!(arl0 >= 50.0) || !std::isfinite(arl0)) {
        throw Error(ErrorCode::config, "arl0 must be >= 50");
    }
    if (burn_in < 4) {
        throw Error(ErrorCode::config, "burn_in must be >= 4");
    }
    if (mc_replications < 1000) {
        throw Error(ErrorCode::config, "mc_replications must be >= 1000");
    }
}

double mann_whitney_statistic(std::span<const double> x, int k) {
    const int n = static_cast<int>(x.size());
    if (n < 4) {
        throw Error(ErrorCode::insufficient_data, "Mann-Whitney statistic needs n >= 4");
    }
    if (k < 2 || k > n - 2) {
        throw Error(ErrorCode::argument, "split index must satisfy 2 <= k <= n-2");
    }
    check_values(x);
    const auto prefix = doubled_rank_prefix(x);
    const auto num = static_cast<double>(prefix[k - 1] - static_cast<std::int64_t>(k) * (n + 1));
    const double ratio = num * num / (static_cast<double>(k) * static_cast<double>(n - k));
    return std::sqrt(3.0 * ratio / static_cast<double>(n + 1));
}

SplitStatistic max_split_statistic(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    if (n < 4) {
        throw Error(ErrorCode::insufficient_data, "split statistic needs n >= 4");
    }
    check_values(x);
    const auto prefix = doubled_rank_prefix(x);
    return best_split(prefix, n);
}

template <typename T>
void SplitMonitor<T>::push(T value) {
    std::int64_t shift = 0;  // running 2*(#greater) + #equal over the prefix
    std::int64_t greater = 0;
    std::int64_t equal = 0;
    const std::size_t n = values_.size();
    for (std::size_t i = 0; i < n; ++i) {
        const T v = values_[i];
        const std::int64_t g = v > value ? 1 : 0;
        const std::int64_t e = v == value ? 1 : 0;
        greater += g;
        equal += e;
        shift += 2 * g + e;
        rank_sums2_[i] += shift;
    }
    const std::int64_t less = static_cast<std::int64_t>(n) - greater - equal;
    const std::int64_t own = 2 * less + 2 + equal;
    rank_sums2_.push_back(n == 0 ? own : rank_sums2_.back() + own);
    values_.push_back(value);
}

template <typename T>
SplitStatistic SplitMonitor<T>::current() const {
    if (values_.size() < 4) {
        throw Error(ErrorCode::insufficient_data, "split statistic needs n >= 4");
    }
    return best_split(rank_sums2_, static_cast<int>(values_.size()));
}

template class SplitMonitor<double>;
template class SplitMonitor<std::uint32_t>;

ThresholdTable::ThresholdTable(int burn_in, std::vector<double> thresholds)
    : burn_in_(burn_in), thresholds_(std::move(thresholds)) {
    if (thresholds_.empty()) {
        throw Error(ErrorCode::argument, "threshold table is empty");
    }
    for (double h : thresholds_) {
        if (!std::isfinite(h) || !(h > 0.0)) {
            throw Error(ErrorCode::calibration, "thresholds must be finite and positive");
        }
    }
}

double ThresholdTable::at(int t) const {
    if (t < burn_in_) {
        throw Error(ErrorCode::argument, "no threshold before burn-in");
    }
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(t - burn_in_), thresholds_.size() - 1);
    return thresholds_[idx];
}

ThresholdTable calibrate_thresholds(const DetectorConfig& cfg, int t_max) {
    cfg.validate();
    if (t_max <= cfg.burn_in) {
        throw Error(ErrorCode::argument, "t_max must exceed burn_in");
    }
    const double alpha = 1.0 / cfg.arl0;
    const auto reps = static_cast<std::size_t>(cfg.mc_replications);

    // All streams advance in lockstep: h_t is a quantile over the streams
    // still unalarmed at t, so each time step needs every survivor's D_t.
    std::vector<SplitMonitor<std::uint32_t>> monitors(reps);
    std::vector<std::size_t> alive(reps);
    std::iota(alive.begin(), alive.end(), std::size_t{0});
    std::vector<double> stats;
    std::vector<double> sorted;
    std::vector<double> thresholds;
    thresholds.reserve(static_cast<std::size_t>(t_max - cfg.burn_in + 1));

    for (int t = 1; t <= t_max; ++t) {
        for (std::size_t s : alive) {
            monitors[s].push(null_draw(cfg.rng_seed, kSequentialSalt, s, static_cast<std::uint64_t>(t)));
        }
        if (t < cfg.burn_in) {
            continue;
        }
        if (static_cast<double>(alive.size()) * alpha < 1.0) {
            throw Error(ErrorCode::calibration,
                        "only " + std::to_string(alive.size()) + " of " + std::to_string(reps) +
                            " null streams survive to t=" + std::to_string(t) +
                            "; increase mc_replications");
        }
        stats.resize(alive.size());
        for (std::size_t i = 0; i < alive.size(); ++i) {
            stats[i] = monitors[alive[i]].current().value;
        }
        sorted = stats;
        const std::size_t idx = exceedance_index(sorted.size(), alpha);
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx), sorted.end());
        const double h = sorted[idx];
        thresholds.push_back(h);

        std::size_t kept = 0;
        for (std::size_t i = 0; i < alive.size(); ++i) {
            if (stats[i] > h) {
                monitors[alive[i]] = SplitMonitor<std::uint32_t>();
            } else {
                alive[kept++] = alive[i];
            }
        }
        alive.resize(kept);
    }
    return ThresholdTable(cfg.burn_in, std::move(thresholds));
}

std::filesystem::path threshold_cache_path(const DetectorConfig& cfg, int t_max,
                                           const std::filesystem::path& cache_dir) {
    std::ostringstream name;
    name << "thresholds-arl" << detail::format_double(cfg.arl0) << "-b" << cfg.burn_in << "-r"
         << cfg.mc_replications << "-s" << cfg.rng_seed << "-t" << t_max << ".txt";
    return cache_dir / name.str();
}

void write_thresholds(std::ostream& out, const DetectorConfig& cfg, const ThresholdTable& table) {
    out << "tailbreak-thresholds 1\n";
    out << "arl0 " << detail::format_double(cfg.arl0) << '\n';
    out << "burn_in " << table.burn_in() << '\n';
    out << "mc_replications " << cfg.mc_replications << '\n';
    out << "seed " << cfg.rng_seed << '\n';
    out << "t_max " << table.t_max() << '\n';
    int t = table.burn_in();
    for (double h : table.values()) {
        // shortest round-trip form is exact
        out << t++ << ' ' << detail::format_double(h) << '\n';
    }
}

ThresholdTable read_thresholds(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "tailbreak-thresholds 1") {
        throw Error(ErrorCode::parse, "not a threshold table (bad header)");
    }
    std::map<std::string, std::string> fields;
    for (int i = 0; i < 5 && std::getline(in, line); ++i) {
        std::istringstream ls(line);
        std::string key, value;
        ls >> key >> value;
        fields[key] = value;
    }
    long long burn_in = 0;
    long long t_max = 0;
    if (!detail::parse_int(fields["burn_in"], burn_in) || !detail::parse_int(fields["t_max"], t_max)) {
        throw Error(ErrorCode::parse, "threshold table lacks burn_in/t_max");
    }
    std::vector<double> thresholds;
    long long expected_t = burn_in;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto sp = line.find(' ');
        long long t = 0;
        double h = 0.0;
        if (sp == std::string::npos || !detail::parse_int(line.substr(0, sp), t) || t != expected_t ||
            !detail::parse_double(line.substr(sp + 1), h)) {
            throw Error(ErrorCode::parse, "malformed threshold row: " + line);
        }
        thresholds.push_back(h);
        ++expected_t;
    }
    if (expected_t - 1 != t_max) {
        throw Error(ErrorCode::parse, "threshold table truncated");
    }
    return ThresholdTable(static_cast<int>(burn_in), std::move(thresholds));
}

ThresholdTable calibrate_thresholds_cached(const DetectorConfig& cfg, int t_max,
                                           const std::filesystem::path& cache_dir) {
    if (cache_dir.empty()) {
        return calibrate_thresholds(cfg, t_max);
    }
    const auto path = threshold_cache_path(cfg, t_max, cache_dir);
    if (std::ifstream in(path); in) {
        try {
            auto table = read_thresholds(in);
            if (table.burn_in() == cfg.burn_in && table.t_max() == t_max) {
                return table;
            }
        } catch (const Error&) {
            // stale or corrupt cache entry; recompute below
        }
    }
    auto table = calibrate_thresholds(cfg, t_max);
    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) {
            throw Error(ErrorCode::io, "cannot write threshold cache " + tmp);
        }
        write_thresholds(out, cfg, table);
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::io, "cannot move threshold cache into place: " + ec.message());
    }
    return table;
}

double batch_threshold(int n, double alpha, const DetectorConfig& cfg) {
    cfg.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::argument, "alpha must lie in (0, 1)");
    }
    if (n < 4) {
        throw Error(ErrorCode::insufficient_data, "batch threshold needs n >= 4");
    }
    using Key = std::tuple<int, double, int, std::uint64_t>;
    static std::mutex mutex;
    static std::map<Key, double> memo;
    const Key key{n, alpha, cfg.mc_replications, cfg.rng_seed};
    {
        std::lock_guard lock(mutex);
        if (auto it = memo.find(key); it != memo.end()) {
            return it->second;
        }
    }
    std::vector<double> stats(static_cast<std::size_t>(cfg.mc_replications));
    std::vector<double> stream(static_cast<std::size_t>(n));
    for (std::size_t s = 0; s < stats.size(); ++s) {
        for (int t = 0; t < n; ++t) {
            stream[static_cast<std::size_t>(t)] =
                null_draw(cfg.rng_seed, kBatchSalt, s, static_cast<std::uint64_t>(t));
        }
        stats[s] = max_split_statistic(stream).value;
    }
    const std::size_t idx = exceedance_index(stats.size(), alpha);
    std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(idx), stats.end());
    const double h = stats[idx];
    std::lock_guard lock(mutex);
    memo.emplace(key, h);
    return h;
}

BatchResult batch_detect(std::span<const double> x, double alpha, const DetectorConfig& cfg) {
    cfg.validate();
    if (x.size() < static_cast<std::size_t>(2 * cfg.burn_in)) {
        throw Error(ErrorCode::insufficient_data,
                    "batch detection needs at least 2*burn_in = " + std::to_string(2 * cfg.burn_in) +
                        " observations");
    }
    const auto split = max_split_statistic(x);
    BatchResult result;
    result.statistic = split.value;
    result.threshold = batch_threshold(static_cast<int>(x.size()), alpha, cfg);
    if (split.value > result.threshold) {
        result.change = split.k;
    }
    return result;
}

BreakSet sequential_detect(std::span<const double> x, const DetectorConfig& cfg,
                           const ThresholdTable& thresholds, std::string ticker) {
    cfg.validate();
    if (thresholds.burn_in() != cfg.burn_in) {
        throw Error(ErrorCode::argument, "threshold table was calibrated for a different burn_in");
    }
    check_values(x);
    BreakSet result;
    result.ticker = std::move(ticker);
    result.series_length = static_cast<int>(x.size());

    SplitMonitor<double> monitor;
    std::size_t start = 0;  // 0-based first observation of the current segment
    std::size_t pos = start;
    while (pos < x.size()) {
        monitor.push(x[pos]);
        ++pos;
        const int t = static_cast<int>(monitor.size());
        if (t < cfg.burn_in) {
            continue;
        }
        const auto split = monitor.current();
        if (split.value > thresholds.at(t)) {
            const auto brk = start + static_cast<std::size_t>(split.k);  // 1-based global index
            result.breaks.push_back(static_cast<int>(brk));
            start = brk;  // 0-based index of the observation after the break
            pos = start;
            monitor.clear();
        }
    }
    return result;
}

BreakSet sequential_detect(std::span<const double> x, const DetectorConfig& cfg,
                           const ThresholdTable& thresholds, std::string ticker,
                           const PreTransform& transform) {
    if (!transform) {
        return sequential_detect(x, cfg, thresholds, std::move(ticker));
    }
    const auto transformed = transform(x);
    if (transformed.size() != x.size()) {
        throw Error(ErrorCode::argument, "pre-transform must preserve series length");
    }
    return sequential_detect(transformed, cfg, thresholds, std::move(ticker));
}

void write_break_sets(std::ostream& out, std::span<const BreakSet> sets) {
    out << "ticker,series_length,breaks\n";
    for (const auto& s : sets) {
        out << s.ticker << ',' << s.series_length << ',';
        for (std::size_t i = 0; i < s.breaks.size(); ++i) {
            out << (i ? " " : "") << s.breaks[i];
        }
        out << '\n';
    }
}

std::vector<BreakSet> read_break_sets(std::istream& in) {
    std::string line;
    std::vector<BreakSet> sets;
    if (!std::getline(in, line) || detail::trim(line) != "ticker,series_length,breaks") {
        throw Error(ErrorCode::parse, "break-set file has an unexpected header");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto fields = detail::split(line, ',');
        long long length = 0;
        if (fields.size() != 3 || !detail::parse_int(fields[1], length) || length <= 0) {
            throw Error(ErrorCode::parse, "break-set line " + std::to_string(line_no) + " is malformed");
        }
        BreakSet s;
        s.ticker = detail::unquote(fields[0]);
        s.series_length = static_cast<int>(length);
        std::istringstream idx(fields[2]);
        std::string tok;
        while (idx >> tok) {
            long long b = 0;
            if (!detail::parse_int(tok, b) || b < 1 || b > length ||
                (!s.breaks.empty() && b <= s.breaks.back())) {
                throw Error(ErrorCode::parse,
                            "break-set line " + std::to_string(line_no) + " has an invalid index");
            }
            s.breaks.push_back(static_cast<int>(b));
        }
        sets.push_back(std::move(s));
    }
    return sets;
}

}  // namespace tailbreak
