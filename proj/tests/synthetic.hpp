#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace synthetic {

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tailbreak_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string iso(std::chrono::sys_days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

// Geometric random walk with Gaussian log returns of scale vol; the daily
// range is proportional to vol as well.
inline std::string ohlc_text(std::uint64_t seed, std::chrono::sys_days first, int days, double vol,
                             double start_price = 100.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    std::string text = "date,close,high,low\n";
    double price = start_price;
    char line[128];
    for (int i = 0; i < days; ++i) {
        price *= std::exp(vol * g(rng));
        const double high = price * std::exp(vol * u(rng));
        const double low = price * std::exp(-vol * u(rng));
        std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g\n", iso(first + std::chrono::days{i}).c_str(), price,
                      high, low);
        text += line;
    }
    return text;
}

inline void write_ohlc(const std::filesystem::path& dir, const std::string& ticker, std::uint64_t seed,
                       std::chrono::sys_days first, int days, double vol) {
    std::ofstream(dir / (ticker + ".csv")) << ohlc_text(seed, first, days, vol);
}

}  // namespace synthetic
