#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tailbreak {

using Date = std::chrono::year_month_day;

// Accepts ISO "YYYY-MM-DD" and day-first "DD-MM-YYYY" (also "D-M-YYYY" and
// '/' or '.' separators for the day-first form). Throws Error(parse).
Date parse_date(std::string_view text);
std::string format_date(Date d);

struct OhlcSchema {
    std::string date = "date";
    std::string close = "close";
    std::string high = "high";
    std::string low = "low";
    char delimiter = ',';
};

// Daily close/high/low history of one instrument. Construction validates the
// invariants; the object is immutable afterwards.
class OhlcSeries {
public:
    OhlcSeries(std::string ticker, std::vector<Date> dates, std::vector<double> close,
               std::vector<double> high, std::vector<double> low);

    const std::string& ticker() const noexcept { return ticker_; }
    std::size_t size() const noexcept { return dates_.size(); }
    std::span<const Date> dates() const noexcept { return dates_; }
    std::span<const double> close() const noexcept { return close_; }
    std::span<const double> high() const noexcept { return high_; }
    std::span<const double> low() const noexcept { return low_; }

    // Rows skipped at ingestion because a price field was empty.
    std::size_t dropped_rows() const noexcept { return dropped_rows_; }
    void set_dropped_rows(std::size_t n) noexcept { dropped_rows_ = n; }

private:
    std::string ticker_;
    std::vector<Date> dates_;
    std::vector<double> close_;
    std::vector<double> high_;
    std::vector<double> low_;
    std::size_t dropped_rows_ = 0;
};

enum class SeriesKind { returns, variance, generic };

std::string_view to_string(SeriesKind kind) noexcept;

class ValueSeries {
public:
    ValueSeries(std::string ticker, std::vector<Date> dates, std::vector<double> values,
                SeriesKind kind = SeriesKind::generic);

    const std::string& ticker() const noexcept { return ticker_; }
    SeriesKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return dates_.size(); }
    std::span<const Date> dates() const noexcept { return dates_; }
    std::span<const double> values() const noexcept { return values_; }

private:
    std::string ticker_;
    std::vector<Date> dates_;
    std::vector<double> values_;
    SeriesKind kind_;
};

// n instruments on a common T-date grid, stored row-major (one row per
// instrument).
class Panel {
public:
    Panel(std::vector<std::string> tickers, std::vector<Date> dates, std::vector<double> values,
          SeriesKind kind = SeriesKind::generic);

    std::size_t instruments() const noexcept { return tickers_.size(); }
    std::size_t length() const noexcept { return dates_.size(); }
    SeriesKind kind() const noexcept { return kind_; }
    const std::vector<std::string>& tickers() const noexcept { return tickers_; }
    std::span<const Date> dates() const noexcept { return dates_; }
    std::span<const double> row(std::size_t i) const;
    double at(std::size_t i, std::size_t t) const { return row(i)[t]; }
    ValueSeries series(std::size_t i) const;

private:
    std::vector<std::string> tickers_;
    std::vector<Date> dates_;
    std::vector<double> values_;
    SeriesKind kind_;
};

OhlcSeries parse_ohlc(std::istream& in, const OhlcSchema& schema, std::string ticker);
OhlcSeries read_ohlc_file(const std::filesystem::path& path, const OhlcSchema& schema,
                          std::string ticker = {});
// Canonical form: "date,close,high,low" with ISO dates.
void write_ohlc(std::ostream& out, const OhlcSeries& s, char delimiter = ',');

// R_t = log(P_t / P_{t-1}), dated at the later observation.
ValueSeries log_returns(const OhlcSeries& s);
// sigma^2_t = (log H_t - log L_t)^2 / (4 log 2)
ValueSeries parkinson_variance(const OhlcSeries& s);

// Inclusive on both ends.
ValueSeries slice_period(const ValueSeries& s, Date start, Date end);

// Intersects the date grids; instrument order follows the input order.
Panel align_panel(std::span<const ValueSeries> series);
Panel slice_period(const Panel& p, Date start, Date end);

// Labeled delimiter-separated text: header "date,<ticker>" for a series and
// "date,<t1>,<t2>,..." for a panel.
void write_series(std::ostream& out, const ValueSeries& s, char delimiter = ',');
ValueSeries read_series(std::istream& in, SeriesKind kind = SeriesKind::generic,
                        char delimiter = ',');
void write_panel(std::ostream& out, const Panel& p, char delimiter = ',');
Panel read_panel(std::istream& in, SeriesKind kind = SeriesKind::generic, char delimiter = ',');

}  // namespace tailbreak
