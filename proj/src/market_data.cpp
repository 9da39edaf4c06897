#include "tailbreak/market_data.hpp"

#include "tailbreak/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace tailbreak {

namespace {

using detail::format_double;
using detail::parse_double;
using detail::split;
using detail::trim;
using detail::unquote;

bool parse_number(std::string_view text, int& out) {
    long long v = 0;
    if (!detail::parse_int(text, v) || v < 0 || v > 99999) {
        return false;
    }
    out = static_cast<int>(v);
    return true;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void check_increasing(std::span<const Date> dates, const std::string& ticker) {
    for (std::size_t i = 1; i < dates.size(); ++i) {
        if (!(dates[i - 1] < dates[i])) {
            throw Error(ErrorCode::validation, ticker + ": dates must be strictly increasing (at " +
                                                   format_date(dates[i]) + ")");
        }
    }
}

}  // namespace

Date parse_date(std::string_view text) {
    const std::string_view s = trim(text);
    std::vector<std::string> parts;
    for (char sep : {'-', '/', '.'}) {
        if (s.find(sep) != std::string_view::npos) {
            parts = split(s, sep);
            break;
        }
    }
    int y = 0;
    int m = 0;
    int d = 0;
    bool ok = parts.size() == 3;
    if (ok && parts[0].size() == 4) {
        ok = parse_number(parts[0], y) && parse_number(parts[1], m) && parse_number(parts[2], d);
    } else if (ok && parts[2].size() == 4) {
        ok = parse_number(parts[0], d) && parse_number(parts[1], m) && parse_number(parts[2], y);
    } else {
        ok = false;
    }
    const Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ok || !date.ok()) {
        throw Error(ErrorCode::parse, "invalid date '" + std::string(s) + "'");
    }
    return date;
}

std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

std::string_view to_string(SeriesKind kind) noexcept {
    switch (kind) {
        case SeriesKind::returns: return "returns";
        case SeriesKind::variance: return "variance";
        case SeriesKind::generic: break;
    }
    return "generic";
}

OhlcSeries::OhlcSeries(std::string ticker, std::vector<Date> dates, std::vector<double> close,
                       std::vector<double> high, std::vector<double> low)
    : ticker_(std::move(ticker)),
      dates_(std::move(dates)),
      close_(std::move(close)),
      high_(std::move(high)),
      low_(std::move(low)) {
    const auto n = dates_.size();
    if (close_.size() != n || high_.size() != n || low_.size() != n) {
        throw Error(ErrorCode::validation, ticker_ + ": OHLC field arrays differ in length");
    }
    check_increasing(dates_, ticker_);
    for (std::size_t t = 0; t < n; ++t) {
        if (!(close_[t] > 0.0) || !(low_[t] > 0.0) || !(high_[t] > 0.0)) {
            throw Error(ErrorCode::validation,
                        ticker_ + ": nonpositive price on " + format_date(dates_[t]));
        }
        if (low_[t] > high_[t]) {
            throw Error(ErrorCode::validation,
                        ticker_ + ": low > high on " + format_date(dates_[t]));
        }
    }
}

ValueSeries::ValueSeries(std::string ticker, std::vector<Date> dates, std::vector<double> values,
                         SeriesKind kind)
    : ticker_(std::move(ticker)), dates_(std::move(dates)), values_(std::move(values)), kind_(kind) {
    if (values_.size() != dates_.size()) {
        throw Error(ErrorCode::validation, ticker_ + ": dates and values differ in length");
    }
    check_increasing(dates_, ticker_);
    if (kind_ == SeriesKind::variance) {
        for (double v : values_) {
            if (!(v >= 0.0)) {
                throw Error(ErrorCode::validation, ticker_ + ": negative variance value");
            }
        }
    }
}

Panel::Panel(std::vector<std::string> tickers, std::vector<Date> dates, std::vector<double> values,
             SeriesKind kind)
    : tickers_(std::move(tickers)), dates_(std::move(dates)), values_(std::move(values)), kind_(kind) {
    if (values_.size() != tickers_.size() * dates_.size()) {
        throw Error(ErrorCode::validation, "panel cell count does not match n*T");
    }
    check_increasing(dates_, "panel");
}

std::span<const double> Panel::row(std::size_t i) const {
    if (i >= tickers_.size()) {
        throw Error(ErrorCode::argument, "panel row out of range");
    }
    return std::span<const double>(values_).subspan(i * dates_.size(), dates_.size());
}

ValueSeries Panel::series(std::size_t i) const {
    auto r = row(i);
    return ValueSeries(tickers_[i], dates_, std::vector<double>(r.begin(), r.end()), kind_);
}

OhlcSeries parse_ohlc(std::istream& in, const OhlcSchema& schema, std::string ticker) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split(line, schema.delimiter);
            break;
        }
    }
    if (header.empty()) {
        throw Error(ErrorCode::parse, ticker + ": missing header row");
    }
    auto column = [&](const std::string& name) {
        const auto wanted = lower(name);
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (lower(unquote(header[i])) == wanted) {
                return i;
            }
        }
        throw Error(ErrorCode::parse, ticker + ": header has no column '" + name + "'");
    };
    const std::size_t c_date = column(schema.date);
    const std::size_t c_close = column(schema.close);
    const std::size_t c_high = column(schema.high);
    const std::size_t c_low = column(schema.low);

    struct Row {
        Date date;
        double close, high, low;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::size_t dropped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split(line, schema.delimiter);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::parse, ticker + ": line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(header.size()) + " fields, got " +
                                              std::to_string(fields.size()));
        }
        const std::string close = unquote(fields[c_close]);
        const std::string high = unquote(fields[c_high]);
        const std::string low = unquote(fields[c_low]);
        if (close.empty() || high.empty() || low.empty()) {
            ++dropped;
            continue;
        }
        Row r{};
        r.line = line_no;
        try {
            r.date = parse_date(unquote(fields[c_date]));
        } catch (const Error& e) {
            throw Error(ErrorCode::parse, ticker + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!parse_double(close, r.close) || !parse_double(high, r.high) || !parse_double(low, r.low)) {
            throw Error(ErrorCode::parse,
                        ticker + ": line " + std::to_string(line_no) + ": non-numeric price field");
        }
        if (!(r.close > 0.0) || !(r.high > 0.0) || !(r.low > 0.0)) {
            throw Error(ErrorCode::validation,
                        ticker + ": line " + std::to_string(line_no) + ": nonpositive price");
        }
        if (r.low > r.high) {
            throw Error(ErrorCode::validation,
                        ticker + ": line " + std::to_string(line_no) + ": low > high");
        }
        rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].date == rows[i - 1].date) {
            throw Error(ErrorCode::validation, ticker + ": line " + std::to_string(rows[i].line) +
                                                   ": duplicate date " + format_date(rows[i].date));
        }
    }
    std::vector<Date> dates;
    std::vector<double> c, h, l;
    dates.reserve(rows.size());
    for (const auto& r : rows) {
        dates.push_back(r.date);
        c.push_back(r.close);
        h.push_back(r.high);
        l.push_back(r.low);
    }
    OhlcSeries s(std::move(ticker), std::move(dates), std::move(c), std::move(h), std::move(l));
    s.set_dropped_rows(dropped);
    return s;
}

OhlcSeries read_ohlc_file(const std::filesystem::path& path, const OhlcSchema& schema,
                          std::string ticker) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    if (ticker.empty()) {
        ticker = path.stem().string();
    }
    return parse_ohlc(in, schema, std::move(ticker));
}

void write_ohlc(std::ostream& out, const OhlcSeries& s, char delimiter) {
    out << "date" << delimiter << "close" << delimiter << "high" << delimiter << "low\n";
    for (std::size_t t = 0; t < s.size(); ++t) {
        out << format_date(s.dates()[t]) << delimiter << format_double(s.close()[t]) << delimiter
            << format_double(s.high()[t]) << delimiter << format_double(s.low()[t]) << '\n';
    }
}

ValueSeries log_returns(const OhlcSeries& s) {
    if (s.size() < 2) {
        throw Error(ErrorCode::insufficient_data,
                    s.ticker() + ": log returns need at least 2 observations");
    }
    const auto close = s.close();
    std::vector<double> values(s.size() - 1);
    for (std::size_t t = 1; t < s.size(); ++t) {
        values[t - 1] = std::log(close[t] / close[t - 1]);
    }
    std::vector<Date> dates(s.dates().begin() + 1, s.dates().end());
    return ValueSeries(s.ticker(), std::move(dates), std::move(values), SeriesKind::returns);
}

ValueSeries parkinson_variance(const OhlcSeries& s) {
    const double denom = 4.0 * std::log(2.0);
    std::vector<double> values(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) {
        const double range = std::log(s.high()[t]) - std::log(s.low()[t]);
        values[t] = range * range / denom;
    }
    return ValueSeries(s.ticker(), std::vector<Date>(s.dates().begin(), s.dates().end()),
                       std::move(values), SeriesKind::variance);
}

ValueSeries slice_period(const ValueSeries& s, Date start, Date end) {
    if (end < start) {
        throw Error(ErrorCode::argument, "window start after end");
    }
    const auto dates = s.dates();
    const auto lo = std::lower_bound(dates.begin(), dates.end(), start);
    const auto hi = std::upper_bound(dates.begin(), dates.end(), end);
    if (lo >= hi) {
        throw Error(ErrorCode::empty_window, s.ticker() + ": no observations in " + format_date(start) +
                                                 ".." + format_date(end));
    }
    const auto first = static_cast<std::size_t>(lo - dates.begin());
    const auto last = static_cast<std::size_t>(hi - dates.begin());
    return ValueSeries(s.ticker(), std::vector<Date>(lo, hi),
                       std::vector<double>(s.values().begin() + first, s.values().begin() + last),
                       s.kind());
}

Panel align_panel(std::span<const ValueSeries> series) {
    if (series.size() < 2) {
        throw Error(ErrorCode::argument, "alignment needs at least 2 series");
    }
    std::vector<Date> grid(series[0].dates().begin(), series[0].dates().end());
    for (std::size_t i = 1; i < series.size(); ++i) {
        std::vector<Date> next;
        const auto d = series[i].dates();
        std::set_intersection(grid.begin(), grid.end(), d.begin(), d.end(), std::back_inserter(next));
        grid = std::move(next);
    }
    if (grid.empty()) {
        std::ostringstream msg;
        msg << "empty date intersection:";
        for (const auto& s : series) {
            msg << ' ' << s.ticker() << '[';
            if (s.size() > 0) {
                msg << format_date(s.dates().front()) << ".." << format_date(s.dates().back());
            }
            msg << ']';
        }
        throw Error(ErrorCode::alignment, msg.str());
    }
    std::vector<std::string> tickers;
    std::vector<double> values;
    values.reserve(series.size() * grid.size());
    for (const auto& s : series) {
        tickers.push_back(s.ticker());
        const auto d = s.dates();
        std::size_t pos = 0;
        for (const Date& g : grid) {
            while (d[pos] < g) {
                ++pos;
            }
            values.push_back(s.values()[pos]);
        }
    }
    return Panel(std::move(tickers), std::move(grid), std::move(values), series[0].kind());
}

Panel slice_period(const Panel& p, Date start, Date end) {
    if (end < start) {
        throw Error(ErrorCode::argument, "window start after end");
    }
    const auto dates = p.dates();
    const auto lo = std::lower_bound(dates.begin(), dates.end(), start);
    const auto hi = std::upper_bound(dates.begin(), dates.end(), end);
    if (lo >= hi) {
        throw Error(ErrorCode::empty_window,
                    "panel has no dates in " + format_date(start) + ".." + format_date(end));
    }
    const auto first = static_cast<std::size_t>(lo - dates.begin());
    const auto count = static_cast<std::size_t>(hi - lo);
    std::vector<double> values;
    values.reserve(p.instruments() * count);
    for (std::size_t i = 0; i < p.instruments(); ++i) {
        auto r = p.row(i).subspan(first, count);
        values.insert(values.end(), r.begin(), r.end());
    }
    return Panel(p.tickers(), std::vector<Date>(lo, hi), std::move(values), p.kind());
}

void write_series(std::ostream& out, const ValueSeries& s, char delimiter) {
    out << "date" << delimiter << s.ticker() << '\n';
    for (std::size_t t = 0; t < s.size(); ++t) {
        out << format_date(s.dates()[t]) << delimiter << format_double(s.values()[t]) << '\n';
    }
}

void write_panel(std::ostream& out, const Panel& p, char delimiter) {
    out << "date";
    for (const auto& t : p.tickers()) {
        out << delimiter << t;
    }
    out << '\n';
    for (std::size_t t = 0; t < p.length(); ++t) {
        out << format_date(p.dates()[t]);
        for (std::size_t i = 0; i < p.instruments(); ++i) {
            out << delimiter << format_double(p.at(i, t));
        }
        out << '\n';
    }
}

Panel read_panel(std::istream& in, SeriesKind kind, char delimiter) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::parse, "empty series file");
    }
    const auto header = split(line, delimiter);
    if (header.size() < 2) {
        throw Error(ErrorCode::parse, "series header needs a date column and at least one value column");
    }
    std::vector<std::string> tickers;
    for (std::size_t i = 1; i < header.size(); ++i) {
        tickers.push_back(unquote(header[i]));
    }
    std::vector<Date> dates;
    std::vector<std::vector<double>> cols(tickers.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split(line, delimiter);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": wrong field count");
        }
        dates.push_back(parse_date(fields[0]));
        for (std::size_t i = 0; i < tickers.size(); ++i) {
            double v = 0.0;
            if (!parse_double(fields[i + 1], v)) {
                throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": non-numeric value");
            }
            cols[i].push_back(v);
        }
    }
    std::vector<double> values;
    for (auto& c : cols) {
        values.insert(values.end(), c.begin(), c.end());
    }
    return Panel(std::move(tickers), std::move(dates), std::move(values), kind);
}

ValueSeries read_series(std::istream& in, SeriesKind kind, char delimiter) {
    Panel p = read_panel(in, kind, delimiter);
    if (p.instruments() != 1) {
        throw Error(ErrorCode::parse, "expected a single value column");
    }
    return p.series(0);
}

}  // namespace tailbreak
