#include "text.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace tailbreak::detail {

std::vector<std::string> split(std::string_view line, char delimiter) {
    std::vector<std::string> fields;
    std::string token;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
            token.push_back(ch);
        } else if (ch == delimiter && !quoted) {
            fields.push_back(std::move(token));
            token.clear();
        } else {
            token.push_back(ch);
        }
    }
    fields.push_back(std::move(token));
    return fields;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return std::string(trim(s));
}

std::string format_double(double v) {
    if (v == 0.0) {
        v = 0.0;  // drop the sign of -0
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    if (text.empty()) {
        return false;
    }
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    return res.ec == std::errc{} && res.ptr == text.data() + text.size() && std::isfinite(out);
}

bool parse_int(std::string_view text, long long& out) {
    text = trim(text);
    if (text.empty()) {
        return false;
    }
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

}  // namespace tailbreak::detail
