#pragma once

#include <Eigen/Core>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace fcmhe::csv {

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::invalid_argument("not a number: '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (true) {
        const auto pos = line.find(sep, begin);
        out.emplace_back(line.substr(begin, pos == std::string_view::npos ? std::string_view::npos : pos - begin));
        if (pos == std::string_view::npos) break;
        begin = pos + 1;
    }
    return out;
}

/// Column-oriented table with a header row; all cells are strings.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        throw std::invalid_argument("missing column '" + std::string(name) + "'");
    }

    std::vector<double> numeric_column(std::string_view name) const {
        const int c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(parse_double(r.at(static_cast<std::size_t>(c))));
        return out;
    }
};

inline Table read_table(std::istream& in) {
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw std::invalid_argument("CSV line " + std::to_string(lineno) + ": expected " +
                                        std::to_string(t.header.size()) + " cells, got " +
                                        std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_table(in);
}

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    Writer& header(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) out_ << (i ? "," : "") << names[i];
        out_ << '\n';
        return *this;
    }

    Writer& cell(double v) { return raw(format_double(v)); }
    Writer& cell(long long v) { return raw(std::to_string(v)); }
    Writer& cell(const std::string& v) { return raw(v); }

    template <typename Vec>
    Writer& cells(const Vec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) cell(static_cast<double>(v(i)));
        return *this;
    }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

private:
    Writer& raw(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }

    std::ostream& out_;
    bool first_ = true;
};

inline std::vector<std::string> numbered(const std::string& prefix, int count) {
    std::vector<std::string> out;
    for (int i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

}  // namespace fcmhe::csv
