#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "tdsurv/dataset.hpp"

namespace tdsurv::csv {

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    // strip a trailing \r from CRLF files
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
        out.back().pop_back();
    return out;
}

inline double parse_double(std::string_view s, std::size_t row, int col) {
    double v = 0.0;
    const auto* begin = s.data();
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw error("row " + std::to_string(row) + ", column " +
                    std::to_string(col + 1) + ": cannot parse number '" +
                    std::string(s) + "'");
    return v;
}

inline long long parse_id(std::string_view s, std::size_t row) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw error("row " + std::to_string(row) + ": cannot parse id '" +
                    std::string(s) + "'");
    return v;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw error("cannot open file for writing: " + path);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }
private:
    std::ofstream out_;
};

}  // namespace tdsurv::csv
