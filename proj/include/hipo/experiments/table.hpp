#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hipo/core/error.hpp"

namespace hipo::experiments {

/// Column-labelled tab-separated table; numbers are written round-trippable.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        if (row.size() != columns.size()) throw InvalidArgument("row width does not match the header");
        rows.push_back(std::move(row));
    }

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw NotFound("no column '" + name + "'");
    }

    double number(std::size_t row, const std::string& name) const {
        const auto& s = rows.at(row).at(column(name));
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("not a number: '" + s + "'");
        return v;
    }
};

inline std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline void write_tsv(std::ostream& out, const Table& t) {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].find_first_of("\t\n") != std::string::npos) throw InvalidArgument("cell contains a tab or newline");
            out << (i ? "\t" : "") << cells[i];
        }
        out << '\n';
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
}

inline Table read_tsv(std::istream& in) {
    Table t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            auto tab = s.find('\t', start);
            cells.push_back(s.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        return cells;
    };
    if (!std::getline(in, line)) throw ParseError("missing header line");
    t.columns = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.columns.size()) throw ParseError("line " + std::to_string(lineno) + " has the wrong width");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline void export_table(const Table& t, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    write_tsv(out, t);
    if (!out) throw Error("write failed: " + path);
}

inline Table import_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open " + path);
    return read_tsv(in);
}

}  // namespace hipo::experiments
