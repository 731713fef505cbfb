#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "hipo/core/error.hpp"
#include "hipo/data/schema.hpp"

namespace hipo::data {

/// Continuous cells hold the parsed number; categorical cells hold the index
/// of the value within the column's schema value list.
using Cell = std::variant<double, std::uint32_t>;

struct RawTable {
    Schema schema;
    std::vector<std::vector<Cell>> rows;  // feature columns in schema order
    std::vector<std::uint8_t> labels;     // 1 = positive label

    std::size_t size() const { return rows.size(); }
};

namespace detail {

// RFC 4180 subset: quoted fields with doubled quotes, no embedded newlines.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline bool parse_double(const std::string& s, double& v) {
    auto first = s.data();
    auto last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    if (first == last) return false;
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    return ec == std::errc() && ptr == last && std::isfinite(v);
}

}  // namespace detail

/// Reads a CSV with a header row into typed cells. Errors name the 1-based
/// data row (the header is row 0) and the column.
inline RawTable read_csv(std::istream& in, const Schema& schema) {
    schema.validate();
    RawTable table;
    table.schema = schema;

    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header row");
    auto header = detail::split_csv_line(line);
    if (header != schema.header) {
        std::string got;
        for (const auto& h : header) got += (got.empty() ? "" : ",") + h;
        throw ParseError("header mismatch: got '" + got + "'");
    }

    std::vector<std::unordered_map<std::string, std::uint32_t>> lookup(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c)
        for (std::uint32_t v = 0; v < schema.columns[c].values.size(); ++v) lookup[c][schema.columns[c].values[v]] = v;

    // header position -> feature column (or npos for the label)
    std::vector<std::size_t> slot(header.size());
    for (std::size_t h = 0; h < header.size(); ++h)
        slot[h] = header[h] == schema.label_column ? std::string::npos : schema.column_index(header[h]);

    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row_no;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                             " cells, got " + std::to_string(cells.size()));
        std::vector<Cell> row(schema.columns.size());
        std::uint8_t label = 0;
        for (std::size_t h = 0; h < header.size(); ++h) {
            const auto& text = cells[h];
            if (slot[h] == std::string::npos) {
                if (text == schema.positive_label) {
                    label = 1;
                } else if (schema.negative_label == "*" || text == schema.negative_label) {
                    label = 0;
                } else {
                    throw ParseError("row " + std::to_string(row_no) + ", column " + header[h] +
                                     ": unknown label '" + text + "'");
                }
                continue;
            }
            const auto& col = schema.columns[slot[h]];
            if (col.kind == ColumnKind::continuous) {
                double v = 0;
                if (!detail::parse_double(text, v))
                    throw ParseError("row " + std::to_string(row_no) + ", column " + col.name +
                                     ": cannot parse '" + text + "' as a number");
                row[slot[h]] = v;
            } else {
                auto it = lookup[slot[h]].find(text);
                if (it == lookup[slot[h]].end())
                    throw ParseError("row " + std::to_string(row_no) + ", column " + col.name + ": value '" + text +
                                     "' not in schema");
                row[slot[h]] = it->second;
            }
        }
        table.rows.push_back(std::move(row));
        table.labels.push_back(label);
    }
    return table;
}

inline RawTable load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open CSV file " + path);
    return read_csv(in, schema);
}

/// Writes a table back to CSV in the schema's header order.
inline void write_csv(std::ostream& out, const RawTable& table) {
    const auto& s = table.schema;
    for (std::size_t h = 0; h < s.header.size(); ++h) out << (h ? "," : "") << s.header[h];
    out << '\n';
    char buf[64];
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t h = 0; h < s.header.size(); ++h) {
            if (h) out << ',';
            if (s.header[h] == s.label_column) {
                out << (table.labels[r] ? s.positive_label : (s.negative_label == "*" ? "other" : s.negative_label));
                continue;
            }
            auto c = s.column_index(s.header[h]);
            if (const double* v = std::get_if<double>(&table.rows[r][c])) {
                auto [p, ec] = std::to_chars(buf, buf + sizeof buf, *v);
                out.write(buf, p - buf);
            } else {
                out << s.columns[c].values[std::get<std::uint32_t>(table.rows[r][c])];
            }
        }
        out << '\n';
    }
}

}  // namespace hipo::data
