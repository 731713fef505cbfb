#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/core/error.hpp"

namespace hipo::data {

enum class ColumnKind { continuous, categorical };

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> values;  // categorical only, in one-hot order
};

/// Column layout of a CSV table. `header` is the full CSV column order, which
/// interleaves the feature columns with the label column.
///
/// Sidecar text format, one declaration per line, `#` starts a comment:
///
///     <name> continuous
///     <name> categorical v1,v2,...
///     <name> label positive=<value> [negative=<value>|negative=*]
///
/// Lines appear in CSV column order.
struct Schema {
    std::vector<Column> columns;
    std::string label_column;
    std::string positive_label;
    std::string negative_label = "*";  // "*" accepts any non-positive value
    std::vector<std::string> header;

    std::size_t feature_count() const { return columns.size(); }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == name) return i;
        throw NotFound("no column named '" + name + "'");
    }

    void validate() const {
        std::set<std::string> seen;
        if (label_column.empty()) throw InvalidArgument("schema has no label column");
        for (const auto& c : columns) {
            if (c.name == label_column) throw InvalidArgument("label column listed as a feature: " + c.name);
            if (!seen.insert(c.name).second) throw InvalidArgument("duplicate column name: " + c.name);
            if (c.kind == ColumnKind::categorical) {
                std::set<std::string> vals(c.values.begin(), c.values.end());
                if (vals.size() != c.values.size())
                    throw InvalidArgument("duplicate categorical value in column " + c.name);
                if (vals.size() < 2)
                    throw InvalidArgument("categorical column " + c.name + " needs at least 2 values");
            }
        }
        if (header.size() != columns.size() + 1) throw InvalidArgument("schema header size mismatch");
    }

    static Schema parse(std::istream& in) {
        Schema s;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string name, kind;
            if (!(ls >> name)) continue;
            if (!(ls >> kind)) throw ParseError("schema line " + std::to_string(lineno) + ": missing kind");
            if (kind == "continuous") {
                s.columns.push_back({name, ColumnKind::continuous, {}});
            } else if (kind == "categorical") {
                std::string list;
                ls >> list;
                Column c{name, ColumnKind::categorical, {}};
                std::stringstream vs(list);
                for (std::string v; std::getline(vs, v, ',');) c.values.push_back(v);
                s.columns.push_back(std::move(c));
            } else if (kind == "label") {
                if (!s.label_column.empty())
                    throw ParseError("schema line " + std::to_string(lineno) + ": second label column");
                s.label_column = name;
                for (std::string kv; ls >> kv;) {
                    if (kv.rfind("positive=", 0) == 0) s.positive_label = kv.substr(9);
                    else if (kv.rfind("negative=", 0) == 0) s.negative_label = kv.substr(9);
                    else throw ParseError("schema line " + std::to_string(lineno) + ": unknown option " + kv);
                }
                if (s.positive_label.empty())
                    throw ParseError("schema line " + std::to_string(lineno) + ": label needs positive=<value>");
            } else {
                throw ParseError("schema line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
            }
            s.header.push_back(name);
        }
        s.validate();
        return s;
    }

    static Schema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw NotFound("cannot open schema file " + path);
        return parse(in);
    }

    std::string to_text() const {
        std::ostringstream out;
        for (const auto& h : header) {
            if (h == label_column) {
                out << h << " label positive=" << positive_label << " negative=" << negative_label << '\n';
                continue;
            }
            const auto& c = columns[column_index(h)];
            if (c.kind == ColumnKind::continuous) {
                out << c.name << " continuous\n";
            } else {
                out << c.name << " categorical ";
                for (std::size_t i = 0; i < c.values.size(); ++i) out << (i ? "," : "") << c.values[i];
                out << '\n';
            }
        }
        return out.str();
    }
};

inline void to_json(nlohmann::json& j, const Schema& s) { j = s.to_text(); }

inline void from_json(const nlohmann::json& j, Schema& s) {
    std::istringstream in(j.get<std::string>());
    s = Schema::parse(in);
}

}  // namespace hipo::data
