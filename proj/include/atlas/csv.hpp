#pragma once

// Comma-separated values with double-quote escaping and a required header row.
// Leading lines that start with '#' are a provenance block and are skipped.

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "atlas/core.hpp"

namespace atlas::csv {

struct Record {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> cells;
};

/// Incremental record reader. Quoted cells may contain commas, doubled quotes
/// and newlines.
class Reader {
public:
    explicit Reader(std::istream& in, std::size_t first_line = 1) : in_(in), line_(first_line) {}

    /// Next record, or nullopt at end of input. Throws InputError on an
    /// unterminated quote.
    std::optional<Record> next() {
        Record rec;
        std::string cell;
        bool in_quotes = false;
        bool any = false;
        bool cell_quoted = false;
        int ch;
        rec.line = line_;
        while ((ch = in_.get()) != std::char_traits<char>::eof()) {
            const char c = static_cast<char>(ch);
            any = true;
            if (in_quotes) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        cell.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    if (c == '\n') ++line_;
                    cell.push_back(c);
                }
                continue;
            }
            if (c == '"' && cell.empty() && !cell_quoted) {
                in_quotes = true;
                cell_quoted = true;
            } else if (c == ',') {
                rec.cells.push_back(std::move(cell));
                cell.clear();
                cell_quoted = false;
            } else if (c == '\n') {
                ++line_;
                if (!cell.empty() && cell.back() == '\r') cell.pop_back();
                rec.cells.push_back(std::move(cell));
                return rec;
            } else {
                cell.push_back(c);
            }
        }
        if (in_quotes) throw InputError("csv: unterminated quote in record starting at line " + std::to_string(rec.line));
        if (!any) return std::nullopt;
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        rec.cells.push_back(std::move(cell));
        return rec;
    }

    std::size_t line() const { return line_; }

private:
    std::istream& in_;
    std::size_t line_ = 1;
};

struct Table {
    std::vector<std::string> header;
    std::vector<Record> rows;

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }
    std::size_t require_column(std::string_view name) const {
        if (auto c = column(name)) return *c;
        throw InputError("csv: missing required column '" + std::string(name) + "'");
    }
};

inline bool is_blank(const Record& r) { return r.cells.size() == 1 && r.cells[0].empty(); }

/// Reads a whole table; every row must have as many cells as the header.
inline Table read_table(std::istream& in) {
    Table t;
    std::size_t skipped_lines = 0;
    while (in.peek() == '#') {
        std::string skipped;
        std::getline(in, skipped);
        ++skipped_lines;
    }
    Reader reader(in, skipped_lines + 1);
    auto header = reader.next();
    if (!header) return t;
    t.header = std::move(header->cells);
    while (auto rec = reader.next()) {
        if (is_blank(*rec)) continue;
        if (rec->cells.size() != t.header.size())
            throw InputError("csv: line " + std::to_string(rec->line) + " has " + std::to_string(rec->cells.size()) +
                             " cells, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(*rec));
    }
    return t;
}

inline std::string quote(std::string_view cell) {
    if (cell.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(cell);
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << quote(cells[i]);
    }
    out << '\n';
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline double parse_double(const std::string& s, std::size_t line, std::string_view column) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw InputError("csv: line " + std::to_string(line) + " column '" + std::string(column) +
                         "' is not a number: '" + s + "'");
    }
}

}  // namespace atlas::csv
