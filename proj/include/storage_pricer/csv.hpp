#pragma once

// Minimal comma-delimited reader/writer for the plain numeric tables used
// by ingestion and export. No quoting: fields never contain commas.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "storage_pricer/errors.hpp"

namespace storage_pricer {

struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line;  // 1-based source line of each row

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require(const std::string& name) const {
        const int c = column(name);
        if (c < 0) throw ConfigError(path + ": missing required column '" + name + "'");
        return c;
    }

    double number(std::size_t r, int c) const {
        const std::string& s = rows[r][static_cast<std::size_t>(c)];
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError(path + ":" + std::to_string(line[r]) + ": column '" + header[c] +
                              "' is not a number: '" + s + "'");
        return v;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(trim(f));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Reads a header-first CSV. Blank lines are skipped; every data row must
/// have as many fields as the header.
inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    CsvTable t;
    t.path = path;
    std::string raw;
    int ln = 0;
    while (std::getline(in, raw)) {
        ++ln;
        if (ln == 1 && raw.size() >= 3 && static_cast<unsigned char>(raw[0]) == 0xEF) raw = raw.substr(3);  // BOM
        if (detail::trim(raw).empty()) continue;
        auto f = detail::split_fields(raw);
        if (t.header.empty()) {
            t.header = std::move(f);
            continue;
        }
        if (f.size() != t.header.size())
            throw ConfigError(path + ":" + std::to_string(ln) + ": expected " + std::to_string(t.header.size()) +
                              " fields, found " + std::to_string(f.size()));
        t.rows.push_back(std::move(f));
        t.line.push_back(ln);
    }
    if (t.header.empty()) throw ConfigError(path + ": empty file (header row required)");
    return t;
}

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path), path_(path) {
        if (!out_) throw ConfigError("cannot write " + path);
        write_row(header);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
        out_ << '\n';
    }

    template <class... Ts>
    void row(const Ts&... v) {
        std::vector<std::string> f;
        (f.push_back(cell(v)), ...);
        write_row(f);
    }

private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(double v) { return fmt(v); }

    std::ofstream out_;
    std::string path_;
};

}  // namespace storage_pricer
