#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace thermosmolu {

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        fail(ErrorKind::SchemaError, "not a number: '" + std::string(s) + "'");
    return v;
}

/// "# grid: d,nx[,ny[,nz]],hx[,hy[,hz]]"
inline std::string grid_header(const Grid& g) {
    std::string s = "# grid: " + std::to_string(g.dim());
    for (int a = 0; a < g.dim(); ++a) s += "," + std::to_string(g.cells(a));
    for (int a = 0; a < g.dim(); ++a) s += "," + format_double(g.spacing(a));
    return s;
}

inline Grid parse_grid_header(const std::string& line) {
    const std::string prefix = "# grid:";
    if (line.rfind(prefix, 0) != 0) fail(ErrorKind::IoError, "missing '# grid:' header");
    std::vector<std::string> parts;
    std::stringstream ss(line.substr(prefix.size()));
    for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
    if (parts.empty()) fail(ErrorKind::IoError, "empty grid header");
    const int d = static_cast<int>(parse_double(parts[0]));
    if (d < 1 || d > 3 || parts.size() != static_cast<std::size_t>(1 + 2 * d))
        fail(ErrorKind::IoError, "malformed grid header: " + line);
    std::vector<std::size_t> cells(d);
    std::vector<double> extents(d);
    for (int a = 0; a < d; ++a) {
        cells[a] = static_cast<std::size_t>(parse_double(parts[1 + a]));
        extents[a] = parse_double(parts[1 + d + a]) * static_cast<double>(cells[a] - 1);
    }
    return Grid(extents, cells);
}

inline void write_field_csv(const ScalarField& f, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    out << grid_header(f.grid()) << '\n';
    for (double v : f.values()) out << format_double(v) << '\n';
    if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

inline ScalarField read_field_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    Grid g = parse_grid_header(line);
    std::vector<double> values;
    values.reserve(g.points());
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        values.push_back(parse_double(line));
    }
    if (values.size() != g.points())
        fail(ErrorKind::IoError, path.string() + ": expected " + std::to_string(g.points()) + " values, found " +
                                     std::to_string(values.size()));
    return ScalarField(std::move(g), std::move(values));
}

/// Raw little-endian float64 stream plus a text sidecar `<path>.hdr` carrying the grid header.
inline void write_field_raw(const ScalarField& f, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    for (double v : f.values()) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    std::ofstream hdr(path.string() + ".hdr");
    hdr << grid_header(f.grid()) << '\n' << "format: f64le\n" << "count: " << f.size() << '\n';
    if (!out || !hdr) fail(ErrorKind::IoError, "write failed for " + path.string());
}

inline ScalarField read_field_raw(const std::filesystem::path& path) {
    std::ifstream hdr(path.string() + ".hdr");
    if (!hdr) fail(ErrorKind::IoError, "missing sidecar header for " + path.string());
    std::string line;
    std::getline(hdr, line);
    Grid g = parse_grid_header(line);
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
    std::vector<double> values(g.points());
    for (double& v : values) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorKind::IoError, "truncated raw field " + path.string());
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        v = std::bit_cast<double>(bits);
    }
    return ScalarField(std::move(g), std::move(values));
}

} // namespace thermosmolu
