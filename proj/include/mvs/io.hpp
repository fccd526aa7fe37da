#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvs/errors.hpp"
#include "mvs/grid.hpp"
#include "mvs/operator.hpp"

#include <unistd.h>

namespace mvs {

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Short decimal form used in file names, e.g. 0.25 -> "0.25".
inline std::string format_tag(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

/// Writes through a temporary file in the same directory, then renames.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PreconditionError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw PreconditionError("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
}

/// JSON with sorted keys (nlohmann objects are ordered maps) and a trailing newline.
inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("missing artifact '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw PreconditionError("cannot parse '" + path.string() + "': " + e.what());
    }
}

/// Index box [lo, hi] per axis.
struct NodeBox {
    MultiIndex lo{0, 0, 0};
    MultiIndex hi{0, 0, 0};
};

/// Bounding box of the flagged nodes grown by `margin` nodes, clipped to the grid.
/// With nothing flagged, the whole grid.
inline NodeBox support_box(const Grid& g, const std::vector<std::uint8_t>& flags, int margin) {
    NodeBox b;
    bool any = false;
    for (NodeIndex i = 0; i < g.size(); ++i) {
        if (!flags[i]) continue;
        const MultiIndex m = g.multi(i);
        for (int k = 0; k < g.dim; ++k) {
            b.lo[k] = any ? std::min(b.lo[k], m[k]) : m[k];
            b.hi[k] = any ? std::max(b.hi[k], m[k]) : m[k];
        }
        any = true;
    }
    for (int k = 0; k < g.dim; ++k) {
        b.lo[k] = any ? std::max(0, b.lo[k] - margin) : 0;
        b.hi[k] = any ? std::min(g.per_axis - 1, b.hi[k] + margin) : g.per_axis - 1;
    }
    return b;
}

inline NodeBox full_box(const Grid& g) {
    NodeBox b;
    for (int k = 0; k < g.dim; ++k) b.hi[k] = g.per_axis - 1;
    return b;
}

/// CSV: header, one row per node of the box (first axis fastest), coordinates then value.
template <class ValueAt>
std::string grid_csv(const Grid& g, const NodeBox& box, const std::string& value_name, ValueAt value_at) {
    static const char* axes[3] = {"x", "y", "z"};
    std::string out;
    for (int k = 0; k < g.dim; ++k) out += std::string(axes[k]) + ",";
    out += value_name + "\n";
    for (int z = box.lo[2]; z <= box.hi[2]; ++z)
        for (int y = box.lo[1]; y <= box.hi[1]; ++y)
            for (int x = box.lo[0]; x <= box.hi[0]; ++x) {
                const NodeIndex i = g.linear({x, y, z});
                const Point p = g.coords(i);
                for (int k = 0; k < g.dim; ++k) out += format_double(p[k]) + ",";
                out += value_at(i) + "\n";
            }
    return out;
}

inline std::string field_csv(const Grid& g, const Field& v, const NodeBox& box, const std::string& name = "value") {
    return grid_csv(g, box, name, [&](NodeIndex i) { return format_double(v[static_cast<Eigen::Index>(i)]); });
}

inline std::string indicator_csv(const Grid& g, const std::vector<std::uint8_t>& ind, const NodeBox& box) {
    return grid_csv(g, box, "indicator", [&](NodeIndex i) { return std::string(ind[i] ? "1" : "0"); });
}

/// Parses a CSV written by grid_csv; returns rows of numbers.
inline std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, std::size_t columns) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("missing artifact '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != columns) throw PreconditionError("malformed row in '" + path.string() + "'");
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Plain SVG 1.1 picture of a planar cell set: filled cells (row runs), the cell-union
/// outline, the circles of radius r_in and r_out about x0, and x0 itself.
struct SvgSet {
    double h = 0.0;
    double R = 0.0;
    double r_in = 0.0;
    double r_out = 0.0;
    double kappa = 0.0;
    std::vector<std::pair<double, double>> cells;  // cell centers of D_R
};

inline std::string set_svg(SvgSet s) {
    require(!s.cells.empty(), "SVG export needs a nonempty set");
    std::sort(s.cells.begin(), s.cells.end(),
              [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    const double h = s.h;
    const double extent = std::max(s.r_out, 1.5 * h) * 1.15;
    const double size = 640.0;
    const double scale = size / (2.0 * extent);
    auto X = [&](double x) { return (x + extent) * scale; };
    auto Y = [&](double y) { return (extent - y) * scale; };
    auto num = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", x);
        return std::string(buf);
    };
    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(size) << "\" height=\"" << num(size)
      << "\" viewBox=\"0 0 " << num(size) << " " << num(size) << "\">\n"
      << "<title>D_R for R = " << format_tag(s.R) << "</title>\n"
      << "<desc>R=" << format_double(s.R) << " h=" << format_double(h) << " r_in=" << format_double(s.r_in)
      << " r_out=" << format_double(s.r_out) << " kappa=" << format_double(s.kappa) << "</desc>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << num(size) << "\" height=\"" << num(size) << "\" fill=\"#ffffff\"/>\n";

    // filled row runs
    o << "<g fill=\"#9ecae1\" stroke=\"none\">\n";
    std::size_t i = 0;
    while (i < s.cells.size()) {
        std::size_t j = i;
        while (j + 1 < s.cells.size() && s.cells[j + 1].second == s.cells[i].second &&
               std::abs(s.cells[j + 1].first - s.cells[j].first - h) < 1e-9 * h)
            ++j;
        const double x0 = s.cells[i].first - 0.5 * h, x1 = s.cells[j].first + 0.5 * h;
        const double y1 = s.cells[i].second + 0.5 * h;
        o << "<rect x=\"" << num(X(x0)) << "\" y=\"" << num(Y(y1)) << "\" width=\"" << num((x1 - x0) * scale)
          << "\" height=\"" << num(h * scale) << "\"/>\n";
        i = j + 1;
    }
    o << "</g>\n";

    // outline: cell faces between the set and its complement
    auto key = [&](double x, double y) {
        return std::make_pair(static_cast<long long>(std::llround(x / h)), static_cast<long long>(std::llround(y / h)));
    };
    std::vector<std::pair<long long, long long>> keys;
    keys.reserve(s.cells.size());
    for (const auto& c : s.cells) keys.push_back(key(c.first, c.second));
    std::sort(keys.begin(), keys.end());
    auto inside = [&](long long a, long long b) { return std::binary_search(keys.begin(), keys.end(), std::make_pair(a, b)); };
    o << "<path fill=\"none\" stroke=\"#08306b\" stroke-width=\"1\" d=\"";
    for (const auto& [a, b] : keys) {
        const double cx = a * h, cy = b * h, e = 0.5 * h;
        if (!inside(a - 1, b)) o << "M" << num(X(cx - e)) << " " << num(Y(cy - e)) << "V" << num(Y(cy + e));
        if (!inside(a + 1, b)) o << "M" << num(X(cx + e)) << " " << num(Y(cy - e)) << "V" << num(Y(cy + e));
        if (!inside(a, b - 1)) o << "M" << num(X(cx - e)) << " " << num(Y(cy - e)) << "H" << num(X(cx + e));
        if (!inside(a, b + 1)) o << "M" << num(X(cx - e)) << " " << num(Y(cy + e)) << "H" << num(X(cx + e));
    }
    o << "\"/>\n";
    o << "<circle cx=\"" << num(X(0)) << "\" cy=\"" << num(Y(0)) << "\" r=\"" << num(s.r_in * scale)
      << "\" fill=\"none\" stroke=\"#238b45\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
    o << "<circle cx=\"" << num(X(0)) << "\" cy=\"" << num(Y(0)) << "\" r=\"" << num(s.r_out * scale)
      << "\" fill=\"none\" stroke=\"#cb181d\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
    o << "<circle cx=\"" << num(X(0)) << "\" cy=\"" << num(Y(0)) << "\" r=\"3\" fill=\"#000000\"/>\n";
    o << "</svg>\n";
    return o.str();
}

}  // namespace mvs
