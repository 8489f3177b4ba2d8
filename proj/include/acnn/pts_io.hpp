#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "acnn/errors.hpp"
#include "acnn/point_cloud.hpp"

namespace acnn {

// Text format:
//   acnn-pts 1 <N> <flags>     with flags in {xyz, xyzn, xyznl}
// followed by N whitespace-separated rows. Values round-trip to 9
// significant digits.

namespace detail {

inline std::string format_g9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

inline void write_pts(std::ostream& os, const PointCloud& cloud) {
    const bool with_normals = cloud.has_normals();
    const bool with_labels = cloud.has_labels();
    if (with_labels && !with_normals)
        throw InvalidArgument("write_pts: labeled clouds must carry normals (xyznl)");
    os << "acnn-pts 1 " << cloud.size() << ' '
       << (with_labels ? "xyznl" : (with_normals ? "xyzn" : "xyz")) << '\n';
    for (int i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[static_cast<std::size_t>(i)];
        os << detail::format_g9(p.x) << ' ' << detail::format_g9(p.y) << ' '
           << detail::format_g9(p.z);
        if (with_normals) {
            const Vec3& n = cloud.normals[static_cast<std::size_t>(i)];
            os << ' ' << detail::format_g9(n.x) << ' ' << detail::format_g9(n.y) << ' '
               << detail::format_g9(n.z);
        }
        if (with_labels) os << ' ' << cloud.labels[static_cast<std::size_t>(i)];
        os << '\n';
    }
}

inline void write_pts(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_pts(os, cloud);
    if (!os) throw IoError("write failed: " + path.string());
}

inline PointCloud read_pts(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw ParseError("empty pts file", 1);
    std::istringstream hs(header);
    std::string magic, flags;
    int version = 0, n = 0;
    if (!(hs >> magic >> version >> n >> flags) || magic != "acnn-pts")
        throw ParseError("malformed pts header", 1);
    if (version != 1) throw ParseError("unsupported pts version", 1);
    if (n < 1) throw ParseError("pts point count must be >= 1", 1);
    int columns = 3;
    if (flags == "xyz") columns = 3;
    else if (flags == "xyzn") columns = 6;
    else if (flags == "xyznl") columns = 7;
    else throw ParseError("unknown pts flags '" + flags + "'", 1);

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    std::string line;
    int line_no = 1;
    int rows = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        double vals[6];
        int got = 0;
        for (; got < (columns == 7 ? 6 : columns); ++got)
            if (!(ls >> vals[got])) break;
        int label = 0;
        if (columns == 7 && got == 6 && (ls >> label)) got = 7;
        std::string extra;
        if (got != columns || (ls >> extra))
            throw ParseError("expected " + std::to_string(columns) + " columns", line_no);
        if (rows >= n) throw ParseError("more rows than declared", line_no);
        cloud.points.push_back({vals[0], vals[1], vals[2]});
        if (columns >= 6) cloud.normals.push_back({vals[3], vals[4], vals[5]});
        if (columns == 7) cloud.labels.push_back(label);
        ++rows;
    }
    if (rows != n) throw ParseError("row count mismatch: declared " + std::to_string(n) +
                                        ", found " + std::to_string(rows),
                                    line_no);
    cloud.validate();
    return cloud;
}

inline PointCloud read_pts(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open pts file: " + path.string());
    return read_pts(is);
}

}  // namespace acnn
