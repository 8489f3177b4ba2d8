#pragma once

#include <cstdint>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/vec3.hpp"

namespace acnn {

// N points in model units (clouds are normalized to the unit sphere),
// optionally carrying unit normals and per-point part labels.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty or size N
    std::vector<int> labels;    // empty or size N

    int size() const { return static_cast<int>(points.size()); }
    bool has_normals() const { return !normals.empty(); }
    bool has_labels() const { return !labels.empty(); }

    void validate() const {
        if (points.empty()) throw InvalidArgument("point cloud must contain at least one point");
        for (const Vec3& p : points)
            if (!finite(p)) throw InvalidArgument("point cloud contains non-finite coordinates");
        if (!normals.empty()) {
            if (normals.size() != points.size())
                throw InvalidArgument("normal count does not match point count");
            for (const Vec3& n : normals) {
                if (!finite(n) || std::abs(norm(n) - 1.0) > 1e-6)
                    throw InvalidArgument("normals must be unit length");
            }
        }
        if (!labels.empty() && labels.size() != points.size())
            throw InvalidArgument("label count does not match point count");
    }
};

}  // namespace acnn
