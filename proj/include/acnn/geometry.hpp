#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/point_cloud.hpp"
#include "acnn/vec3.hpp"

namespace acnn {

// Annulus-shaped search region (r_inner, r_outer] with a fixed neighbor budget.
struct RingSpec {
    double r_inner = 0.0;
    double r_outer = 0.0;
    int k = 1;

    void validate() const {
        if (!(r_inner >= 0.0 && r_inner < r_outer))
            throw InvalidArgument("ring requires 0 <= r_inner < r_outer");
        if (k < 1) throw InvalidArgument("ring neighbor budget must be >= 1");
    }
};

// One search region of a neighborhood: exactly `k` indices after padding,
// ordered counterclockwise about the centroid normal.
struct RingNeighbors {
    std::vector<int> indices;  // size k
    int valid_count = 0;       // pre-padding qualifier count
    bool empty = false;        // no point qualified; padded with the centroid
};

struct Neighborhood {
    int centroid = -1;
    Vec3 normal;  // unit vector used for ordering
    std::vector<RingNeighbors> rings;
};

enum class Orientation { counterclockwise, clockwise };

// ---------------------------------------------------------------------------
// Farthest point sampling
// ---------------------------------------------------------------------------

// Greedy max-min selection over an arbitrary point set. Ties are broken by
// the smallest index so results are reproducible.
inline std::vector<int> farthest_point_sampling(std::span<const Vec3> points, int m,
                                                int seed_index) {
    const int n = static_cast<int>(points.size());
    if (m < 1 || m > n) throw InvalidArgument("farthest_point_sampling: m out of range");
    if (seed_index < 0 || seed_index >= n)
        throw InvalidArgument("farthest_point_sampling: invalid seed index");

    std::vector<int> selected;
    selected.reserve(static_cast<std::size_t>(m));
    selected.push_back(seed_index);

    std::vector<double> min_d2(static_cast<std::size_t>(n),
                               std::numeric_limits<double>::infinity());
    for (int step = 1; step < m; ++step) {
        const Vec3& last = points[static_cast<std::size_t>(selected.back())];
        int best = -1;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            const double d2 = norm2(points[static_cast<std::size_t>(i)] - last);
            if (d2 < min_d2[static_cast<std::size_t>(i)]) min_d2[static_cast<std::size_t>(i)] = d2;
            if (min_d2[static_cast<std::size_t>(i)] > best_d2 && min_d2[static_cast<std::size_t>(i)] > 0.0) {
                // min_d2 > 0 excludes already-selected points (distance 0 to themselves).
                best_d2 = min_d2[static_cast<std::size_t>(i)];
                best = i;
            }
        }
        if (best < 0) {
            // All remaining candidates coincide with selected points; fall back to
            // the first unselected index.
            std::vector<char> taken(static_cast<std::size_t>(n), 0);
            for (int s : selected) taken[static_cast<std::size_t>(s)] = 1;
            for (int i = 0; i < n && best < 0; ++i)
                if (!taken[static_cast<std::size_t>(i)]) best = i;
        }
        selected.push_back(best);
        min_d2[static_cast<std::size_t>(best)] = 0.0;
    }
    return selected;
}

inline std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m, int seed_index) {
    return farthest_point_sampling(std::span<const Vec3>(cloud.points), m, seed_index);
}

// ---------------------------------------------------------------------------
// Plain k-nearest neighbors (used by normal estimation)
// ---------------------------------------------------------------------------

inline std::vector<int> knn_indices(std::span<const Vec3> points, int query, int k) {
    const int n = static_cast<int>(points.size());
    if (query < 0 || query >= n) throw InvalidArgument("knn_indices: invalid query index");
    if (k < 1 || k > n - 1) throw InvalidArgument("knn_indices: k out of range");
    std::vector<std::pair<double, int>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n; ++i) {
        if (i == query) continue;
        cand.emplace_back(norm2(points[static_cast<std::size_t>(i)] - points[static_cast<std::size_t>(query)]), i);
    }
    std::sort(cand.begin(), cand.end());
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) out.push_back(cand[static_cast<std::size_t>(i)].second);
    return out;
}

// ---------------------------------------------------------------------------
// Normal estimation (least-squares plane fit)
// ---------------------------------------------------------------------------

// Covariance of the k nearest neighbors about the query point; the normal is
// the eigenvector of the smallest eigenvalue, sign-normalized so that the
// lexicographically first nonzero component is positive.
inline Vec3 estimate_normal(const PointCloud& cloud, int query, int k_neighbors = 10) {
    if (cloud.size() < k_neighbors + 1)
        throw InvalidArgument("estimate_normal: cloud must contain at least k+1 points");
    const Vec3 q = cloud.points[static_cast<std::size_t>(query)];
    const std::vector<int> nbrs = knn_indices(cloud.points, query, k_neighbors);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nbrs) {
        const Vec3 d = cloud.points[static_cast<std::size_t>(j)] - q;
        Eigen::Vector3d v(d.x, d.y, d.z);
        cov += v * v.transpose();
    }
    cov /= static_cast<double>(k_neighbors);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    const Eigen::Vector3d evals = solver.eigenvalues();  // ascending
    if (evals(2) <= 0.0 || evals(1) / evals(2) < 1e-9)
        throw DegenerateNeighborhood("estimate_normal: neighborhood rank < 2");

    Eigen::Vector3d v0 = solver.eigenvectors().col(0);
    Vec3 n{v0(0), v0(1), v0(2)};
    // Sign rule: first nonzero component positive.
    const double comps[3] = {n.x, n.y, n.z};
    for (double c : comps) {
        if (c != 0.0) {
            if (c < 0.0) n = n * -1.0;
            break;
        }
    }
    return normalized(n);
}

// ---------------------------------------------------------------------------
// Constraint-based k-NN on a ring
// ---------------------------------------------------------------------------

// All points with centroid distance in (r_inner, r_outer], ascending distance
// (ties by index), truncated to k. Under-populated rings repeat the closest
// qualifier; an empty ring is padded with the centroid and flagged. A first
// ring (r_inner == 0) admits points at distance exactly 0 — only the centroid
// index itself is excluded.
inline RingNeighbors ring_knn(std::span<const Vec3> points, int centroid, const RingSpec& ring) {
    const int n = static_cast<int>(points.size());
    if (centroid < 0 || centroid >= n) throw InvalidArgument("ring_knn: invalid centroid index");
    ring.validate();

    const Vec3 q = points[static_cast<std::size_t>(centroid)];
    std::vector<std::pair<double, int>> cand;
    for (int i = 0; i < n; ++i) {
        if (i == centroid) continue;
        const double d = distance(points[static_cast<std::size_t>(i)], q);
        const bool lower_ok = ring.r_inner == 0.0 ? d >= 0.0 : d > ring.r_inner;
        if (lower_ok && d <= ring.r_outer) cand.emplace_back(d, i);
    }
    std::sort(cand.begin(), cand.end());

    RingNeighbors out;
    out.valid_count = std::min<int>(ring.k, static_cast<int>(cand.size()));
    if (cand.empty()) {
        out.empty = true;
        out.indices.assign(static_cast<std::size_t>(ring.k), centroid);
        return out;
    }
    out.indices.reserve(static_cast<std::size_t>(ring.k));
    for (int i = 0; i < out.valid_count; ++i)
        out.indices.push_back(cand[static_cast<std::size_t>(i)].second);
    while (static_cast<int>(out.indices.size()) < ring.k)
        out.indices.push_back(cand[0].second);
    return out;
}

inline RingNeighbors ring_knn(const PointCloud& cloud, int centroid, const RingSpec& ring) {
    return ring_knn(std::span<const Vec3>(cloud.points), centroid, ring);
}

// ---------------------------------------------------------------------------
// Tangent-plane projection
// ---------------------------------------------------------------------------

inline Vec3 project_to_tangent(const Vec3& x, const Vec3& q, const Vec3& n) {
    return x - dot(x - q, n) * n;
}

inline std::vector<Vec3> project_to_tangent(std::span<const Vec3> xs, const Vec3& q,
                                            const Vec3& n) {
    if (std::abs(norm(n) - 1.0) > 1e-6)
        throw InvalidArgument("project_to_tangent: normal must be unit length");
    std::vector<Vec3> out;
    out.reserve(xs.size());
    for (const Vec3& x : xs) out.push_back(project_to_tangent(x, q, n));
    return out;
}

// ---------------------------------------------------------------------------
// Counterclockwise ordering
// ---------------------------------------------------------------------------

// Angle key in (-3, 1]: the cosine against the reference direction, remapped
// by the hemisphere sign so that the key decreases monotonically over a full
// turn. A projection coinciding with the query gets key 1 (right after the
// reference).
inline double angle_key(const Vec3& c, const Vec3& v, const Vec3& n) {
    const double vn = norm(v);
    if (vn < 1e-12) return 1.0;
    const double cos_theta = dot(c, v) / (norm(c) * vn);
    const double sign = dot(cross(c, v), n);
    return sign >= 0.0 ? cos_theta : -cos_theta - 2.0;
}

// Sorts `neighbors` around q in the tangent plane of n. The point at list
// position `start` defines the reference direction and always comes first;
// the rest follow by descending angle key (counterclockwise) or ascending
// (clockwise). Key ties are broken by ascending point index. Returns the
// original indices, permuted.
inline std::vector<int> order_neighbors(std::span<const int> neighbors,
                                        std::span<const Vec3> points, const Vec3& q,
                                        const Vec3& n, int start, Orientation orientation) {
    if (neighbors.empty()) throw InvalidArgument("order_neighbors: empty neighbor list");
    if (start < 0 || start >= static_cast<int>(neighbors.size()))
        throw InvalidArgument("order_neighbors: start position out of range");

    std::vector<Vec3> xs;
    xs.reserve(neighbors.size());
    for (int idx : neighbors) xs.push_back(points[static_cast<std::size_t>(idx)]);
    const std::vector<Vec3> proj = project_to_tangent(xs, q, n);

    // Reference direction from the start point; if it projects onto q, fall
    // back to the first neighbor with a usable projection.
    int ref_pos = start;
    if (norm(proj[static_cast<std::size_t>(ref_pos)] - q) < 1e-12) {
        for (std::size_t j = 0; j < proj.size(); ++j) {
            if (norm(proj[j] - q) >= 1e-12) {
                ref_pos = static_cast<int>(j);
                break;
            }
        }
    }
    const Vec3 c = proj[static_cast<std::size_t>(ref_pos)] - q;
    if (norm(c) < 1e-12) {
        // Everything projects onto q; any deterministic order works.
        std::vector<int> out(neighbors.begin(), neighbors.end());
        std::sort(out.begin(), out.end());
        return out;
    }

    struct Entry {
        double key;
        int point_index;
        int list_pos;
    };
    std::vector<Entry> rest;
    rest.reserve(neighbors.size() - 1);
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
        if (static_cast<int>(j) == start) continue;
        rest.push_back({angle_key(c, proj[j] - q, n), neighbors[j], static_cast<int>(j)});
    }
    const bool ccw = orientation == Orientation::counterclockwise;
    std::sort(rest.begin(), rest.end(), [ccw](const Entry& a, const Entry& b) {
        if (a.key != b.key) return ccw ? a.key > b.key : a.key < b.key;
        if (a.point_index != b.point_index) return a.point_index < b.point_index;
        return a.list_pos < b.list_pos;
    });

    std::vector<int> out;
    out.reserve(neighbors.size());
    out.push_back(neighbors[static_cast<std::size_t>(start)]);
    for (const Entry& e : rest) out.push_back(e.point_index);
    return out;
}

inline std::vector<int> order_counterclockwise(std::span<const int> neighbors,
                                               const PointCloud& cloud, const Vec3& q,
                                               const Vec3& n, int start) {
    return order_neighbors(neighbors, std::span<const Vec3>(cloud.points), q, n, start,
                           Orientation::counterclockwise);
}

inline std::vector<int> order_clockwise(std::span<const int> neighbors, const PointCloud& cloud,
                                        const Vec3& q, const Vec3& n, int start) {
    return order_neighbors(neighbors, std::span<const Vec3>(cloud.points), q, n, start,
                           Orientation::clockwise);
}

}  // namespace acnn
