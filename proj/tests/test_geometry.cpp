#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "acnn/geometry.hpp"
#include "acnn/rng.hpp"

using namespace acnn;

#include "support/oracles.hpp"

using namespace acnn::oracles;

// ---------------------------------------------------------------------------
// Farthest point sampling
// ---------------------------------------------------------------------------

TEST_CASE("fps picks greedy max-min points") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
    CHECK(farthest_point_sampling(cloud, 3, 0) == std::vector<int>{0, 2, 1});
}

TEST_CASE("fps degenerate selections") {
    Rng rng(7);
    PointCloud cloud;
    cloud.points = random_cloud(rng, 12);
    CHECK(farthest_point_sampling(cloud, 1, 5) == std::vector<int>{5});

    const std::vector<int> all = farthest_point_sampling(cloud, 12, 3);
    std::vector<int> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(12);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);
}

TEST_CASE("fps rejects bad arguments") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(farthest_point_sampling(cloud, 3, 0), InvalidArgument);
    CHECK_THROWS_AS(farthest_point_sampling(cloud, 1, 2), InvalidArgument);
    CHECK_THROWS_AS(farthest_point_sampling(cloud, 0, 0), InvalidArgument);
}

TEST_CASE("fps equals the brute-force greedy oracle") {
    Rng rng(11);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 4 + static_cast<int>(rng.uniform_index(60));
        const std::vector<Vec3> pts = random_cloud(rng, n);
        const int m = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        const int seed = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        CHECK(farthest_point_sampling(pts, m, seed) == fps_oracle(pts, m, seed));
    }
}

// ---------------------------------------------------------------------------
// Normal estimation
// ---------------------------------------------------------------------------

namespace {
PointCloud plane_cloud(const Vec3& a, const Vec3& b, int n, Rng& rng, double noise = 0.0,
                       const Vec3& normal_dir = {0, 0, 0}) {
    PointCloud cloud;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
        Vec3 p = a * u + b * v;
        if (noise > 0.0) p += normal_dir * rng.normal(0.0, noise);
        cloud.points.push_back(p);
    }
    return cloud;
}
}  // namespace

TEST_CASE("estimate_normal on the z=0 plane gives +e_z") {
    Rng rng(3);
    PointCloud cloud = plane_cloud({1, 0, 0}, {0, 1, 0}, 11, rng);
    const Vec3 n = estimate_normal(cloud, 0, 10);
    CHECK(std::abs(n.x) < 1e-10);
    CHECK(std::abs(n.y) < 1e-10);
    CHECK(n.z == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("estimate_normal matches the jacobi oracle on a tilted plane") {
    // Points on x + y + z = 0.
    Rng rng(4);
    const Vec3 a = normalized(Vec3{1, -1, 0});
    const Vec3 b = normalized(Vec3{1, 1, -2});
    PointCloud cloud = plane_cloud(a, b, 11, rng);
    const Vec3 n = estimate_normal(cloud, 0, 10);
    const Vec3 expected = normalized(Vec3{1, 1, 1});
    CHECK(norm(n - expected) < 1e-9);
    const Vec3 oracle = normal_oracle(cloud, 0, 10);
    CHECK(norm(n - oracle) < 1e-9);
}

TEST_CASE("estimate_normal rejects collinear neighborhoods") {
    PointCloud cloud;
    for (int i = 0; i < 11; ++i) cloud.points.push_back({0.1 * i, 0.2 * i, -0.05 * i});
    CHECK_THROWS_AS(estimate_normal(cloud, 0, 10), DegenerateNeighborhood);
}

TEST_CASE("estimate_normal accuracy on exact and noisy planes") {
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        // Random oriented plane patch at unit scale.
        Vec3 n{rng.normal(), rng.normal(), rng.normal()};
        n = normalized(n);
        Vec3 helper = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        const Vec3 a = normalized(cross(n, helper));
        const Vec3 b = cross(n, a);

        // atan2(|cross|, |dot|) resolves angles far below the acos floor.
        PointCloud exact = plane_cloud(a, b, 11, rng);
        const Vec3 est = estimate_normal(exact, 0, 10);
        CHECK(std::atan2(norm(cross(est, n)), std::abs(dot(est, n))) < 1e-10);

        PointCloud noisy = plane_cloud(a, b, 40, rng, 0.01, n);
        const Vec3 est_noisy = estimate_normal(noisy, 0, 10);
        CHECK(std::atan2(norm(cross(est_noisy, n)), std::abs(dot(est_noisy, n))) <
              5.0 * M_PI / 180.0);
    }
}

// ---------------------------------------------------------------------------
// Ring k-NN
// ---------------------------------------------------------------------------

TEST_CASE("ring_knn picks the single qualifier") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {0.05, 0, 0}, {0.15, 0, 0}, {0.25, 0, 0}};
    RingNeighbors r = ring_knn(cloud, 0, RingSpec{0.1, 0.2, 1});
    CHECK(r.indices == std::vector<int>{2});
    CHECK(r.valid_count == 1);
    CHECK_FALSE(r.empty);
}

TEST_CASE("ring_knn pads under-populated rings with the closest qualifier") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {0.05, 0, 0}, {0.15, 0, 0}, {0.25, 0, 0}};
    RingNeighbors r = ring_knn(cloud, 0, RingSpec{0.1, 0.2, 3});
    CHECK(r.indices == std::vector<int>{2, 2, 2});
    CHECK(r.valid_count == 1);
}

TEST_CASE("ring_knn excludes the centroid itself") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {0.05, 0, 0}, {0.15, 0, 0}, {0.25, 0, 0}};
    RingNeighbors r = ring_knn(cloud, 0, RingSpec{0.0, 0.1, 1});
    CHECK(r.indices == std::vector<int>{1});
}

TEST_CASE("ring_knn flags empty rings and pads with the centroid") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {1, 0, 0}};
    RingNeighbors r = ring_knn(cloud, 0, RingSpec{0.1, 0.2, 2});
    CHECK(r.empty);
    CHECK(r.indices == std::vector<int>{0, 0});
    CHECK(r.valid_count == 0);
}

TEST_CASE("first ring admits duplicate points at distance zero") {
    PointCloud cloud;
    cloud.points = {{0.3, 0.1, 0}, {0.3, 0.1, 0}, {0.35, 0.1, 0}};
    RingNeighbors r = ring_knn(cloud, 0, RingSpec{0.0, 0.1, 2});
    CHECK(r.indices == std::vector<int>{1, 2});
}

TEST_CASE("ring boundary is half-open: shared radius goes to the inner ring") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {0.2, 0, 0}};
    CHECK(ring_knn(cloud, 0, RingSpec{0.1, 0.2, 1}).indices == std::vector<int>{1});
    CHECK(ring_knn(cloud, 0, RingSpec{0.2, 0.3, 1}).empty);
}

TEST_CASE("ring_knn equals the filter-sort oracle on random clouds") {
    Rng rng(21);
    for (int rep = 0; rep < 40; ++rep) {
        const int n = 8 + static_cast<int>(rng.uniform_index(120));
        const std::vector<Vec3> pts = random_cloud(rng, n);
        const int centroid = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        const double r0 = rng.uniform(0.0, 0.5);
        RingSpec ring{rng.uniform() < 0.3 ? 0.0 : r0, 0.0, 1 + static_cast<int>(rng.uniform_index(8))};
        ring.r_outer = ring.r_inner + rng.uniform(0.05, 1.0);
        RingNeighbors got = ring_knn(pts, centroid, ring);
        CHECK(got.indices == ring_knn_oracle(pts, centroid, ring));
    }
}

// ---------------------------------------------------------------------------
// Tangent-plane projection
// ---------------------------------------------------------------------------

TEST_CASE("projection drops the normal component") {
    const std::vector<Vec3> xs = {{1, 2, 3}};
    const auto p = project_to_tangent(xs, {0, 0, 0}, {0, 0, 1});
    CHECK(p[0] == Vec3{1, 2, 0});
}

TEST_CASE("points already on the plane are fixed points") {
    const std::vector<Vec3> xs = {{0.4, -0.7, 0}};
    const auto p = project_to_tangent(xs, {0, 0, 0}, {0, 0, 1});
    CHECK(p[0] == xs[0]);
}

TEST_CASE("projection is idempotent") {
    const std::vector<Vec3> xs = {{0.3, -0.4, 0.9}};
    const auto once = project_to_tangent(xs, {0, 0, 0}, {0, 0, 1});
    CHECK(once[0] == Vec3{0.3, -0.4, 0});
    const auto twice = project_to_tangent(once, {0, 0, 0}, {0, 0, 1});
    CHECK(twice[0] == once[0]);
}

TEST_CASE("projection requires a unit normal") {
    const std::vector<Vec3> xs = {{1, 2, 3}};
    CHECK_THROWS_AS(project_to_tangent(xs, {0, 0, 0}, {0, 0, 2}), InvalidArgument);
}

TEST_CASE("projection residual stays below 1e-12 on random input") {
    Rng rng(31);
    for (int rep = 0; rep < 200; ++rep) {
        const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 n{rng.normal(), rng.normal(), rng.normal()};
        n = normalized(n);
        const Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 p = project_to_tangent(x, q, n);
        CHECK(std::abs(dot(p - q, n)) < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Counterclockwise ordering
// ---------------------------------------------------------------------------

TEST_CASE("ordering walks the quadrant points counterclockwise") {
    // Projected neighbors at planar angles 0, 90, 180, 270 degrees from c.
    PointCloud cloud;
    cloud.points = {{1, 0, 0.3}, {0, 1, -0.2}, {-1, 0, 0.15}, {0, -1, 0.4}};
    const std::vector<int> neighbors = {0, 1, 2, 3};
    const Vec3 q{0, 0, 0}, n{0, 0, 1};

    CHECK(order_counterclockwise(neighbors, cloud, q, n, 0) == std::vector<int>{0, 1, 2, 3});
    CHECK(order_clockwise(neighbors, cloud, q, n, 0) == std::vector<int>{0, 3, 2, 1});
    // Hand-evaluated angle keys: 0 deg -> 1, 90 -> 0, 180 -> -1, 270 -> -2.
    const Vec3 c{1, 0, 0};
    CHECK(angle_key(c, {1, 0, 0}, n) == Catch::Approx(1.0));
    CHECK(angle_key(c, {0, 1, 0}, n) == Catch::Approx(0.0).margin(1e-15));
    CHECK(angle_key(c, {-1, 0, 0}, n) == Catch::Approx(-1.0));
    CHECK(angle_key(c, {0, -1, 0}, n) == Catch::Approx(-2.0));
}

TEST_CASE("changing the start rotates the circular sequence") {
    Rng rng(41);
    PointCloud cloud;
    const int k = 7;
    for (int i = 0; i < k; ++i) {
        const double angle = rng.uniform(0, 2 * M_PI);
        const double radius = rng.uniform(0.2, 1.0);
        cloud.points.push_back({radius * std::cos(angle), radius * std::sin(angle),
                                rng.uniform(-0.5, 0.5)});
    }
    std::vector<int> neighbors(k);
    std::iota(neighbors.begin(), neighbors.end(), 0);
    const Vec3 q{0, 0, 0}, n{0, 0, 1};
    const std::vector<int> base = order_counterclockwise(neighbors, cloud, q, n, 0);
    for (int start = 1; start < k; ++start) {
        const std::vector<int> rotated = order_counterclockwise(neighbors, cloud, q, n, start);
        CHECK(cyclically_equal(base, rotated));
        CHECK(rotated[0] == neighbors[static_cast<std::size_t>(start)]);
    }
}

TEST_CASE("ordering rejects an empty list") {
    PointCloud cloud;
    cloud.points = {{1, 0, 0}};
    const std::vector<int> empty;
    CHECK_THROWS_AS(order_counterclockwise(empty, cloud, {0, 0, 0}, {0, 0, 1}, 0),
                    InvalidArgument);
}

TEST_CASE("coincident projections are placed right after the reference") {
    PointCloud cloud;
    cloud.points = {{1, 0, 0}, {0, 0, 0.7}, {0, 1, 0}, {-1, 0, 0}};
    const std::vector<int> neighbors = {0, 1, 2, 3};
    // Point 1 projects exactly onto q.
    const std::vector<int> order =
        order_counterclockwise(neighbors, cloud, {0, 0, 0}, {0, 0, 1}, 0);
    CHECK(order == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("ordering matches the atan2 oracle on random neighborhoods") {
    Rng rng(51);
    for (int rep = 0; rep < 300; ++rep) {
        const int k = 3 + static_cast<int>(rng.uniform_index(9));
        PointCloud cloud;
        cloud.points = random_cloud(rng, k);
        const Vec3 q{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
        Vec3 n{rng.normal(), rng.normal(), rng.normal()};
        n = normalized(n);
        std::vector<int> neighbors(static_cast<std::size_t>(k));
        std::iota(neighbors.begin(), neighbors.end(), 0);
        const int start = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));

        const std::vector<int> got = order_counterclockwise(neighbors, cloud, q, n, start);
        const std::vector<int> expect = ordering_oracle(neighbors, cloud.points, q, n, start);
        CHECK(got == expect);

        const std::vector<int> cw = order_clockwise(neighbors, cloud, q, n, start);
        const std::vector<int> cw_expect =
            ordering_oracle(neighbors, cloud.points, q, n, start, true);
        CHECK(cw == cw_expect);
    }
}

TEST_CASE("reversing the normal reverses the circular order") {
    Rng rng(61);
    for (int rep = 0; rep < 50; ++rep) {
        const int k = 4 + static_cast<int>(rng.uniform_index(6));
        PointCloud cloud;
        cloud.points = random_cloud(rng, k);
        Vec3 n{rng.normal(), rng.normal(), rng.normal()};
        n = normalized(n);
        std::vector<int> neighbors(static_cast<std::size_t>(k));
        std::iota(neighbors.begin(), neighbors.end(), 0);

        const std::vector<int> ccw = order_counterclockwise(neighbors, cloud, {0, 0, 0}, n, 0);
        const std::vector<int> cw_flipped =
            order_clockwise(neighbors, cloud, {0, 0, 0}, n * -1.0, 0);
        CHECK(cyclically_equal(ccw, cw_flipped));
    }
}

// ---------------------------------------------------------------------------
// Ring disjointness
// ---------------------------------------------------------------------------

TEST_CASE("non-overlapping rings produce disjoint pre-padding neighbor sets") {
    Rng rng(71);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 16 + static_cast<int>(rng.uniform_index(100));
        const std::vector<Vec3> pts = random_cloud(rng, n);
        const int centroid = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        const RingSpec inner{0.0, 0.4, 8};
        const RingSpec outer{0.4, 0.9, 8};
        const RingNeighbors a = ring_knn(pts, centroid, inner);
        const RingNeighbors b = ring_knn(pts, centroid, outer);
        std::set<int> sa, sb;
        for (int i = 0; i < a.valid_count; ++i) sa.insert(a.indices[static_cast<std::size_t>(i)]);
        for (int i = 0; i < b.valid_count; ++i) sb.insert(b.indices[static_cast<std::size_t>(i)]);
        for (int idx : sa) CHECK(sb.count(idx) == 0);
        CHECK(sa.count(centroid) == 0);
        CHECK(sb.count(centroid) == 0);
    }
}
