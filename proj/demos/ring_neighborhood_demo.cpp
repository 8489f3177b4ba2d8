// Builds one ring neighborhood on a synthetic torus and walks through the
// geometric pipeline: constrained search, projection, counterclockwise
// ordering, annular convolution, ring pooling.

#include <cstdio>

#include "acnn/annular.hpp"
#include "acnn/data.hpp"
#include "acnn/geometry.hpp"

using namespace acnn;

int main() {
    Rng rng(7);
    const PointCloud cloud = generate_shape(ShapeSpec::torus(1.0, 0.3, 512), rng);
    const int centroid = 0;
    const Vec3 q = cloud.points[centroid];
    const Vec3 n = cloud.normals[centroid];

    const RingSpec ring{0.05, 0.25, 12};
    const RingNeighbors found = ring_knn(cloud, centroid, ring);
    std::printf("ring (%.2f, %.2f] found %d qualifiers (budget %d)\n", ring.r_inner, ring.r_outer,
                found.valid_count, ring.k);

    const std::vector<int> ordered = order_counterclockwise(found.indices, cloud, q, n, 0);
    std::printf("counterclockwise order:");
    for (int idx : ordered) std::printf(" %d", idx);
    std::printf("\n");

    // Feed the ordered neighbor coordinates through one annular convolution.
    Tensor<double> features({ring.k, 3});
    for (int i = 0; i < ring.k; ++i) {
        const Vec3& p = cloud.points[static_cast<std::size_t>(ordered[static_cast<std::size_t>(i)])];
        features(i, 0) = p.x;
        features(i, 1) = p.y;
        features(i, 2) = p.z;
    }
    Rng init(1);
    ConvKernel<double> kernel{Tensor<double>({3, 3, 4}), Tensor<double>({4})};
    for (std::int64_t i = 0; i < kernel.weights.numel(); ++i)
        kernel.weights[i] = init.uniform(-0.5, 0.5);

    const Tensor<double> convolved = annular_conv_forward(features, kernel);
    auto [pooled, argmax] = ring_max_pool(convolved);
    std::printf("pooled ring feature:");
    for (std::int64_t c = 0; c < pooled.numel(); ++c) std::printf(" %.4f", pooled[c]);
    std::printf("\n");
    return 0;
}
