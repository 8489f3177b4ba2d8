#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/tensor.hpp"
#include "acnn/vec3.hpp"

namespace acnn {

// Inverse-squared-distance weighted average of the three nearest sources.
// Weights are frozen geometric decisions; only the feature path is
// differentiated.
struct InterpolationPlan {
    struct Entry {
        std::array<int, 3> sources;
        std::array<double, 3> weights;  // normalized, sum to 1
    };
    std::vector<Entry> entries;
    int known_count = 0;
};

inline InterpolationPlan build_interpolation_plan(std::span<const Vec3> known_points,
                                                  std::span<const Vec3> query_points) {
    const int n = static_cast<int>(known_points.size());
    if (n < 3) throw InvalidArgument("interpolate_features requires >= 3 known points");
    InterpolationPlan plan;
    plan.known_count = n;
    plan.entries.reserve(query_points.size());
    std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(n));
    for (const Vec3& q : query_points) {
        for (int i = 0; i < n; ++i)
            cand[static_cast<std::size_t>(i)] = {distance(known_points[static_cast<std::size_t>(i)], q), i};
        std::partial_sort(cand.begin(), cand.begin() + 3, cand.end());

        InterpolationPlan::Entry e{};
        if (cand[0].first < 1e-10) {
            // Coincident with a known point: reproduce its features exactly.
            e.sources = {cand[0].second, cand[0].second, cand[0].second};
            e.weights = {1.0, 0.0, 0.0};
        } else {
            double sum = 0.0;
            for (int j = 0; j < 3; ++j) {
                e.sources[static_cast<std::size_t>(j)] = cand[static_cast<std::size_t>(j)].second;
                const double d = cand[static_cast<std::size_t>(j)].first;
                e.weights[static_cast<std::size_t>(j)] = 1.0 / (d * d);
                sum += e.weights[static_cast<std::size_t>(j)];
            }
            for (double& w : e.weights) w /= sum;
        }
        plan.entries.push_back(e);
    }
    return plan;
}

template <typename Scalar>
Tensor<Scalar> apply_interpolation(const InterpolationPlan& plan,
                                   const Tensor<Scalar>& known_features) {
    if (known_features.rank() != 2 || known_features.dim(0) != plan.known_count)
        throw ShapeError("apply_interpolation: features do not match plan");
    const std::int64_t F = known_features.dim(1);
    Tensor<Scalar> out({static_cast<std::int64_t>(plan.entries.size()), F});
    for (std::size_t qi = 0; qi < plan.entries.size(); ++qi) {
        const auto& e = plan.entries[qi];
        Scalar* dst = out.data() + static_cast<std::int64_t>(qi) * F;
        for (int j = 0; j < 3; ++j) {
            const Scalar w = static_cast<Scalar>(e.weights[static_cast<std::size_t>(j)]);
            if (w == Scalar(0)) continue;
            const Scalar* src = known_features.data() +
                                static_cast<std::int64_t>(e.sources[static_cast<std::size_t>(j)]) * F;
            for (std::int64_t c = 0; c < F; ++c) dst[c] += w * src[c];
        }
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> interpolation_backward(const InterpolationPlan& plan,
                                      const Tensor<Scalar>& upstream) {
    const std::int64_t F = upstream.dim(1);
    Tensor<Scalar> grad({plan.known_count, F});
    for (std::size_t qi = 0; qi < plan.entries.size(); ++qi) {
        const auto& e = plan.entries[qi];
        const Scalar* up = upstream.data() + static_cast<std::int64_t>(qi) * F;
        for (int j = 0; j < 3; ++j) {
            const Scalar w = static_cast<Scalar>(e.weights[static_cast<std::size_t>(j)]);
            if (w == Scalar(0)) continue;
            Scalar* dst = grad.data() +
                          static_cast<std::int64_t>(e.sources[static_cast<std::size_t>(j)]) * F;
            for (std::int64_t c = 0; c < F; ++c) dst[c] += w * up[c];
        }
    }
    return grad;
}

// Convenience form matching the single-shot signature.
template <typename Scalar>
Tensor<Scalar> interpolate_features(std::span<const Vec3> known_points,
                                    const Tensor<Scalar>& known_features,
                                    std::span<const Vec3> query_points) {
    return apply_interpolation(build_interpolation_plan(known_points, query_points),
                               known_features);
}

}  // namespace acnn
