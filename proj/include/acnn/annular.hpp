#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// 1-D convolution kernel over ordered ring neighbors: weights are
// k_size x F_in x F_out, bias F_out. Kernel sizes are odd (1, 3, 5, ...).
template <typename Scalar>
struct ConvKernel {
    Tensor<Scalar> weights;
    Tensor<Scalar> bias;

    int k_size() const { return static_cast<int>(weights.dim(0)); }
    int in_channels() const { return static_cast<int>(weights.dim(1)); }
    int out_channels() const { return static_cast<int>(weights.dim(2)); }

    void validate() const {
        if (weights.rank() != 3) throw ShapeError("conv weights must have rank 3");
        if (bias.rank() != 1 || bias.dim(0) != weights.dim(2))
            throw ShapeError("conv bias must match output channels");
        if (k_size() < 1 || k_size() % 2 == 0)
            throw InvalidArgument("conv kernel size must be odd and positive");
    }
};

// Appends the first k_size - 1 rows after the last row, closing the ring so
// every neighbor anchors a full kernel window.
template <typename Scalar>
Tensor<Scalar> circular_extend(const Tensor<Scalar>& features, int k_size) {
    if (features.rank() != 2) throw ShapeError("circular_extend expects a K x F tensor");
    const std::int64_t K = features.dim(0);
    const std::int64_t F = features.dim(1);
    if (k_size < 1) throw InvalidArgument("circular_extend: kernel size must be >= 1");
    if (k_size - 1 > K)
        throw InvalidArgument("circular_extend: kernel size exceeds ring length + 1");

    Tensor<Scalar> out({K + k_size - 1, F});
    for (std::int64_t i = 0; i < K; ++i)
        for (std::int64_t c = 0; c < F; ++c) out(i, c) = features(i, c);
    for (std::int64_t i = 0; i < k_size - 1; ++i)
        for (std::int64_t c = 0; c < F; ++c) out(K + i, c) = features(i, c);
    return out;
}

// Stride-1 convolution over the circularly extended sequence; exactly K
// output positions. Accumulation order is ascending tap, then ascending
// channel, which makes the start-point invariance bitwise.
template <typename Scalar>
Tensor<Scalar> annular_conv_forward(const Tensor<Scalar>& features,
                                    const ConvKernel<Scalar>& kernel) {
    kernel.validate();
    if (features.rank() != 2) throw ShapeError("annular_conv expects a K x F_in tensor");
    if (features.dim(1) != kernel.weights.dim(1))
        throw ShapeError("annular_conv: channel count mismatch");
    const std::int64_t K = features.dim(0);
    const std::int64_t Fin = features.dim(1);
    const std::int64_t Fout = kernel.weights.dim(2);
    const int ks = kernel.k_size();

    const Tensor<Scalar> ext = circular_extend(features, ks);
    Tensor<Scalar> out({K, Fout});
    for (std::int64_t i = 0; i < K; ++i) {
        for (std::int64_t o = 0; o < Fout; ++o) out(i, o) = kernel.bias[o];
        for (int t = 0; t < ks; ++t) {
            const Scalar* row = ext.data() + (i + t) * Fin;
            const Scalar* w = kernel.weights.data() + static_cast<std::int64_t>(t) * Fin * Fout;
            Scalar* dst = out.data() + i * Fout;
            for (std::int64_t c = 0; c < Fin; ++c) {
                const Scalar x = row[c];
                const Scalar* wc = w + c * Fout;
                for (std::int64_t o = 0; o < Fout; ++o) dst[o] += x * wc[o];
            }
        }
    }
    return out;
}

template <typename Scalar>
struct ConvGrads {
    Tensor<Scalar> features;  // K x F_in
    Tensor<Scalar> weights;   // k x F_in x F_out
    Tensor<Scalar> bias;      // F_out
};

// Exact adjoint of annular_conv_forward.
template <typename Scalar>
ConvGrads<Scalar> annular_conv_backward(const Tensor<Scalar>& features,
                                        const ConvKernel<Scalar>& kernel,
                                        const Tensor<Scalar>& upstream) {
    kernel.validate();
    const std::int64_t K = features.dim(0);
    const std::int64_t Fin = features.dim(1);
    const std::int64_t Fout = kernel.weights.dim(2);
    const int ks = kernel.k_size();
    if (upstream.rank() != 2 || upstream.dim(0) != K || upstream.dim(1) != Fout)
        throw ShapeError("annular_conv_backward: upstream gradient shape mismatch");
    if (features.dim(1) != kernel.weights.dim(1))
        throw ShapeError("annular_conv_backward: channel count mismatch");

    const Tensor<Scalar> ext = circular_extend(features, ks);
    Tensor<Scalar> d_ext({K + ks - 1, Fin});
    ConvGrads<Scalar> g{Tensor<Scalar>({K, Fin}), Tensor<Scalar>::zeros_like(kernel.weights),
                        Tensor<Scalar>::zeros_like(kernel.bias)};

    for (std::int64_t i = 0; i < K; ++i) {
        const Scalar* up = upstream.data() + i * Fout;
        for (std::int64_t o = 0; o < Fout; ++o) g.bias[o] += up[o];
        for (int t = 0; t < ks; ++t) {
            const Scalar* row = ext.data() + (i + t) * Fin;
            Scalar* drow = d_ext.data() + (i + t) * Fin;
            const Scalar* w = kernel.weights.data() + static_cast<std::int64_t>(t) * Fin * Fout;
            Scalar* dw = g.weights.data() + static_cast<std::int64_t>(t) * Fin * Fout;
            for (std::int64_t c = 0; c < Fin; ++c) {
                const Scalar* wc = w + c * Fout;
                Scalar* dwc = dw + c * Fout;
                Scalar acc = 0;
                for (std::int64_t o = 0; o < Fout; ++o) {
                    acc += up[o] * wc[o];
                    dwc[o] += up[o] * row[c];
                }
                drow[c] += acc;
            }
        }
    }
    // Fold the extension rows back onto the originals.
    for (std::int64_t i = 0; i < K; ++i)
        for (std::int64_t c = 0; c < Fin; ++c) g.features(i, c) = d_ext(i, c);
    for (std::int64_t i = 0; i < ks - 1; ++i)
        for (std::int64_t c = 0; c < Fin; ++c) g.features(i, c) += d_ext(K + i, c);
    return g;
}

// Per-channel maximum over the K rows; argmax ties resolve to the smallest
// row index so gradients are deterministic.
template <typename Scalar>
std::pair<Tensor<Scalar>, std::vector<int>> ring_max_pool(const Tensor<Scalar>& features) {
    if (features.rank() != 2 || features.dim(0) < 1)
        throw ShapeError("ring_max_pool expects a K x F tensor with K >= 1");
    const std::int64_t K = features.dim(0);
    const std::int64_t F = features.dim(1);
    Tensor<Scalar> out({F});
    std::vector<int> argmax(static_cast<std::size_t>(F), 0);
    for (std::int64_t c = 0; c < F; ++c) out[c] = features(0, c);
    for (std::int64_t i = 1; i < K; ++i) {
        for (std::int64_t c = 0; c < F; ++c) {
            if (features(i, c) > out[c]) {
                out[c] = features(i, c);
                argmax[static_cast<std::size_t>(c)] = static_cast<int>(i);
            }
        }
    }
    return {std::move(out), std::move(argmax)};
}

template <typename Scalar>
Tensor<Scalar> ring_max_pool_backward(std::int64_t K, const std::vector<int>& argmax,
                                      const Tensor<Scalar>& upstream) {
    const std::int64_t F = upstream.dim(0);
    Tensor<Scalar> out({K, F});
    for (std::int64_t c = 0; c < F; ++c) out(argmax[static_cast<std::size_t>(c)], c) = upstream[c];
    return out;
}

}  // namespace acnn
