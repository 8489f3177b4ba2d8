#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/rng.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

// input R x F_in, weights F_in x F_out, bias F_out -> R x F_out.
template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                             const Tensor<Scalar>& bias) {
    if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(0))
        throw ShapeError("dense: input/weight shape mismatch");
    if (bias.rank() != 1 || bias.dim(0) != weights.dim(1))
        throw ShapeError("dense: bias shape mismatch");
    const std::int64_t R = input.dim(0), Fin = input.dim(1), Fout = weights.dim(1);
    Tensor<Scalar> out({R, Fout});
    for (std::int64_t r = 0; r < R; ++r) {
        Scalar* dst = out.data() + r * Fout;
        for (std::int64_t o = 0; o < Fout; ++o) dst[o] = bias[o];
        const Scalar* row = input.data() + r * Fin;
        for (std::int64_t c = 0; c < Fin; ++c) {
            const Scalar x = row[c];
            const Scalar* w = weights.data() + c * Fout;
            for (std::int64_t o = 0; o < Fout; ++o) dst[o] += x * w[o];
        }
    }
    return out;
}

template <typename Scalar>
struct DenseGrads {
    Tensor<Scalar> input;
    Tensor<Scalar> weights;
    Tensor<Scalar> bias;
};

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& upstream) {
    const std::int64_t R = input.dim(0), Fin = input.dim(1), Fout = weights.dim(1);
    if (upstream.dim(0) != R || upstream.dim(1) != Fout)
        throw ShapeError("dense_backward: upstream shape mismatch");
    DenseGrads<Scalar> g{Tensor<Scalar>({R, Fin}), Tensor<Scalar>({Fin, Fout}),
                         Tensor<Scalar>({Fout})};
    for (std::int64_t r = 0; r < R; ++r) {
        const Scalar* up = upstream.data() + r * Fout;
        const Scalar* row = input.data() + r * Fin;
        Scalar* din = g.input.data() + r * Fin;
        for (std::int64_t o = 0; o < Fout; ++o) g.bias[o] += up[o];
        for (std::int64_t c = 0; c < Fin; ++c) {
            const Scalar* w = weights.data() + c * Fout;
            Scalar* dw = g.weights.data() + c * Fout;
            Scalar acc = 0;
            for (std::int64_t o = 0; o < Fout; ++o) {
                acc += up[o] * w[o];
                dw[o] += up[o] * row[c];
            }
            din[c] = acc;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Learnable scale/shift plus running statistics for eval mode.
template <typename Scalar>
struct BatchNormParams {
    Tensor<Scalar> gamma;
    Tensor<Scalar> beta;
    Tensor<Scalar> running_mean;
    Tensor<Scalar> running_var;

    explicit BatchNormParams(std::int64_t channels = 1)
        : gamma({channels}), beta({channels}), running_mean({channels}), running_var({channels}) {
        gamma.fill(Scalar(1));
        running_var.fill(Scalar(1));
    }
};

template <typename Scalar>
struct BatchNormCache {
    Tensor<Scalar> xhat;        // R x C
    std::vector<Scalar> invstd; // per channel, train mode
    Tensor<Scalar> batch_mean;  // captured for the running-stat update
    Tensor<Scalar> batch_var;
    bool train = false;
};

// Normalizes each channel over the rows. Train mode uses batch statistics
// (biased variance); eval mode uses the running estimates. The caller folds
// batch statistics into the running buffers via batch_norm_update_running so
// that parallel sample evaluation stays deterministic.
template <typename Scalar>
Tensor<Scalar> batch_norm_forward(const Tensor<Scalar>& input, const BatchNormParams<Scalar>& p,
                                  Mode mode, BatchNormCache<Scalar>* cache = nullptr) {
    if (input.rank() != 2 || input.dim(1) != p.gamma.dim(0))
        throw ShapeError("batch_norm: input/param shape mismatch");
    const std::int64_t R = input.dim(0), C = input.dim(1);
    Tensor<Scalar> out({R, C});

    if (mode == Mode::eval) {
        if (cache) {
            cache->train = false;
            cache->xhat = Tensor<Scalar>({R, C});
            cache->invstd.assign(static_cast<std::size_t>(C), Scalar(0));
        }
        for (std::int64_t c = 0; c < C; ++c) {
            const Scalar inv = Scalar(1) /
                static_cast<Scalar>(std::sqrt(static_cast<double>(p.running_var[c]) + kBatchNormEps));
            if (cache) cache->invstd[static_cast<std::size_t>(c)] = inv;
            for (std::int64_t r = 0; r < R; ++r) {
                const Scalar xh = (input(r, c) - p.running_mean[c]) * inv;
                if (cache) cache->xhat(r, c) = xh;
                out(r, c) = p.gamma[c] * xh + p.beta[c];
            }
        }
        return out;
    }

    Tensor<Scalar> mean({C}), var({C});
    for (std::int64_t c = 0; c < C; ++c) {
        Scalar m = 0;
        for (std::int64_t r = 0; r < R; ++r) m += input(r, c);
        m /= static_cast<Scalar>(R);
        Scalar v = 0;
        for (std::int64_t r = 0; r < R; ++r) {
            const Scalar d = input(r, c) - m;
            v += d * d;
        }
        v /= static_cast<Scalar>(R);
        mean[c] = m;
        var[c] = v;
    }

    Tensor<Scalar> xhat({R, C});
    std::vector<Scalar> invstd(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c) {
        const Scalar inv =
            Scalar(1) / static_cast<Scalar>(std::sqrt(static_cast<double>(var[c]) + kBatchNormEps));
        invstd[static_cast<std::size_t>(c)] = inv;
        for (std::int64_t r = 0; r < R; ++r) {
            xhat(r, c) = (input(r, c) - mean[c]) * inv;
            out(r, c) = p.gamma[c] * xhat(r, c) + p.beta[c];
        }
    }
    if (cache) {
        cache->xhat = xhat;
        cache->invstd = std::move(invstd);
        cache->batch_mean = std::move(mean);
        cache->batch_var = std::move(var);
        cache->train = true;
    }
    return out;
}

template <typename Scalar>
void batch_norm_update_running(BatchNormParams<Scalar>& p, const BatchNormCache<Scalar>& cache) {
    const Scalar m = static_cast<Scalar>(kBatchNormMomentum);
    for (std::int64_t c = 0; c < p.gamma.dim(0); ++c) {
        p.running_mean[c] = m * p.running_mean[c] + (Scalar(1) - m) * cache.batch_mean[c];
        p.running_var[c] = m * p.running_var[c] + (Scalar(1) - m) * cache.batch_var[c];
    }
}

template <typename Scalar>
struct BatchNormGrads {
    Tensor<Scalar> input;
    Tensor<Scalar> gamma;
    Tensor<Scalar> beta;
};

// In train mode this is the full adjoint through the batch statistics; in
// eval mode the running statistics are constants, so the input path is just
// the per-channel affine scale.
template <typename Scalar>
BatchNormGrads<Scalar> batch_norm_backward(const BatchNormParams<Scalar>& p,
                                           const BatchNormCache<Scalar>& cache,
                                           const Tensor<Scalar>& upstream) {
    const std::int64_t R = upstream.dim(0), C = upstream.dim(1);
    BatchNormGrads<Scalar> g{Tensor<Scalar>({R, C}), Tensor<Scalar>({C}), Tensor<Scalar>({C})};
    for (std::int64_t c = 0; c < C; ++c) {
        Scalar sum_up = 0, sum_up_xhat = 0;
        for (std::int64_t r = 0; r < R; ++r) {
            sum_up += upstream(r, c);
            sum_up_xhat += upstream(r, c) * cache.xhat(r, c);
        }
        g.beta[c] = sum_up;
        g.gamma[c] = sum_up_xhat;
        const Scalar inv = cache.invstd[static_cast<std::size_t>(c)];
        if (cache.train) {
            const Scalar scale = p.gamma[c] * inv / static_cast<Scalar>(R);
            for (std::int64_t r = 0; r < R; ++r) {
                g.input(r, c) = scale * (static_cast<Scalar>(R) * upstream(r, c) - sum_up -
                                         cache.xhat(r, c) * sum_up_xhat);
            }
        } else {
            const Scalar scale = p.gamma[c] * inv;
            for (std::int64_t r = 0; r < R; ++r) g.input(r, c) = scale * upstream(r, c);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

// Subgradient at 0 is defined as 0.
template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& input) {
    Tensor<Scalar> out = input;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < Scalar(0)) out[i] = Scalar(0);
    return out;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& upstream) {
    if (!input.same_shape(upstream)) throw ShapeError("relu_backward: shape mismatch");
    Tensor<Scalar> g = upstream;
    for (std::int64_t i = 0; i < g.numel(); ++i)
        if (input[i] <= Scalar(0)) g[i] = Scalar(0);
    return g;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct DropoutCache {
    std::vector<Scalar> scale;  // 0 where dropped, 1/(1-rate) where kept
    bool active = false;
};

template <typename Scalar>
Tensor<Scalar> dropout_forward(const Tensor<Scalar>& input, double rate, Rng& rng, Mode mode,
                               DropoutCache<Scalar>* cache = nullptr) {
    if (rate < 0.0 || rate > 1.0) throw InvalidArgument("dropout rate must be in [0, 1]");
    if (mode == Mode::eval || rate == 0.0) {
        if (cache) cache->active = false;
        return input;
    }
    Tensor<Scalar> out = input;
    std::vector<Scalar> scale(static_cast<std::size_t>(input.numel()));
    const Scalar keep_scale = rate < 1.0 ? static_cast<Scalar>(1.0 / (1.0 - rate)) : Scalar(0);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const Scalar s = rng.uniform() >= rate ? keep_scale : Scalar(0);
        scale[static_cast<std::size_t>(i)] = s;
        out[i] *= s;
    }
    if (cache) {
        cache->scale = std::move(scale);
        cache->active = true;
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const DropoutCache<Scalar>& cache, const Tensor<Scalar>& upstream) {
    if (!cache.active) return upstream;
    Tensor<Scalar> g = upstream;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= cache.scale[static_cast<std::size_t>(i)];
    return g;
}

// ---------------------------------------------------------------------------
// Softmax cross entropy
// ---------------------------------------------------------------------------

// logits R x C against integer labels; returns the mean loss over rows and,
// optionally, the gradient (softmax - onehot) / R.
template <typename Scalar>
double softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels,
                             Tensor<Scalar>* grad = nullptr) {
    if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects R x C logits");
    const std::int64_t R = logits.dim(0), C = logits.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != R)
        throw ShapeError("softmax_cross_entropy: label count mismatch");
    if (grad) *grad = Tensor<Scalar>({R, C});

    double total = 0.0;
    for (std::int64_t r = 0; r < R; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= C)
            throw InvalidArgument("softmax_cross_entropy: label out of range");
        const Scalar* row = logits.data() + r * C;
        double max_logit = static_cast<double>(row[0]);
        for (std::int64_t c = 1; c < C; ++c)
            max_logit = std::max(max_logit, static_cast<double>(row[c]));
        double sum_exp = 0.0;
        for (std::int64_t c = 0; c < C; ++c) sum_exp += std::exp(static_cast<double>(row[c]) - max_logit);
        const double log_sum = std::log(sum_exp) + max_logit;
        total += log_sum - static_cast<double>(row[label]);
        if (grad) {
            for (std::int64_t c = 0; c < C; ++c) {
                const double p = std::exp(static_cast<double>(row[c]) - log_sum);
                (*grad)(r, c) = static_cast<Scalar>((p - (c == label ? 1.0 : 0.0)) / static_cast<double>(R));
            }
        }
    }
    return total / static_cast<double>(R);
}

}  // namespace acnn
