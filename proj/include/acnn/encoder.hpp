#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "acnn/annular.hpp"
#include "acnn/config.hpp"
#include "acnn/errors.hpp"
#include "acnn/geometry.hpp"
#include "acnn/nn.hpp"
#include "acnn/parallel.hpp"
#include "acnn/point_cloud.hpp"
#include "acnn/rng.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// ---------------------------------------------------------------------------
// Geometric plan
// ---------------------------------------------------------------------------
// FPS selection, ring membership and neighbor ordering are piecewise-constant
// decisions. They are frozen into a plan before any feature math runs, and
// gradients never flow through them.

struct LayerPlan {
    std::vector<int> centroid_local;     // indices into the previous level's list
    std::vector<int> centroid_original;  // indices into the original cloud
    std::vector<Vec3> centroid_points;
    std::vector<Neighborhood> neighborhoods;  // ring indices into the previous level's list
};

struct NetworkPlan {
    std::vector<LayerPlan> layers;
};

inline LayerPlan build_layer_plan(std::span<const Vec3> points, std::span<const int> orig_idx,
                                  const PointCloud& cloud, const LayerConfig& config,
                                  Variant variant, Rng& ordering_rng, int fps_seed) {
    config.validate();
    if (config.centroids > static_cast<int>(points.size()))
        throw InvalidArgument("encoder layer: more centroids than points");

    // The global layer (one centroid, 1x1 kernels) never needs an ordering;
    // under no_annular the other layers still order neighbors — only the
    // kernels shrink to 1x1.
    const bool needs_ordering = config.kernel_size() > 1;
    if (needs_ordering && variant != Variant::no_ordering && !cloud.has_normals())
        throw NormalsRequired("neighbor ordering requires normals");

    LayerPlan plan;
    plan.centroid_local = farthest_point_sampling(points, config.centroids, fps_seed);
    plan.centroid_original.reserve(plan.centroid_local.size());
    plan.centroid_points.reserve(plan.centroid_local.size());
    for (int c : plan.centroid_local) {
        plan.centroid_original.push_back(orig_idx[static_cast<std::size_t>(c)]);
        plan.centroid_points.push_back(points[static_cast<std::size_t>(c)]);
    }

    plan.neighborhoods.reserve(plan.centroid_local.size());
    for (std::size_t ci = 0; ci < plan.centroid_local.size(); ++ci) {
        Neighborhood nb;
        nb.centroid = plan.centroid_local[ci];
        if (needs_ordering && variant != Variant::no_ordering)
            nb.normal = cloud.normals[static_cast<std::size_t>(plan.centroid_original[ci])];
        const Vec3 q = plan.centroid_points[ci];
        for (const RingSpec& spec : config.rings) {
            RingSpec region = spec;
            if (variant == Variant::ball_query) region.r_inner = 0.0;  // overlap allowed
            RingNeighbors ring = ring_knn(points, nb.centroid, region);
            if (needs_ordering) {
                if (variant == Variant::no_ordering) {
                    const std::vector<int> perm =
                        ordering_rng.permutation(static_cast<int>(ring.indices.size()));
                    std::vector<int> shuffled(ring.indices.size());
                    for (std::size_t i = 0; i < perm.size(); ++i)
                        shuffled[i] = ring.indices[static_cast<std::size_t>(perm[i])];
                    ring.indices = std::move(shuffled);
                } else if (!ring.empty) {
                    ring.indices = order_neighbors(ring.indices, points, q, nb.normal, 0,
                                                   Orientation::counterclockwise);
                }
            }
            nb.rings.push_back(std::move(ring));
        }
        plan.neighborhoods.push_back(std::move(nb));
    }
    return plan;
}

inline NetworkPlan build_network_plan(const PointCloud& cloud,
                                      std::span<const LayerConfig> layers, Variant variant,
                                      Rng& ordering_rng, int fps_seed = 0) {
    NetworkPlan plan;
    std::vector<Vec3> points = cloud.points;
    std::vector<int> orig_idx(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) orig_idx[i] = static_cast<int>(i);

    int seed = fps_seed;
    for (const LayerConfig& layer : layers) {
        LayerPlan lp = build_layer_plan(points, orig_idx, cloud, layer, variant, ordering_rng, seed);
        points = lp.centroid_points;
        orig_idx = lp.centroid_original;
        plan.layers.push_back(std::move(lp));
        seed = 0;  // deeper layers are seeded by the first centroid of the previous level
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Encoder layer parameters
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ConvStage {
    ConvKernel<Scalar> kernel;
    BatchNormParams<Scalar> bn;
};

template <typename Scalar>
struct RingStack {
    std::vector<ConvStage<Scalar>> stages;
};

template <typename Scalar>
struct EncoderLayerParams {
    std::vector<RingStack<Scalar>> rings;
};

template <typename Scalar>
Tensor<Scalar> fan_in_uniform(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
    Tensor<Scalar> t(std::move(shape));
    const double limit = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
    return t;
}

template <typename Scalar>
EncoderLayerParams<Scalar> make_encoder_layer_params(int in_channels, const LayerConfig& config,
                                                     int kernel_size, Rng& rng) {
    EncoderLayerParams<Scalar> params;
    for (const auto& widths : config.feature_maps) {
        RingStack<Scalar> stack;
        int fin = in_channels;
        for (int width : widths) {
            ConvStage<Scalar> stage{
                ConvKernel<Scalar>{
                    fan_in_uniform<Scalar>({kernel_size, fin, width},
                                           static_cast<std::int64_t>(kernel_size) * fin, rng),
                    Tensor<Scalar>({width})},
                BatchNormParams<Scalar>(width)};
            stack.stages.push_back(std::move(stage));
            fin = width;
        }
        params.rings.push_back(std::move(stack));
    }
    return params;
}

// ---------------------------------------------------------------------------
// Encoder layer forward / backward
// ---------------------------------------------------------------------------
// A layer runs on a whole minibatch at once: the gathered neighbor rows of
// every sample are stacked (sample-major, one K-row block per centroid) so
// that batch normalization sees shared statistics across the batch, exactly
// as it would in a row-batched implementation. A single sample is just a
// batch of one.

template <typename Scalar>
struct StageCache {
    Tensor<Scalar> conv_input;  // (B*C*K) x F_in
    BatchNormCache<Scalar> bn;
    Tensor<Scalar> bn_out;  // input of the ReLU
};

template <typename Scalar>
struct RingCache {
    std::vector<StageCache<Scalar>> stages;
    Tensor<Scalar> pool_input;             // (B*C*K) x F_last
    std::vector<std::vector<int>> argmax;  // per block (sample-major centroid)
};

template <typename Scalar>
struct EncoderLayerCache {
    std::vector<RingCache<Scalar>> rings;
    std::vector<int> prev_counts;  // per sample
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> block_rows(const Tensor<Scalar>& all, std::int64_t block, std::int64_t k) {
    Tensor<Scalar> out({k, all.dim(1)});
    const std::int64_t F = all.dim(1);
    for (std::int64_t i = 0; i < k; ++i)
        for (std::int64_t c = 0; c < F; ++c) out(i, c) = all(block * k + i, c);
    return out;
}

// Fused circular convolution over every K-row block of x; arithmetic order
// (ascending tap, then channel) matches annular_conv_forward exactly, so the
// outputs are bitwise identical to the per-block reference path.
template <typename Scalar>
Tensor<Scalar> blocked_conv_forward(const Tensor<Scalar>& x, const ConvKernel<Scalar>& kernel,
                                    std::int64_t K) {
    kernel.validate();
    const std::int64_t Fin = kernel.weights.dim(1);
    const std::int64_t Fout = kernel.weights.dim(2);
    const int ks = kernel.k_size();
    if (x.dim(1) != Fin) throw ShapeError("blocked conv: channel count mismatch");
    if (ks - 1 > K) throw InvalidArgument("blocked conv: kernel size exceeds ring length + 1");
    const std::int64_t blocks = x.dim(0) / K;

    Tensor<Scalar> y({x.dim(0), Fout});
    const std::int64_t work = blocks * K * ks * Fin * Fout;
    parallel_for_work(static_cast<int>(blocks), work, [&](int block) {
        const Scalar* xb = x.data() + static_cast<std::int64_t>(block) * K * Fin;
        Scalar* yb = y.data() + static_cast<std::int64_t>(block) * K * Fout;
        for (std::int64_t i = 0; i < K; ++i) {
            Scalar* dst = yb + i * Fout;
            for (std::int64_t o = 0; o < Fout; ++o) dst[o] = kernel.bias[o];
            for (int t = 0; t < ks; ++t) {
                const Scalar* row = xb + ((i + t) % K) * Fin;
                const Scalar* w = kernel.weights.data() + static_cast<std::int64_t>(t) * Fin * Fout;
                for (std::int64_t c = 0; c < Fin; ++c) {
                    const Scalar xc = row[c];
                    const Scalar* wc = w + c * Fout;
                    for (std::int64_t o = 0; o < Fout; ++o) dst[o] += xc * wc[o];
                }
            }
        }
    });
    return y;
}

// Gradient w.r.t. the conv input, parallel over blocks (block rows are
// disjoint).
template <typename Scalar>
Tensor<Scalar> blocked_conv_input_grad(const Tensor<Scalar>& upstream,
                                       const ConvKernel<Scalar>& kernel, std::int64_t K) {
    const std::int64_t Fin = kernel.weights.dim(1);
    const std::int64_t Fout = kernel.weights.dim(2);
    const int ks = kernel.k_size();
    const std::int64_t blocks = upstream.dim(0) / K;

    Tensor<Scalar> d_in({upstream.dim(0), Fin});
    const std::int64_t work = blocks * K * ks * Fin * Fout;
    parallel_for_work(static_cast<int>(blocks), work, [&](int block) {
        const Scalar* ub = upstream.data() + static_cast<std::int64_t>(block) * K * Fout;
        Scalar* db = d_in.data() + static_cast<std::int64_t>(block) * K * Fin;
        for (std::int64_t i = 0; i < K; ++i) {
            const Scalar* up = ub + i * Fout;
            for (int t = 0; t < ks; ++t) {
                Scalar* drow = db + ((i + t) % K) * Fin;
                const Scalar* w = kernel.weights.data() + static_cast<std::int64_t>(t) * Fin * Fout;
                for (std::int64_t c = 0; c < Fin; ++c) {
                    const Scalar* wc = w + c * Fout;
                    Scalar acc = 0;
                    for (std::int64_t o = 0; o < Fout; ++o) acc += up[o] * wc[o];
                    drow[c] += acc;
                }
            }
        }
    });
    return d_in;
}

// Weight and bias gradients, parallel over output-channel chunks (each
// element of dW/db is owned by exactly one chunk, accumulated in block
// order, so results do not depend on the thread count).
template <typename Scalar>
void blocked_conv_param_grads(const Tensor<Scalar>& x, const Tensor<Scalar>& upstream,
                              const ConvKernel<Scalar>& kernel, std::int64_t K,
                              Tensor<Scalar>& d_weights, Tensor<Scalar>& d_bias) {
    const std::int64_t Fin = kernel.weights.dim(1);
    const std::int64_t Fout = kernel.weights.dim(2);
    const int ks = kernel.k_size();
    const std::int64_t blocks = x.dim(0) / K;

    // Chunks own disjoint o-ranges; narrow outputs stay serial because the
    // per-(t,c) weight rows would share cache lines across chunks.
    const std::int64_t work = blocks * K * ks * Fin * Fout;
    const int chunks = (work < kParallelWorkThreshold || Fout < 32)
                           ? 1
                           : std::min<int>(max_threads(), static_cast<int>(Fout / 16));
    parallel_for(chunks, [&](int chunk) {
        const std::int64_t o_begin = Fout * chunk / chunks;
        const std::int64_t o_end = Fout * (chunk + 1) / chunks;
        for (std::int64_t block = 0; block < blocks; ++block) {
            const Scalar* xb = x.data() + block * K * Fin;
            const Scalar* ub = upstream.data() + block * K * Fout;
            for (std::int64_t i = 0; i < K; ++i) {
                const Scalar* up = ub + i * Fout;
                for (std::int64_t o = o_begin; o < o_end; ++o) d_bias[o] += up[o];
                for (int t = 0; t < ks; ++t) {
                    const Scalar* row = xb + ((i + t) % K) * Fin;
                    Scalar* dw = d_weights.data() + static_cast<std::int64_t>(t) * Fin * Fout;
                    for (std::int64_t c = 0; c < Fin; ++c) {
                        const Scalar xc = row[c];
                        Scalar* dwc = dw + c * Fout;
                        for (std::int64_t o = o_begin; o < o_end; ++o) dwc[o] += up[o] * xc;
                    }
                }
            }
        }
    });
}

}  // namespace detail

// One abstraction layer over a batch: gather ordered ring neighbors, run the
// sequential annular convolutions (each followed by batch norm and ReLU),
// max-pool each ring, concatenate the pooled ring vectors. Returns one
// C x output_channels tensor per sample.
template <typename Scalar>
std::vector<Tensor<Scalar>> encoder_layer_forward_batch(
    const std::vector<Tensor<Scalar>>& features, std::span<const LayerPlan> plans,
    const EncoderLayerParams<Scalar>& params, const LayerConfig& config, Mode mode,
    EncoderLayerCache<Scalar>* cache = nullptr) {
    const std::int64_t B = static_cast<std::int64_t>(features.size());
    const std::int64_t C = config.centroids;
    const std::int64_t Fin = features[0].dim(1);
    if (cache) {
        cache->rings.clear();
        cache->rings.resize(params.rings.size());
        cache->prev_counts.clear();
        for (const Tensor<Scalar>& f : features)
            cache->prev_counts.push_back(static_cast<int>(f.dim(0)));
    }

    std::vector<Tensor<Scalar>> out(static_cast<std::size_t>(B),
                                    Tensor<Scalar>({C, config.output_channels()}));
    std::int64_t col_offset = 0;
    for (std::size_t r = 0; r < params.rings.size(); ++r) {
        const std::int64_t K = config.rings[r].k;
        RingCache<Scalar>* rc = cache ? &cache->rings[r] : nullptr;

        // Gather ordered neighbor features, one K-row block per centroid,
        // blocks grouped by sample.
        Tensor<Scalar> x({B * C * K, Fin});
        for (std::int64_t j = 0; j < B; ++j) {
            const Tensor<Scalar>& f = features[static_cast<std::size_t>(j)];
            const LayerPlan& plan = plans[static_cast<std::size_t>(j)];
            for (std::int64_t ci = 0; ci < C; ++ci) {
                const auto& idx = plan.neighborhoods[static_cast<std::size_t>(ci)].rings[r].indices;
                for (std::int64_t i = 0; i < K; ++i) {
                    const Scalar* src =
                        f.data() + static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) * Fin;
                    Scalar* dst = x.data() + ((j * C + ci) * K + i) * Fin;
                    for (std::int64_t c = 0; c < Fin; ++c) dst[c] = src[c];
                }
            }
        }

        for (const ConvStage<Scalar>& stage : params.rings[r].stages) {
            StageCache<Scalar>* sc = nullptr;
            if (rc) {
                rc->stages.emplace_back();
                sc = &rc->stages.back();
                sc->conv_input = x;
            }
            Tensor<Scalar> y = detail::blocked_conv_forward(x, stage.kernel, K);
            y = batch_norm_forward(y, stage.bn, mode, sc ? &sc->bn : nullptr);
            if (sc) sc->bn_out = y;
            x = relu_forward(y);
        }

        // Ring max pooling per centroid block.
        const std::int64_t Flast = x.dim(1);
        if (rc) {
            rc->pool_input = x;
            rc->argmax.resize(static_cast<std::size_t>(B * C));
        }
        for (std::int64_t block = 0; block < B * C; ++block) {
            auto [pooled, argmax] = ring_max_pool(detail::block_rows(x, block, K));
            Tensor<Scalar>& dst = out[static_cast<std::size_t>(block / C)];
            const std::int64_t ci = block % C;
            for (std::int64_t o = 0; o < Flast; ++o) dst(ci, col_offset + o) = pooled[o];
            if (rc) rc->argmax[static_cast<std::size_t>(block)] = std::move(argmax);
        }
        col_offset += Flast;
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> encoder_layer_forward(const Tensor<Scalar>& features, const LayerPlan& plan,
                                     const EncoderLayerParams<Scalar>& params,
                                     const LayerConfig& config, Mode mode,
                                     EncoderLayerCache<Scalar>* cache = nullptr) {
    const std::vector<Tensor<Scalar>> batch = {features};
    return encoder_layer_forward_batch(batch, std::span<const LayerPlan>(&plan, 1), params,
                                       config, mode, cache)[0];
}

template <typename Scalar>
struct ConvStageGrads {
    Tensor<Scalar> weights;
    Tensor<Scalar> bias;
    Tensor<Scalar> gamma;
    Tensor<Scalar> beta;
};

template <typename Scalar>
struct EncoderLayerGrads {
    std::vector<std::vector<ConvStageGrads<Scalar>>> rings;
};

// Returns the gradient w.r.t. each sample's previous-level features;
// parameter gradients are written into `grads` (same nesting as the params).
template <typename Scalar>
std::vector<Tensor<Scalar>> encoder_layer_backward_batch(
    const std::vector<Tensor<Scalar>>& upstreams, std::span<const LayerPlan> plans,
    const EncoderLayerParams<Scalar>& params, const LayerConfig& config,
    const EncoderLayerCache<Scalar>& cache, EncoderLayerGrads<Scalar>& grads) {
    const std::int64_t B = static_cast<std::int64_t>(upstreams.size());
    const std::int64_t C = config.centroids;
    grads.rings.resize(params.rings.size());

    const std::int64_t Fin0 = params.rings[0].stages[0].kernel.in_channels();
    std::vector<Tensor<Scalar>> d_features;
    d_features.reserve(static_cast<std::size_t>(B));
    for (std::int64_t j = 0; j < B; ++j)
        d_features.emplace_back(Tensor<Scalar>({cache.prev_counts[static_cast<std::size_t>(j)], Fin0}));

    std::int64_t col_offset = 0;
    for (std::size_t r = 0; r < params.rings.size(); ++r) {
        const std::int64_t K = config.rings[r].k;
        const RingCache<Scalar>& rc = cache.rings[r];
        const auto& stages = params.rings[r].stages;
        auto& ring_grads = grads.rings[r];
        ring_grads.resize(stages.size());

        // Pool backward.
        const std::int64_t Flast = rc.pool_input.dim(1);
        Tensor<Scalar> d({B * C * K, Flast});
        for (std::int64_t block = 0; block < B * C; ++block) {
            const auto& argmax = rc.argmax[static_cast<std::size_t>(block)];
            const Tensor<Scalar>& up = upstreams[static_cast<std::size_t>(block / C)];
            const std::int64_t ci = block % C;
            for (std::int64_t o = 0; o < Flast; ++o)
                d(block * K + argmax[static_cast<std::size_t>(o)], o) = up(ci, col_offset + o);
        }
        col_offset += Flast;

        for (std::size_t s = stages.size(); s-- > 0;) {
            const ConvStage<Scalar>& stage = stages[s];
            const StageCache<Scalar>& sc = rc.stages[s];
            d = relu_backward(sc.bn_out, d);
            BatchNormGrads<Scalar> bn_g = batch_norm_backward(stage.bn, sc.bn, d);
            d = std::move(bn_g.input);

            ConvStageGrads<Scalar>& sg = ring_grads[s];
            sg.weights = Tensor<Scalar>::zeros_like(stage.kernel.weights);
            sg.bias = Tensor<Scalar>::zeros_like(stage.kernel.bias);
            sg.gamma = std::move(bn_g.gamma);
            sg.beta = std::move(bn_g.beta);

            Tensor<Scalar> d_in = detail::blocked_conv_input_grad(d, stage.kernel, K);
            detail::blocked_conv_param_grads(sc.conv_input, d, stage.kernel, K, sg.weights,
                                             sg.bias);
            d = std::move(d_in);
        }

        // Scatter the gather gradient back onto each sample's previous level.
        const std::int64_t Fin = d.dim(1);
        for (std::int64_t j = 0; j < B; ++j) {
            const LayerPlan& plan = plans[static_cast<std::size_t>(j)];
            Tensor<Scalar>& df = d_features[static_cast<std::size_t>(j)];
            for (std::int64_t ci = 0; ci < C; ++ci) {
                const auto& idx = plan.neighborhoods[static_cast<std::size_t>(ci)].rings[r].indices;
                for (std::int64_t i = 0; i < K; ++i) {
                    Scalar* dst =
                        df.data() + static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) * Fin;
                    const Scalar* src = d.data() + ((j * C + ci) * K + i) * Fin;
                    for (std::int64_t c = 0; c < Fin; ++c) dst[c] += src[c];
                }
            }
        }
    }
    return d_features;
}

template <typename Scalar>
Tensor<Scalar> encoder_layer_backward(const Tensor<Scalar>& upstream, const LayerPlan& plan,
                                      const EncoderLayerParams<Scalar>& params,
                                      const LayerConfig& config,
                                      const EncoderLayerCache<Scalar>& cache,
                                      EncoderLayerGrads<Scalar>& grads) {
    const std::vector<Tensor<Scalar>> batch = {upstream};
    return encoder_layer_backward_batch(batch, std::span<const LayerPlan>(&plan, 1), params,
                                        config, cache, grads)[0];
}

// Single-layer convenience used by tests and ablation tooling: FPS the cloud,
// build the neighborhoods, run the feature pipeline.
template <typename Scalar>
std::pair<std::vector<int>, Tensor<Scalar>> encoder_layer(
    const PointCloud& cloud, const Tensor<Scalar>& features, const LayerConfig& config,
    const EncoderLayerParams<Scalar>& params, Variant variant, Rng& rng, Mode mode,
    int fps_seed = 0) {
    if (features.dim(0) != cloud.size()) throw ShapeError("encoder_layer: one feature row per point");
    std::vector<int> orig_idx(cloud.points.size());
    for (std::size_t i = 0; i < orig_idx.size(); ++i) orig_idx[i] = static_cast<int>(i);
    LayerPlan plan = build_layer_plan(cloud.points, orig_idx, cloud, config, variant, rng, fps_seed);
    Tensor<Scalar> out = encoder_layer_forward(features, plan, params, config, mode);
    return {plan.centroid_local, std::move(out)};
}

}  // namespace acnn
