#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acnn/model.hpp"
#include "acnn/train.hpp"

namespace acnn {

// Central-difference verification of every backward pass. The oracle side
// only ever calls forward code, so it stays independent of the adjoints it
// checks.

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

inline constexpr double kGradCheckThreshold = 1e-4;

namespace gradcheck_detail {

// Gradients below 1e-5 are compared on an absolute 1e-5 scale: central
// differences carry ~1e-11 absolute noise, so a vanishing-gradient element
// would otherwise dominate the relative error while carrying no signal.
inline double rel_err(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-5});
    return std::abs(analytic - fd) / denom;
}

template <typename Eval>
double central_diff(double& slot, Eval&& eval, double h) {
    const double orig = slot;
    slot = orig + h;
    const double fp = eval();
    slot = orig - h;
    const double fm = eval();
    slot = orig;
    return (fp - fm) / (2.0 * h);
}

// Max relative error between an analytic gradient tensor and finite
// differences of `eval` w.r.t. every element of `x`.
template <typename Eval>
double check_tensor(Tensor<double>& x, const Tensor<double>& analytic, Eval&& eval,
                    double h = 1e-5) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double fd = central_diff(x[i], eval, h);
        worst = std::max(worst, rel_err(analytic[i], fd));
    }
    return worst;
}

inline Tensor<double> rand_tensor(std::vector<std::int64_t> shape, Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline double weighted_sum(const Tensor<double>& out, const Tensor<double>& coef) {
    double s = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) s += out[i] * coef[i];
    return s;
}

// Smallest top-2 gap among pooling blocks where the winner is positive and
// the runner-up is a genuinely different row. Two kinds of tie are benign
// for finite differences: all-zero channels (the analytic gradient dies in
// the ReLU exactly where FD sees no change) and duplicated rows from ring
// padding (the copies move together under any perturbation).
template <typename Scalar>
double pool_gap_margin(const Tensor<Scalar>& pool_input, std::int64_t blocks) {
    double margin = std::numeric_limits<double>::infinity();
    const std::int64_t rows = pool_input.dim(0);
    const std::int64_t F = pool_input.dim(1);
    const std::int64_t K = rows / blocks;
    if (K <= 1) return margin;
    const auto rows_identical = [&](std::int64_t a, std::int64_t b) {
        for (std::int64_t ch = 0; ch < F; ++ch)
            if (pool_input(a, ch) != pool_input(b, ch)) return false;
        return true;
    };
    for (std::int64_t c = 0; c < blocks; ++c) {
        for (std::int64_t ch = 0; ch < F; ++ch) {
            double best = -std::numeric_limits<double>::infinity();
            double second = best;
            std::int64_t best_row = -1, second_row = -1;
            for (std::int64_t i = 0; i < K; ++i) {
                const double v = static_cast<double>(pool_input(c * K + i, ch));
                if (v > best) {
                    second = best;
                    second_row = best_row;
                    best = v;
                    best_row = c * K + i;
                } else if (v > second) {
                    second = v;
                    second_row = c * K + i;
                }
            }
            if (best <= 0.0) continue;
            if (second_row >= 0 && best - second < 1e-3 && rows_identical(best_row, second_row))
                continue;
            margin = std::min(margin, best - second);
        }
    }
    return margin;
}

template <typename Scalar>
double layer_cache_margin(const EncoderLayerCache<Scalar>& cache) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& ring : cache.rings) {
        for (const auto& stage : ring.stages)
            for (std::int64_t i = 0; i < stage.bn_out.numel(); ++i)
                margin = std::min(margin, std::abs(static_cast<double>(stage.bn_out[i])));
        margin = std::min(margin, pool_gap_margin(ring.pool_input,
                                                  static_cast<std::int64_t>(ring.argmax.size())));
    }
    return margin;
}

// Distance of the nearest ReLU input from zero, and the smallest meaningful
// pooling gap, across a cached encoder pass. Trials that are not generic
// (kinks or pooling ties within reach of the FD step) are redrawn.
template <typename Scalar>
double encoder_genericity_margin(const EncoderResult<Scalar>& enc) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& layer : enc.caches) margin = std::min(margin, layer_cache_margin(layer));
    return margin;
}

}  // namespace gradcheck_detail

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

inline GradCheckEntry gradcheck_dense(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"dense", 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 101, static_cast<std::uint64_t>(t)));
        Tensor<double> x = rand_tensor({4, 5}, rng);
        Tensor<double> w = rand_tensor({5, 3}, rng);
        Tensor<double> b = rand_tensor({3}, rng);
        const Tensor<double> coef = rand_tensor({4, 3}, rng);
        const auto eval = [&] { return weighted_sum(dense_forward(x, w, b), coef); };
        DenseGrads<double> g = dense_backward(x, w, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, g.input, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(w, g.weights, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(b, g.bias, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_batch_norm(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"batch_norm", 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 102, static_cast<std::uint64_t>(t)));
        Tensor<double> x = rand_tensor({6, 4}, rng);
        BatchNormParams<double> p(4);
        p.gamma = rand_tensor({4}, rng, 0.5, 1.5);
        p.beta = rand_tensor({4}, rng);
        const Tensor<double> coef = rand_tensor({6, 4}, rng);
        const auto eval = [&] {
            return weighted_sum(batch_norm_forward(x, p, Mode::train), coef);
        };
        BatchNormCache<double> cache;
        batch_norm_forward(x, p, Mode::train, &cache);
        BatchNormGrads<double> g = batch_norm_backward(p, cache, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, g.input, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(p.gamma, g.gamma, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(p.beta, g.beta, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_relu(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"relu", 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 103, static_cast<std::uint64_t>(t)));
        Tensor<double> x({5, 4});
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            const double mag = rng.uniform(0.1, 1.0);  // keep clear of the kink
            x[i] = rng.uniform() < 0.5 ? -mag : mag;
        }
        const Tensor<double> coef = rand_tensor({5, 4}, rng);
        const auto eval = [&] { return weighted_sum(relu_forward(x), coef); };
        const Tensor<double> g = relu_backward(x, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, g, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_softmax_cross_entropy(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"softmax_cross_entropy", 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 104, static_cast<std::uint64_t>(t)));
        Tensor<double> logits = rand_tensor({3, 5}, rng, -2.0, 2.0);
        std::vector<int> labels = {static_cast<int>(rng.uniform_index(5)),
                                   static_cast<int>(rng.uniform_index(5)),
                                   static_cast<int>(rng.uniform_index(5))};
        const auto eval = [&] {
            return softmax_cross_entropy(logits, std::span<const int>(labels));
        };
        Tensor<double> g;
        softmax_cross_entropy(logits, std::span<const int>(labels), &g);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(logits, g, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_annular_conv(std::uint64_t seed, int trials, int k_size) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"annular_conv_k" + std::to_string(k_size), 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 105, static_cast<std::uint64_t>(t),
                            static_cast<std::uint64_t>(k_size)));
        Tensor<double> x = rand_tensor({5, 2}, rng);
        ConvKernel<double> kernel{rand_tensor({k_size, 2, 3}, rng), rand_tensor({3}, rng)};
        const Tensor<double> coef = rand_tensor({5, 3}, rng);
        const auto eval = [&] { return weighted_sum(annular_conv_forward(x, kernel), coef); };
        ConvGrads<double> g = annular_conv_backward(x, kernel, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, g.features, eval));
        entry.max_rel_err =
            std::max(entry.max_rel_err, check_tensor(kernel.weights, g.weights, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(kernel.bias, g.bias, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_ring_max_pool(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"ring_max_pool", 0.0};
    int attempts = 0;
    for (int t = 0; t < trials && attempts < trials * 20; ++t, ++attempts) {
        Rng rng(derive_seed(seed, 106, static_cast<std::uint64_t>(attempts)));
        Tensor<double> x = rand_tensor({6, 3}, rng);
        if (pool_gap_margin(x, 1) < 1e-3) {
            --t;
            continue;
        }
        const Tensor<double> coef = rand_tensor({3}, rng);
        const auto eval = [&] { return weighted_sum(ring_max_pool(x).first, coef); };
        auto [pooled, argmax] = ring_max_pool(x);
        const Tensor<double> g = ring_max_pool_backward(x.dim(0), argmax, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, g, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_dropout(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"dropout", 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 107, static_cast<std::uint64_t>(t)));
        Tensor<double> x = rand_tensor({4, 4}, rng);
        const Tensor<double> coef = rand_tensor({4, 4}, rng);
        DropoutCache<double> cache;
        Rng mask_rng(derive_seed(seed, 1070, static_cast<std::uint64_t>(t)));
        dropout_forward(x, 0.5, mask_rng, Mode::train, &cache);
        // Re-apply the frozen mask so the function under test is deterministic.
        const auto eval = [&] {
            double s = 0.0;
            for (std::int64_t i = 0; i < x.numel(); ++i)
                s += x[i] * cache.scale[static_cast<std::size_t>(i)] * coef[i];
            return s;
        };
        const Tensor<double> g = dropout_backward(cache, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, g, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_interpolate(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"interpolate", 0.0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, 108, static_cast<std::uint64_t>(t)));
        std::vector<Vec3> known(6), queries(5);
        for (Vec3& p : known) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (Vec3& p : queries) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const InterpolationPlan plan = build_interpolation_plan(known, queries);
        Tensor<double> f = rand_tensor({6, 3}, rng);
        const Tensor<double> coef = rand_tensor({5, 3}, rng);
        const auto eval = [&] { return weighted_sum(apply_interpolation(plan, f), coef); };
        const Tensor<double> g = interpolation_backward(plan, coef);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(f, g, eval));
    }
    return entry;
}

// conv -> BN -> ReLU -> pool composition on one ring.
inline GradCheckEntry gradcheck_conv_bn_relu_pool(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"conv_bn_relu_pool", 0.0};
    int attempts = 0;
    for (int t = 0; t < trials && attempts < trials * 20; ++t, ++attempts) {
        Rng rng(derive_seed(seed, 109, static_cast<std::uint64_t>(attempts)));
        Tensor<double> x = rand_tensor({6, 2}, rng);
        ConvKernel<double> kernel{rand_tensor({3, 2, 3}, rng), rand_tensor({3}, rng)};
        BatchNormParams<double> bn(3);
        bn.gamma = rand_tensor({3}, rng, 0.5, 1.5);
        bn.beta = rand_tensor({3}, rng, -0.2, 0.2);
        const Tensor<double> coef = rand_tensor({3}, rng);

        const auto forward = [&](BatchNormCache<double>* bc, Tensor<double>* relu_in,
                                 Tensor<double>* pool_in, std::vector<int>* argmax) {
            Tensor<double> y = annular_conv_forward(x, kernel);
            y = batch_norm_forward(y, bn, Mode::train, bc);
            if (relu_in) *relu_in = y;
            y = relu_forward(y);
            if (pool_in) *pool_in = y;
            auto [pooled, am] = ring_max_pool(y);
            if (argmax) *argmax = am;
            return pooled;
        };

        // Genericity guard: redraw if a kink or a pooling tie is too close.
        Tensor<double> relu_in, pool_in;
        std::vector<int> argmax;
        BatchNormCache<double> bn_cache;
        const Tensor<double> pooled = forward(&bn_cache, &relu_in, &pool_in, &argmax);
        double margin = std::numeric_limits<double>::infinity();
        for (std::int64_t i = 0; i < relu_in.numel(); ++i)
            margin = std::min(margin, std::abs(relu_in[i]));
        margin = std::min(margin, pool_gap_margin(pool_in, 1));
        if (margin < 1e-3) {
            --t;
            continue;
        }

        const auto eval = [&] { return weighted_sum(forward(nullptr, nullptr, nullptr, nullptr), coef); };

        Tensor<double> d = ring_max_pool_backward(pool_in.dim(0), argmax, coef);
        d = relu_backward(relu_in, d);
        BatchNormGrads<double> bn_g = batch_norm_backward(bn, bn_cache, d);
        ConvGrads<double> conv_g = annular_conv_backward(x, kernel, bn_g.input);

        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, conv_g.features, eval));
        entry.max_rel_err =
            std::max(entry.max_rel_err, check_tensor(kernel.weights, conv_g.weights, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(bn.gamma, bn_g.gamma, eval));
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(bn.beta, bn_g.beta, eval));
    }
    return entry;
}

// The composed encoder-layer map: gather -> convs -> BN -> ReLU -> pool ->
// concat, differentiated w.r.t. the input features and every layer parameter.
inline GradCheckEntry gradcheck_encoder_layer(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"encoder_layer", 0.0};
    LayerConfig config;
    config.centroids = 4;
    config.rings = {{0.0, 0.6, 4}, {0.6, 1.2, 6}};
    config.feature_maps = {{3, 4}, {4, 5}};

    int attempts = 0;
    for (int t = 0; t < trials && attempts < trials * 20; ++t, ++attempts) {
        Rng rng(derive_seed(seed, 110, static_cast<std::uint64_t>(attempts)));
        PointCloud cloud;
        for (int i = 0; i < 20; ++i) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            cloud.points.push_back(normalized(dir));
            cloud.normals.push_back(normalized(dir));
        }
        std::vector<int> orig_idx(cloud.points.size());
        for (std::size_t i = 0; i < orig_idx.size(); ++i) orig_idx[i] = static_cast<int>(i);
        Rng ordering_rng(0);
        const LayerPlan plan =
            build_layer_plan(cloud.points, orig_idx, cloud, config, Variant::full, ordering_rng, 0);

        EncoderLayerParams<double> params = make_encoder_layer_params<double>(2, config, 3, rng);
        Tensor<double> features = rand_tensor({20, 2}, rng);
        const Tensor<double> coef = rand_tensor({4, config.output_channels()}, rng);

        const auto eval = [&] {
            return weighted_sum(encoder_layer_forward(features, plan, params, config, Mode::train),
                                coef);
        };

        EncoderLayerCache<double> cache;
        encoder_layer_forward(features, plan, params, config, Mode::train, &cache);
        if (layer_cache_margin(cache) < 1e-3) {
            --t;
            continue;
        }

        EncoderLayerGrads<double> grads;
        const Tensor<double> d_features =
            encoder_layer_backward(coef, plan, params, config, cache, grads);

        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(features, d_features, eval));
        for (std::size_t r = 0; r < params.rings.size(); ++r) {
            for (std::size_t s = 0; s < params.rings[r].stages.size(); ++s) {
                ConvStage<double>& stage = params.rings[r].stages[s];
                entry.max_rel_err = std::max(
                    entry.max_rel_err,
                    check_tensor(stage.kernel.weights, grads.rings[r][s].weights, eval));
                entry.max_rel_err = std::max(
                    entry.max_rel_err, check_tensor(stage.kernel.bias, grads.rings[r][s].bias, eval));
                entry.max_rel_err = std::max(
                    entry.max_rel_err, check_tensor(stage.bn.gamma, grads.rings[r][s].gamma, eval));
                entry.max_rel_err = std::max(
                    entry.max_rel_err, check_tensor(stage.bn.beta, grads.rings[r][s].beta, eval));
            }
        }
    }
    return entry;
}

// End-to-end input gradient (the saliency path) against finite differences
// of the classification loss under frozen neighborhoods.
inline GradCheckEntry gradcheck_saliency(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"saliency_e2e", 0.0};

    NetworkConfig config;
    {
        LayerConfig l1;
        l1.centroids = 6;
        l1.rings = {{0.0, 0.7, 4}, {0.7, 1.4, 4}};
        l1.feature_maps = {{4}, {4}};
        LayerConfig l2;
        l2.centroids = 1;
        l2.rings = {{0.0, 2.5, 6}};
        l2.feature_maps = {{6}};
        config.layers = {l1, l2};
        ClassHeadConfig head;
        head.classes = 3;
        head.fc_widths = {5};
        head.dropout = 0.0;
        config.class_head = head;
    }

    int attempts = 0;
    for (int t = 0; t < trials && attempts < trials * 20; ++t, ++attempts) {
        Rng rng(derive_seed(seed, 111, static_cast<std::uint64_t>(attempts)));
        PointCloud cloud;
        for (int i = 0; i < 16; ++i) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            cloud.points.push_back(normalized(dir) * rng.uniform(0.8, 1.0));
            cloud.normals.push_back(normalized(dir));
        }
        Model<double> model = make_model<double>(config, Variant::full, rng.next_u64());

        Rng ordering_rng(0);
        const NetworkPlan plan = build_network_plan(
            cloud, std::span<const LayerConfig>(config.layers), Variant::full, ordering_rng);
        const int label = 0;

        Tensor<double> input = points_as_features<double>(cloud);
        const auto eval = [&] {
            EncoderResult<double> enc = encoder_forward(model, input, plan, Mode::eval, false);
            Rng drop_rng(0);
            const Tensor<double> logits =
                class_head_forward(model, enc.level_features[0].back(), Mode::eval, drop_rng);
            const int labels_arr[1] = {label};
            return softmax_cross_entropy(logits, std::span<const int>(labels_arr, 1));
        };

        EncoderResult<double> enc = encoder_forward(model, input, plan, Mode::eval, true);
        double margin = encoder_genericity_margin(enc);
        Rng drop_rng(0);
        ClassHeadCache<double> head_cache;
        const Tensor<double> logits = class_head_forward(model, enc.level_features[0].back(),
                                                         Mode::eval, drop_rng, &head_cache);
        for (const auto& fc : head_cache.fcs)
            for (std::int64_t i = 0; i < fc.bn_out.numel(); ++i)
                margin = std::min(margin, std::abs(fc.bn_out[i]));
        if (margin < 1e-3) {
            --t;
            continue;
        }
        Tensor<double> d_logits;
        const int labels_arr[1] = {label};
        softmax_cross_entropy(logits, std::span<const int>(labels_arr, 1), &d_logits);
        ParamTable<double> grads;
        Tensor<double> d_global = class_head_backward(model, head_cache, d_logits, grads);
        std::vector<Tensor<double>> d_levels(2);
        d_levels.back() = std::move(d_global);
        const Tensor<double> d_input = encoder_backward(model, plan, enc, std::move(d_levels), grads);

        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(input, d_input, eval));
    }
    return entry;
}

inline GradCheckEntry gradcheck_seg_head(std::uint64_t seed, int trials) {
    using namespace gradcheck_detail;
    GradCheckEntry entry{"seg_head", 0.0};

    NetworkConfig config;
    {
        LayerConfig l1;
        l1.centroids = 5;
        l1.rings = {{0.0, 1.0, 4}};
        l1.feature_maps = {{4}};
        config.layers = {l1};
        SegmentHeadConfig head;
        head.parts = 3;
        head.width = 4;
        config.segment_head = head;
    }

    int attempts = 0;
    for (int t = 0; t < trials && attempts < trials * 20; ++t, ++attempts) {
        Rng rng(derive_seed(seed, 112, static_cast<std::uint64_t>(attempts)));
        Model<double> model = make_model<double>(config, Variant::full, rng.next_u64());
        Tensor<double> x = rand_tensor({8, 4}, rng);
        const Tensor<double> coef = rand_tensor({8, 3}, rng);

        SegHeadCache<double> cache;
        const Tensor<double> out = seg_head_forward(model, x, Mode::train, &cache);
        double margin = std::numeric_limits<double>::infinity();
        for (std::int64_t i = 0; i < cache.bn_out.numel(); ++i)
            margin = std::min(margin, std::abs(cache.bn_out[i]));
        if (margin < 1e-3) {
            --t;
            continue;
        }

        const auto eval = [&] {
            return weighted_sum(seg_head_forward(model, x, Mode::train), coef);
        };
        ParamTable<double> grads;
        const Tensor<double> d_input = seg_head_backward(model, cache, coef, grads);
        entry.max_rel_err = std::max(entry.max_rel_err, check_tensor(x, d_input, eval));
        entry.max_rel_err = std::max(
            entry.max_rel_err,
            check_tensor(model.seg_head->reduce.weights, grads.at("head.reduce.w"), eval));
        entry.max_rel_err = std::max(
            entry.max_rel_err, check_tensor(model.seg_head->out_weights, grads.at("head.out.w"), eval));
    }
    return entry;
}

inline std::vector<GradCheckEntry> run_gradient_checks(std::uint64_t seed, int trials = 20) {
    std::vector<GradCheckEntry> results;
    results.push_back(gradcheck_dense(seed, trials));
    results.push_back(gradcheck_batch_norm(seed, trials));
    results.push_back(gradcheck_relu(seed, trials));
    results.push_back(gradcheck_softmax_cross_entropy(seed, trials));
    results.push_back(gradcheck_dropout(seed, trials));
    results.push_back(gradcheck_annular_conv(seed, trials, 1));
    results.push_back(gradcheck_annular_conv(seed, trials, 3));
    results.push_back(gradcheck_ring_max_pool(seed, trials));
    results.push_back(gradcheck_interpolate(seed, trials));
    results.push_back(gradcheck_conv_bn_relu_pool(seed, trials));
    results.push_back(gradcheck_encoder_layer(seed, trials));
    results.push_back(gradcheck_seg_head(seed, trials));
    results.push_back(gradcheck_saliency(seed, std::max(3, trials / 4)));
    return results;
}

}  // namespace acnn
