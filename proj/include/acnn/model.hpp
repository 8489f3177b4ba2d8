#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acnn/adam.hpp"
#include "acnn/checkpoint.hpp"
#include "acnn/config.hpp"
#include "acnn/encoder.hpp"
#include "acnn/interpolate.hpp"
#include "acnn/nn.hpp"

namespace acnn {

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

template <typename Scalar>
struct FcLayer {
    Tensor<Scalar> weights;
    Tensor<Scalar> bias;
    BatchNormParams<Scalar> bn;
};

template <typename Scalar>
struct ClassHeadParams {
    std::vector<FcLayer<Scalar>> hidden;
    Tensor<Scalar> out_weights;
    Tensor<Scalar> out_bias;
};

template <typename Scalar>
struct SegHeadParams {
    FcLayer<Scalar> reduce;  // 1x1 conv over the concatenated level features
    Tensor<Scalar> out_weights;
    Tensor<Scalar> out_bias;
};

template <typename Scalar>
struct Model {
    NetworkConfig config;
    Variant variant = Variant::full;
    std::vector<EncoderLayerParams<Scalar>> encoder;
    std::optional<ClassHeadParams<Scalar>> class_head;
    std::optional<SegHeadParams<Scalar>> seg_head;

    int input_channels = 3;

    int level_channels(std::size_t layer) const {
        return config.layers[layer].output_channels();
    }
};

template <typename Scalar>
int encoder_kernel_size(const Model<Scalar>& model, std::size_t layer) {
    return model.variant == Variant::no_annular ? 1 : model.config.layers[layer].kernel_size();
}

template <typename Scalar>
Model<Scalar> make_model(const NetworkConfig& config, Variant variant, std::uint64_t seed) {
    config.validate();
    if (config.is_classification() && config.layers.back().centroids != 1)
        throw InvalidArgument("classification network needs a final global layer (centroids=1)");

    Model<Scalar> model;
    model.config = config;
    model.variant = variant;
    Rng rng(derive_seed(seed, Stream::init));

    int channels = model.input_channels;
    for (std::size_t l = 0; l < config.layers.size(); ++l) {
        const int ks = variant == Variant::no_annular ? 1 : config.layers[l].kernel_size();
        model.encoder.push_back(
            make_encoder_layer_params<Scalar>(channels, config.layers[l], ks, rng));
        channels = config.layers[l].output_channels();
    }

    if (config.class_head) {
        ClassHeadParams<Scalar> head;
        int fin = channels;
        for (int width : config.class_head->fc_widths) {
            FcLayer<Scalar> fc{fan_in_uniform<Scalar>({fin, width}, fin, rng),
                               Tensor<Scalar>({width}), BatchNormParams<Scalar>(width)};
            head.hidden.push_back(std::move(fc));
            fin = width;
        }
        head.out_weights = fan_in_uniform<Scalar>({fin, config.class_head->classes}, fin, rng);
        head.out_bias = Tensor<Scalar>({config.class_head->classes});
        model.class_head = std::move(head);
    } else {
        int concat = 0;
        for (std::size_t l = 0; l < config.layers.size(); ++l)
            concat += config.layers[l].output_channels();
        SegHeadParams<Scalar> head;
        head.reduce = FcLayer<Scalar>{
            fan_in_uniform<Scalar>({concat, config.segment_head->width}, concat, rng),
            Tensor<Scalar>({config.segment_head->width}),
            BatchNormParams<Scalar>(config.segment_head->width)};
        head.out_weights = fan_in_uniform<Scalar>(
            {config.segment_head->width, config.segment_head->parts}, config.segment_head->width,
            rng);
        head.out_bias = Tensor<Scalar>({config.segment_head->parts});
        model.seg_head = std::move(head);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

// Trainable parameters, visited in a fixed order under stable names.
template <typename Scalar, typename Fn>
void for_each_param(Model<Scalar>& model, Fn&& fn) {
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        auto& layer = model.encoder[l];
        for (std::size_t r = 0; r < layer.rings.size(); ++r) {
            for (std::size_t s = 0; s < layer.rings[r].stages.size(); ++s) {
                ConvStage<Scalar>& st = layer.rings[r].stages[s];
                const std::string base = "enc" + std::to_string(l) + ".r" + std::to_string(r) +
                                         ".s" + std::to_string(s);
                fn(base + ".w", st.kernel.weights);
                fn(base + ".b", st.kernel.bias);
                fn(base + ".bn.gamma", st.bn.gamma);
                fn(base + ".bn.beta", st.bn.beta);
            }
        }
    }
    if (model.class_head) {
        auto& head = *model.class_head;
        for (std::size_t i = 0; i < head.hidden.size(); ++i) {
            const std::string base = "head.fc" + std::to_string(i);
            fn(base + ".w", head.hidden[i].weights);
            fn(base + ".b", head.hidden[i].bias);
            if (model.config.class_head->batch_norm) {
                fn(base + ".bn.gamma", head.hidden[i].bn.gamma);
                fn(base + ".bn.beta", head.hidden[i].bn.beta);
            }
        }
        fn("head.out.w", head.out_weights);
        fn("head.out.b", head.out_bias);
    }
    if (model.seg_head) {
        auto& head = *model.seg_head;
        fn("head.reduce.w", head.reduce.weights);
        fn("head.reduce.b", head.reduce.bias);
        fn("head.reduce.bn.gamma", head.reduce.bn.gamma);
        fn("head.reduce.bn.beta", head.reduce.bn.beta);
        fn("head.out.w", head.out_weights);
        fn("head.out.b", head.out_bias);
    }
}

// Non-trainable state (batch-norm running statistics).
template <typename Scalar, typename Fn>
void for_each_buffer(Model<Scalar>& model, Fn&& fn) {
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        auto& layer = model.encoder[l];
        for (std::size_t r = 0; r < layer.rings.size(); ++r) {
            for (std::size_t s = 0; s < layer.rings[r].stages.size(); ++s) {
                BatchNormParams<Scalar>& bn = layer.rings[r].stages[s].bn;
                const std::string base = "enc" + std::to_string(l) + ".r" + std::to_string(r) +
                                         ".s" + std::to_string(s) + ".bn";
                fn(base + ".rmean", bn.running_mean);
                fn(base + ".rvar", bn.running_var);
            }
        }
    }
    if (model.class_head && model.config.class_head->batch_norm) {
        for (std::size_t i = 0; i < model.class_head->hidden.size(); ++i) {
            BatchNormParams<Scalar>& bn = model.class_head->hidden[i].bn;
            const std::string base = "head.fc" + std::to_string(i) + ".bn";
            fn(base + ".rmean", bn.running_mean);
            fn(base + ".rvar", bn.running_var);
        }
    }
    if (model.seg_head) {
        fn("head.reduce.bn.rmean", model.seg_head->reduce.bn.running_mean);
        fn("head.reduce.bn.rvar", model.seg_head->reduce.bn.running_var);
    }
}

template <typename Scalar>
ParamTable<Scalar> snapshot_params(Model<Scalar>& model) {
    ParamTable<Scalar> table;
    for_each_param(model, [&](const std::string& name, Tensor<Scalar>& t) { table[name] = t; });
    return table;
}

template <typename Scalar>
void load_params(Model<Scalar>& model, const ParamTable<Scalar>& table) {
    for_each_param(model, [&](const std::string& name, Tensor<Scalar>& t) {
        auto it = table.find(name);
        if (it == table.end()) throw ConfigMismatch("checkpoint is missing parameter " + name);
        if (!it->second.same_shape(t))
            throw ConfigMismatch("checkpoint parameter " + name + " has mismatched shape");
        t = it->second;
    });
}

template <typename Scalar>
void add_grad(ParamTable<Scalar>& table, const std::string& name, const Tensor<Scalar>& g) {
    auto [it, inserted] = table.try_emplace(name, g);
    if (!inserted) {
        Tensor<Scalar>& acc = it->second;
        for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
    }
}

// ---------------------------------------------------------------------------
// Encoder pipeline
// ---------------------------------------------------------------------------

// Batched encoder state: level features are kept per sample, caches hold the
// stacked batch rows per layer.
template <typename Scalar>
struct EncoderResult {
    std::vector<Tensor<Scalar>> inputs;                       // per sample, N_j x 3
    std::vector<std::vector<Tensor<Scalar>>> level_features;  // [sample][layer]
    std::vector<EncoderLayerCache<Scalar>> caches;            // per layer
};

template <typename Scalar>
Tensor<Scalar> points_as_features(const PointCloud& cloud) {
    Tensor<Scalar> f({cloud.size(), 3});
    for (int i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[static_cast<std::size_t>(i)];
        f(i, 0) = static_cast<Scalar>(p.x);
        f(i, 1) = static_cast<Scalar>(p.y);
        f(i, 2) = static_cast<Scalar>(p.z);
    }
    return f;
}

template <typename Scalar>
EncoderResult<Scalar> encoder_forward_batch(Model<Scalar>& model,
                                            std::vector<Tensor<Scalar>> input_features,
                                            std::span<const NetworkPlan> plans, Mode mode,
                                            bool want_cache) {
    const std::size_t B = input_features.size();
    EncoderResult<Scalar> result;
    result.inputs = std::move(input_features);
    result.level_features.resize(B);
    if (want_cache) result.caches.resize(model.encoder.size());

    std::vector<Tensor<Scalar>> features = result.inputs;
    std::vector<LayerPlan> layer_plans(B);
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        for (std::size_t j = 0; j < B; ++j) layer_plans[j] = plans[j].layers[l];
        features = encoder_layer_forward_batch(
            features, std::span<const LayerPlan>(layer_plans), model.encoder[l],
            model.config.layers[l], mode, want_cache ? &result.caches[l] : nullptr);
        for (std::size_t j = 0; j < B; ++j) result.level_features[j].push_back(features[j]);
    }
    return result;
}

template <typename Scalar>
EncoderResult<Scalar> encoder_forward(Model<Scalar>& model, const Tensor<Scalar>& input_features,
                                      const NetworkPlan& plan, Mode mode, bool want_cache) {
    return encoder_forward_batch(model, std::vector<Tensor<Scalar>>{input_features},
                                 std::span<const NetworkPlan>(&plan, 1), mode, want_cache);
}

// Walks the encoder in reverse. d_levels holds one (possibly empty) gradient
// per sample and level; level gradients combine with whatever flows down from
// deeper layers. Returns the gradient w.r.t. each sample's input features.
template <typename Scalar>
std::vector<Tensor<Scalar>> encoder_backward_batch(
    Model<Scalar>& model, std::span<const NetworkPlan> plans, const EncoderResult<Scalar>& result,
    std::vector<std::vector<Tensor<Scalar>>> d_levels, ParamTable<Scalar>& grads) {
    const std::size_t B = result.level_features.size();
    std::vector<Tensor<Scalar>> d(B);
    std::vector<LayerPlan> layer_plans(B);
    for (std::size_t l = model.encoder.size(); l-- > 0;) {
        for (std::size_t j = 0; j < B; ++j) {
            Tensor<Scalar>& inject = d_levels[j][l];
            if (d[j].numel() == 0) {
                d[j] = std::move(inject);
            } else if (inject.numel() != 0) {
                for (std::int64_t i = 0; i < d[j].numel(); ++i) d[j][i] += inject[i];
            }
            if (d[j].numel() == 0)
                throw InvalidArgument("encoder_backward: no upstream gradient for deepest level");
            layer_plans[j] = plans[j].layers[l];
        }

        EncoderLayerGrads<Scalar> layer_grads;
        d = encoder_layer_backward_batch(d, std::span<const LayerPlan>(layer_plans),
                                         model.encoder[l], model.config.layers[l],
                                         result.caches[l], layer_grads);
        for (std::size_t r = 0; r < layer_grads.rings.size(); ++r) {
            for (std::size_t st = 0; st < layer_grads.rings[r].size(); ++st) {
                const std::string base = "enc" + std::to_string(l) + ".r" + std::to_string(r) +
                                         ".s" + std::to_string(st);
                add_grad(grads, base + ".w", layer_grads.rings[r][st].weights);
                add_grad(grads, base + ".b", layer_grads.rings[r][st].bias);
                add_grad(grads, base + ".bn.gamma", layer_grads.rings[r][st].gamma);
                add_grad(grads, base + ".bn.beta", layer_grads.rings[r][st].beta);
            }
        }
    }
    return d;
}

template <typename Scalar>
Tensor<Scalar> encoder_backward(Model<Scalar>& model, const NetworkPlan& plan,
                                const EncoderResult<Scalar>& result,
                                std::vector<Tensor<Scalar>> d_levels, ParamTable<Scalar>& grads) {
    std::vector<std::vector<Tensor<Scalar>>> batched(1);
    batched[0] = std::move(d_levels);
    return encoder_backward_batch(model, std::span<const NetworkPlan>(&plan, 1), result,
                                  std::move(batched), grads)[0];
}

// Folds each stage's batch statistics into the running buffers; call once per
// training batch, after the forward pass.
template <typename Scalar>
void update_encoder_running_stats(Model<Scalar>& model, const EncoderResult<Scalar>& result) {
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        for (std::size_t r = 0; r < model.encoder[l].rings.size(); ++r) {
            for (std::size_t st = 0; st < model.encoder[l].rings[r].stages.size(); ++st) {
                const BatchNormCache<Scalar>& c = result.caches[l].rings[r].stages[st].bn;
                if (c.train)
                    batch_norm_update_running(model.encoder[l].rings[r].stages[st].bn, c);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Classification head (rows = batch samples)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ClassHeadCache {
    struct FcCache {
        Tensor<Scalar> input;
        BatchNormCache<Scalar> bn;
        Tensor<Scalar> bn_out;
        DropoutCache<Scalar> dropout;
    };
    std::vector<FcCache> fcs;
    Tensor<Scalar> out_input;
};

template <typename Scalar>
Tensor<Scalar> class_head_forward(Model<Scalar>& model, const Tensor<Scalar>& global_features,
                                  Mode mode, Rng& dropout_rng,
                                  ClassHeadCache<Scalar>* cache = nullptr) {
    ClassHeadParams<Scalar>& head = *model.class_head;
    const ClassHeadConfig& cfg = *model.config.class_head;
    Tensor<Scalar> x = global_features;
    if (cache) cache->fcs.resize(head.hidden.size());
    for (std::size_t i = 0; i < head.hidden.size(); ++i) {
        auto* fc_cache = cache ? &cache->fcs[i] : nullptr;
        if (fc_cache) fc_cache->input = x;
        x = dense_forward(x, head.hidden[i].weights, head.hidden[i].bias);
        if (cfg.batch_norm)
            x = batch_norm_forward(x, head.hidden[i].bn, mode, fc_cache ? &fc_cache->bn : nullptr);
        if (fc_cache) fc_cache->bn_out = x;
        x = relu_forward(x);
        x = dropout_forward(x, cfg.dropout, dropout_rng, mode,
                            fc_cache ? &fc_cache->dropout : nullptr);
    }
    if (cache) cache->out_input = x;
    return dense_forward(x, head.out_weights, head.out_bias);
}

template <typename Scalar>
Tensor<Scalar> class_head_backward(Model<Scalar>& model, const ClassHeadCache<Scalar>& cache,
                                   const Tensor<Scalar>& upstream, ParamTable<Scalar>& grads) {
    ClassHeadParams<Scalar>& head = *model.class_head;
    const ClassHeadConfig& cfg = *model.config.class_head;
    DenseGrads<Scalar> out_g = dense_backward(cache.out_input, head.out_weights, upstream);
    add_grad(grads, "head.out.w", out_g.weights);
    add_grad(grads, "head.out.b", out_g.bias);
    Tensor<Scalar> d = std::move(out_g.input);
    for (std::size_t i = head.hidden.size(); i-- > 0;) {
        const auto& fc_cache = cache.fcs[i];
        d = dropout_backward(fc_cache.dropout, d);
        d = relu_backward(fc_cache.bn_out, d);
        const std::string base = "head.fc" + std::to_string(i);
        if (cfg.batch_norm) {
            BatchNormGrads<Scalar> bn_g = batch_norm_backward(head.hidden[i].bn, fc_cache.bn, d);
            add_grad(grads, base + ".bn.gamma", bn_g.gamma);
            add_grad(grads, base + ".bn.beta", bn_g.beta);
            d = std::move(bn_g.input);
        }
        DenseGrads<Scalar> fc_g = dense_backward(fc_cache.input, head.hidden[i].weights, d);
        add_grad(grads, base + ".w", fc_g.weights);
        add_grad(grads, base + ".b", fc_g.bias);
        d = std::move(fc_g.input);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Segmentation head (rows = points of one cloud)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SegHeadCache {
    Tensor<Scalar> reduce_input;
    BatchNormCache<Scalar> bn;
    Tensor<Scalar> bn_out;
    Tensor<Scalar> out_input;
};

template <typename Scalar>
Tensor<Scalar> seg_head_forward(Model<Scalar>& model, const Tensor<Scalar>& per_point_features,
                                Mode mode, SegHeadCache<Scalar>* cache = nullptr) {
    SegHeadParams<Scalar>& head = *model.seg_head;
    if (cache) cache->reduce_input = per_point_features;
    Tensor<Scalar> x =
        dense_forward(per_point_features, head.reduce.weights, head.reduce.bias);
    x = batch_norm_forward(x, head.reduce.bn, mode, cache ? &cache->bn : nullptr);
    if (cache) cache->bn_out = x;
    x = relu_forward(x);
    if (cache) cache->out_input = x;
    return dense_forward(x, head.out_weights, head.out_bias);
}

template <typename Scalar>
Tensor<Scalar> seg_head_backward(Model<Scalar>& model, const SegHeadCache<Scalar>& cache,
                                 const Tensor<Scalar>& upstream, ParamTable<Scalar>& grads) {
    SegHeadParams<Scalar>& head = *model.seg_head;
    DenseGrads<Scalar> out_g = dense_backward(cache.out_input, head.out_weights, upstream);
    add_grad(grads, "head.out.w", out_g.weights);
    add_grad(grads, "head.out.b", out_g.bias);
    Tensor<Scalar> d = relu_backward(cache.bn_out, out_g.input);
    BatchNormGrads<Scalar> bn_g = batch_norm_backward(head.reduce.bn, cache.bn, d);
    add_grad(grads, "head.reduce.bn.gamma", bn_g.gamma);
    add_grad(grads, "head.reduce.bn.beta", bn_g.beta);
    DenseGrads<Scalar> red_g =
        dense_backward(cache.reduce_input, head.reduce.weights, bn_g.input);
    add_grad(grads, "head.reduce.w", red_g.weights);
    add_grad(grads, "head.reduce.b", red_g.bias);
    return red_g.input;
}

// ---------------------------------------------------------------------------
// Whole-network forward passes
// ---------------------------------------------------------------------------

template <typename Scalar>
NetworkPlan plan_for_cloud(const Model<Scalar>& model, const PointCloud& cloud,
                           std::uint64_t ordering_seed, int fps_seed) {
    Rng ordering_rng(ordering_seed);
    return build_network_plan(cloud, std::span<const LayerConfig>(model.config.layers),
                              model.variant, ordering_rng, fps_seed);
}

// Logits for a single cloud. The head sees a one-row batch, so train-mode
// calls are only meaningful through the batched training loop; use eval mode
// here.
template <typename Scalar>
Tensor<Scalar> classify_forward(Model<Scalar>& model, const PointCloud& cloud, Mode mode,
                                std::uint64_t seed = 0, int fps_seed = 0) {
    if (!model.config.is_classification())
        throw ConfigMismatch("classify_forward requires a classification head");
    const NetworkPlan plan = plan_for_cloud(model, cloud, derive_seed(seed, Stream::ordering),
                                            fps_seed);
    EncoderResult<Scalar> enc =
        encoder_forward(model, points_as_features<Scalar>(cloud), plan, mode, false);
    Rng dropout_rng(derive_seed(seed, Stream::dropout));
    return class_head_forward(model, enc.level_features[0].back(), mode, dropout_rng);
}

// Per-point logits for a single cloud: encoder levels are interpolated back
// to the original points, concatenated, and pushed through the 1x1 head.
template <typename Scalar>
struct SegmentForwardResult {
    Tensor<Scalar> logits;  // N x m
    EncoderResult<Scalar> encoder;
    std::vector<InterpolationPlan> interpolation;  // per level
    SegHeadCache<Scalar> head_cache;
    NetworkPlan plan;
};

template <typename Scalar>
Tensor<Scalar> segment_levels_concat(const Model<Scalar>& model,
                                     const std::vector<Tensor<Scalar>>& interpolated, int n) {
    int total = 0;
    for (const auto& t : interpolated) total += static_cast<int>(t.dim(1));
    Tensor<Scalar> out({n, total});
    std::int64_t off = 0;
    for (const auto& t : interpolated) {
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t c = 0; c < t.dim(1); ++c) out(i, off + c) = t(i, c);
        off += t.dim(1);
    }
    return out;
}

template <typename Scalar>
SegmentForwardResult<Scalar> segment_forward(Model<Scalar>& model, const PointCloud& cloud,
                                             Mode mode, std::uint64_t seed = 0, int fps_seed = 0,
                                             bool want_cache = false) {
    if (model.config.is_classification())
        throw ConfigMismatch("segment_forward requires a segmentation head");
    SegmentForwardResult<Scalar> result;
    result.plan = plan_for_cloud(model, cloud, derive_seed(seed, Stream::ordering), fps_seed);
    result.encoder =
        encoder_forward(model, points_as_features<Scalar>(cloud), result.plan, mode, want_cache);

    std::vector<Tensor<Scalar>> interpolated;
    for (std::size_t l = 0; l < result.encoder.level_features[0].size(); ++l) {
        result.interpolation.push_back(build_interpolation_plan(
            std::span<const Vec3>(result.plan.layers[l].centroid_points),
            std::span<const Vec3>(cloud.points)));
        interpolated.push_back(apply_interpolation(result.interpolation.back(),
                                                   result.encoder.level_features[0][l]));
    }
    const Tensor<Scalar> concat = segment_levels_concat(model, interpolated, cloud.size());
    result.logits =
        seg_head_forward(model, concat, mode, want_cache ? &result.head_cache : nullptr);
    return result;
}

template <typename Scalar>
Tensor<Scalar> segment_backward(Model<Scalar>& model, const PointCloud& cloud,
                                SegmentForwardResult<Scalar>& fwd, const Tensor<Scalar>& d_logits,
                                ParamTable<Scalar>& grads) {
    Tensor<Scalar> d_concat = seg_head_backward(model, fwd.head_cache, d_logits, grads);
    std::vector<Tensor<Scalar>> d_levels(fwd.encoder.level_features[0].size());
    std::int64_t off = 0;
    for (std::size_t l = 0; l < fwd.encoder.level_features[0].size(); ++l) {
        const std::int64_t F = fwd.encoder.level_features[0][l].dim(1);
        Tensor<Scalar> slice({cloud.size(), F});
        for (std::int64_t i = 0; i < cloud.size(); ++i)
            for (std::int64_t c = 0; c < F; ++c) slice(i, c) = d_concat(i, off + c);
        off += F;
        d_levels[l] = interpolation_backward(fwd.interpolation[l], slice);
    }
    return encoder_backward(model, fwd.plan, fwd.encoder, std::move(d_levels), grads);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------
// A checkpoint carries its own config text and variant (as meta entries), the
// trainable parameters, the batch-norm buffers and, when given, the optimizer
// state — enough to rebuild the model from the file alone.

inline void save_model(const std::filesystem::path& path, Model<float>& model,
                       const OptimizerState<float>* opt = nullptr) {
    ParamTable<float> entries;
    entries["meta.config"] = string_to_tensor(config_to_text(model.config));
    entries["meta.variant"] =
        Tensor<float>({1}, {static_cast<float>(static_cast<int>(model.variant))});
    for_each_param(model, [&](const std::string& name, Tensor<float>& t) {
        entries["p." + name] = t;
    });
    for_each_buffer(model, [&](const std::string& name, Tensor<float>& t) {
        entries["b." + name] = t;
    });
    if (opt) {
        for (const auto& [name, t] : opt->m) entries["opt.m." + name] = t;
        for (const auto& [name, t] : opt->v) entries["opt.v." + name] = t;
        entries["opt.step"] = Tensor<float>({1}, {static_cast<float>(opt->step)});
        entries["opt.lr"] = Tensor<float>({1}, {static_cast<float>(opt->learning_rate)});
    }
    write_checkpoint(path, entries);
}

inline Model<float> load_model(const std::filesystem::path& path) {
    const ParamTable<float> entries = read_checkpoint(path);
    auto meta_config = entries.find("meta.config");
    auto meta_variant = entries.find("meta.variant");
    if (meta_config == entries.end() || meta_variant == entries.end())
        throw ConfigMismatch("checkpoint lacks meta entries: " + path.string());
    const NetworkConfig config = parse_network_config(tensor_to_string(meta_config->second));
    const auto variant = static_cast<Variant>(static_cast<int>(meta_variant->second[0]));

    Model<float> model = make_model<float>(config, variant, 0);
    for_each_param(model, [&](const std::string& name, Tensor<float>& t) {
        auto it = entries.find("p." + name);
        if (it == entries.end()) throw ConfigMismatch("checkpoint is missing parameter " + name);
        if (!it->second.same_shape(t))
            throw ConfigMismatch("checkpoint parameter " + name + " has mismatched shape");
        t = it->second;
    });
    for_each_buffer(model, [&](const std::string& name, Tensor<float>& t) {
        auto it = entries.find("b." + name);
        if (it != entries.end()) t = it->second;
    });
    return model;
}

// ---------------------------------------------------------------------------
// Saliency
// ---------------------------------------------------------------------------

// Per-point magnitude of the loss gradient w.r.t. the input coordinates,
// evaluated in eval mode with frozen neighborhoods.
template <typename Scalar>
std::vector<double> saliency(Model<Scalar>& model, const PointCloud& cloud, int label,
                             std::uint64_t seed = 0, int fps_seed = 0) {
    if (!model.config.is_classification())
        throw ConfigMismatch("saliency is defined for classification checkpoints");
    const NetworkPlan plan =
        plan_for_cloud(model, cloud, derive_seed(seed, Stream::ordering), fps_seed);
    EncoderResult<Scalar> enc =
        encoder_forward(model, points_as_features<Scalar>(cloud), plan, Mode::eval, true);

    Rng dropout_rng(derive_seed(seed, Stream::dropout));
    ClassHeadCache<Scalar> head_cache;
    const Tensor<Scalar> logits = class_head_forward(model, enc.level_features[0].back(),
                                                     Mode::eval, dropout_rng, &head_cache);
    Tensor<Scalar> d_logits;
    const int labels_arr[1] = {label};
    softmax_cross_entropy(logits, std::span<const int>(labels_arr, 1), &d_logits);

    ParamTable<Scalar> grads;
    Tensor<Scalar> d_global = class_head_backward(model, head_cache, d_logits, grads);
    std::vector<Tensor<Scalar>> d_levels(enc.level_features[0].size());
    d_levels.back() = std::move(d_global);
    const Tensor<Scalar> d_input = encoder_backward(model, plan, enc, std::move(d_levels), grads);

    std::vector<double> out(static_cast<std::size_t>(cloud.size()));
    for (int i = 0; i < cloud.size(); ++i) {
        const double gx = static_cast<double>(d_input(i, 0));
        const double gy = static_cast<double>(d_input(i, 1));
        const double gz = static_cast<double>(d_input(i, 2));
        out[static_cast<std::size_t>(i)] = std::sqrt(gx * gx + gy * gy + gz * gz);
    }
    return out;
}

}  // namespace acnn
