#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>

#include "acnn/data.hpp"
#include "acnn/gradcheck.hpp"
#include "acnn/model.hpp"
#include "acnn/train.hpp"

using namespace acnn;

namespace {

PointCloud sphere_cloud(int n, std::uint64_t seed) {
    Rng rng(seed);
    return generate_shape(ShapeSpec::sphere(1.0, n), rng);
}

NetworkConfig full_scale_acnn3l() {
    NetworkConfig cfg;
    LayerConfig l1;
    l1.centroids = 512;
    l1.rings = {{0.0, 0.1, 16}, {0.1, 0.2, 48}};
    l1.feature_maps = {{32, 32, 64}, {64, 64, 128}};
    LayerConfig l2;
    l2.centroids = 128;
    l2.rings = {{0.1, 0.2, 16}, {0.3, 0.4, 48}};
    l2.feature_maps = {{64, 64, 128}, {128, 128, 256}};
    LayerConfig l3;
    l3.centroids = 1;
    l3.rings = {{0.0, 2.5, 128}};
    l3.feature_maps = {{256, 512, 1024}};
    cfg.layers = {l1, l2, l3};
    ClassHeadConfig head;
    head.classes = 40;
    head.fc_widths = {512, 256};
    head.dropout = 0.5;
    cfg.class_head = head;
    return cfg;
}

NetworkConfig tiny_classifier(int classes) {
    NetworkConfig cfg;
    LayerConfig l1;
    l1.centroids = 12;
    l1.rings = {{0.0, 0.6, 6}, {0.6, 1.2, 8}};
    l1.feature_maps = {{6, 8}, {8, 10}};
    LayerConfig l2;
    l2.centroids = 1;
    l2.rings = {{0.0, 3.0, 12}};
    l2.feature_maps = {{16, 24}};
    cfg.layers = {l1, l2};
    ClassHeadConfig head;
    head.classes = classes;
    head.fc_widths = {16};
    head.dropout = 0.0;
    cfg.class_head = head;
    return cfg;
}

NetworkConfig tiny_segmenter(int parts) {
    NetworkConfig cfg;
    LayerConfig l1;
    l1.centroids = 16;
    l1.rings = {{0.0, 0.5, 6}, {0.5, 1.0, 8}};
    l1.feature_maps = {{6, 8}, {8, 10}};
    LayerConfig l2;
    l2.centroids = 4;
    l2.rings = {{0.0, 1.2, 6}};
    l2.feature_maps = {{12, 16}};
    cfg.layers = {l1, l2};
    SegmentHeadConfig head;
    head.parts = parts;
    head.width = 12;
    cfg.segment_head = head;
    return cfg;
}

// Cyclic rotation of the ordered ring sequences simulates choosing a
// different ordering start position.
NetworkPlan rotate_ring_starts(NetworkPlan plan, int shift) {
    for (LayerPlan& layer : plan.layers) {
        for (Neighborhood& nb : layer.neighborhoods) {
            for (RingNeighbors& ring : nb.rings) {
                const int k = static_cast<int>(ring.indices.size());
                std::vector<int> rotated(static_cast<std::size_t>(k));
                for (int i = 0; i < k; ++i)
                    rotated[static_cast<std::size_t>(i)] =
                        ring.indices[static_cast<std::size_t>((i + shift) % k)];
                ring.indices = std::move(rotated);
            }
        }
    }
    return plan;
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder layer shapes (full-scale configuration)
// ---------------------------------------------------------------------------

TEST_CASE("full-scale three-layer encoder shapes: 512x192 then 128x384") {
    const NetworkConfig cfg = full_scale_acnn3l();
    const PointCloud cloud = sphere_cloud(1024, 7);
    Model<float> model = make_model<float>(cfg, Variant::full, 1);

    Rng ordering_rng(0);
    const NetworkPlan plan = build_network_plan(
        cloud, std::span<const LayerConfig>(cfg.layers), Variant::full, ordering_rng);
    EncoderResult<float> enc =
        encoder_forward(model, points_as_features<float>(cloud), plan, Mode::eval, false);

    REQUIRE(enc.level_features[0].size() == 3);
    CHECK(enc.level_features[0][0].dim(0) == 512);
    CHECK(enc.level_features[0][0].dim(1) == 192);  // 64 + 128 concatenated
    CHECK(enc.level_features[0][1].dim(0) == 128);
    CHECK(enc.level_features[0][1].dim(1) == 384);  // 128 + 256
    CHECK(enc.level_features[0][2].dim(0) == 1);
    CHECK(enc.level_features[0][2].dim(1) == 1024);
}

TEST_CASE("single-ring 1x1 layer reduces to pointwise affine plus max") {
    // Positive weights and features keep the ReLU in its identity regime and
    // fresh eval-mode batch norm is (1 - 5e-6) * identity.
    Rng rng(11);
    PointCloud cloud = sphere_cloud(32, 3);
    Tensor<float> features({32, 3});
    for (std::int64_t i = 0; i < features.numel(); ++i)
        features[i] = static_cast<float>(rng.uniform(0.1, 1.0));

    LayerConfig config;
    config.centroids = 5;
    config.rings = {{0.0, 1.2, 6}};
    config.feature_maps = {{4}};

    EncoderLayerParams<float> params = make_encoder_layer_params<float>(3, config, 1, rng);
    for (std::int64_t i = 0; i < params.rings[0].stages[0].kernel.weights.numel(); ++i)
        params.rings[0].stages[0].kernel.weights[i] = static_cast<float>(rng.uniform(0.05, 0.5));
    for (std::int64_t i = 0; i < params.rings[0].stages[0].kernel.bias.numel(); ++i)
        params.rings[0].stages[0].kernel.bias[i] = static_cast<float>(rng.uniform(0.05, 0.2));

    Rng plan_rng(0);
    std::vector<int> orig(32);
    std::iota(orig.begin(), orig.end(), 0);
    const LayerPlan plan =
        build_layer_plan(cloud.points, orig, cloud, config, Variant::full, plan_rng, 0);
    const Tensor<float> out = encoder_layer_forward(features, plan, params, config, Mode::eval);

    // Dense oracle on the same neighbor set.
    Tensor<float> dense_w({3, 4});
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t o = 0; o < 4; ++o)
            dense_w(c, o) = params.rings[0].stages[0].kernel.weights(0, c, o);
    for (int ci = 0; ci < 5; ++ci) {
        const auto& idx = plan.neighborhoods[static_cast<std::size_t>(ci)].rings[0].indices;
        Tensor<float> neighbor_rows({static_cast<std::int64_t>(idx.size()), 3});
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::int64_t c = 0; c < 3; ++c)
                neighbor_rows(static_cast<std::int64_t>(i), c) = features(idx[i], c);
        const Tensor<float> affine =
            dense_forward(neighbor_rows, dense_w, params.rings[0].stages[0].kernel.bias);
        auto [pooled, argmax] = ring_max_pool(affine);
        const float bn_scale = 1.0f / std::sqrt(1.0f + 1e-5f);
        for (std::int64_t o = 0; o < 4; ++o)
            CHECK(out(ci, o) == Catch::Approx(pooled[o] * bn_scale).epsilon(1e-4));
    }
}

// ---------------------------------------------------------------------------
// Variant neighborhoods
// ---------------------------------------------------------------------------

TEST_CASE("full variant rings are disjoint; ball query overlaps") {
    const PointCloud cloud = sphere_cloud(256, 13);
    LayerConfig config;
    config.centroids = 32;
    config.rings = {{0.0, 0.25, 8}, {0.25, 0.5, 12}};
    config.feature_maps = {{4}, {4}};

    std::vector<int> orig(256);
    std::iota(orig.begin(), orig.end(), 0);

    Rng rng_full(0), rng_ball(0);
    const LayerPlan full =
        build_layer_plan(cloud.points, orig, cloud, config, Variant::full, rng_full, 0);
    const LayerPlan ball =
        build_layer_plan(cloud.points, orig, cloud, config, Variant::ball_query, rng_ball, 0);

    auto duplicate_rate = [](const LayerPlan& plan) {
        // Padding repeats indices inside one ring by design; redundancy means a
        // point appearing in more than one search region of the same centroid.
        std::int64_t dupes = 0, total = 0;
        for (const Neighborhood& nb : plan.neighborhoods) {
            std::set<int> seen;
            for (const RingNeighbors& ring : nb.rings) {
                if (ring.empty) continue;
                std::set<int> members(ring.indices.begin(), ring.indices.end());
                for (int idx : members) {
                    if (!seen.insert(idx).second) ++dupes;
                    ++total;
                }
            }
        }
        return total ? static_cast<double>(dupes) / static_cast<double>(total) : 0.0;
    };

    CHECK(duplicate_rate(full) == 0.0);
    CHECK(duplicate_rate(ball) > 0.0);
}

TEST_CASE("no_ordering permutes rings; no_annular builds 1x1 kernels") {
    const NetworkConfig cfg = tiny_classifier(3);
    Model<float> shuffled = make_model<float>(cfg, Variant::no_ordering, 5);
    Model<float> pointwise = make_model<float>(cfg, Variant::no_annular, 5);
    CHECK(pointwise.encoder[0].rings[0].stages[0].kernel.k_size() == 1);
    CHECK(shuffled.encoder[0].rings[0].stages[0].kernel.k_size() == 3);

    const PointCloud cloud = sphere_cloud(48, 21);
    const Tensor<float> logits = classify_forward(shuffled, cloud, Mode::eval, 9);
    CHECK(logits.dim(1) == 3);
}

// ---------------------------------------------------------------------------
// classify_forward
// ---------------------------------------------------------------------------

TEST_CASE("classifier produces c logits") {
    Model<float> model = make_model<float>(tiny_classifier(5), Variant::full, 2);
    const PointCloud cloud = sphere_cloud(40, 17);
    const Tensor<float> logits = classify_forward(model, cloud, Mode::eval);
    REQUIRE(logits.rank() == 2);
    CHECK(logits.dim(0) == 1);
    CHECK(logits.dim(1) == 5);
}

TEST_CASE("classifier requires normals for ordering") {
    Model<float> model = make_model<float>(tiny_classifier(3), Variant::full, 2);
    PointCloud cloud = sphere_cloud(40, 19);
    cloud.normals.clear();
    CHECK_THROWS_AS(classify_forward(model, cloud, Mode::eval), NormalsRequired);
}

TEST_CASE("point-order permutation with a mapped FPS seed keeps logits") {
    Model<float> model = make_model<float>(tiny_classifier(4), Variant::full, 3);
    const PointCloud cloud = sphere_cloud(48, 23);

    Rng perm_rng(99);
    const std::vector<int> perm = perm_rng.permutation(cloud.size());
    PointCloud permuted;
    permuted.points.resize(cloud.points.size());
    permuted.normals.resize(cloud.normals.size());
    for (int i = 0; i < cloud.size(); ++i) {
        permuted.points[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
            cloud.points[static_cast<std::size_t>(i)];
        permuted.normals[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
            cloud.normals[static_cast<std::size_t>(i)];
    }

    const Tensor<float> base = classify_forward(model, cloud, Mode::eval, 0, 0);
    const Tensor<float> re = classify_forward(model, permuted, Mode::eval, 0, perm[0]);
    for (std::int64_t c = 0; c < base.dim(1); ++c)
        CHECK(std::abs(base(0, c) - re(0, c)) < 1e-4f);
}

TEST_CASE("untrained classifier sits near the uniform loss") {
    Model<float> model = make_model<float>(tiny_classifier(5), Variant::full, 4);
    const PointCloud cloud = sphere_cloud(40, 29);
    const Tensor<float> logits = classify_forward(model, cloud, Mode::eval);
    const int label[1] = {2};
    const double loss = softmax_cross_entropy(logits, std::span<const int>(label, 1));
    CHECK(std::abs(loss - std::log(5.0)) < 0.5);
}

TEST_CASE("end-to-end logits are invariant to the ordering start position") {
    Model<float> model = make_model<float>(tiny_classifier(4), Variant::full, 6);
    for (int rep = 0; rep < 5; ++rep) {
        const PointCloud cloud = sphere_cloud(48, 100 + static_cast<std::uint64_t>(rep));
        Rng ordering_rng(0);
        const NetworkPlan plan = build_network_plan(
            cloud, std::span<const LayerConfig>(model.config.layers), Variant::full, ordering_rng);

        Rng dropout_rng(0);
        EncoderResult<float> enc =
            encoder_forward(model, points_as_features<float>(cloud), plan, Mode::eval, false);
        const Tensor<float> base =
            class_head_forward(model, enc.level_features[0].back(), Mode::eval, dropout_rng);

        for (int shift : {1, 2, 3}) {
            const NetworkPlan rotated = rotate_ring_starts(plan, shift);
            EncoderResult<float> enc2 = encoder_forward(model, points_as_features<float>(cloud),
                                                        rotated, Mode::eval, false);
            Rng dr(0);
            const Tensor<float> logits =
                class_head_forward(model, enc2.level_features[0].back(), Mode::eval, dr);
            for (std::int64_t c = 0; c < base.dim(1); ++c)
                CHECK(std::abs(base(0, c) - logits(0, c)) < 1e-4f);
        }
    }
}

// ---------------------------------------------------------------------------
// interpolate_features
// ---------------------------------------------------------------------------

TEST_CASE("interpolation reproduces coincident points exactly") {
    const std::vector<Vec3> known = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    const Tensor<float> f({3, 2}, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f});
    const std::vector<Vec3> query = {{1, 0, 0}};
    const Tensor<float> out = interpolate_features(std::span<const Vec3>(known), f,
                                                   std::span<const Vec3>(query));
    CHECK(out(0, 0) == 3.0f);
    CHECK(out(0, 1) == 4.0f);
}

TEST_CASE("equidistant sources average with equal weights") {
    const std::vector<Vec3> known = {{1, 0, 0},
                                     {-0.5, std::sqrt(3.0) / 2, 0},
                                     {-0.5, -std::sqrt(3.0) / 2, 0}};
    const Tensor<float> f({3, 1}, {3.0f, 6.0f, 9.0f});
    const std::vector<Vec3> query = {{0, 0, 0}};
    const Tensor<float> out = interpolate_features(std::span<const Vec3>(known), f,
                                                   std::span<const Vec3>(query));
    CHECK(out(0, 0) == Catch::Approx(6.0f).epsilon(1e-6));
}

TEST_CASE("the (1,2,2)-distance case follows the inverse-square weights") {
    const std::vector<Vec3> known = {{1, 0, 0}, {2, 0, 0}, {0, 2, 0}};
    const Tensor<float> f({3, 1}, {1.0f, 10.0f, 100.0f});
    const std::vector<Vec3> query = {{0, 0, 0}};
    const Tensor<float> out = interpolate_features(std::span<const Vec3>(known), f,
                                                   std::span<const Vec3>(query));
    const double expect = (1.0 + 0.25 * 10.0 + 0.25 * 100.0) / 1.5;
    CHECK(out(0, 0) == Catch::Approx(expect).epsilon(1e-6));
}

TEST_CASE("interpolation weights sum to one and stay in the convex hull") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<Vec3> known(6);
        for (Vec3& p : known) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const std::vector<Vec3> query = {
            {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
        const InterpolationPlan plan = build_interpolation_plan(known, query);
        double sum = 0.0;
        for (double w : plan.entries[0].weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));

        Tensor<float> f({6, 1});
        for (std::int64_t i = 0; i < 6; ++i) f[i] = static_cast<float>(rng.uniform(-5, 5));
        const Tensor<float> out = apply_interpolation(plan, f);
        float lo = std::numeric_limits<float>::infinity(), hi = -lo;
        for (int j = 0; j < 3; ++j) {
            const float v = f(plan.entries[0].sources[static_cast<std::size_t>(j)], 0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(out(0, 0) >= lo - 1e-5f);
        CHECK(out(0, 0) <= hi + 1e-5f);
    }
}

TEST_CASE("swapping equidistant sources leaves the output unchanged") {
    const std::vector<Vec3> a = {{1, 0, 0}, {0, 1, 0}, {3, 3, 3}};
    const std::vector<Vec3> b = {{0, 1, 0}, {1, 0, 0}, {3, 3, 3}};
    const Tensor<float> fa({3, 1}, {2.0f, 8.0f, 1.0f});
    const Tensor<float> fb({3, 1}, {8.0f, 2.0f, 1.0f});
    const std::vector<Vec3> query = {{0, 0, 0}};
    const Tensor<float> oa =
        interpolate_features(std::span<const Vec3>(a), fa, std::span<const Vec3>(query));
    const Tensor<float> ob =
        interpolate_features(std::span<const Vec3>(b), fb, std::span<const Vec3>(query));
    CHECK(oa(0, 0) == Catch::Approx(ob(0, 0)).epsilon(1e-12));
}

TEST_CASE("interpolation needs at least three known points") {
    const std::vector<Vec3> known = {{0, 0, 0}, {1, 0, 0}};
    const Tensor<float> f({2, 1});
    const std::vector<Vec3> query = {{0.5, 0, 0}};
    CHECK_THROWS_AS(
        interpolate_features(std::span<const Vec3>(known), f, std::span<const Vec3>(query)),
        InvalidArgument);
}

// ---------------------------------------------------------------------------
// segment_forward
// ---------------------------------------------------------------------------

TEST_CASE("segmentation produces N x m logits") {
    Model<float> model = make_model<float>(tiny_segmenter(2), Variant::full, 8);
    Rng rng(41);
    const PointCloud cloud = generate_segmented_cylinder(0.5, 1.4, 64, rng);
    SegmentForwardResult<float> fwd = segment_forward(model, cloud, Mode::eval);
    CHECK(fwd.logits.dim(0) == 64);
    CHECK(fwd.logits.dim(1) == 2);
}

TEST_CASE("constant level features give constant per-point logits") {
    Model<float> model = make_model<float>(tiny_segmenter(3), Variant::full, 9);
    const int n = 10;
    const int concat = model.config.layers[0].output_channels() +
                       model.config.layers[1].output_channels();
    Tensor<float> constant({n, concat});
    for (std::int64_t c = 0; c < concat; ++c)
        for (std::int64_t i = 0; i < n; ++i)
            constant(i, c) = 0.1f * static_cast<float>(c % 7) - 0.2f;
    const Tensor<float> logits = seg_head_forward(model, constant, Mode::eval);
    for (std::int64_t i = 1; i < n; ++i)
        for (std::int64_t m = 0; m < 3; ++m) CHECK(logits(i, m) == logits(0, m));
}

TEST_CASE("one-level segmentation equals the hand-composed oracle") {
    NetworkConfig cfg;
    LayerConfig l1;
    l1.centroids = 8;
    l1.rings = {{0.0, 0.8, 6}};
    l1.feature_maps = {{5, 7}};
    cfg.layers = {l1};
    SegmentHeadConfig head;
    head.parts = 2;
    head.width = 6;
    cfg.segment_head = head;

    Model<float> model = make_model<float>(cfg, Variant::full, 10);
    const PointCloud cloud = sphere_cloud(32, 31);
    SegmentForwardResult<float> fwd = segment_forward(model, cloud, Mode::eval, 0, 0);

    // Oracle: encoder layer, interpolation, reduce-BN-ReLU, classify, composed
    // from the individual pieces.
    Rng ordering_rng(derive_seed(0, Stream::ordering));
    const NetworkPlan plan = build_network_plan(
        cloud, std::span<const LayerConfig>(cfg.layers), Variant::full, ordering_rng);
    const Tensor<float> level =
        encoder_layer_forward(points_as_features<float>(cloud), plan.layers[0], model.encoder[0],
                              cfg.layers[0], Mode::eval);
    const Tensor<float> interp =
        interpolate_features(std::span<const Vec3>(plan.layers[0].centroid_points), level,
                             std::span<const Vec3>(cloud.points));
    Tensor<float> x =
        dense_forward(interp, model.seg_head->reduce.weights, model.seg_head->reduce.bias);
    x = batch_norm_forward(x, model.seg_head->reduce.bn, Mode::eval);
    x = relu_forward(x);
    const Tensor<float> oracle =
        dense_forward(x, model.seg_head->out_weights, model.seg_head->out_bias);

    REQUIRE(fwd.logits.same_shape(oracle));
    for (std::int64_t i = 0; i < oracle.numel(); ++i)
        CHECK(fwd.logits[i] == Catch::Approx(oracle[i]).margin(1e-6));
}

TEST_CASE("segmentation logits are equivariant to point permutations") {
    Model<float> model = make_model<float>(tiny_segmenter(2), Variant::full, 12);
    Rng rng(51);
    const PointCloud cloud = generate_segmented_cylinder(0.5, 1.4, 48, rng);

    Rng perm_rng(7);
    const std::vector<int> perm = perm_rng.permutation(cloud.size());
    PointCloud permuted;
    permuted.points.resize(cloud.points.size());
    permuted.normals.resize(cloud.normals.size());
    permuted.labels.resize(cloud.labels.size());
    for (int i = 0; i < cloud.size(); ++i) {
        const auto dst = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
        permuted.points[dst] = cloud.points[static_cast<std::size_t>(i)];
        permuted.normals[dst] = cloud.normals[static_cast<std::size_t>(i)];
        permuted.labels[dst] = cloud.labels[static_cast<std::size_t>(i)];
    }

    SegmentForwardResult<float> base = segment_forward(model, cloud, Mode::eval, 0, 0);
    SegmentForwardResult<float> re = segment_forward(model, permuted, Mode::eval, 0, perm[0]);
    for (int i = 0; i < cloud.size(); ++i)
        for (std::int64_t m = 0; m < 2; ++m)
            CHECK(std::abs(base.logits(i, m) -
                           re.logits(perm[static_cast<std::size_t>(i)], m)) < 1e-4f);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {
Dataset separable_blobs(int per_class, int points, std::uint64_t seed) {
    Dataset ds;
    ds.num_classes = 2;
    ds.class_names = {"down", "up"};
    Rng rng(seed);
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < per_class; ++i) {
            PointCloud cloud;
            const double zc = c == 0 ? -0.55 : 0.55;
            for (int p = 0; p < points; ++p) {
                cloud.points.push_back(
                    {rng.normal(0.0, 0.2), rng.normal(0.0, 0.2), zc + rng.normal(0.0, 0.1)});
                cloud.normals.push_back({0, 0, 1});
            }
            ds.clouds.push_back(std::move(cloud));
            ds.labels.push_back(c);
        }
    }
    return ds;
}
}  // namespace

TEST_CASE("separable blobs reach full train accuracy within five epochs") {
    const Dataset ds = separable_blobs(8, 32, 3);
    NetworkConfig cfg = tiny_classifier(2);
    Model<float> model = make_model<float>(cfg, Variant::full, 14);
    Hyperparams hp;
    hp.epochs = 5;
    hp.batch_size = 4;
    hp.learning_rate = 0.01;
    hp.augment = false;
    hp.seed = 4;
    const TrainResult result = train_model(model, ds, nullptr, hp);
    double best = 0.0;
    for (const MetricsRow& row : result.metrics)
        if (row.split == "train") best = std::max(best, row.oa);
    CHECK(best == 1.0);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    const Dataset ds = separable_blobs(4, 24, 5);
    Model<float> model = make_model<float>(tiny_classifier(2), Variant::full, 15);
    ParamTable<float> before = snapshot_params(model);
    Hyperparams hp;
    hp.epochs = 2;
    hp.batch_size = 4;
    hp.learning_rate = 0.0;
    hp.augment = true;
    hp.seed = 6;
    train_model(model, ds, nullptr, hp);
    ParamTable<float> after = snapshot_params(model);
    for (const auto& [name, tensor] : before) {
        const Tensor<float>& now = after.at(name);
        for (std::int64_t i = 0; i < tensor.numel(); ++i) {
            if (now[i] != tensor[i]) FAIL("parameter " << name << " changed at element " << i);
        }
    }
}

TEST_CASE("same seed gives identical metric traces") {
    const Dataset ds = separable_blobs(4, 24, 7);
    Hyperparams hp;
    hp.epochs = 3;
    hp.batch_size = 4;
    hp.seed = 11;
    Model<float> m1 = make_model<float>(tiny_classifier(2), Variant::full, 16);
    Model<float> m2 = make_model<float>(tiny_classifier(2), Variant::full, 16);
    const TrainResult r1 = train_model(m1, ds, &ds, hp);
    const TrainResult r2 = train_model(m2, ds, &ds, hp);
    REQUIRE(r1.metrics.size() == r2.metrics.size());
    for (std::size_t i = 0; i < r1.metrics.size(); ++i)
        CHECK(metrics_tsv_row(r1.metrics[i]) == metrics_tsv_row(r2.metrics[i]));
}

TEST_CASE("out-of-range labels are rejected") {
    Dataset ds = separable_blobs(2, 24, 9);
    ds.labels[0] = 7;
    Model<float> model = make_model<float>(tiny_classifier(2), Variant::full, 17);
    Hyperparams hp;
    hp.epochs = 1;
    CHECK_THROWS_AS(train_model(model, ds, nullptr, hp), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

TEST_CASE("perfect predictions score 1.0 everywhere") {
    ConfusionMatrix cm(3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 5; ++i) cm.add(c, c);
    CHECK(cm.overall_accuracy() == 1.0);
    CHECK(cm.average_class_accuracy() == 1.0);
    for (double iou : cm.per_class_iou()) CHECK(iou == 1.0);
    CHECK(cm.mean_iou() == 1.0);
}

TEST_CASE("constant predictor on a balanced binary set") {
    ConfusionMatrix cm(2);
    for (int i = 0; i < 10; ++i) cm.add(0, 0);
    for (int i = 0; i < 10; ++i) cm.add(1, 0);
    CHECK(cm.overall_accuracy() == 0.5);
    CHECK(cm.average_class_accuracy() == 0.5);
    CHECK(cm.per_class_iou()[1] == 0.0);
}

TEST_CASE("metrics match a hand-computed confusion oracle") {
    Rng rng(61);
    const int classes = 3;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < 200; ++i)
        pairs.emplace_back(static_cast<int>(rng.uniform_index(3)),
                           static_cast<int>(rng.uniform_index(3)));

    ConfusionMatrix cm(classes);
    for (auto [t, p] : pairs) cm.add(t, p);

    int correct = 0;
    std::vector<int> row(3, 0), col(3, 0), diag(3, 0);
    for (auto [t, p] : pairs) {
        if (t == p) {
            ++correct;
            ++diag[static_cast<std::size_t>(t)];
        }
        ++row[static_cast<std::size_t>(t)];
        ++col[static_cast<std::size_t>(p)];
    }
    CHECK(cm.overall_accuracy() == Catch::Approx(static_cast<double>(correct) / 200.0));
    double aac = 0.0;
    for (int c = 0; c < 3; ++c)
        aac += static_cast<double>(diag[static_cast<std::size_t>(c)]) /
               row[static_cast<std::size_t>(c)];
    CHECK(cm.average_class_accuracy() == Catch::Approx(aac / 3.0));
    for (int c = 0; c < 3; ++c) {
        const double iou =
            static_cast<double>(diag[static_cast<std::size_t>(c)]) /
            (row[static_cast<std::size_t>(c)] + col[static_cast<std::size_t>(c)] -
             diag[static_cast<std::size_t>(c)]);
        CHECK(cm.per_class_iou()[static_cast<std::size_t>(c)] == Catch::Approx(iou));
    }
}

TEST_CASE("evaluate rejects class-count mismatches") {
    Dataset ds = separable_blobs(2, 24, 13);
    ds.num_classes = 7;
    Model<float> model = make_model<float>(tiny_classifier(2), Variant::full, 18);
    CHECK_THROWS_AS(evaluate_model(model, ds), ConfigMismatch);
}

// ---------------------------------------------------------------------------
// Saliency
// ---------------------------------------------------------------------------

TEST_CASE("saliency is nonnegative") {
    Model<float> model = make_model<float>(tiny_classifier(3), Variant::full, 19);
    const PointCloud cloud = sphere_cloud(40, 71);
    const std::vector<double> s = saliency(model, cloud, 1);
    REQUIRE(s.size() == 40);
    for (double v : s) CHECK(v >= 0.0);
}

TEST_CASE("zero upstream gradient gives zero saliency") {
    Model<float> model = make_model<float>(tiny_classifier(3), Variant::full, 20);
    const PointCloud cloud = sphere_cloud(32, 73);
    Rng ordering_rng(0);
    const NetworkPlan plan = build_network_plan(
        cloud, std::span<const LayerConfig>(model.config.layers), Variant::full, ordering_rng);
    EncoderResult<float> enc =
        encoder_forward(model, points_as_features<float>(cloud), plan, Mode::eval, true);
    ParamTable<float> grads;
    std::vector<Tensor<float>> d_levels(model.encoder.size());
    d_levels.back() = Tensor<float>::zeros_like(enc.level_features[0].back());
    const Tensor<float> d_input = encoder_backward(model, plan, enc, std::move(d_levels), grads);
    for (std::int64_t i = 0; i < d_input.numel(); ++i) CHECK(d_input[i] == 0.0f);
}

TEST_CASE("saliency matches finite differences with frozen neighborhoods") {
    const GradCheckEntry entry = gradcheck_saliency(77, 2);
    CHECK(entry.max_rel_err < 1e-4);
}

TEST_CASE("encoder layer map passes the gradient check") {
    const GradCheckEntry entry = gradcheck_encoder_layer(88, 3);
    CHECK(entry.max_rel_err < 1e-4);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

TEST_CASE("identity draws leave the cloud unchanged up to shuffle") {
    Rng rng(81);
    PointCloud cloud = generate_segmented_cylinder(0.5, 1.4, 64, rng);
    AugmentParams params;
    params.scale = 1.0;
    params.shift = {0, 0, 0};
    params.jitter.assign(64, Vec3{0, 0, 0});
    Rng perm_rng(5);
    params.perm = perm_rng.permutation(64);

    const PointCloud out = apply_augment(cloud, params);
    // apply_augment gathers: output row i comes from source row perm[i].
    for (int i = 0; i < 64; ++i) {
        const auto src = static_cast<std::size_t>(params.perm[static_cast<std::size_t>(i)]);
        CHECK(out.points[static_cast<std::size_t>(i)] == cloud.points[src]);
        CHECK(out.normals[static_cast<std::size_t>(i)] == cloud.normals[src]);
        CHECK(out.labels[static_cast<std::size_t>(i)] == cloud.labels[src]);
    }
}

TEST_CASE("pure scaling multiplies pairwise distances") {
    Rng rng(83);
    PointCloud cloud = generate_shape(ShapeSpec::cube(1.0, 48), rng);
    AugmentParams params;
    params.scale = 1.17;
    params.shift = {0, 0, 0};
    params.jitter.assign(48, Vec3{0, 0, 0});
    params.perm.resize(48);
    std::iota(params.perm.begin(), params.perm.end(), 0);
    const PointCloud out = apply_augment(cloud, params);
    for (int rep = 0; rep < 20; ++rep) {
        const int a = static_cast<int>(rng.uniform_index(48));
        const int b = static_cast<int>(rng.uniform_index(48));
        const double before = distance(cloud.points[static_cast<std::size_t>(a)],
                                       cloud.points[static_cast<std::size_t>(b)]);
        const double after = distance(out.points[static_cast<std::size_t>(a)],
                                      out.points[static_cast<std::size_t>(b)]);
        CHECK(after == Catch::Approx(before * 1.17).margin(1e-12));
    }
}

TEST_CASE("augmented clouds stay finite and label-aligned") {
    Rng gen_rng(85);
    PointCloud cloud = generate_segmented_cylinder(0.5, 1.4, 96, gen_rng);
    Rng aug_rng(86);
    const PointCloud out = augment(cloud, aug_rng);
    REQUIRE(out.size() == 96);
    int caps_before = 0, caps_after = 0;
    for (int l : cloud.labels) caps_before += l;
    for (int l : out.labels) caps_after += l;
    CHECK(caps_before == caps_after);
    for (const Vec3& p : out.points) CHECK(finite(p));
}

// ---------------------------------------------------------------------------
// augment draw ranges
// ---------------------------------------------------------------------------

TEST_CASE("augment draws stay inside their documented ranges") {
    Rng rng(87);
    for (int rep = 0; rep < 200; ++rep) {
        const AugmentParams p = draw_augment_params(rng, 16);
        CHECK(p.scale >= 0.8);
        CHECK(p.scale <= 1.25);
        CHECK(std::abs(p.shift.x) <= 0.1);
        CHECK(std::abs(p.shift.y) <= 0.1);
        CHECK(std::abs(p.shift.z) <= 0.1);
        for (const Vec3& j : p.jitter) {
            CHECK(std::abs(j.x) <= 0.05);
            CHECK(std::abs(j.y) <= 0.05);
            CHECK(std::abs(j.z) <= 0.05);
        }
    }
}

// ---------------------------------------------------------------------------
// Divergence reporting
// ---------------------------------------------------------------------------

TEST_CASE("non-finite loss raises TrainingDiverged with context") {
    const Dataset ds = separable_blobs(4, 24, 21);
    Model<float> model = make_model<float>(tiny_classifier(2), Variant::full, 22);
    // Poison one weight so the first forward pass goes non-finite.
    model.class_head->out_weights[0] = std::numeric_limits<float>::quiet_NaN();
    Hyperparams hp;
    hp.epochs = 1;
    hp.batch_size = 4;
    try {
        train_model(model, ds, nullptr, hp);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch == 0);
        CHECK(e.batch == 0);
        CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// encoder_layer convenience surface
// ---------------------------------------------------------------------------

TEST_CASE("encoder_layer returns FPS centroids and per-centroid features") {
    const PointCloud cloud = sphere_cloud(64, 91);
    LayerConfig config;
    config.centroids = 10;
    config.rings = {{0.0, 0.4, 5}, {0.4, 0.8, 7}};
    config.feature_maps = {{4, 6}, {6, 8}};

    Rng init(1);
    EncoderLayerParams<float> params = make_encoder_layer_params<float>(3, config, 3, init);
    const Tensor<float> features = points_as_features<float>(cloud);

    Rng rng(0);
    auto [centroids, out] = encoder_layer(cloud, features, config, params, Variant::full, rng,
                                          Mode::eval, 2);
    CHECK(centroids == farthest_point_sampling(cloud, 10, 2));
    CHECK(out.dim(0) == 10);
    CHECK(out.dim(1) == 14);  // 6 + 8 concatenated

    Rng rng2(0);
    auto [centroids2, out2] = encoder_layer(cloud, features, config, params, Variant::full, rng2,
                                            Mode::eval, 2);
    CHECK(centroids2 == centroids);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out2[i] == out[i]);
}
