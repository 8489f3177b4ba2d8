#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "acnn/data.hpp"
#include "acnn/geometry.hpp"
#include "acnn/model.hpp"
#include "acnn/parallel.hpp"

namespace acnn {

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

// Uniform scale in [0.8, 1.25], per-axis shift in [-0.1, 0.1], per-point
// Gaussian jitter sigma 0.01 clipped at 0.05, then an index shuffle. Normals
// ride along unscaled and unshifted.
struct AugmentParams {
    double scale = 1.0;
    Vec3 shift;
    std::vector<Vec3> jitter;
    std::vector<int> perm;
};

inline AugmentParams draw_augment_params(Rng& rng, int n) {
    AugmentParams p;
    p.scale = rng.uniform(0.8, 1.25);
    p.shift = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    p.jitter.reserve(static_cast<std::size_t>(n));
    const auto clipped = [&]() {
        return std::clamp(rng.normal(0.0, 0.01), -0.05, 0.05);
    };
    for (int i = 0; i < n; ++i) p.jitter.push_back({clipped(), clipped(), clipped()});
    p.perm = rng.permutation(n);
    return p;
}

inline PointCloud apply_augment(const PointCloud& cloud, const AugmentParams& params) {
    const int n = cloud.size();
    PointCloud out;
    out.points.resize(static_cast<std::size_t>(n));
    if (cloud.has_normals()) out.normals.resize(static_cast<std::size_t>(n));
    if (cloud.has_labels()) out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int src = params.perm[static_cast<std::size_t>(i)];
        out.points[static_cast<std::size_t>(i)] =
            cloud.points[static_cast<std::size_t>(src)] * params.scale + params.shift +
            params.jitter[static_cast<std::size_t>(src)];
        if (cloud.has_normals())
            out.normals[static_cast<std::size_t>(i)] = cloud.normals[static_cast<std::size_t>(src)];
        if (cloud.has_labels())
            out.labels[static_cast<std::size_t>(i)] = cloud.labels[static_cast<std::size_t>(src)];
    }
    return out;
}

inline PointCloud augment(const PointCloud& cloud, Rng& rng) {
    return apply_augment(cloud, draw_augment_params(rng, cloud.size()));
}

// Fills in normals via covariance estimation when a cloud lacks them.
inline void ensure_normals(PointCloud& cloud, int k_neighbors = 10) {
    if (cloud.has_normals()) return;
    const int k = std::min(k_neighbors, cloud.size() - 1);
    cloud.normals.resize(cloud.points.size());
    for (int i = 0; i < cloud.size(); ++i)
        cloud.normals[static_cast<std::size_t>(i)] = estimate_normal(cloud, i, k);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes)
        : classes_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {}

    void add(int truth, int predicted) {
        counts_[static_cast<std::size_t>(truth * classes_ + predicted)] += 1;
    }

    std::int64_t count(int truth, int predicted) const {
        return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
    }

    void merge(const ConfusionMatrix& other) {
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    }

    std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

    double overall_accuracy() const {
        std::int64_t correct = 0;
        for (int c = 0; c < classes_; ++c) correct += count(c, c);
        const std::int64_t n = total();
        return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    }

    // Mean of per-class accuracies over classes present in the ground truth.
    double average_class_accuracy() const {
        double sum = 0.0;
        int present = 0;
        for (int c = 0; c < classes_; ++c) {
            const std::int64_t row = row_sum(c);
            if (row == 0) continue;
            sum += static_cast<double>(count(c, c)) / static_cast<double>(row);
            ++present;
        }
        return present ? sum / present : 0.0;
    }

    std::vector<double> per_class_accuracy() const {
        std::vector<double> acc(static_cast<std::size_t>(classes_), 0.0);
        for (int c = 0; c < classes_; ++c) {
            const std::int64_t row = row_sum(c);
            acc[static_cast<std::size_t>(c)] =
                row ? static_cast<double>(count(c, c)) / static_cast<double>(row) : 0.0;
        }
        return acc;
    }

    // IoU per part: TP / (TP + FP + FN); parts absent from both truth and
    // prediction are excluded from the mean.
    std::vector<double> per_class_iou() const {
        std::vector<double> iou(static_cast<std::size_t>(classes_), 0.0);
        for (int c = 0; c < classes_; ++c) {
            const std::int64_t tp = count(c, c);
            const std::int64_t denom = row_sum(c) + col_sum(c) - tp;
            iou[static_cast<std::size_t>(c)] =
                denom ? static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
        }
        return iou;
    }

    double mean_iou() const {
        const std::vector<double> iou = per_class_iou();
        double sum = 0.0;
        int present = 0;
        for (int c = 0; c < classes_; ++c) {
            if (row_sum(c) == 0 && col_sum(c) == 0) continue;
            sum += iou[static_cast<std::size_t>(c)];
            ++present;
        }
        return present ? sum / present : 0.0;
    }

    int classes() const { return classes_; }

private:
    std::int64_t row_sum(int c) const {
        std::int64_t s = 0;
        for (int p = 0; p < classes_; ++p) s += count(c, p);
        return s;
    }
    std::int64_t col_sum(int c) const {
        std::int64_t s = 0;
        for (int t = 0; t < classes_; ++t) s += count(t, c);
        return s;
    }

    int classes_;
    std::vector<std::int64_t> counts_;
};

struct EvalMetrics {
    double loss = 0.0;
    double oa = 0.0;
    double aac = 0.0;
    double miou = std::numeric_limits<double>::quiet_NaN();  // NaN => classification
    std::vector<double> per_class_accuracy;
    std::vector<double> per_class_iou;
};

struct MetricsRow {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double oa = 0.0;
    double aac = 0.0;
    double miou = std::numeric_limits<double>::quiet_NaN();
};

inline std::string metrics_tsv_header() { return "epoch\tsplit\tloss\toa\taac\tmiou"; }

inline std::string metrics_tsv_row(const MetricsRow& row) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << row.epoch << '\t' << row.split << '\t' << row.loss << '\t' << row.oa << '\t' << row.aac
       << '\t';
    if (!std::isnan(row.miou)) os << row.miou;
    return os.str();
}

inline void write_metrics_tsv(const std::filesystem::path& path,
                              const std::vector<MetricsRow>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write metrics: " + path.string());
    os << metrics_tsv_header() << '\n';
    for (const MetricsRow& r : rows) os << metrics_tsv_row(r) << '\n';
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <typename Scalar>
int argmax_row(const Tensor<Scalar>& t, std::int64_t row) {
    int best = 0;
    for (std::int64_t c = 1; c < t.dim(1); ++c)
        if (t(row, c) > t(row, best)) best = static_cast<int>(c);
    return best;
}

template <typename Scalar>
EvalMetrics evaluate_model(Model<Scalar>& model, const Dataset& dataset, std::uint64_t seed = 0) {
    const int n = static_cast<int>(dataset.clouds.size());
    if (n == 0) throw InvalidArgument("evaluate: empty dataset");
    if (dataset.segmentation == model.config.is_classification())
        throw ConfigMismatch("dataset kind does not match the model head");
    const int classes = model.config.is_classification() ? model.config.class_head->classes
                                                         : model.config.segment_head->parts;
    if (dataset.num_classes > classes)
        throw ConfigMismatch("dataset has more classes than the model");

    std::vector<int> predictions;
    std::vector<ConfusionMatrix> partials;
    std::vector<double> losses(static_cast<std::size_t>(n), 0.0);

    if (model.config.is_classification()) {
        predictions.assign(static_cast<std::size_t>(n), 0);
        parallel_for(n, [&](int i) {
            const Tensor<Scalar> logits = classify_forward(
                model, dataset.clouds[static_cast<std::size_t>(i)], Mode::eval,
                derive_seed(seed, static_cast<std::uint64_t>(i)));
            predictions[static_cast<std::size_t>(i)] = argmax_row(logits, 0);
            const int label[1] = {dataset.labels[static_cast<std::size_t>(i)]};
            losses[static_cast<std::size_t>(i)] =
                softmax_cross_entropy(logits, std::span<const int>(label, 1));
        });
        ConfusionMatrix cm(classes);
        for (int i = 0; i < n; ++i)
            cm.add(dataset.labels[static_cast<std::size_t>(i)], predictions[static_cast<std::size_t>(i)]);
        EvalMetrics metrics;
        metrics.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
        metrics.oa = cm.overall_accuracy();
        metrics.aac = cm.average_class_accuracy();
        metrics.per_class_accuracy = cm.per_class_accuracy();
        return metrics;
    }

    partials.assign(static_cast<std::size_t>(n), ConfusionMatrix(classes));
    parallel_for(n, [&](int i) {
        const PointCloud& cloud = dataset.clouds[static_cast<std::size_t>(i)];
        SegmentForwardResult<Scalar> fwd = segment_forward(
            model, cloud, Mode::eval, derive_seed(seed, static_cast<std::uint64_t>(i)));
        losses[static_cast<std::size_t>(i)] =
            softmax_cross_entropy(fwd.logits, std::span<const int>(cloud.labels));
        for (int p = 0; p < cloud.size(); ++p)
            partials[static_cast<std::size_t>(i)].add(cloud.labels[static_cast<std::size_t>(p)],
                                                      argmax_row(fwd.logits, p));
    });
    ConfusionMatrix cm(classes);
    for (const ConfusionMatrix& part : partials) cm.merge(part);
    EvalMetrics metrics;
    metrics.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
    metrics.oa = cm.overall_accuracy();
    metrics.aac = cm.average_class_accuracy();
    metrics.per_class_accuracy = cm.per_class_accuracy();
    metrics.per_class_iou = cm.per_class_iou();
    metrics.miou = cm.mean_iou();
    return metrics;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Hyperparams {
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double decay_rate = 0.7;  // 0.5 is the segmentation default at the CLI
    int decay_every = 20;
    bool augment = true;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<MetricsRow> metrics;
};

// Minibatch Adam on softmax cross entropy (mean per-point cross entropy for
// segmentation). Fully reproducible from hp.seed: sample shuffling,
// augmentation, ordering and dropout all run on derived streams, and all
// reductions happen in fixed order regardless of thread count.
template <typename Scalar>
TrainResult train_model(Model<Scalar>& model, const Dataset& train_set, const Dataset* test_set,
                        const Hyperparams& hp) {
    if (train_set.clouds.empty()) throw InvalidArgument("train: empty dataset");
    if (train_set.segmentation == model.config.is_classification())
        throw ConfigMismatch("dataset kind does not match the model head");
    const bool classification = model.config.is_classification();
    const int classes = classification ? model.config.class_head->classes
                                       : model.config.segment_head->parts;
    for (std::size_t i = 0; i < train_set.clouds.size(); ++i) {
        if (classification) {
            if (train_set.labels[i] < 0 || train_set.labels[i] >= classes)
                throw InvalidArgument("train: class label out of range");
        } else {
            for (int l : train_set.clouds[i].labels)
                if (l < 0 || l >= classes) throw InvalidArgument("train: part label out of range");
        }
    }

    OptimizerState<Scalar> opt;
    TrainResult result;
    const int n = static_cast<int>(train_set.clouds.size());
    const int batch_size = std::max(1, hp.batch_size);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        opt.learning_rate =
            decayed_learning_rate(hp.learning_rate, hp.decay_rate, hp.decay_every, epoch);

        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(hp.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::int64_t loss_samples = 0;
        ConfusionMatrix train_cm(classes);

        const int batches = (n + batch_size - 1) / batch_size;
        for (int b = 0; b < batches; ++b) {
            const int begin = b * batch_size;
            const int end = std::min(n, begin + batch_size);
            const int B = end - begin;

            // Per-sample geometry (parallel); every slot is private to its index.
            std::vector<PointCloud> clouds(static_cast<std::size_t>(B));
            std::vector<NetworkPlan> plans(static_cast<std::size_t>(B));
            std::vector<Tensor<Scalar>> inputs(static_cast<std::size_t>(B));
            parallel_for(B, [&](int j) {
                const int ds_index = order[static_cast<std::size_t>(begin + j)];
                const PointCloud& base = train_set.clouds[static_cast<std::size_t>(ds_index)];
                if (hp.augment) {
                    Rng aug_rng(derive_seed(hp.seed, Stream::augment,
                                            static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(ds_index)));
                    clouds[static_cast<std::size_t>(j)] = augment(base, aug_rng);
                } else {
                    clouds[static_cast<std::size_t>(j)] = base;
                }
                Rng ordering_rng(derive_seed(hp.seed, Stream::ordering,
                                             static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(ds_index)));
                plans[static_cast<std::size_t>(j)] = build_network_plan(
                    clouds[static_cast<std::size_t>(j)],
                    std::span<const LayerConfig>(model.config.layers), model.variant,
                    ordering_rng);
                inputs[static_cast<std::size_t>(j)] =
                    points_as_features<Scalar>(clouds[static_cast<std::size_t>(j)]);
            });

            EncoderResult<Scalar> enc = encoder_forward_batch(
                model, std::move(inputs), std::span<const NetworkPlan>(plans), Mode::train, true);
            update_encoder_running_stats(model, enc);

            ParamTable<Scalar> grads;
            double batch_loss = 0.0;
            std::vector<std::vector<Tensor<Scalar>>> d_levels(static_cast<std::size_t>(B));
            for (int j = 0; j < B; ++j)
                d_levels[static_cast<std::size_t>(j)].resize(model.encoder.size());

            if (classification) {
                const std::int64_t F = enc.level_features[0].back().dim(1);
                Tensor<Scalar> global({B, F});
                std::vector<int> labels(static_cast<std::size_t>(B));
                for (int j = 0; j < B; ++j) {
                    const int ds_index = order[static_cast<std::size_t>(begin + j)];
                    labels[static_cast<std::size_t>(j)] =
                        train_set.labels[static_cast<std::size_t>(ds_index)];
                    const Tensor<Scalar>& g = enc.level_features[static_cast<std::size_t>(j)].back();
                    for (std::int64_t c = 0; c < F; ++c) global(j, c) = g(0, c);
                }
                Rng dropout_rng(derive_seed(hp.seed, Stream::dropout,
                                            static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(b)));
                ClassHeadCache<Scalar> head_cache;
                const Tensor<Scalar> logits =
                    class_head_forward(model, global, Mode::train, dropout_rng, &head_cache);
                Tensor<Scalar> d_logits;
                batch_loss = softmax_cross_entropy(logits, std::span<const int>(labels), &d_logits);
                if (!std::isfinite(batch_loss)) throw TrainingDiverged("non-finite loss", epoch, b);
                for (int j = 0; j < B; ++j)
                    train_cm.add(labels[static_cast<std::size_t>(j)], argmax_row(logits, j));

                if (model.config.class_head->batch_norm)
                    for (std::size_t i = 0; i < model.class_head->hidden.size(); ++i)
                        batch_norm_update_running(model.class_head->hidden[i].bn,
                                                  head_cache.fcs[i].bn);

                const Tensor<Scalar> d_global =
                    class_head_backward(model, head_cache, d_logits, grads);
                for (int j = 0; j < B; ++j) {
                    Tensor<Scalar> dg({1, F});
                    for (std::int64_t c = 0; c < F; ++c) dg(0, c) = d_global(j, c);
                    d_levels[static_cast<std::size_t>(j)].back() = std::move(dg);
                }
            } else {
                // Segmentation: interpolate every level back to each sample's
                // points, stack all samples' point rows, run the 1x1 head over
                // the whole batch, then split gradients back per sample.
                std::vector<std::vector<InterpolationPlan>> interp(static_cast<std::size_t>(B));
                std::vector<Tensor<Scalar>> concat(static_cast<std::size_t>(B));
                parallel_for(B, [&](int j) {
                    const PointCloud& cloud = clouds[static_cast<std::size_t>(j)];
                    std::vector<Tensor<Scalar>> per_level;
                    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
                        interp[static_cast<std::size_t>(j)].push_back(build_interpolation_plan(
                            std::span<const Vec3>(
                                plans[static_cast<std::size_t>(j)].layers[l].centroid_points),
                            std::span<const Vec3>(cloud.points)));
                        per_level.push_back(apply_interpolation(
                            interp[static_cast<std::size_t>(j)][l],
                            enc.level_features[static_cast<std::size_t>(j)][l]));
                    }
                    concat[static_cast<std::size_t>(j)] =
                        segment_levels_concat(model, per_level, cloud.size());
                });

                std::int64_t total_rows = 0;
                for (int j = 0; j < B; ++j) total_rows += concat[static_cast<std::size_t>(j)].dim(0);
                const std::int64_t Fc = concat[0].dim(1);
                Tensor<Scalar> stacked({total_rows, Fc});
                std::vector<int> labels;
                labels.reserve(static_cast<std::size_t>(total_rows));
                std::int64_t row = 0;
                for (int j = 0; j < B; ++j) {
                    const Tensor<Scalar>& cj = concat[static_cast<std::size_t>(j)];
                    for (std::int64_t i = 0; i < cj.dim(0); ++i, ++row)
                        for (std::int64_t c = 0; c < Fc; ++c) stacked(row, c) = cj(i, c);
                    for (int l : clouds[static_cast<std::size_t>(j)].labels) labels.push_back(l);
                }

                SegHeadCache<Scalar> head_cache;
                const Tensor<Scalar> logits =
                    seg_head_forward(model, stacked, Mode::train, &head_cache);
                Tensor<Scalar> d_logits;
                batch_loss = softmax_cross_entropy(logits, std::span<const int>(labels), &d_logits);
                if (!std::isfinite(batch_loss)) throw TrainingDiverged("non-finite loss", epoch, b);
                for (std::int64_t i = 0; i < total_rows; ++i)
                    train_cm.add(labels[static_cast<std::size_t>(i)],
                                 argmax_row(logits, i));
                if (head_cache.bn.train)
                    batch_norm_update_running(model.seg_head->reduce.bn, head_cache.bn);

                const Tensor<Scalar> d_stacked =
                    seg_head_backward(model, head_cache, d_logits, grads);
                row = 0;
                for (int j = 0; j < B; ++j) {
                    const std::int64_t nj = concat[static_cast<std::size_t>(j)].dim(0);
                    Tensor<Scalar> d_concat({nj, Fc});
                    for (std::int64_t i = 0; i < nj; ++i, ++row)
                        for (std::int64_t c = 0; c < Fc; ++c) d_concat(i, c) = d_stacked(row, c);
                    std::int64_t off = 0;
                    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
                        const std::int64_t Fl =
                            enc.level_features[static_cast<std::size_t>(j)][l].dim(1);
                        Tensor<Scalar> slice({nj, Fl});
                        for (std::int64_t i = 0; i < nj; ++i)
                            for (std::int64_t c = 0; c < Fl; ++c) slice(i, c) = d_concat(i, off + c);
                        off += Fl;
                        d_levels[static_cast<std::size_t>(j)][l] = interpolation_backward(
                            interp[static_cast<std::size_t>(j)][l], slice);
                    }
                }
            }

            encoder_backward_batch(model, std::span<const NetworkPlan>(plans), enc,
                                   std::move(d_levels), grads);

            ParamTable<Scalar> params = snapshot_params(model);
            adam_step(params, grads, opt);
            for_each_param(model, [&](const std::string& name, Tensor<Scalar>& t) {
                t = params[name];
            });
            epoch_loss += batch_loss * B;
            loss_samples += B;
        }

        MetricsRow train_row;
        train_row.epoch = epoch;
        train_row.split = "train";
        train_row.loss = epoch_loss / static_cast<double>(loss_samples);
        train_row.oa = train_cm.overall_accuracy();
        train_row.aac = train_cm.average_class_accuracy();
        if (!classification) train_row.miou = train_cm.mean_iou();
        result.metrics.push_back(train_row);

        if (test_set) {
            const EvalMetrics test = evaluate_model(model, *test_set, hp.seed);
            MetricsRow row;
            row.epoch = epoch;
            row.split = "test";
            row.loss = test.loss;
            row.oa = test.oa;
            row.aac = test.aac;
            row.miou = test.miou;
            result.metrics.push_back(row);
        }
    }
    return result;
}

}  // namespace acnn
