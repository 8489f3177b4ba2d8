// Minute-scale end-to-end run: generate a small two-class dataset in memory,
// train a tiny classifier, print the metric trace.

#include <cstdio>

#include "acnn/data.hpp"
#include "acnn/model.hpp"
#include "acnn/train.hpp"

using namespace acnn;

int main() {
    Dataset train_set, test_set;
    train_set.num_classes = test_set.num_classes = 2;
    train_set.class_names = test_set.class_names = {"sphere", "torus"};
    for (int i = 0; i < 50; ++i) {
        Rng rng(derive_seed(11, Stream::data_gen, static_cast<std::uint64_t>(i)));
        const bool torus = i % 2 == 1;
        PointCloud cloud = torus ? generate_shape(ShapeSpec::torus(1.0, 0.3, 128), rng)
                                 : generate_shape(ShapeSpec::sphere(1.0, 128), rng);
        Dataset& target = i < 40 ? train_set : test_set;
        target.clouds.push_back(std::move(cloud));
        target.labels.push_back(torus ? 1 : 0);
    }

    const NetworkConfig config = parse_network_config(
        "layer centroids=32 rings=0:0.35:6,0.35:0.7:10 features=8,12|12,16\n"
        "layer centroids=1 rings=0:2.5:16 features=24,32\n"
        "head class c=2 fc=24 dropout=0.3\n");
    Model<float> model = make_model<float>(config, Variant::full, 3);

    Hyperparams hp;
    hp.epochs = 12;
    hp.batch_size = 8;
    hp.learning_rate = 0.005;
    hp.seed = 3;
    const TrainResult result = train_model(model, train_set, &test_set, hp);
    for (const MetricsRow& row : result.metrics)
        std::printf("epoch %d %-5s loss %.4f oa %.3f\n", row.epoch, row.split.c_str(), row.loss,
                    row.oa);
    return 0;
}
