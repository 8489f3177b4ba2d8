// Command-line front end: dataset generation, training, evaluation, ablation,
// gradient checking, neighborhood inspection and saliency dumps. All commands
// are deterministic under --seed and write a run record next to their output
// artifact. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "acnn/acnn.hpp"

namespace fs = std::filesystem;
using namespace acnn;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<RingSpec> parse_rings_arg(const std::string& s) {
    std::vector<RingSpec> rings;
    for (const std::string& part : split_list(s)) {
        RingSpec ring;
        if (std::sscanf(part.c_str(), "%lf:%lf:%d", &ring.r_inner, &ring.r_outer, &ring.k) != 3)
            throw UsageError("ring spec must be rin:rout:k, got '" + part + "'");
        try {
            ring.validate();
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
        rings.push_back(ring);
    }
    if (rings.empty()) throw UsageError("at least one ring required");
    return rings;
}

Dataset load_split(const fs::path& dir, const std::string& split, bool estimate_normals) {
    Dataset ds = load_dataset(dir, split);
    for (PointCloud& cloud : ds.clouds) {
        if (estimate_normals) cloud.normals.clear();
        ensure_normals(cloud);
    }
    return ds;
}

double task_decay_rate(const Dataset& ds) { return ds.segmentation ? 0.5 : 0.7; }

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    std::string classes = "sphere,cube,cylinder,cone,torus";
    int per_class = 100;
    int points = 256;
    std::uint64_t seed = 0;
    bool segmented = false;
};

int cmd_gen_data(const GenDataArgs& args, const std::string& command_line) {
    StopWatch watch;
    std::vector<std::string> class_names = split_list(args.classes);
    if (!args.segmented) {
        if (class_names.empty()) throw UsageError("--classes must name at least one shape");
        for (const std::string& name : class_names) {
            try {
                shape_kind_from_name(name);
            } catch (const InvalidArgument& e) {
                throw UsageError(e.what());
            }
        }
    }
    if (args.per_class < 1) throw UsageError("--per-class must be positive");
    if (args.points < 32) throw UsageError("--points must be at least 32");

    const int per_class_test = std::max(1, (args.per_class * 3 + 5) / 10);  // 30% split
    generate_dataset(args.out, class_names, args.per_class, per_class_test, args.points,
                     args.seed, args.segmented);

    RunRecord record;
    record.command_line = command_line;
    record.seed = args.seed;
    record.config_digest = digest_hex(args.classes + "/" + std::to_string(args.per_class) + "/" +
                                      std::to_string(args.points));
    record.timings_seconds["total"] = watch.seconds();
    write_run_record(fs::path(args.out) / "run.json", record);

    std::cout << "wrote "
              << (args.segmented ? 1 : static_cast<int>(class_names.size())) *
                     (args.per_class + per_class_test)
              << " clouds under " << args.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string config;
    int epochs = 30;
    std::uint64_t seed = 0;
    std::string out;
    std::string variant = "full";
    int lr_decay_every = 20;
    int batch_size = 16;
    bool estimate_normals = false;
};

int cmd_train(const TrainArgs& args, const std::string& command_line) {
    StopWatch watch;
    Variant variant;
    try {
        variant = parse_variant(args.variant);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    if (args.epochs < 0) throw UsageError("--epochs must be >= 0");

    const std::string config_text = read_file(args.config);
    const NetworkConfig config = parse_network_config(config_text);

    StopWatch load_watch;
    const Dataset train_set = load_split(args.data, "train", args.estimate_normals);
    Dataset test_set;
    bool have_test = true;
    try {
        test_set = load_split(args.data, "test", args.estimate_normals);
    } catch (const InvalidArgument&) {
        have_test = false;
    }
    const double load_seconds = load_watch.seconds();

    Model<float> model = make_model<float>(config, variant, args.seed);
    Hyperparams hp;
    hp.epochs = args.epochs;
    hp.batch_size = args.batch_size;
    hp.decay_rate = task_decay_rate(train_set);
    hp.decay_every = args.lr_decay_every;
    hp.seed = args.seed;

    StopWatch train_watch;
    const TrainResult result = train_model(model, train_set, have_test ? &test_set : nullptr, hp);
    const double train_seconds = train_watch.seconds();

    save_model(args.out, model);
    write_metrics_tsv(args.out + ".metrics.tsv", result.metrics);

    RunRecord record;
    record.command_line = command_line;
    record.seed = args.seed;
    record.config_digest = digest_hex(config_text);
    record.timings_seconds["load"] = load_seconds;
    record.timings_seconds["train"] = train_seconds;
    record.timings_seconds["total"] = watch.seconds();
    write_run_record(args.out + ".run.json", record);

    if (!result.metrics.empty()) {
        const MetricsRow& last = result.metrics.back();
        std::cout << "final " << last.split << " oa=" << last.oa << " aac=" << last.aac << "\n";
    }
    std::cout << "checkpoint: " << args.out << "\nmetrics: " << args.out << ".metrics.tsv\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string data;
    std::string ckpt;
    std::string split = "test";
    std::uint64_t seed = 0;
    bool estimate_normals = false;
};

int cmd_eval(const EvalArgs& args, const std::string& command_line) {
    StopWatch watch;
    Model<float> model = load_model(args.ckpt);
    const Dataset ds = load_split(args.data, args.split, args.estimate_normals);
    const EvalMetrics metrics = evaluate_model(model, ds, args.seed);

    std::cout << "oa\taac\tmiou\n";
    std::cout << std::fixed << std::setprecision(6) << metrics.oa << '\t' << metrics.aac << '\t';
    if (!std::isnan(metrics.miou)) std::cout << metrics.miou;
    std::cout << '\n';

    RunRecord record;
    record.command_line = command_line;
    record.seed = args.seed;
    record.config_digest = digest_hex(config_to_text(model.config));
    record.timings_seconds["total"] = watch.seconds();
    write_run_record("acnn-eval.run.json", record);
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string data;
    std::string config;
    std::string seeds;
    int epochs = 20;
    int batch_size = 16;
    std::string out;
};

int cmd_ablate(const AblateArgs& args, const std::string& command_line) {
    StopWatch watch;
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(args.seeds)) {
        try {
            seeds.push_back(std::stoull(s));
        } catch (...) {
            throw UsageError("bad seed '" + s + "'");
        }
    }
    if (seeds.empty()) throw UsageError("--seeds must list at least one seed");

    const std::string config_text = read_file(args.config);
    const NetworkConfig config = parse_network_config(config_text);
    const Dataset train_set = load_split(args.data, "train", false);
    const Dataset test_set = load_split(args.data, "test", false);

    std::ostringstream table;
    table << "variant\tseed\toa\taac\n";
    const Variant variants[] = {Variant::full, Variant::ball_query, Variant::no_ordering,
                                Variant::no_annular};
    for (Variant variant : variants) {
        for (std::uint64_t seed : seeds) {
            Model<float> model = make_model<float>(config, variant, seed);
            Hyperparams hp;
            hp.epochs = args.epochs;
            hp.batch_size = args.batch_size;
            hp.decay_rate = task_decay_rate(train_set);
            hp.seed = seed;  // shared data-shuffling streams across variants
            train_model(model, train_set, nullptr, hp);
            const EvalMetrics metrics = evaluate_model(model, test_set, seed);
            table << variant_name(variant) << '\t' << seed << '\t' << std::fixed
                  << std::setprecision(6) << metrics.oa << '\t' << metrics.aac << '\n';
            std::cerr << variant_name(variant) << " seed " << seed << ": oa=" << metrics.oa
                      << "\n";
        }
    }
    std::cout << table.str();
    if (!args.out.empty()) {
        std::ofstream os(args.out, std::ios::trunc);
        os << table.str();
    }

    RunRecord record;
    record.command_line = command_line;
    record.seed = seeds[0];
    record.config_digest = digest_hex(config_text);
    record.timings_seconds["total"] = watch.seconds();
    write_run_record(args.out.empty() ? "acnn-ablate.run.json" : args.out + ".run.json", record);
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, int trials, const std::string& command_line) {
    StopWatch watch;
    const std::vector<GradCheckEntry> results = run_gradient_checks(seed, trials);
    bool ok = true;
    std::cout << "layer\tmax_rel_err\tstatus\n";
    for (const GradCheckEntry& entry : results) {
        const bool pass = entry.max_rel_err < kGradCheckThreshold;
        ok = ok && pass;
        std::cout << entry.name << '\t' << std::scientific << std::setprecision(3)
                  << entry.max_rel_err << '\t' << (pass ? "ok" : "FAIL") << '\n';
    }

    RunRecord record;
    record.command_line = command_line;
    record.seed = seed;
    record.config_digest = digest_hex("gradcheck");
    record.timings_seconds["total"] = watch.seconds();
    write_run_record("acnn-gradcheck.run.json", record);
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

struct InspectArgs {
    std::string file;
    int point = 0;
    std::string rings;
    bool estimate_normals = false;
};

int cmd_inspect(const InspectArgs& args, const std::string& command_line) {
    StopWatch watch;
    PointCloud cloud = read_pts(args.file);
    if (args.point < 0 || args.point >= cloud.size())
        throw UsageError("--point out of range (cloud has " + std::to_string(cloud.size()) +
                         " points)");
    std::vector<RingSpec> rings = parse_rings_arg(args.rings);
    if (args.estimate_normals) cloud.normals.clear();
    ensure_normals(cloud);

    const Vec3 q = cloud.points[static_cast<std::size_t>(args.point)];
    const Vec3 n = cloud.normals[static_cast<std::size_t>(args.point)];

    std::cout << "ring\tpos\tpoint\tdistance\tangle_key\n";
    for (std::size_t r = 0; r < rings.size(); ++r) {
        const RingNeighbors ring = ring_knn(cloud, args.point, rings[r]);
        std::vector<int> ordered = ring.indices;
        if (!ring.empty) ordered = order_counterclockwise(ring.indices, cloud, q, n, 0);
        // Reference direction: the ordered sequence starts at it.
        const Vec3 c =
            project_to_tangent(cloud.points[static_cast<std::size_t>(ordered[0])], q, n) - q;
        for (std::size_t pos = 0; pos < ordered.size(); ++pos) {
            const int idx = ordered[pos];
            const Vec3 p = project_to_tangent(cloud.points[static_cast<std::size_t>(idx)], q, n);
            const double d = distance(cloud.points[static_cast<std::size_t>(idx)], q);
            std::cout << r << '\t' << pos << '\t' << idx << '\t' << std::fixed
                      << std::setprecision(6) << d << '\t' << angle_key(c, p - q, n) << '\n';
        }
    }

    RunRecord record;
    record.command_line = command_line;
    record.seed = 0;
    record.config_digest = digest_hex(args.rings);
    record.timings_seconds["total"] = watch.seconds();
    write_run_record("acnn-inspect.run.json", record);
    return 0;
}

// ---------------------------------------------------------------------------
// saliency
// ---------------------------------------------------------------------------

struct SaliencyArgs {
    std::string data;
    std::string ckpt;
    std::string out;
    std::string split = "test";
    std::uint64_t seed = 0;
    bool estimate_normals = false;
};

int cmd_saliency(const SaliencyArgs& args, const std::string& command_line) {
    StopWatch watch;
    Model<float> model = load_model(args.ckpt);
    if (!model.config.is_classification())
        throw UsageError("saliency requires a classification checkpoint");
    const Dataset ds = load_split(args.data, args.split, args.estimate_normals);

    const fs::path tmp = args.out + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw IoError("cannot write " + args.out);
        os << "cloud\tpoint\tx\ty\tz\tsaliency\n";
        for (std::size_t i = 0; i < ds.clouds.size(); ++i) {
            const std::vector<double> values =
                saliency(model, ds.clouds[i], ds.labels[i],
                         derive_seed(args.seed, static_cast<std::uint64_t>(i)));
            for (int p = 0; p < ds.clouds[i].size(); ++p) {
                const Vec3& pt = ds.clouds[i].points[static_cast<std::size_t>(p)];
                os << i << '\t' << p << '\t' << std::setprecision(9) << pt.x << '\t' << pt.y
                   << '\t' << pt.z << '\t' << values[static_cast<std::size_t>(p)] << '\n';
            }
        }
    }
    fs::rename(tmp, args.out);

    RunRecord record;
    record.command_line = command_line;
    record.seed = args.seed;
    record.config_digest = digest_hex(config_to_text(model.config));
    record.timings_seconds["total"] = watch.seconds();
    write_run_record(args.out + ".run.json", record);
    std::cout << "saliency written to " << args.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string command_line = join_args(argc, argv);
    CLI::App app{"annular-convolution point cloud toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_option("--classes", gen_args.classes, "comma-separated shape classes");
    gen->add_option("--per-class", gen_args.per_class, "training clouds per class");
    gen->add_option("--points", gen_args.points, "points per cloud");
    gen->add_option("--seed", gen_args.seed, "generation seed");
    gen->add_flag("--segmented", gen_args.segmented, "emit part-labeled cylinders instead");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", train_args.data, "dataset directory")->required();
    train->add_option("--config", train_args.config, "network config file")->required();
    train->add_option("--epochs", train_args.epochs, "training epochs");
    train->add_option("--seed", train_args.seed, "master seed");
    train->add_option("--out", train_args.out, "checkpoint path")->required();
    train->add_option("--variant", train_args.variant, "full|ball_query|no_ordering|no_annular");
    train->add_option("--lr-decay-every", train_args.lr_decay_every,
                      "epochs between learning-rate decays");
    train->add_option("--batch-size", train_args.batch_size, "minibatch size");
    train->add_flag("--estimate-normals", train_args.estimate_normals,
                    "ignore file normals and re-estimate them");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--data", eval_args.data, "dataset directory")->required();
    eval->add_option("--ckpt", eval_args.ckpt, "checkpoint path")->required();
    eval->add_option("--split", eval_args.split, "dataset split (default test)");
    eval->add_option("--seed", eval_args.seed, "evaluation seed");
    eval->add_flag("--estimate-normals", eval_args.estimate_normals,
                   "ignore file normals and re-estimate them");

    AblateArgs ablate_args;
    CLI::App* ablate = app.add_subcommand("ablate", "train all four variants per seed");
    ablate->add_option("--data", ablate_args.data, "dataset directory")->required();
    ablate->add_option("--config", ablate_args.config, "network config file")->required();
    ablate->add_option("--seeds", ablate_args.seeds, "comma-separated seeds")->required();
    ablate->add_option("--epochs", ablate_args.epochs, "epochs per run");
    ablate->add_option("--batch-size", ablate_args.batch_size, "minibatch size");
    ablate->add_option("--out", ablate_args.out, "also write the table to this TSV");

    std::uint64_t gc_seed = 0;
    int gc_trials = 20;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", gc_seed, "suite seed");
    gradcheck->add_option("--trials", gc_trials, "random points per op");

    InspectArgs inspect_args;
    CLI::App* inspect = app.add_subcommand("inspect", "dump one neighborhood as TSV");
    inspect->add_option("--file", inspect_args.file, "pts file")->required();
    inspect->add_option("--point", inspect_args.point, "query point index")->required();
    inspect->add_option("--rings", inspect_args.rings, "rin:rout:k[,...]")->required();
    inspect->add_flag("--estimate-normals", inspect_args.estimate_normals,
                      "ignore file normals and re-estimate them");

    SaliencyArgs sal_args;
    CLI::App* sal = app.add_subcommand("saliency", "per-point gradient magnitudes");
    sal->add_option("--data", sal_args.data, "dataset directory")->required();
    sal->add_option("--ckpt", sal_args.ckpt, "classification checkpoint")->required();
    sal->add_option("--out", sal_args.out, "output TSV")->required();
    sal->add_option("--split", sal_args.split, "dataset split (default test)");
    sal->add_option("--seed", sal_args.seed, "seed");
    sal->add_flag("--estimate-normals", sal_args.estimate_normals,
                  "ignore file normals and re-estimate them");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args, command_line);
        if (train->parsed()) return cmd_train(train_args, command_line);
        if (eval->parsed()) return cmd_eval(eval_args, command_line);
        if (ablate->parsed()) return cmd_ablate(ablate_args, command_line);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_trials, command_line);
        if (inspect->parsed()) return cmd_inspect(inspect_args, command_line);
        if (sal->parsed()) return cmd_saliency(sal_args, command_line);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingDiverged& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
