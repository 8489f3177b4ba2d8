#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/point_cloud.hpp"
#include "acnn/pts_io.hpp"
#include "acnn/rng.hpp"

namespace acnn {

// ---------------------------------------------------------------------------
// Synthetic shapes
// ---------------------------------------------------------------------------

// Desk-scale stand-ins for CAD classes: uniformly surface-sampled primitives
// with analytic normals, centered and scaled so the farthest point sits on
// the unit sphere.
struct ShapeSpec {
    enum class Kind { sphere, cube, cylinder, cone, torus };

    Kind kind = Kind::sphere;
    int points = 256;
    double a = 1.0;  // sphere: radius; cube: half extent; cylinder/cone: radius; torus: major radius
    double b = 0.0;  // cylinder/cone: height; torus: minor radius

    static ShapeSpec sphere(double radius, int n) { return {Kind::sphere, n, radius, 0.0}; }
    static ShapeSpec cube(double half_extent, int n) { return {Kind::cube, n, half_extent, 0.0}; }
    static ShapeSpec cylinder(double radius, double height, int n) {
        return {Kind::cylinder, n, radius, height};
    }
    static ShapeSpec cone(double radius, double height, int n) {
        return {Kind::cone, n, radius, height};
    }
    static ShapeSpec torus(double major, double minor, int n) {
        return {Kind::torus, n, major, minor};
    }

    void validate() const {
        if (points < 32) throw InvalidArgument("shape needs at least 32 points");
        if (a <= 0.0) throw InvalidArgument("shape parameters must be positive");
        const bool needs_b = kind == Kind::cylinder || kind == Kind::cone || kind == Kind::torus;
        if (needs_b && b <= 0.0) throw InvalidArgument("shape parameters must be positive");
        if (kind == Kind::torus && b >= a)
            throw InvalidArgument("torus minor radius must be smaller than major radius");
    }

    // Analytic distance of the farthest surface point from the origin.
    double max_radius() const {
        switch (kind) {
            case Kind::sphere: return a;
            case Kind::cube: return a * std::sqrt(3.0);
            case Kind::cylinder: return std::sqrt(a * a + 0.25 * b * b);
            case Kind::cone: return std::sqrt(a * a + 0.25 * b * b);
            case Kind::torus: return a + b;
        }
        return 1.0;
    }
};

inline const std::vector<std::string>& shape_class_names() {
    static const std::vector<std::string> names = {"sphere", "cube", "cylinder", "cone", "torus"};
    return names;
}

inline ShapeSpec::Kind shape_kind_from_name(const std::string& name) {
    if (name == "sphere") return ShapeSpec::Kind::sphere;
    if (name == "cube") return ShapeSpec::Kind::cube;
    if (name == "cylinder") return ShapeSpec::Kind::cylinder;
    if (name == "cone") return ShapeSpec::Kind::cone;
    if (name == "torus") return ShapeSpec::Kind::torus;
    throw InvalidArgument("unknown shape class: " + name);
}

namespace detail {

// side/caps sampling shared by the plain and the part-labeled cylinder.
inline void sample_cylinder_point(double r, double h, Rng& rng, Vec3& p, Vec3& n, int& label) {
    const double side_area = 2.0 * M_PI * r * h;
    const double cap_area = 2.0 * M_PI * r * r;  // both caps
    const double u = rng.uniform() * (side_area + cap_area);
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    if (u < side_area) {
        const double z = rng.uniform(-0.5 * h, 0.5 * h);
        p = {r * std::cos(theta), r * std::sin(theta), z};
        n = {std::cos(theta), std::sin(theta), 0.0};
        label = 0;
    } else {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double rho = r * std::sqrt(rng.uniform());
        p = {rho * std::cos(theta), rho * std::sin(theta), sign * 0.5 * h};
        n = {0.0, 0.0, sign};
        label = 1;
    }
}

}  // namespace detail

inline PointCloud generate_shape(const ShapeSpec& spec, Rng& rng) {
    spec.validate();
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(spec.points));
    cloud.normals.reserve(static_cast<std::size_t>(spec.points));
    const double scale = 1.0 / spec.max_radius();

    for (int i = 0; i < spec.points; ++i) {
        Vec3 p, n;
        switch (spec.kind) {
            case ShapeSpec::Kind::sphere: {
                Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
                while (norm(dir) < 1e-9) dir = {rng.normal(), rng.normal(), rng.normal()};
                n = normalized(dir);
                p = n * spec.a;
                break;
            }
            case ShapeSpec::Kind::cube: {
                const int face = static_cast<int>(rng.uniform_index(6));
                const int axis = face / 2;
                const double sign = face % 2 == 0 ? -1.0 : 1.0;
                const double u = rng.uniform(-spec.a, spec.a);
                const double v = rng.uniform(-spec.a, spec.a);
                double coords[3];
                coords[axis] = sign * spec.a;
                coords[(axis + 1) % 3] = u;
                coords[(axis + 2) % 3] = v;
                p = {coords[0], coords[1], coords[2]};
                double nv[3] = {0.0, 0.0, 0.0};
                nv[axis] = sign;
                n = {nv[0], nv[1], nv[2]};
                break;
            }
            case ShapeSpec::Kind::cylinder: {
                int label;
                detail::sample_cylinder_point(spec.a, spec.b, rng, p, n, label);
                break;
            }
            case ShapeSpec::Kind::cone: {
                const double r = spec.a, h = spec.b;
                const double slant = std::sqrt(r * r + h * h);
                const double lateral_area = M_PI * r * slant;
                const double base_area = M_PI * r * r;
                const double theta = rng.uniform(0.0, 2.0 * M_PI);
                const double rho = r * std::sqrt(rng.uniform());
                if (rng.uniform() * (lateral_area + base_area) < lateral_area) {
                    // Apex at +h/2, base rim at -h/2.
                    const double z = 0.5 * h - h * rho / r;
                    p = {rho * std::cos(theta), rho * std::sin(theta), z};
                    n = {h * std::cos(theta) / slant, h * std::sin(theta) / slant, r / slant};
                } else {
                    p = {rho * std::cos(theta), rho * std::sin(theta), -0.5 * h};
                    n = {0.0, 0.0, -1.0};
                }
                break;
            }
            case ShapeSpec::Kind::torus: {
                const double R = spec.a, r = spec.b;
                const double theta = rng.uniform(0.0, 2.0 * M_PI);
                double phi;
                // Rejection keeps the sampling uniform in surface area.
                for (;;) {
                    phi = rng.uniform(0.0, 2.0 * M_PI);
                    if (rng.uniform() * (R + r) <= R + r * std::cos(phi)) break;
                }
                const double ring = R + r * std::cos(phi);
                p = {ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)};
                n = {std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta),
                     std::sin(phi)};
                break;
            }
        }
        cloud.points.push_back(p * scale);
        cloud.normals.push_back(n);
    }
    return cloud;
}

// Toy part-segmentation target: cylinder side (label 0) vs caps (label 1).
// Dimensions are kept as given (the default shape already fits in the unit
// sphere), so cap points sit at |z| = h/2 exactly.
inline PointCloud generate_segmented_cylinder(double radius, double height, int points,
                                              Rng& rng) {
    ShapeSpec spec = ShapeSpec::cylinder(radius, height, points);
    spec.validate();
    if (spec.max_radius() > 1.0 + 1e-12)
        throw InvalidArgument("segmented cylinder must fit inside the unit sphere");
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(points));
    cloud.normals.reserve(static_cast<std::size_t>(points));
    cloud.labels.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        Vec3 p, n;
        int label;
        detail::sample_cylinder_point(radius, height, rng, p, n, label);
        cloud.points.push_back(p);
        cloud.normals.push_back(n);
        cloud.labels.push_back(label);
    }
    return cloud;
}

// Class-specific aspect jitter so shapes vary within a class; normalization
// removes absolute size, so only proportions matter.
inline PointCloud generate_class_sample(ShapeSpec::Kind kind, int points, Rng& rng) {
    switch (kind) {
        case ShapeSpec::Kind::sphere: return generate_shape(ShapeSpec::sphere(1.0, points), rng);
        case ShapeSpec::Kind::cube: return generate_shape(ShapeSpec::cube(1.0, points), rng);
        case ShapeSpec::Kind::cylinder:
            return generate_shape(
                ShapeSpec::cylinder(0.5, rng.uniform(1.0, 2.2), points), rng);
        case ShapeSpec::Kind::cone:
            return generate_shape(ShapeSpec::cone(0.5, rng.uniform(1.0, 2.2), points), rng);
        case ShapeSpec::Kind::torus:
            return generate_shape(ShapeSpec::torus(1.0, rng.uniform(0.2, 0.45), points), rng);
    }
    throw InvalidArgument("unknown shape kind");
}

// ---------------------------------------------------------------------------
// Manifest + dataset
// ---------------------------------------------------------------------------

// manifest.tsv columns: path, label, split. Label is an integer class or the
// literal "seg" for per-point labeled clouds.
struct ManifestEntry {
    std::string path;
    int label = -1;  // -1 for segmentation entries
    std::string split;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
    bool segmentation = false;
};

inline void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest) {
    std::ofstream os(dir / "manifest.tsv", std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in " + dir.string());
    os << "path\tlabel\tsplit\n";
    for (const ManifestEntry& e : manifest.entries) {
        os << e.path << '\t';
        if (e.label < 0) os << "seg";
        else os << e.label;
        os << '\t' << e.split << '\n';
    }
    if (!manifest.class_names.empty()) {
        std::ofstream cs(dir / "classes.txt", std::ios::trunc);
        for (const std::string& name : manifest.class_names) cs << name << '\n';
    }
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.tsv");
    if (!is) throw IoError("cannot open manifest: " + (dir / "manifest.tsv").string());
    DatasetManifest manifest;
    {
        std::ifstream cs(dir / "classes.txt");
        std::string name;
        while (std::getline(cs, name))
            if (!name.empty()) manifest.class_names.push_back(name);
    }
    std::string line;
    int line_no = 0;
    std::set<std::string> seen;
    int max_label = -1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string path, label, split;
        if (!std::getline(ls, path, '\t') || !std::getline(ls, label, '\t') ||
            !std::getline(ls, split))
            throw ParseError("manifest rows need path<TAB>label<TAB>split", line_no);
        if (line_no == 1 && path == "path") continue;  // header
        if (!seen.insert(path).second) throw ParseError("duplicate manifest path " + path, line_no);
        ManifestEntry e;
        e.path = path;
        e.split = split;
        if (label == "seg") {
            e.label = -1;
            manifest.segmentation = true;
        } else {
            try {
                e.label = std::stoi(label);
            } catch (...) {
                throw ParseError("bad label '" + label + "'", line_no);
            }
            if (e.label < 0) throw ParseError("label out of range", line_no);
            max_label = std::max(max_label, e.label);
        }
        manifest.entries.push_back(std::move(e));
    }
    if (!manifest.segmentation) {
        const int classes = manifest.class_names.empty() ? max_label + 1
                                                         : static_cast<int>(manifest.class_names.size());
        if (max_label >= classes) throw ParseError("label out of range of declared classes", line_no);
        if (manifest.class_names.empty())
            for (int c = 0; c < classes; ++c)
                manifest.class_names.push_back("class" + std::to_string(c));
    }
    return manifest;
}

struct Dataset {
    std::vector<PointCloud> clouds;
    std::vector<int> labels;  // per-cloud class; empty for segmentation
    std::vector<std::string> class_names;
    int num_classes = 0;  // classes, or part count for segmentation
    bool segmentation = false;
};

inline Dataset load_dataset(const std::filesystem::path& dir, const std::string& split) {
    const DatasetManifest manifest = read_manifest(dir);
    Dataset ds;
    ds.segmentation = manifest.segmentation;
    ds.class_names = manifest.class_names;
    for (const ManifestEntry& e : manifest.entries) {
        if (e.split != split) continue;
        PointCloud cloud = read_pts(dir / e.path);
        if (manifest.segmentation) {
            if (!cloud.has_labels())
                throw InvalidArgument("segmentation entry lacks per-point labels: " + e.path);
            for (int l : cloud.labels) ds.num_classes = std::max(ds.num_classes, l + 1);
        } else {
            ds.labels.push_back(e.label);
        }
        ds.clouds.push_back(std::move(cloud));
    }
    if (!manifest.segmentation) ds.num_classes = static_cast<int>(manifest.class_names.size());
    if (ds.clouds.empty()) throw InvalidArgument("no '" + split + "' entries in " + dir.string());
    return ds;
}

// Generates the default synthetic dataset tree under `dir`:
// train/<class>_<i>.pts, test/<class>_<i>.pts, manifest.tsv, classes.txt.
inline void generate_dataset(const std::filesystem::path& dir,
                             const std::vector<std::string>& class_names, int per_class_train,
                             int per_class_test, int points, std::uint64_t seed,
                             bool segmented) {
    std::filesystem::create_directories(dir / "train");
    std::filesystem::create_directories(dir / "test");
    DatasetManifest manifest;
    manifest.segmentation = segmented;
    if (!segmented) manifest.class_names = class_names;

    const auto emit = [&](const std::string& split, int per_class) {
        const int classes = segmented ? 1 : static_cast<int>(class_names.size());
        for (int c = 0; c < classes; ++c) {
            for (int i = 0; i < per_class; ++i) {
                Rng rng(derive_seed(seed, Stream::data_gen,
                                    static_cast<std::uint64_t>(split == "test" ? 1 : 0),
                                    static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(i)));
                PointCloud cloud;
                std::string stem;
                if (segmented) {
                    cloud = generate_segmented_cylinder(0.5, rng.uniform(1.0, 1.7), points, rng);
                    stem = "cylinder_" + std::to_string(i);
                } else {
                    cloud = generate_class_sample(shape_kind_from_name(class_names[static_cast<std::size_t>(c)]),
                                                  points, rng);
                    stem = class_names[static_cast<std::size_t>(c)] + "_" + std::to_string(i);
                }
                const std::string rel = split + "/" + stem + ".pts";
                write_pts(dir / rel, cloud);
                manifest.entries.push_back({rel, segmented ? -1 : c, split});
            }
        }
    };
    emit("train", per_class_train);
    emit("test", per_class_test);
    write_manifest(dir, manifest);
}

}  // namespace acnn
