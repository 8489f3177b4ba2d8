#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acnn/errors.hpp"
#include "acnn/geometry.hpp"

namespace acnn {

// One encoder layer: how many centroids survive FPS, the ring stack searched
// around each, and the sequential conv widths per ring. A layer with a single
// centroid is the global aggregation layer and uses 1x1 kernels; everything
// else uses 1x3 annular kernels.
struct LayerConfig {
    int centroids = 1;
    std::vector<RingSpec> rings;
    std::vector<std::vector<int>> feature_maps;  // one width list per ring

    int kernel_size() const { return centroids == 1 ? 1 : 3; }

    int output_channels() const {
        int total = 0;
        for (const auto& widths : feature_maps) total += widths.back();
        return total;
    }

    void validate() const {
        if (centroids < 1) throw InvalidArgument("layer centroids must be >= 1");
        if (rings.empty() || rings.size() != feature_maps.size())
            throw InvalidArgument("layer needs one feature-map list per ring");
        for (const RingSpec& r : rings) r.validate();
        for (std::size_t i = 1; i < rings.size(); ++i)
            if (rings[i].r_inner < rings[i - 1].r_outer)
                throw InvalidArgument("rings within a layer must not overlap");
        for (const auto& widths : feature_maps) {
            if (widths.empty()) throw InvalidArgument("feature map list must be non-empty");
            for (int w : widths)
                if (w < 1) throw InvalidArgument("feature map widths must be positive");
        }
    }
};

struct ClassHeadConfig {
    int classes = 0;
    std::vector<int> fc_widths;
    double dropout = 0.5;
    bool batch_norm = true;  // after each FC except the last
};

struct SegmentHeadConfig {
    int parts = 0;
    int width = 0;  // 1x1 reduction width applied to the concatenated levels
};

struct NetworkConfig {
    std::vector<LayerConfig> layers;
    std::optional<ClassHeadConfig> class_head;
    std::optional<SegmentHeadConfig> segment_head;

    bool is_classification() const { return class_head.has_value(); }

    void validate() const {
        if (layers.empty()) throw InvalidArgument("network needs at least one layer");
        for (const LayerConfig& l : layers) l.validate();
        for (std::size_t i = 1; i < layers.size(); ++i)
            if (layers[i].centroids >= layers[i - 1].centroids)
                throw InvalidArgument("centroid counts must strictly decrease across layers");
        if (class_head.has_value() == segment_head.has_value())
            throw InvalidArgument("network needs exactly one head");
        if (class_head && class_head->classes < 2)
            throw InvalidArgument("classification head needs >= 2 classes");
        if (segment_head && (segment_head->parts < 2 || segment_head->width < 1))
            throw InvalidArgument("segmentation head needs >= 2 parts and positive width");
    }
};

enum class Variant { full, ball_query, no_ordering, no_annular };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::ball_query: return "ball_query";
        case Variant::no_ordering: return "no_ordering";
        case Variant::no_annular: return "no_annular";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "ball_query") return Variant::ball_query;
    if (s == "no_ordering") return Variant::no_ordering;
    if (s == "no_annular") return Variant::no_annular;
    throw InvalidArgument("unknown variant: " + s);
}

// ---------------------------------------------------------------------------
// Config text format
// ---------------------------------------------------------------------------
// layer centroids=<int> rings=<rin>:<rout>:<k>[,...] features=<w,w,w>[|<w,w,w>]
// head class c=<int> fc=512,256 dropout=0.5 [bn=on|off]
// head segment m=<int> width=<int>
// Blank lines and lines starting with '#' are ignored. Unknown keys rejected.

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    return parts;
}

inline int parse_int(const std::string& s, int line) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected integer, got '" + s + "'", line);
    }
}

inline double parse_double(const std::string& s, int line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected number, got '" + s + "'", line);
    }
}

inline std::vector<int> parse_int_list(const std::string& s, int line) {
    std::vector<int> out;
    for (const std::string& item : split(s, ',')) out.push_back(parse_int(item, line));
    return out;
}

}  // namespace detail

inline NetworkConfig parse_network_config(std::istream& is) {
    NetworkConfig cfg;
    std::string raw;
    int line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::istringstream line(raw);
        std::string word;
        if (!(line >> word) || word[0] == '#') continue;

        if (word == "layer") {
            LayerConfig layer;
            bool saw_centroids = false, saw_rings = false, saw_features = false;
            std::string kv;
            while (line >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw ParseError("expected key=value, got '" + kv + "'", line_no);
                const std::string key = kv.substr(0, eq);
                const std::string value = kv.substr(eq + 1);
                if (key == "centroids") {
                    layer.centroids = detail::parse_int(value, line_no);
                    saw_centroids = true;
                } else if (key == "rings") {
                    for (const std::string& ring_str : detail::split(value, ',')) {
                        const auto parts = detail::split(ring_str, ':');
                        if (parts.size() != 3) throw ParseError("ring must be rin:rout:k", line_no);
                        RingSpec ring;
                        ring.r_inner = detail::parse_double(parts[0], line_no);
                        ring.r_outer = detail::parse_double(parts[1], line_no);
                        ring.k = detail::parse_int(parts[2], line_no);
                        layer.rings.push_back(ring);
                    }
                    saw_rings = true;
                } else if (key == "features") {
                    for (const std::string& list : detail::split(value, '|'))
                        layer.feature_maps.push_back(detail::parse_int_list(list, line_no));
                    saw_features = true;
                } else {
                    throw ParseError("unknown layer key '" + key + "'", line_no);
                }
            }
            if (!saw_centroids || !saw_rings || !saw_features)
                throw ParseError("layer needs centroids=, rings= and features=", line_no);
            cfg.layers.push_back(std::move(layer));
        } else if (word == "head") {
            std::string kind;
            if (!(line >> kind)) throw ParseError("head needs a kind (class|segment)", line_no);
            std::string kv;
            if (kind == "class") {
                ClassHeadConfig head;
                while (line >> kv) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos)
                        throw ParseError("expected key=value, got '" + kv + "'", line_no);
                    const std::string key = kv.substr(0, eq);
                    const std::string value = kv.substr(eq + 1);
                    if (key == "c") head.classes = detail::parse_int(value, line_no);
                    else if (key == "fc") head.fc_widths = detail::parse_int_list(value, line_no);
                    else if (key == "dropout") head.dropout = detail::parse_double(value, line_no);
                    else if (key == "bn") {
                        if (value == "on") head.batch_norm = true;
                        else if (value == "off") head.batch_norm = false;
                        else throw ParseError("bn must be on or off", line_no);
                    } else throw ParseError("unknown head key '" + key + "'", line_no);
                }
                cfg.class_head = head;
            } else if (kind == "segment") {
                SegmentHeadConfig head;
                while (line >> kv) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos)
                        throw ParseError("expected key=value, got '" + kv + "'", line_no);
                    const std::string key = kv.substr(0, eq);
                    const std::string value = kv.substr(eq + 1);
                    if (key == "m") head.parts = detail::parse_int(value, line_no);
                    else if (key == "width") head.width = detail::parse_int(value, line_no);
                    else throw ParseError("unknown head key '" + key + "'", line_no);
                }
                cfg.segment_head = head;
            } else {
                throw ParseError("unknown head kind '" + kind + "'", line_no);
            }
        } else {
            throw ParseError("unknown directive '" + word + "'", line_no);
        }
    }
    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what(), line_no);
    }
    return cfg;
}

inline NetworkConfig parse_network_config(const std::string& text) {
    std::istringstream is(text);
    return parse_network_config(is);
}

inline NetworkConfig load_network_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    return parse_network_config(is);
}

inline std::string config_to_text(const NetworkConfig& cfg) {
    std::ostringstream os;
    for (const LayerConfig& l : cfg.layers) {
        os << "layer centroids=" << l.centroids << " rings=";
        for (std::size_t i = 0; i < l.rings.size(); ++i) {
            if (i) os << ',';
            os << l.rings[i].r_inner << ':' << l.rings[i].r_outer << ':' << l.rings[i].k;
        }
        os << " features=";
        for (std::size_t i = 0; i < l.feature_maps.size(); ++i) {
            if (i) os << '|';
            for (std::size_t j = 0; j < l.feature_maps[i].size(); ++j) {
                if (j) os << ',';
                os << l.feature_maps[i][j];
            }
        }
        os << '\n';
    }
    if (cfg.class_head) {
        os << "head class c=" << cfg.class_head->classes << " fc=";
        for (std::size_t i = 0; i < cfg.class_head->fc_widths.size(); ++i) {
            if (i) os << ',';
            os << cfg.class_head->fc_widths[i];
        }
        os << " dropout=" << cfg.class_head->dropout
           << " bn=" << (cfg.class_head->batch_norm ? "on" : "off") << '\n';
    }
    if (cfg.segment_head)
        os << "head segment m=" << cfg.segment_head->parts << " width=" << cfg.segment_head->width
           << '\n';
    return os.str();
}

}  // namespace acnn
