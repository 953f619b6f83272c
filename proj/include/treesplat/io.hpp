#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treesplat/core.hpp"

namespace treesplat {

// ---------------------------------------------------------------------------
// Scene <-> ASCII PLY
//
// element vertex with float properties x y z scale opacity red green blue
// f0..f{D-1}, plus optional int properties gt_whole gt_part gt_subpart
// cluster_l1 cluster_l2 denoise_kept. Unknown properties are parsed and
// ignored.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& tok, int line_no) {
    try {
        size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
}

}  // namespace detail

inline void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    const int d = scene.feature_dim;
    const bool gt = scene.has_gt();
    const bool c1 = !scene.cluster_l1.empty();
    const bool c2 = !scene.cluster_l2.empty();
    const bool dk = !scene.denoise_kept.empty();

    out << "ply\nformat ascii 1.0\nelement vertex " << scene.points.size() << "\n";
    for (const char* n : {"x", "y", "z", "scale", "opacity", "red", "green", "blue"})
        out << "property float " << n << "\n";
    for (int c = 0; c < d; ++c) out << "property float f" << c << "\n";
    if (gt) out << "property int gt_whole\nproperty int gt_part\nproperty int gt_subpart\n";
    if (c1) out << "property int cluster_l1\n";
    if (c2) out << "property int cluster_l2\n";
    if (dk) out << "property int denoise_kept\n";
    out << "end_header\n";

    for (size_t i = 0; i < scene.points.size(); ++i) {
        const auto& p = scene.points[i];
        out << detail::fmt_double(p.position.x) << ' ' << detail::fmt_double(p.position.y) << ' '
            << detail::fmt_double(p.position.z) << ' ' << detail::fmt_double(p.scale) << ' '
            << detail::fmt_double(p.opacity) << ' ' << detail::fmt_double(p.color.x) << ' '
            << detail::fmt_double(p.color.y) << ' ' << detail::fmt_double(p.color.z);
        for (int c = 0; c < d; ++c) out << ' ' << detail::fmt_double(p.feature[c]);
        if (gt)
            out << ' ' << scene.gt_labels[i].whole << ' ' << scene.gt_labels[i].part << ' '
                << scene.gt_labels[i].subpart;
        if (c1) out << ' ' << scene.cluster_l1[i];
        if (c2) out << ' ' << scene.cluster_l2[i];
        if (dk) out << ' ' << scene.denoise_kept[i];
        out << '\n';
    }
    if (!out) throw ParseError("write failed: " + path);
}

inline Scene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);

    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> std::string {
        if (!std::getline(in, line)) throw ParseError("line " + std::to_string(line_no) + ": unexpected end of file");
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw ParseError("line 1: not a PLY file");
    if (next_line() != "format ascii 1.0") throw ParseError("line 2: only ascii 1.0 supported");

    size_t n_vertices = 0;
    std::vector<std::string> props;
    bool in_vertex = false;
    while (true) {
        const std::string l = next_line();
        if (l == "end_header") break;
        std::istringstream ss(l);
        std::string tok;
        ss >> tok;
        if (tok == "comment") continue;
        if (tok == "element") {
            std::string name;
            ss >> name >> n_vertices;
            in_vertex = (name == "vertex");
            if (!in_vertex) throw ParseError("line " + std::to_string(line_no) + ": unsupported element '" + name + "'");
            continue;
        }
        if (tok == "property") {
            if (!in_vertex) throw ParseError("line " + std::to_string(line_no) + ": property outside vertex element");
            std::string type, name;
            ss >> type >> name;
            if (name.empty()) throw ParseError("line " + std::to_string(line_no) + ": malformed property");
            props.push_back(name);
            continue;
        }
        throw ParseError("line " + std::to_string(line_no) + ": unexpected header token '" + tok + "'");
    }

    // locate columns
    auto col = [&](const std::string& name) -> int {
        for (size_t i = 0; i < props.size(); ++i)
            if (props[i] == name) return static_cast<int>(i);
        return -1;
    };
    for (const char* req : {"x", "y", "z", "scale", "opacity", "red", "green", "blue"})
        if (col(req) < 0) throw ParseError("missing required property '" + std::string(req) + "'");

    // feature arity from the f0..f{D-1} run
    int d = 0;
    while (col("f" + std::to_string(d)) >= 0) ++d;
    if (d == 0) throw ParseError("no feature properties f0..f{D-1} found");
    for (const auto& p : props) {
        if (p.size() > 1 && p[0] == 'f' && p.find_first_not_of("0123456789", 1) == std::string::npos) {
            const int idx = std::stoi(p.substr(1));
            if (idx >= d) throw ParseError("inconsistent feature arity: found " + p + " but f" + std::to_string(idx - 1) + " chain broken");
        }
    }

    Scene scene;
    scene.feature_dim = d;
    scene.points.reserve(n_vertices);
    const int c_gtw = col("gt_whole"), c_gtp = col("gt_part"), c_gts = col("gt_subpart");
    const int c_c1 = col("cluster_l1"), c_c2 = col("cluster_l2"), c_dk = col("denoise_kept");
    if ((c_gtw >= 0) != (c_gtp >= 0)) throw ParseError("gt_whole/gt_part must appear together");
    const int c_x = col("x"), c_y = col("y"), c_z = col("z");
    const int c_s = col("scale"), c_o = col("opacity");
    const int c_r = col("red"), c_g = col("green"), c_b = col("blue");
    std::vector<int> fcols(d);
    for (int c = 0; c < d; ++c) fcols[c] = col("f" + std::to_string(c));

    std::vector<std::string> toks;
    for (size_t v = 0; v < n_vertices; ++v) {
        const std::string l = next_line();
        toks.clear();
        std::istringstream ss(l);
        std::string t;
        while (ss >> t) toks.push_back(t);
        if (toks.size() != props.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(props.size()) +
                             " values, got " + std::to_string(toks.size()));
        auto fval = [&](int c) { return detail::parse_double(toks[c], line_no); };
        GaussianPoint p;
        p.position = {fval(c_x), fval(c_y), fval(c_z)};
        p.scale = fval(c_s);
        p.opacity = fval(c_o);
        p.color = {fval(c_r), fval(c_g), fval(c_b)};
        p.feature.resize(d);
        for (int c = 0; c < d; ++c) p.feature[c] = fval(fcols[c]);
        scene.points.push_back(std::move(p));
        if (c_gtw >= 0) {
            GtLabel g;
            g.whole = static_cast<int>(fval(c_gtw));
            g.part = static_cast<int>(fval(c_gtp));
            g.subpart = c_gts >= 0 ? static_cast<int>(fval(c_gts)) : -1;
            scene.gt_labels.push_back(g);
        }
        if (c_c1 >= 0) scene.cluster_l1.push_back(static_cast<int>(fval(c_c1)));
        if (c_c2 >= 0) scene.cluster_l2.push_back(static_cast<int>(fval(c_c2)));
        if (c_dk >= 0) scene.denoise_kept.push_back(static_cast<int>(fval(c_dk)));
    }
    scene.validate();
    return scene;
}

// ---------------------------------------------------------------------------
// LabelMap <-> 16-bit binary PGM (P5, maxval 65535, big-endian samples)
// ---------------------------------------------------------------------------

inline void save_labelmap(const LabelMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "P5\n" << map.width << " " << map.height << "\n65535\n";
    for (int32_t v : map.labels) {
        if (v < 0 || v > 65535) throw ParseError("label " + std::to_string(v) + " outside 16-bit range");
        const unsigned char hi = static_cast<unsigned char>((v >> 8) & 0xff);
        const unsigned char lo = static_cast<unsigned char>(v & 0xff);
        out.put(static_cast<char>(hi));
        out.put(static_cast<char>(lo));
    }
    if (!out) throw ParseError("write failed: " + path);
}

namespace detail {

inline int pgm_next_int(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments, per the netpbm grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw ParseError(path + ": malformed PGM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

}  // namespace detail

inline LabelMap load_labelmap(const std::string& path, int level = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw ParseError(path + ": not a binary PGM (P5)");
    const int w = detail::pgm_next_int(in, path);
    const int h = detail::pgm_next_int(in, path);
    const int maxval = detail::pgm_next_int(in, path);
    if (maxval != 65535) throw ParseError(path + ": maxval must be 65535, got " + std::to_string(maxval));
    // exactly one whitespace byte separates header from payload; pgm_next_int
    // already consumed it while scanning past the maxval digits
    LabelMap map(level, h, w);
    std::vector<unsigned char> buf(static_cast<size_t>(h) * w * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(in.gcount()) != buf.size()) throw ParseError(path + ": truncated pixel payload");
    for (size_t i = 0; i < map.labels.size(); ++i)
        map.labels[i] = (static_cast<int32_t>(buf[2 * i]) << 8) | buf[2 * i + 1];
    return map;
}

// 8-bit PGM used for per-channel visualizations of feature maps.
inline void save_pgm8(const std::vector<double>& values, int h, int w, const std::string& path) {
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (double v : values)
        out.put(static_cast<char>(static_cast<unsigned char>(255.0 * (v - lo) / range + 0.5)));
}

// ---------------------------------------------------------------------------
// FeatureMap <-> FMAP: magic "FMAP", u32le H W D, then H*W*D f32le,
// row-major and channel-fastest.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32le(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
}

inline uint32_t get_u32le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw ParseError(path + ": truncated FMAP header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_feature_map(const FeatureMap& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out.write("FMAP", 4);
    detail::put_u32le(out, static_cast<uint32_t>(f.height));
    detail::put_u32le(out, static_cast<uint32_t>(f.width));
    detail::put_u32le(out, static_cast<uint32_t>(f.dim));
    for (double v : f.values) {
        const float fv = static_cast<float>(v);
        static_assert(sizeof(float) == 4);
        uint32_t bits;
        std::memcpy(&bits, &fv, 4);
        detail::put_u32le(out, bits);
    }
    if (!out) throw ParseError("write failed: " + path);
}

inline FeatureMap load_feature_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "FMAP", 4) != 0) throw ParseError(path + ": bad FMAP magic");
    const uint32_t h = detail::get_u32le(in, path);
    const uint32_t w = detail::get_u32le(in, path);
    const uint32_t d = detail::get_u32le(in, path);
    FeatureMap f(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
    for (double& v : f.values) {
        const uint32_t bits = detail::get_u32le(in, path);
        float fv;
        std::memcpy(&fv, &bits, 4);
        v = fv;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Views <-> JSON
// ---------------------------------------------------------------------------

inline void save_views(const std::vector<View>& views, const std::string& path) {
    nlohmann::ordered_json root;
    root["views"] = nlohmann::ordered_json::array();
    for (const auto& v : views) {
        nlohmann::ordered_json jv;
        jv["view_index"] = v.view_index;
        jv["fx"] = v.fx;
        jv["fy"] = v.fy;
        jv["cx"] = v.cx;
        jv["cy"] = v.cy;
        jv["height"] = v.height;
        jv["width"] = v.width;
        std::vector<double> rot;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) rot.push_back(v.rotation.m[i][j]);
        jv["rotation"] = rot;
        jv["translation"] = {v.translation.x, v.translation.y, v.translation.z};
        root["views"].push_back(jv);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << root.dump(2) << "\n";
}

inline std::vector<View> load_views(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    std::vector<View> views;
    int last_index = -1;
    for (const auto& jv : root.at("views")) {
        View v;
        v.view_index = jv.at("view_index").get<int>();
        v.fx = jv.at("fx").get<double>();
        v.fy = jv.at("fy").get<double>();
        v.cx = jv.at("cx").get<double>();
        v.cy = jv.at("cy").get<double>();
        v.height = jv.at("height").get<int>();
        v.width = jv.at("width").get<int>();
        const auto rot = jv.at("rotation").get<std::vector<double>>();
        if (rot.size() != 9) throw ParseError(path + ": rotation must have 9 entries");
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) v.rotation.m[i][j] = rot[static_cast<size_t>(i) * 3 + j];
        const auto tr = jv.at("translation").get<std::vector<double>>();
        if (tr.size() != 3) throw ParseError(path + ": translation must have 3 entries");
        v.translation = {tr[0], tr[1], tr[2]};
        v.validate();
        if (v.view_index <= last_index) throw ParseError(path + ": view_index must be strictly increasing");
        last_index = v.view_index;
        views.push_back(v);
    }
    return views;
}

}  // namespace treesplat
