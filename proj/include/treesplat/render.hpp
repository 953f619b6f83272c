#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "treesplat/core.hpp"

namespace treesplat {

// Software splatter. Points are isotropic Gaussians; a splat's footprint is
// truncated at 3x its screen radius and per-pixel compositing stops once the
// running transmittance drops below kMinTransmittance. Everything is
// deterministic: points are visited in (depth, index) order and pixels
// row-major.

inline constexpr double kNearPlane = 0.01;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kFootprintSigmas = 3.0;

struct ProjectedPoint {
    double x = 0.0, y = 0.0;   // screen position, pixel units (pixel centers at integers)
    double depth = 0.0;        // camera-space z
    double radius = 0.0;       // screen radius in pixels
    bool visible = false;
};

inline ProjectedPoint project(const GaussianPoint& point, const View& view) {
    ProjectedPoint out;
    const Vec3 pc = view.to_camera(point.position);
    if (pc.z <= kNearPlane) return out;  // behind camera: invisible, not an error
    out.depth = pc.z;
    out.x = view.fx * pc.x / pc.z + view.cx;
    out.y = view.fy * pc.y / pc.z + view.cy;
    out.radius = point.scale * view.fx / pc.z;
    out.visible = true;
    return out;
}

struct Contribution {
    int32_t point_index;
    double weight;  // alpha_i * T_i
};

struct ContributionTable {
    int height = 0, width = 0;
    int64_t point_count = 0;  // of the scene it was built from, for staleness checks
    std::vector<std::vector<Contribution>> entries;  // row-major pixels
    std::vector<double> t_end;                       // residual transmittance per pixel

    const std::vector<Contribution>& at(int h, int w) const {
        return entries[static_cast<size_t>(h) * width + w];
    }
};

// Rasterize the whole scene, or only `subset` when given (used for
// subscene rendering). Entries per pixel are depth-sorted front to back;
// ties broken by point index.
inline ContributionTable rasterize(const Scene& scene, const View& view,
                                   const std::vector<int>* subset = nullptr) {
    const int h = view.height, w = view.width;
    ContributionTable table;
    table.height = h;
    table.width = w;
    table.point_count = static_cast<int64_t>(scene.points.size());
    table.entries.assign(static_cast<size_t>(h) * w, {});
    table.t_end.assign(static_cast<size_t>(h) * w, 1.0);

    struct Visible {
        double depth;
        int index;
        double x, y, radius, opacity;
    };
    std::vector<Visible> vis;
    auto consider = [&](int i) {
        const auto& p = scene.points[i];
        const ProjectedPoint pr = project(p, view);
        if (!pr.visible || p.opacity <= 0.0) return;
        vis.push_back({pr.depth, i, pr.x, pr.y, pr.radius, p.opacity});
    };
    if (subset) {
        for (int i : *subset) consider(i);
    } else {
        for (int i = 0; i < static_cast<int>(scene.points.size()); ++i) consider(i);
    }
    std::sort(vis.begin(), vis.end(), [](const Visible& a, const Visible& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.index < b.index;
    });

    // gather alphas; appending in global depth order keeps per-pixel lists sorted
    for (const auto& v : vis) {
        const double cut = kFootprintSigmas * v.radius;
        const int x0 = std::max(0, static_cast<int>(std::ceil(v.x - cut)));
        const int x1 = std::min(w - 1, static_cast<int>(std::floor(v.x + cut)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(v.y - cut)));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(v.y + cut)));
        const double inv2r2 = 1.0 / (2.0 * v.radius * v.radius);
        for (int py = y0; py <= y1; ++py) {
            for (int px = x0; px <= x1; ++px) {
                const double dx = px - v.x, dy = py - v.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 > cut * cut) continue;
                const double alpha = v.opacity * std::exp(-d2 * inv2r2);
                if (alpha <= 0.0) continue;
                table.entries[static_cast<size_t>(py) * w + px].push_back({v.index, alpha});
            }
        }
    }

    // composite: weight_i = alpha_i * prod_{j<i} (1 - alpha_j)
    for (size_t px = 0; px < table.entries.size(); ++px) {
        auto& list = table.entries[px];
        double t = 1.0;
        size_t kept = 0;
        for (size_t k = 0; k < list.size(); ++k) {
            const double alpha = list[k].weight;
            list[kept].point_index = list[k].point_index;
            list[kept].weight = alpha * t;
            ++kept;
            t *= (1.0 - alpha);
            if (t < kMinTransmittance) break;
        }
        list.resize(kept);
        list.shrink_to_fit();
        table.t_end[px] = t;
    }
    return table;
}

// F(h,w) = sum_i w_i f_i + T_end * background
inline FeatureMap render_features(const Scene& scene, const ContributionTable& table) {
    if (table.point_count != static_cast<int64_t>(scene.points.size()))
        throw std::runtime_error("stale contribution table: point count mismatch");
    const int d = scene.feature_dim;
    FeatureMap f(table.height, table.width, d);
    const std::vector<double> bg = scene.background_or_zero();
    for (int py = 0; py < table.height; ++py) {
        for (int px = 0; px < table.width; ++px) {
            double* out = f.pixel(py, px);
            for (const auto& e : table.at(py, px)) {
                const double* feat = scene.points[e.point_index].feature.data();
                for (int c = 0; c < d; ++c) out[c] += e.weight * feat[c];
            }
            const double t = table.t_end[static_cast<size_t>(py) * table.width + px];
            if (t > 0.0)
                for (int c = 0; c < d; ++c) out[c] += t * bg[c];
        }
    }
    return f;
}

// Adjoint of render_features with weights held constant:
// dL/df_i = sum_pixels w_{i,pixel} * grad_F(pixel). Output is a flat
// point-major, channel-fastest buffer of size point_count * D.
inline std::vector<double> backprop_features(const FeatureMap& grad_f, const ContributionTable& table) {
    const int d = grad_f.dim;
    std::vector<double> grad(static_cast<size_t>(table.point_count) * d, 0.0);
    for (int py = 0; py < table.height; ++py) {
        for (int px = 0; px < table.width; ++px) {
            const double* g = grad_f.pixel(py, px);
            for (const auto& e : table.at(py, px)) {
                double* dst = &grad[static_cast<size_t>(e.point_index) * d];
                for (int c = 0; c < d; ++c) dst[c] += e.weight * g[c];
            }
        }
    }
    return grad;
}

// Accumulated opacity (1 - T_end per pixel) thresholded into a binary region.
inline BinaryMask region_from_table(const ContributionTable& table, double theta_b) {
    BinaryMask b(table.height, table.width);
    for (size_t px = 0; px < table.t_end.size(); ++px) {
        double acc = 0.0;
        for (const auto& e : table.entries[px]) acc += e.weight;
        b.mask[px] = acc > theta_b ? 1 : 0;
    }
    return b;
}

inline BinaryMask render_subscene_region(const Scene& scene, const std::vector<int>& subset,
                                         const View& view, double theta_b = 0.5) {
    if (subset.empty()) throw std::invalid_argument("render_subscene_region: empty subset");
    const ContributionTable table = rasterize(scene, view, &subset);
    return region_from_table(table, theta_b);
}

// Per-pixel argmax-weight id assignment; pixels whose accumulated opacity
// stays at or below `coverage` keep label 0. Ties go to the lower id.
inline LabelMap render_label_map(const ContributionTable& table, const std::vector<int>& point_ids,
                                 int level, double coverage = 0.5) {
    LabelMap map(level, table.height, table.width);
    std::vector<std::pair<int, double>> acc;
    for (int py = 0; py < table.height; ++py) {
        for (int px = 0; px < table.width; ++px) {
            acc.clear();
            double total = 0.0;
            for (const auto& e : table.at(py, px)) {
                const int id = point_ids[e.point_index];
                total += e.weight;
                bool found = false;
                for (auto& [aid, aw] : acc) {
                    if (aid == id) {
                        aw += e.weight;
                        found = true;
                        break;
                    }
                }
                if (!found) acc.emplace_back(id, e.weight);
            }
            if (total <= coverage) continue;
            int best_id = 0;
            double best_w = -1.0;
            for (const auto& [aid, aw] : acc) {
                if (aw > best_w || (aw == best_w && aid < best_id)) {
                    best_w = aw;
                    best_id = aid;
                }
            }
            map.at(py, px) = best_id;
        }
    }
    return map;
}

// Debug color render (alpha-composited RGB over black).
inline std::vector<double> render_color(const Scene& scene, const ContributionTable& table) {
    std::vector<double> img(static_cast<size_t>(table.height) * table.width * 3, 0.0);
    for (size_t px = 0; px < table.entries.size(); ++px) {
        for (const auto& e : table.entries[px]) {
            const Vec3 c = scene.points[e.point_index].color;
            img[px * 3 + 0] += e.weight * c.x;
            img[px * 3 + 1] += e.weight * c.y;
            img[px * 3 + 2] += e.weight * c.z;
        }
    }
    return img;
}

}  // namespace treesplat
