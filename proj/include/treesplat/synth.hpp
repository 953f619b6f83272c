#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "treesplat/cluster.hpp"
#include "treesplat/core.hpp"
#include "treesplat/forest.hpp"
#include "treesplat/render.hpp"
#include "treesplat/rng.hpp"

namespace treesplat {

// Synthetic multi-view scenes with known two-level hierarchy. Objects sit on
// a regular polygon in the xy plane, parts are Gaussian point blobs stacked
// along z inside each object, and cameras orbit the scene. Supervision label
// maps are produced by the project's own splatter (argmax blend weight per
// pixel), optionally corrupted by split/merge noise that mimics over- and
// under-segmented mask supervision.

struct SynthSpec {
    int objects = 2;
    int parts_per_object = 2;
    int points_per_part = 125;
    double object_spacing = 4.0;
    double part_spacing = 1.6;
    int views = 8;
    double orbit_radius = 12.0;
    int image_height = 64, image_width = 64;
    double merge_probability = 0.0;  // per view: chance of merging one part into a sibling
    double split_probability = 0.0;  // per view: chance of bisecting one part mask
    double noise_view_fraction = 1.0;  // leading fraction of views eligible for noise
    uint64_t seed = 0;
};

struct NoiseSpec {
    std::vector<double> taus{0.0, 0.05, 0.10, 0.15, 0.20};
    int seeds = 10;
    uint64_t base_seed = 0;
};

struct NoiseEvent {
    int view_index = 0;
    char kind = '?';  // 's' split, 'm' merge
    int32_t label = 0;
};

struct SynthResult {
    Scene scene;
    std::vector<View> views;
    std::vector<std::vector<LabelMap>> supervision;   // per view, levels 0..1, possibly corrupted
    std::vector<std::vector<LabelMap>> ground_truth;  // per view, clean renders
    std::vector<NoiseEvent> noise_events;

    bool view_corrupted(int view_index) const {
        for (const auto& e : noise_events)
            if (e.view_index == view_index) return true;
        return false;
    }
};

namespace synth_detail {

inline View make_orbit_view(int index, int total, double radius, int height, int width, double fx) {
    const double phi = 2.0 * 3.14159265358979323846 * index / total + 0.45;  // avoid axis alignment
    const Vec3 cam_pos{radius * std::cos(phi), radius * std::sin(phi), 0.15 * radius};
    const Vec3 forward = (Vec3{} - cam_pos).normalized();
    Vec3 right = forward.cross(Vec3{0, 0, 1});
    right = right.normalized();
    const Vec3 down = forward.cross(right);

    View v;
    v.rotation = Mat3::from_rows(right, down, forward);
    v.translation = (v.rotation * cam_pos) * -1.0;
    v.fx = v.fy = fx;
    v.cx = (width - 1) / 2.0;
    v.cy = (height - 1) / 2.0;
    v.height = height;
    v.width = width;
    v.view_index = index;
    return v;
}

inline std::vector<int32_t> labels_present(const LabelMap& map) {
    std::vector<int32_t> out;
    for (int32_t v : map.labels)
        if (v != 0 && std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace synth_detail

inline SynthResult generate(const SynthSpec& spec) {
    if (spec.objects < 1 || spec.parts_per_object < 1 || spec.points_per_part < 1 || spec.views < 1)
        throw UsageError("synth spec counts must be >= 1");
    if (spec.merge_probability < 0 || spec.merge_probability > 1 || spec.split_probability < 0 ||
        spec.split_probability > 1)
        throw UsageError("synth noise probabilities must lie in [0,1]");

    Rng rng(Rng::mix(spec.seed, 0x53594e54ULL));
    const double blob_sigma = spec.part_spacing / 4.0;
    const double object_radius = (spec.parts_per_object - 1) * spec.part_spacing / 2.0 + 3.0 * blob_sigma;

    // object layout on a regular polygon, re-jittered on collision
    std::vector<Vec3> object_centers;
    const double circumradius =
        spec.objects == 1 ? 0.0 : spec.object_spacing / (2.0 * std::sin(3.14159265358979323846 / spec.objects));
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        object_centers.clear();
        for (int o = 0; o < spec.objects; ++o) {
            const double a = 2.0 * 3.14159265358979323846 * o / spec.objects;
            Vec3 c{circumradius * std::cos(a), circumradius * std::sin(a), 0.0};
            c += Vec3{rng.uniform(-0.05, 0.05) * spec.object_spacing,
                      rng.uniform(-0.05, 0.05) * spec.object_spacing, 0.0};
            object_centers.push_back(c);
        }
        placed = true;
        for (size_t i = 0; i < object_centers.size() && placed; ++i)
            for (size_t j = i + 1; j < object_centers.size(); ++j)
                if ((object_centers[i] - object_centers[j]).norm() < 1.8 * object_radius) {
                    placed = false;
                    break;
                }
    }
    if (!placed) throw ParseError("synth: objects collide for this spec after 100 placement attempts");

    const double scene_radius = circumradius + object_radius;
    const double fx = 0.8 * 0.5 * std::min(spec.image_height, spec.image_width) * spec.orbit_radius / scene_radius;
    const double point_scale = 1.3 * spec.orbit_radius / fx;

    SynthResult out;
    out.scene.feature_dim = 6;

    // per-part world-space split direction, fixed for the whole capture so
    // split noise looks like a view-consistent over-segmentation
    std::vector<Vec3> part_split_dir;
    std::map<int32_t, std::pair<int, int>> part_owner;  // part label -> (object, part slot)

    const double palette[8][3] = {{0.9, 0.2, 0.2}, {0.2, 0.6, 0.9}, {0.2, 0.8, 0.3}, {0.9, 0.7, 0.1},
                                  {0.7, 0.3, 0.8}, {0.9, 0.5, 0.2}, {0.3, 0.8, 0.8}, {0.8, 0.3, 0.5}};
    for (int o = 0; o < spec.objects; ++o) {
        for (int j = 0; j < spec.parts_per_object; ++j) {
            const int32_t whole_id = o + 1;
            const int32_t part_id = spec.objects + o * spec.parts_per_object + j + 1;
            const Vec3 part_center =
                object_centers[o] + Vec3{0, 0, (j - (spec.parts_per_object - 1) / 2.0) * spec.part_spacing};
            for (int p = 0; p < spec.points_per_part; ++p) {
                GaussianPoint gp;
                gp.position = part_center + Vec3{blob_sigma * rng.normal(), blob_sigma * rng.normal(),
                                                 blob_sigma * rng.normal()};
                gp.scale = point_scale;
                gp.opacity = 0.8;
                const auto& col = palette[(o * spec.parts_per_object + j) % 8];
                gp.color = {col[0], col[1], col[2]};
                gp.feature.assign(6, 0.0);
                out.scene.points.push_back(std::move(gp));
                out.scene.gt_labels.push_back({whole_id, part_id, part_id});
            }
            const Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            part_split_dir.push_back(dir.norm() > 1e-9 ? dir.normalized() : Vec3{1, 0, 0});
            part_owner[part_id] = {o, j};
        }
    }

    std::vector<int> whole_ids(out.scene.points.size()), part_ids(out.scene.points.size());
    for (size_t i = 0; i < out.scene.points.size(); ++i) {
        whole_ids[i] = out.scene.gt_labels[i].whole;
        part_ids[i] = out.scene.gt_labels[i].part;
    }

    const int eligible_views = static_cast<int>(std::llround(spec.noise_view_fraction * spec.views));
    for (int v = 0; v < spec.views; ++v) {
        const View view = synth_detail::make_orbit_view(v, spec.views, spec.orbit_radius, spec.image_height,
                                                        spec.image_width, fx);
        out.views.push_back(view);
        const ContributionTable table = rasterize(out.scene, view);
        std::vector<LabelMap> clean;
        clean.push_back(render_label_map(table, whole_ids, 0));
        clean.push_back(render_label_map(table, part_ids, 1));
        out.ground_truth.push_back(clean);

        std::vector<LabelMap> sup = clean;
        if (v < eligible_views) {
            if (spec.merge_probability > 0.0 && rng.uniform() < spec.merge_probability &&
                spec.parts_per_object > 1) {
                const std::vector<int32_t> parts = synth_detail::labels_present(sup[1]);
                // candidates whose cyclic sibling is also visible, so the merge
                // really removes one mask
                std::vector<std::pair<int32_t, int32_t>> candidates;
                for (int32_t label : parts) {
                    const auto [obj, slot] = part_owner.at(label);
                    const int32_t sibling =
                        spec.objects + obj * spec.parts_per_object + (slot + 1) % spec.parts_per_object + 1;
                    if (std::find(parts.begin(), parts.end(), sibling) != parts.end())
                        candidates.emplace_back(label, sibling);
                }
                if (!candidates.empty()) {
                    const auto [victim, sibling] = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
                    for (int32_t& l : sup[1].labels)
                        if (l == victim) l = sibling;
                    out.noise_events.push_back({v, 'm', victim});
                }
            }
            if (spec.split_probability > 0.0 && rng.uniform() < spec.split_probability) {
                const std::vector<int32_t> parts = synth_detail::labels_present(sup[1]);
                if (!parts.empty()) {
                    const int32_t victim = parts[rng.uniform_int(static_cast<int>(parts.size()))];
                    // project the part's world split direction into the image
                    const auto [sobj, sslot] = part_owner.at(victim);
                    const Vec3 cam_dir = view.rotation * part_split_dir[sobj * spec.parts_per_object + sslot];
                    double dirx = cam_dir.x, diry = cam_dir.y;
                    const double dn = std::sqrt(dirx * dirx + diry * diry);
                    if (dn < 1e-9) {
                        dirx = 1.0;
                        diry = 0.0;
                    } else {
                        dirx /= dn;
                        diry /= dn;
                    }
                    double cx = 0.0, cy = 0.0;
                    int64_t cnt = 0;
                    for (int h = 0; h < sup[1].height; ++h)
                        for (int w = 0; w < sup[1].width; ++w)
                            if (sup[1].at(h, w) == victim) {
                                cx += w;
                                cy += h;
                                ++cnt;
                            }
                    if (cnt > 0) {
                        cx /= static_cast<double>(cnt);
                        cy /= static_cast<double>(cnt);
                        const int32_t fresh = forest_detail::max_label(sup) + 1;
                        bool split_any = false, kept_any = false;
                        for (int h = 0; h < sup[1].height; ++h) {
                            for (int w = 0; w < sup[1].width; ++w) {
                                if (sup[1].at(h, w) != victim) continue;
                                if ((w - cx) * dirx + (h - cy) * diry > 0.0) {
                                    sup[1].at(h, w) = fresh;
                                    split_any = true;
                                } else {
                                    kept_any = true;
                                }
                            }
                        }
                        if (split_any && kept_any) out.noise_events.push_back({v, 's', victim});
                    }
                }
            }
        }
        out.supervision.push_back(std::move(sup));
    }
    return out;
}

// f~ = f + tau * z with z ~ N(0, diag(sigma^2)); sigma is the per-channel
// standard deviation of the current features over all points.
inline Scene perturb_features(const Scene& scene, double tau, uint64_t seed) {
    Scene out = scene;
    if (tau == 0.0 || scene.points.empty()) return out;
    const int d = scene.feature_dim;
    std::vector<double> mean(static_cast<size_t>(d), 0.0), var(static_cast<size_t>(d), 0.0);
    for (const auto& p : scene.points)
        for (int c = 0; c < d; ++c) mean[c] += p.feature[c];
    for (double& m : mean) m /= static_cast<double>(scene.points.size());
    for (const auto& p : scene.points)
        for (int c = 0; c < d; ++c) {
            const double diff = p.feature[c] - mean[c];
            var[c] += diff * diff;
        }
    for (double& v : var) v /= static_cast<double>(scene.points.size());

    Rng rng(Rng::mix(seed, 0x70657274ULL));
    for (auto& p : out.points)
        for (int c = 0; c < d; ++c) p.feature[c] += tau * std::sqrt(var[c]) * rng.normal();
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct SegmentationScore {
    double miou = 0.0;
    double macc = 0.0;  // fraction of ground-truth masks with best IoU > threshold
    int64_t gt_masks = 0;
};

// Per ground-truth mask, IoU against its best-matching predicted mask in the
// same view, averaged over all views.
inline SegmentationScore miou_macc(const std::vector<LabelMap>& predicted,
                                   const std::vector<LabelMap>& ground_truth,
                                   double acc_threshold = 0.25) {
    if (predicted.size() != ground_truth.size()) throw UsageError("miou_macc: view count mismatch");
    SegmentationScore score;
    double iou_sum = 0.0;
    int64_t hits = 0;
    for (size_t v = 0; v < predicted.size(); ++v) {
        const LabelMap& pred = predicted[v];
        const LabelMap& gt = ground_truth[v];
        if (!pred.same_size(gt)) throw UsageError("miou_macc: map size mismatch");
        std::map<int32_t, int64_t> gt_count, pred_count;
        std::map<std::pair<int32_t, int32_t>, int64_t> inter;
        for (size_t i = 0; i < gt.labels.size(); ++i) {
            if (gt.labels[i] != 0) ++gt_count[gt.labels[i]];
            if (pred.labels[i] != 0) ++pred_count[pred.labels[i]];
            if (gt.labels[i] != 0 && pred.labels[i] != 0) ++inter[{gt.labels[i], pred.labels[i]}];
        }
        for (const auto& [gl, gc] : gt_count) {
            double best = 0.0;
            for (const auto& [pl, pc] : pred_count) {
                const auto it = inter.find({gl, pl});
                if (it == inter.end()) continue;
                const double iou = static_cast<double>(it->second) / static_cast<double>(gc + pc - it->second);
                best = std::max(best, iou);
            }
            iou_sum += best;
            if (best > acc_threshold) ++hits;
            ++score.gt_masks;
        }
    }
    if (score.gt_masks > 0) {
        score.miou = iou_sum / static_cast<double>(score.gt_masks);
        score.macc = static_cast<double>(hits) / static_cast<double>(score.gt_masks);
    }
    return score;
}

// Adjusted Rand index via the standard pair-counting contingency formula.
inline double cluster_ari(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw UsageError("cluster_ari: size mismatch");
    const int64_t n = static_cast<int64_t>(predicted.size());
    if (n < 2) return 1.0;

    std::map<int, int> pmap, tmap;
    for (int v : predicted) pmap.emplace(v, static_cast<int>(pmap.size()));
    for (int v : truth) tmap.emplace(v, static_cast<int>(tmap.size()));
    std::vector<int64_t> prow(pmap.size(), 0), tcol(tmap.size(), 0);
    std::map<std::pair<int, int>, int64_t> cell;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const int a = pmap[predicted[i]], b = tmap[truth[i]];
        ++prow[a];
        ++tcol[b];
        ++cell[{a, b}];
    }
    auto comb2 = [](int64_t x) { return x * (x - 1) / 2; };
    double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [k, v] : cell) sum_cells += static_cast<double>(comb2(v));
    for (int64_t v : prow) sum_rows += static_cast<double>(comb2(v));
    for (int64_t v : tcol) sum_cols += static_cast<double>(comb2(v));
    const double total = static_cast<double>(comb2(n));
    const double expected = sum_rows * sum_cols / total;
    const double maximum = 0.5 * (sum_rows + sum_cols);
    if (maximum == expected) return predicted == truth ? 1.0 : (sum_cells == expected ? 1.0 : 0.0);
    return (sum_cells - expected) / (maximum - expected);
}

// ---------------------------------------------------------------------------
// Click query: match the rendered feature under a pixel to cluster centroids
// by cosine similarity over the feature block, best node per depth.
// ---------------------------------------------------------------------------

struct ClickResult {
    bool selected = false;
    std::vector<int> node_per_depth;  // index = depth
};

inline ClickResult click_query(const Scene& scene, const View& view, int pixel_h, int pixel_w,
                               const ClusterTree& tree) {
    ClickResult out;
    const ContributionTable table = rasterize(scene, view);
    if (pixel_h < 0 || pixel_h >= view.height || pixel_w < 0 || pixel_w >= view.width)
        throw UsageError("click_query: pixel outside image");
    if (table.t_end[static_cast<size_t>(pixel_h) * view.width + pixel_w] > 0.9) return out;  // background

    const FeatureMap f = render_features(scene, table);
    const double* feat = f.pixel(pixel_h, pixel_w);
    const int d = scene.feature_dim;
    double fn = 0.0;
    for (int c = 0; c < d; ++c) fn += feat[c] * feat[c];
    fn = std::sqrt(fn);
    if (fn <= 0.0) return out;

    int max_depth = -1;
    for (const auto& n : tree.nodes) max_depth = std::max(max_depth, n.depth);
    out.selected = true;
    out.node_per_depth.assign(static_cast<size_t>(max_depth + 1), -1);
    for (int depth = 0; depth <= max_depth; ++depth) {
        double best = -2.0;
        for (const auto& n : tree.nodes) {
            if (n.depth != depth) continue;
            double cn = 0.0, dot = 0.0;
            for (int c = 0; c < d; ++c) {
                cn += n.centroid[c] * n.centroid[c];
                dot += n.centroid[c] * feat[c];
            }
            if (cn <= 0.0) continue;
            const double cosine = dot / (fn * std::sqrt(cn));
            if (cosine > best) {
                best = cosine;
                out.node_per_depth[depth] = n.node_id;
            }
        }
    }
    return out;
}

}  // namespace treesplat
