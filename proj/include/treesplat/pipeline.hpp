#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treesplat/cluster.hpp"
#include "treesplat/core.hpp"
#include "treesplat/csd.hpp"
#include "treesplat/denoise.hpp"
#include "treesplat/forest.hpp"
#include "treesplat/io.hpp"
#include "treesplat/losses.hpp"
#include "treesplat/render.hpp"
#include "treesplat/rng.hpp"
#include "treesplat/synth.hpp"

namespace treesplat {

// Two-stage cascade: global contrastive training over coarse masks, k-means
// into object nodes, then per-node local training gated by CSD and k-means
// into part nodes, followed by graph denoising of every node. Geometry and
// opacity stay frozen throughout; only instance features move.

struct TrainConfig {
    int global_steps = 2000;
    std::vector<int> local_steps{3000};  // per depth; last entry repeats
    double learning_rate = 2.5e-3;
    std::string optimizer = "adam";  // adam | sgd
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::vector<int> k_schedule;  // empty: derived from the mask forests
    double lambda_pos = 1.0;
    int csd_window = 9;
    double csd_match_threshold = 0.5;
    bool csd_symmetric_iou = false;
    int csd_recompute_interval = 100;
    bool csd_enabled = true;
    double theta_b = 0.5;
    DenoiseParams denoise;
    int max_tree_depth = 2;
    int min_cluster_points = 10;
    uint64_t seed = 0;
    double feature_init_range = 0.01;
    int64_t min_mask_pixels = 0;  // 0: scale mask_min_pixels_fullres by image area
    double mask_min_pixels_fullres = 2500.0;
    double mask_fullres_pixels = 738.0 * 994.0;

    void validate() const {
        if (global_steps < 0) throw UsageError("global_steps must be >= 0");
        for (int s : local_steps)
            if (s < 0) throw UsageError("local_steps must be >= 0");
        if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
        if (max_tree_depth < 1) throw UsageError("max_tree_depth must be >= 1");
        if (optimizer != "adam" && optimizer != "sgd") throw UsageError("optimizer must be adam or sgd");
        if (csd_window < 1 || csd_window % 2 == 0) throw UsageError("csd_window must be odd");
    }
    int local_steps_at(int depth) const {
        return local_steps.empty() ? 0 : local_steps[std::min<size_t>(depth, local_steps.size() - 1)];
    }
    int64_t effective_min_mask_pixels(int height, int width) const {
        if (min_mask_pixels > 0) return min_mask_pixels;
        return static_cast<int64_t>(std::max<long long>(
            8, std::llround(mask_min_pixels_fullres * height * width / mask_fullres_pixels)));
    }
};

// ---------------------------------------------------------------------------
// Optimizer over the feature coordinates of an active point set
// ---------------------------------------------------------------------------

class FeatureOptimizer {
public:
    FeatureOptimizer(const TrainConfig& cfg, const std::vector<int>& active_points, int feature_dim)
        : cfg_(cfg), active_(active_points), dim_(feature_dim) {
        if (cfg.optimizer == "adam") {
            m_.assign(active_.size() * static_cast<size_t>(dim_), 0.0);
            v_.assign(active_.size() * static_cast<size_t>(dim_), 0.0);
        }
    }

    // grad is a full scene buffer, point-major, channel-fastest
    void step(Scene& scene, const std::vector<double>& grad) {
        ++t_;
        const bool adam = cfg_.optimizer == "adam";
        const double bc1 = adam ? 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)) : 1.0;
        const double bc2 = adam ? 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)) : 1.0;
        for (size_t a = 0; a < active_.size(); ++a) {
            const int p = active_[a];
            for (int c = 0; c < dim_; ++c) {
                const double g = grad[static_cast<size_t>(p) * dim_ + c];
                double upd;
                if (adam) {
                    double& m = m_[a * static_cast<size_t>(dim_) + c];
                    double& v = v_[a * static_cast<size_t>(dim_) + c];
                    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
                    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
                    upd = cfg_.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
                } else {
                    upd = cfg_.learning_rate * g;
                }
                scene.points[p].feature[c] -= upd;
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<int> active_;
    int dim_;
    std::vector<double> m_, v_;  // adam moments over active coordinates
    int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training stages
// ---------------------------------------------------------------------------

struct CsdCsvRow {
    int node_id = -1;
    CsdRecord record;
};

struct PipelineContext {
    const std::vector<View>* views = nullptr;
    std::vector<MaskForest> forests;  // one per view, same order
    TrainConfig cfg;
    std::ostream* train_log = nullptr;          // CSV; header written by run_pipeline
    std::vector<CsdCsvRow>* csd_rows = nullptr;  // filled by local stages
};

namespace pipeline_detail {

inline std::vector<MaskView> level_masks(const MaskForest& forest, int level) {
    std::vector<MaskView> masks;
    for (const auto& n : forest.nodes)
        if (n.level == level) masks.push_back({n.node_id, &n.pixels});
    return masks;
}

inline double grad_norm(const std::vector<double>& grad) {
    double s = 0.0;
    for (double g : grad) s += g * g;
    return std::sqrt(s);
}

inline void log_row(std::ostream* log, int64_t step, const std::string& stage, int view, const LossBundle& b,
                    double gnorm) {
    if (!log) return;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%s,%d,%d,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(step),
                  stage.c_str(), view, b.m, b.pull, b.push, b.total, gnorm);
    (*log) << buf;
}

inline void check_finite(double loss, const std::string& stage, int64_t step) {
    if (!std::isfinite(loss))
        throw NumericError("non-finite loss in " + stage + " at step " + std::to_string(step));
}

}  // namespace pipeline_detail

inline void init_features(Scene& scene, const TrainConfig& cfg) {
    Rng rng(Rng::mix(cfg.seed, 0x696e6974ULL));
    for (auto& p : scene.points) {
        p.feature.resize(static_cast<size_t>(scene.feature_dim));
        for (double& f : p.feature) f = rng.uniform(-cfg.feature_init_range, cfg.feature_init_range);
    }
}

// Global stage: round-robin over views with at least one coarse mask,
// pull+push over the level-0 masks of the current view.
inline void train_global(Scene& scene, PipelineContext& ctx) {
    const auto& views = *ctx.views;
    std::vector<int> usable;
    std::vector<ContributionTable> tables(views.size());
    std::vector<std::vector<MaskView>> masks(views.size());
    for (size_t v = 0; v < views.size(); ++v) {
        masks[v] = pipeline_detail::level_masks(ctx.forests[v], 0);
        if (masks[v].empty()) {
            std::fprintf(stderr, "[treesplat] warning: view %d has no coarse masks, skipped in global stage\n",
                         views[v].view_index);
            continue;
        }
        tables[v] = rasterize(scene, views[v]);
        usable.push_back(static_cast<int>(v));
    }
    if (usable.empty() || ctx.cfg.global_steps == 0) return;

    std::vector<int> all(scene.points.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    FeatureOptimizer opt(ctx.cfg, all, scene.feature_dim);

    for (int s = 0; s < ctx.cfg.global_steps; ++s) {
        const int v = usable[s % usable.size()];
        const FeatureMap f = render_features(scene, tables[v]);
        const LossBundle bundle = global_loss(f, masks[v]);
        pipeline_detail::check_finite(bundle.total, "global", s);
        const std::vector<double> grad = backprop_features(bundle.grad, tables[v]);
        pipeline_detail::log_row(ctx.train_log, s, "global", views[v].view_index, bundle,
                                 pipeline_detail::grad_norm(grad));
        opt.step(scene, grad);
    }
}

// Local stage for one cluster node: render its points as a subscene, gate the
// fine-mask pull/push by the view's CSD mode, step only this node's features.
inline void train_local(Scene& scene, const ClusterNode& node, int depth, PipelineContext& ctx) {
    const auto& views = *ctx.views;
    const int fine_level = depth + 1;
    const int steps = ctx.cfg.local_steps_at(depth);
    const std::string stage = "local_d" + std::to_string(depth) + "_n" + std::to_string(node.node_id);

    struct ViewState {
        int view_pos;
        ContributionTable table;
        BinaryMask region;
        int64_t region_count;
        std::vector<MaskView> all_fine;
        std::vector<MaskView> matched;
    };
    std::vector<ViewState> included;
    for (size_t v = 0; v < views.size(); ++v) {
        if (static_cast<int>(ctx.forests[v].levels.size()) <= fine_level) continue;
        ViewState st;
        st.view_pos = static_cast<int>(v);
        st.table = rasterize(scene, views[v], &node.point_indices);
        st.region = region_from_table(st.table, ctx.cfg.theta_b);
        st.region_count = st.region.count();
        if (st.region_count == 0) continue;  // node invisible here; view excluded
        st.all_fine = pipeline_detail::level_masks(ctx.forests[v], fine_level);
        for (const auto& mv : st.all_fine)
            if (mask_matches_region(st.region, *mv.pixels, ctx.cfg.csd_match_threshold,
                                    ctx.cfg.csd_symmetric_iou, st.region_count))
                st.matched.push_back(mv);
        included.push_back(std::move(st));
    }
    if (included.empty()) {
        std::fprintf(stderr, "[treesplat] warning: node %d invisible from all views, local stage skipped\n",
                     node.node_id);
        return;
    }

    auto run_csd = [&]() {
        std::vector<CsdViewInput> inputs;
        for (const auto& st : included) {
            CsdViewInput in;
            in.view_index = views[st.view_pos].view_index;
            in.region = &st.region;
            for (const auto& mv : st.all_fine) in.fine_masks.push_back(mv.pixels);
            inputs.push_back(std::move(in));
        }
        return csd_pass(inputs, ctx.cfg.csd_window, ctx.cfg.csd_match_threshold, ctx.cfg.csd_symmetric_iou);
    };
    std::vector<CsdRecord> records = run_csd();

    FeatureOptimizer opt(ctx.cfg, node.point_indices, scene.feature_dim);
    for (int s = 0; s < steps; ++s) {
        if (s > 0 && ctx.cfg.csd_recompute_interval > 0 && s % ctx.cfg.csd_recompute_interval == 0)
            records = run_csd();
        const size_t pos = static_cast<size_t>(s) % included.size();
        const ViewState& st = included[pos];
        const CsdMode mode = ctx.cfg.csd_enabled ? records[pos].mode : CsdMode::Optimal;
        const FeatureMap f = render_features(scene, st.table);
        const LossBundle bundle = local_loss(f, st.matched, st.region, mode);
        pipeline_detail::check_finite(bundle.total, stage, s);
        const std::vector<double> grad = backprop_features(bundle.grad, st.table);
        pipeline_detail::log_row(ctx.train_log, s, stage, views[st.view_pos].view_index, bundle,
                                 pipeline_detail::grad_norm(grad));
        opt.step(scene, grad);
    }

    if (ctx.csd_rows)
        for (const auto& r : records) ctx.csd_rows->push_back({node.node_id, r});
}

// ---------------------------------------------------------------------------
// Pipeline composition
// ---------------------------------------------------------------------------

struct PipelineInput {
    Scene scene;
    std::vector<View> views;
    std::vector<std::vector<LabelMap>> supervision;
    std::vector<std::vector<LabelMap>> ground_truth;  // may be empty

    static PipelineInput from_synth(SynthResult&& r) {
        PipelineInput in;
        in.scene = std::move(r.scene);
        in.views = std::move(r.views);
        in.supervision = std::move(r.supervision);
        in.ground_truth = std::move(r.ground_truth);
        return in;
    }
};

struct DepthMetrics {
    bool has_ari = false;
    double ari = 0.0;
    bool has_seg = false;
    SegmentationScore seg;
};

struct PipelineResult {
    Scene scene;
    ClusterTree tree;
    std::vector<MaskForest> forests;
    std::vector<CsdCsvRow> csd_rows;
    std::vector<DepthMetrics> metrics;  // index = depth
    std::vector<std::pair<int, DenoiseSummary>> denoise_summaries;
};

inline std::vector<MaskForest> build_forests(const std::vector<std::vector<LabelMap>>& supervision,
                                             const TrainConfig& cfg, const std::vector<View>& views) {
    std::vector<MaskForest> forests;
    for (size_t v = 0; v < supervision.size(); ++v) {
        const int64_t min_px =
            cfg.effective_min_mask_pixels(supervision[v][0].height, supervision[v][0].width);
        forests.push_back(build_forest(refine_levels(supervision[v], min_px),
                                       v < views.size() ? views[v].view_index : static_cast<int>(v)));
    }
    return forests;
}

inline std::vector<int> derive_k_schedule(const std::vector<MaskForest>& forests, int max_tree_depth) {
    auto median = [](std::vector<int> v) {
        if (v.empty()) return 1;
        std::sort(v.begin(), v.end());
        return std::max(1, v[(v.size() - 1) / 2]);
    };
    std::vector<int> roots_per_view, children_per_root;
    for (const auto& f : forests) {
        roots_per_view.push_back(static_cast<int>(f.roots.size()));
        for (int r : f.roots) children_per_root.push_back(static_cast<int>(f.nodes[r].children.size()));
    }
    std::vector<int> k{median(roots_per_view)};
    if (max_tree_depth > 1) k.push_back(median(children_per_root));
    return k;
}

// Per-point node id at `depth`; points whose branch stopped earlier keep the
// deepest ancestor at or above that depth.
inline std::vector<int> resolve_assignment(const ClusterTree& tree, int depth, size_t n_points) {
    std::vector<int> ids(n_points, -1);
    for (int d = 0; d <= depth; ++d)
        for (const auto& n : tree.nodes)
            if (n.depth == d)
                for (int i : n.point_indices) ids[i] = n.node_id;
    return ids;
}

// Label ids for rendering a depth's segmentation: node_id + 1, with points
// dropped by that node's denoising mapped to background.
inline std::vector<int> render_ids_at_depth(const ClusterTree& tree, int depth, size_t n_points) {
    std::vector<int> ids = resolve_assignment(tree, depth, n_points);
    for (auto& v : ids) v = v >= 0 ? v + 1 : 0;
    for (const auto& n : tree.nodes) {
        if (!n.denoised) continue;
        for (int i : n.point_indices) {
            if (ids[i] != n.node_id + 1) continue;
            if (!std::binary_search(n.kept_indices.begin(), n.kept_indices.end(), i)) ids[i] = 0;
        }
    }
    return ids;
}

inline ClusterTree run_cascade(Scene& scene, PipelineContext& ctx, bool include_global) {
    std::vector<int> k = ctx.cfg.k_schedule;
    if (k.empty()) k = derive_k_schedule(ctx.forests, ctx.cfg.max_tree_depth);
    TrainerHooks hooks;
    if (include_global) hooks.train_global = [&](Scene& s) { train_global(s, ctx); };
    hooks.train_local = [&](Scene& s, const ClusterNode& node, int depth) { train_local(s, node, depth, ctx); };
    return recursive_partition(scene, k, ctx.cfg.lambda_pos, ctx.cfg.max_tree_depth,
                               ctx.cfg.min_cluster_points, ctx.cfg.seed, hooks);
}

inline std::vector<std::pair<int, DenoiseSummary>> denoise_tree(const Scene& scene, ClusterTree& tree,
                                                                const DenoiseParams& params) {
    std::vector<std::pair<int, DenoiseSummary>> out;
    for (auto& node : tree.nodes) out.emplace_back(node.node_id, denoise_cluster(scene, node, params));
    return out;
}

inline std::vector<DepthMetrics> evaluate_tree(const Scene& scene, const ClusterTree& tree,
                                               const std::vector<View>& views,
                                               const std::vector<std::vector<LabelMap>>& gt_maps) {
    int max_depth = -1;
    for (const auto& n : tree.nodes) max_depth = std::max(max_depth, n.depth);
    std::vector<DepthMetrics> metrics(static_cast<size_t>(max_depth + 1));

    for (int depth = 0; depth <= max_depth; ++depth) {
        DepthMetrics& dm = metrics[depth];
        if (scene.has_gt()) {
            std::vector<int> truth(scene.points.size());
            for (size_t i = 0; i < truth.size(); ++i) {
                const auto& g = scene.gt_labels[i];
                truth[i] = depth == 0 ? g.whole : (depth == 1 ? g.part : g.subpart);
            }
            dm.ari = cluster_ari(resolve_assignment(tree, depth, scene.points.size()), truth);
            dm.has_ari = true;
        }
        if (!gt_maps.empty() && static_cast<int>(gt_maps[0].size()) > depth) {
            const std::vector<int> ids = render_ids_at_depth(tree, depth, scene.points.size());
            std::vector<LabelMap> predicted, truth_maps;
            for (size_t v = 0; v < views.size(); ++v) {
                const ContributionTable table = rasterize(scene, views[v]);
                predicted.push_back(render_label_map(table, ids, depth));
                truth_maps.push_back(gt_maps[v][depth]);
            }
            dm.seg = miou_macc(predicted, truth_maps);
            dm.has_seg = true;
        }
    }
    return metrics;
}

// ---------------------------------------------------------------------------
// Artifact writing
// ---------------------------------------------------------------------------

namespace pipeline_detail {

inline void write_tree_jsonl(const ClusterTree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    for (const auto& n : tree.nodes) {
        nlohmann::ordered_json j;
        j["node_id"] = n.node_id;
        j["depth"] = n.depth;
        j["parent"] = n.parent;
        j["children"] = n.children;
        j["centroid"] = n.centroid;
        j["size"] = n.point_indices.size();
        j["point_indices"] = n.point_indices;
        j["denoised"] = n.denoised;
        j["kept_indices"] = n.kept_indices;
        out << j.dump() << "\n";
    }
}

inline ClusterTree read_tree_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    ClusterTree tree;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        ClusterNode n;
        n.node_id = j.at("node_id").get<int>();
        n.depth = j.at("depth").get<int>();
        n.parent = j.at("parent").get<int>();
        n.children = j.at("children").get<std::vector<int>>();
        n.centroid = j.at("centroid").get<std::vector<double>>();
        n.point_indices = j.at("point_indices").get<std::vector<int>>();
        n.denoised = j.at("denoised").get<bool>();
        n.kept_indices = j.at("kept_indices").get<std::vector<int>>();
        if (n.parent < 0) tree.roots.push_back(n.node_id);
        tree.nodes.push_back(std::move(n));
    }
    return tree;
}

inline void write_csd_csv(const std::vector<CsdCsvRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "node_id,view_index,n,n_smoothed,n_hat,mode\n";
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.9g,%d,%s\n", r.node_id, r.record.view_index,
                      r.record.split_number, r.record.smoothed, r.record.reference, to_string(r.record.mode));
        out << buf;
    }
}

inline void write_denoise_csv(const std::vector<std::pair<int, DenoiseSummary>>& summaries,
                              const ClusterTree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "node_id,depth,total,removed,restored,sigma_pos,sigma_feat,skipped\n";
    for (const auto& [node_id, s] : summaries) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%d,%d,%lld,%lld,%lld,%.9g,%.9g,%d\n", node_id,
                      tree.nodes[node_id].depth, static_cast<long long>(s.total),
                      static_cast<long long>(s.removed), static_cast<long long>(s.restored), s.sigma_pos,
                      s.sigma_feat, s.skipped ? 1 : 0);
        out << buf;
    }
}

inline void write_metrics_json(const std::vector<DepthMetrics>& metrics, const std::string& path) {
    nlohmann::ordered_json root;
    for (size_t d = 0; d < metrics.size(); ++d) {
        nlohmann::ordered_json j;
        if (metrics[d].has_ari) j["ari"] = metrics[d].ari;
        if (metrics[d].has_seg) {
            j["miou"] = metrics[d].seg.miou;
            j["macc"] = metrics[d].seg.macc;
            j["gt_masks"] = metrics[d].seg.gt_masks;
        }
        root["depth" + std::to_string(d)] = j;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << root.dump(2) << "\n";
}

}  // namespace pipeline_detail

// Full pipeline. When out_dir is non-empty all artifacts are written there;
// on a stage failure whatever exists is persisted before the error is
// rethrown with the stage name attached.
inline PipelineResult run_pipeline(PipelineInput input, const TrainConfig& cfg,
                                   const std::string& out_dir = "") {
    cfg.validate();
    PipelineResult res;
    res.scene = std::move(input.scene);

    std::ofstream train_log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        train_log.open(out_dir + "/train_log.csv", std::ios::binary);
        train_log << "step,stage,view,m,pull,push,total,grad_norm\n";
    }

    PipelineContext ctx;
    ctx.views = &input.views;
    ctx.cfg = cfg;
    ctx.train_log = train_log.is_open() ? &train_log : nullptr;
    ctx.csd_rows = &res.csd_rows;

    auto persist = [&]() {
        if (out_dir.empty()) return;
        res.scene.cluster_l1 = resolve_assignment(res.tree, 0, res.scene.points.size());
        if (cfg.max_tree_depth > 1)
            res.scene.cluster_l2 = resolve_assignment(res.tree, 1, res.scene.points.size());
        save_scene(res.scene, out_dir + "/scene.ply");
        save_views(input.views, out_dir + "/views.json");
        pipeline_detail::write_tree_jsonl(res.tree, out_dir + "/tree.jsonl");
        pipeline_detail::write_csd_csv(res.csd_rows, out_dir + "/csd.csv");
        pipeline_detail::write_metrics_json(res.metrics, out_dir + "/metrics.json");
    };

    std::string stage = "forest";
    try {
        ctx.forests = build_forests(input.supervision, cfg, input.views);
        for (auto& f : ctx.forests) res.forests.push_back(f);

        stage = "train";
        init_features(res.scene, cfg);
        res.tree = run_cascade(res.scene, ctx, /*include_global=*/true);

        stage = "denoise";
        res.denoise_summaries = denoise_tree(res.scene, res.tree, cfg.denoise);

        stage = "eval";
        res.metrics = evaluate_tree(res.scene, res.tree, input.views, input.ground_truth);
    } catch (const NumericError& e) {
        persist();
        throw NumericError("stage " + stage + ": " + e.what());
    } catch (const UsageError& e) {
        throw UsageError("stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
        persist();
        throw ParseError("stage " + stage + ": " + e.what());
    }

    persist();
    if (!out_dir.empty())
        pipeline_detail::write_denoise_csv(res.denoise_summaries, res.tree, out_dir + "/denoise.csv");
    return res;
}

// ---------------------------------------------------------------------------
// key = value config files
// ---------------------------------------------------------------------------

struct Config {
    TrainConfig train;
    SynthSpec synth;
    NoiseSpec noise;
};

namespace pipeline_detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config key '" + key + "': expected boolean, got '" + v + "'");
}

}  // namespace pipeline_detail

inline void apply_config_entry(Config& cfg, const std::string& key, const std::string& value) {
    using pipeline_detail::parse_bool;
    using pipeline_detail::split_list;
    auto as_int = [&] {
        try {
            return std::stoll(value);
        } catch (...) {
            throw UsageError("config key '" + key + "': expected integer, got '" + value + "'");
        }
    };
    auto as_double = [&] {
        try {
            return std::stod(value);
        } catch (...) {
            throw UsageError("config key '" + key + "': expected number, got '" + value + "'");
        }
    };
    auto as_int_list = [&] {
        std::vector<int> out;
        for (const auto& item : split_list(value)) out.push_back(std::stoi(item));
        if (out.empty()) throw UsageError("config key '" + key + "': empty list");
        return out;
    };

    TrainConfig& t = cfg.train;
    SynthSpec& s = cfg.synth;
    if (key == "global_steps") t.global_steps = static_cast<int>(as_int());
    else if (key == "local_steps") t.local_steps = as_int_list();
    else if (key == "learning_rate") t.learning_rate = as_double();
    else if (key == "optimizer") t.optimizer = value;
    else if (key == "beta1") t.beta1 = as_double();
    else if (key == "beta2") t.beta2 = as_double();
    else if (key == "adam_eps") t.adam_eps = as_double();
    else if (key == "k_schedule") t.k_schedule = as_int_list();
    else if (key == "lambda_pos") t.lambda_pos = as_double();
    else if (key == "csd_window") t.csd_window = static_cast<int>(as_int());
    else if (key == "csd_match_threshold") t.csd_match_threshold = as_double();
    else if (key == "csd_iou") {
        if (value == "recall") t.csd_symmetric_iou = false;
        else if (value == "symmetric") t.csd_symmetric_iou = true;
        else throw UsageError("config key 'csd_iou': expected recall or symmetric");
    }
    else if (key == "csd_recompute_interval") t.csd_recompute_interval = static_cast<int>(as_int());
    else if (key == "csd_enabled") t.csd_enabled = parse_bool(value, key);
    else if (key == "theta_b") t.theta_b = as_double();
    else if (key == "denoise_tau1_multiplier") t.denoise.tau1_multiplier = as_double();
    else if (key == "denoise_tau2_multiplier") t.denoise.tau2_multiplier = as_double();
    else if (key == "denoise_obb_scale") t.denoise.obb_scale = as_double();
    else if (key == "denoise_pair_sample_cap") t.denoise.pair_sample_cap = as_int();
    else if (key == "denoise_square_thresholds") t.denoise.square_thresholds = parse_bool(value, key);
    else if (key == "max_tree_depth") t.max_tree_depth = static_cast<int>(as_int());
    else if (key == "min_cluster_points") t.min_cluster_points = static_cast<int>(as_int());
    else if (key == "seed") t.seed = static_cast<uint64_t>(as_int());
    else if (key == "feature_init_range") t.feature_init_range = as_double();
    else if (key == "min_mask_pixels") t.min_mask_pixels = as_int();
    else if (key == "mask_min_pixels_fullres") t.mask_min_pixels_fullres = as_double();
    else if (key == "mask_fullres_pixels") t.mask_fullres_pixels = as_double();
    else if (key == "objects") s.objects = static_cast<int>(as_int());
    else if (key == "parts_per_object") s.parts_per_object = static_cast<int>(as_int());
    else if (key == "points_per_part") s.points_per_part = static_cast<int>(as_int());
    else if (key == "object_spacing") s.object_spacing = as_double();
    else if (key == "part_spacing") s.part_spacing = as_double();
    else if (key == "views") s.views = static_cast<int>(as_int());
    else if (key == "orbit_radius") s.orbit_radius = as_double();
    else if (key == "image_height") s.image_height = static_cast<int>(as_int());
    else if (key == "image_width") s.image_width = static_cast<int>(as_int());
    else if (key == "merge_probability") s.merge_probability = as_double();
    else if (key == "split_probability") s.split_probability = as_double();
    else if (key == "noise_view_fraction") s.noise_view_fraction = as_double();
    else if (key == "sweep_taus") {
        cfg.noise.taus.clear();
        for (const auto& item : split_list(value)) cfg.noise.taus.push_back(std::stod(item));
        if (cfg.noise.taus.empty()) throw UsageError("config key 'sweep_taus': empty list");
    }
    else if (key == "sweep_seeds") cfg.noise.seeds = static_cast<int>(as_int());
    else throw UsageError("unknown config key '" + key + "'");
}

inline Config parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string l = pipeline_detail::trim(line);
        if (l.empty() || l[0] == '#') continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        apply_config_entry(cfg, pipeline_detail::trim(l.substr(0, eq)), pipeline_detail::trim(l.substr(eq + 1)));
    }
    cfg.noise.base_seed = cfg.train.seed;
    return cfg;
}

}  // namespace treesplat
