// treesplat: hierarchical instance-feature training for Gaussian point scenes.
//
// Subcommands cover the full pipeline (synth, forest, train, cluster, denoise,
// eval, query, sweep, render); see README.md for the typical flow.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "treesplat/io.hpp"
#include "treesplat/pipeline.hpp"
#include "treesplat/sweep.hpp"

namespace fs = std::filesystem;
using namespace treesplat;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    int64_t seed = -1;  // <0: keep config value

    Config load() const {
        Config cfg;
        if (!config_path.empty()) cfg = parse_config_file(config_path);
        if (seed >= 0) {
            cfg.train.seed = static_cast<uint64_t>(seed);
            cfg.synth.seed = static_cast<uint64_t>(seed);
            cfg.noise.base_seed = static_cast<uint64_t>(seed);
        } else {
            cfg.synth.seed = cfg.train.seed;
            cfg.noise.base_seed = cfg.train.seed;
        }
        return cfg;
    }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key = value config file");
    cmd->add_option("--seed", args.seed, "seed override");
    cmd->add_option("--out-dir", args.out_dir, "output directory");
}

std::string map_name(int view, int level) {
    return "view" + std::to_string(view) + "_l" + std::to_string(level) + ".pgm";
}

std::vector<std::vector<LabelMap>> load_map_dir(const std::string& dir) {
    std::vector<std::vector<LabelMap>> maps;
    for (int v = 0;; ++v) {
        if (!fs::exists(dir + "/" + map_name(v, 0))) break;
        std::vector<LabelMap> levels;
        for (int l = 0;; ++l) {
            const std::string p = dir + "/" + map_name(v, l);
            if (!fs::exists(p)) break;
            levels.push_back(load_labelmap(p, l));
        }
        maps.push_back(std::move(levels));
    }
    if (maps.empty()) throw ParseError("no view0_l0.pgm found in " + dir);
    return maps;
}

void save_map_dir(const std::vector<std::vector<LabelMap>>& maps, const std::string& dir) {
    fs::create_directories(dir);
    for (size_t v = 0; v < maps.size(); ++v)
        for (size_t l = 0; l < maps[v].size(); ++l)
            save_labelmap(maps[v][l], dir + "/" + map_name(static_cast<int>(v), static_cast<int>(l)));
}

PipelineInput load_data_dir(const std::string& dir) {
    PipelineInput in;
    in.scene = load_scene(dir + "/scene.ply");
    in.views = load_views(dir + "/views.json");
    in.supervision = load_map_dir(dir + "/maps");
    if (fs::exists(dir + "/gt_maps/" + map_name(0, 0))) in.ground_truth = load_map_dir(dir + "/gt_maps");
    if (in.supervision.size() != in.views.size())
        throw ParseError("view count mismatch between views.json and maps/");
    return in;
}

int cmd_synth(const CommonArgs& args) {
    const Config cfg = args.load();
    SynthResult r = generate(cfg.synth);
    fs::create_directories(args.out_dir);
    save_scene(r.scene, args.out_dir + "/scene.ply");
    save_views(r.views, args.out_dir + "/views.json");
    save_map_dir(r.supervision, args.out_dir + "/maps");
    save_map_dir(r.ground_truth, args.out_dir + "/gt_maps");

    nlohmann::ordered_json report;
    report["points"] = r.scene.points.size();
    report["views"] = r.views.size();
    report["noise_events"] = nlohmann::ordered_json::array();
    for (const auto& e : r.noise_events)
        report["noise_events"].push_back(
            {{"view_index", e.view_index}, {"kind", std::string(1, e.kind)}, {"label", e.label}});
    std::ofstream out(args.out_dir + "/report.json", std::ios::binary);
    out << report.dump(2) << "\n";
    std::printf("synth: %zu points, %zu views, %zu noise events -> %s\n", r.scene.points.size(),
                r.views.size(), r.noise_events.size(), args.out_dir.c_str());
    return 0;
}

int cmd_forest(const CommonArgs& args, const std::string& maps_dir) {
    const Config cfg = args.load();
    const auto maps = load_map_dir(maps_dir);
    fs::create_directories(args.out_dir);

    std::ofstream jsonl(args.out_dir + "/forest.jsonl", std::ios::binary);
    std::vector<std::vector<LabelMap>> refined_all;
    int total_nodes = 0;
    for (size_t v = 0; v < maps.size(); ++v) {
        const int64_t min_px = cfg.train.effective_min_mask_pixels(maps[v][0].height, maps[v][0].width);
        const auto refined = refine_levels(maps[v], min_px);
        const MaskForest forest = build_forest(refined, static_cast<int>(v));
        refined_all.push_back(refined);
        for (const auto& n : forest.nodes) {
            nlohmann::ordered_json j;
            j["id"] = n.node_id;
            j["view"] = n.view_index;
            j["level"] = n.level;
            j["parent"] = n.parent;
            j["pixel_count"] = n.pixel_count;
            jsonl << j.dump() << "\n";
            ++total_nodes;
        }
    }
    save_map_dir(refined_all, args.out_dir + "/refined");
    std::printf("forest: %zu views, %d nodes -> %s\n", maps.size(), total_nodes, args.out_dir.c_str());
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir) {
    Config cfg = args.load();
    PipelineInput input = load_data_dir(data_dir);
    const PipelineResult res = run_pipeline(std::move(input), cfg.train, args.out_dir);
    std::printf("train: %zu cluster nodes -> %s\n", res.tree.nodes.size(), args.out_dir.c_str());
    for (size_t d = 0; d < res.metrics.size(); ++d) {
        if (res.metrics[d].has_ari)
            std::printf("  depth %zu: ari=%.4f", d, res.metrics[d].ari);
        if (res.metrics[d].has_seg)
            std::printf(" miou=%.4f macc=%.4f", res.metrics[d].seg.miou, res.metrics[d].seg.macc);
        if (res.metrics[d].has_ari || res.metrics[d].has_seg) std::printf("\n");
    }
    return 0;
}

int cmd_cluster(const CommonArgs& args, const std::string& scene_path) {
    Config cfg = args.load();
    Scene scene = load_scene(scene_path);
    if (cfg.train.k_schedule.empty()) throw UsageError("cluster requires k_schedule in the config");
    ClusterTree tree = recursive_partition(scene, cfg.train.k_schedule, cfg.train.lambda_pos,
                                           cfg.train.max_tree_depth, cfg.train.min_cluster_points,
                                           cfg.train.seed, TrainerHooks{});
    fs::create_directories(args.out_dir);
    pipeline_detail::write_tree_jsonl(tree, args.out_dir + "/tree.jsonl");
    scene.cluster_l1 = resolve_assignment(tree, 0, scene.points.size());
    if (cfg.train.max_tree_depth > 1) scene.cluster_l2 = resolve_assignment(tree, 1, scene.points.size());
    save_scene(scene, args.out_dir + "/scene.ply");
    std::printf("cluster: %zu nodes -> %s\n", tree.nodes.size(), args.out_dir.c_str());
    return 0;
}

int cmd_denoise(const CommonArgs& args, const std::string& scene_path, const std::string& tree_path) {
    const Config cfg = args.load();
    Scene scene = load_scene(scene_path);
    ClusterTree tree = pipeline_detail::read_tree_jsonl(tree_path);
    std::vector<std::pair<int, DenoiseSummary>> summaries;
    for (auto& node : tree.nodes) summaries.emplace_back(node.node_id, denoise_cluster(scene, node, cfg.train.denoise));
    fs::create_directories(args.out_dir);
    pipeline_detail::write_denoise_csv(summaries, tree, args.out_dir + "/denoise.csv");
    pipeline_detail::write_tree_jsonl(tree, args.out_dir + "/tree.jsonl");

    // a point keeps flag 1 when its deepest cluster kept it
    int max_depth = 0;
    for (const auto& n : tree.nodes) max_depth = std::max(max_depth, n.depth);
    scene.denoise_kept.assign(scene.points.size(), 1);
    const std::vector<int> ids = resolve_assignment(tree, max_depth, scene.points.size());
    for (const auto& n : tree.nodes)
        for (int i : n.point_indices)
            if (ids[i] == n.node_id && n.denoised)
                scene.denoise_kept[i] =
                    std::binary_search(n.kept_indices.begin(), n.kept_indices.end(), i) ? 1 : 0;
    save_scene(scene, args.out_dir + "/scene.ply");
    std::printf("denoise: %zu clusters -> %s\n", tree.nodes.size(), args.out_dir.c_str());
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& artifacts_dir) {
    PipelineInput input = load_data_dir(data_dir);
    const Scene trained = load_scene(artifacts_dir + "/scene.ply");
    const ClusterTree tree = pipeline_detail::read_tree_jsonl(artifacts_dir + "/tree.jsonl");
    const auto metrics = evaluate_tree(trained, tree, input.views,
                                       input.ground_truth.empty() ? input.supervision : input.ground_truth);
    fs::create_directories(args.out_dir);
    pipeline_detail::write_metrics_json(metrics, args.out_dir + "/metrics.json");
    for (size_t d = 0; d < metrics.size(); ++d) {
        std::printf("depth %zu:", d);
        if (metrics[d].has_ari) std::printf(" ari=%.4f", metrics[d].ari);
        if (metrics[d].has_seg) std::printf(" miou=%.4f macc=%.4f", metrics[d].seg.miou, metrics[d].seg.macc);
        std::printf("\n");
    }
    return 0;
}

int cmd_query(const CommonArgs& args, const std::string& artifacts_dir, int view_index,
              const std::vector<int>& pixel) {
    if (pixel.size() != 2) throw UsageError("--pixel expects H,W");
    const Scene scene = load_scene(artifacts_dir + "/scene.ply");
    const std::vector<View> views = load_views(artifacts_dir + "/views.json");
    const ClusterTree tree = pipeline_detail::read_tree_jsonl(artifacts_dir + "/tree.jsonl");
    const View* view = nullptr;
    for (const auto& v : views)
        if (v.view_index == view_index) view = &v;
    if (!view) throw UsageError("view index not found: " + std::to_string(view_index));
    const ClickResult r = click_query(scene, *view, pixel[0], pixel[1], tree);
    if (!r.selected) {
        std::printf("no selection (background pixel)\n");
        return 0;
    }
    for (size_t d = 0; d < r.node_per_depth.size(); ++d)
        std::printf("depth %zu: node %d\n", d, r.node_per_depth[d]);
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const Config cfg = args.load();
    const auto rows = run_noise_sweep(cfg.synth, cfg.noise, cfg.train);
    fs::create_directories(args.out_dir);
    write_sweep_csv(rows, args.out_dir + "/sweep.csv");
    write_sweep_svg(rows, cfg.noise.taus, args.out_dir + "/sweep.svg");
    std::printf("sweep: %zu rows -> %s\n", rows.size(), args.out_dir.c_str());
    for (const char* arm : {"position", "feature_only"}) {
        std::printf("  %s medians:", arm);
        for (double m : sweep_medians(rows, arm, cfg.noise.taus)) std::printf(" %.3f", m);
        std::printf("\n");
    }
    return 0;
}

int cmd_render(const CommonArgs& args, const std::string& data_dir, int view_index) {
    PipelineInput input = load_data_dir(data_dir);
    const View* view = nullptr;
    for (const auto& v : input.views)
        if (v.view_index == view_index) view = &v;
    if (!view) throw UsageError("view index not found: " + std::to_string(view_index));
    const ContributionTable table = rasterize(input.scene, *view);
    const FeatureMap f = render_features(input.scene, table);
    fs::create_directories(args.out_dir);
    save_feature_map(f, args.out_dir + "/view" + std::to_string(view_index) + ".fmap");
    for (int c = 0; c < f.dim; ++c) {
        std::vector<double> chan(static_cast<size_t>(f.height) * f.width);
        for (int h = 0; h < f.height; ++h)
            for (int w = 0; w < f.width; ++w) chan[static_cast<size_t>(h) * f.width + w] = f.at(h, w, c);
        save_pgm8(chan, f.height, f.width,
                  args.out_dir + "/view" + std::to_string(view_index) + "_f" + std::to_string(c) + ".pgm");
    }
    std::printf("render: view %d -> %s\n", view_index, args.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"treesplat: hierarchical instance features for Gaussian point scenes"};
    app.require_subcommand(1);

    CommonArgs synth_args, forest_args, train_args, cluster_args, denoise_args, eval_args, query_args,
        sweep_args, render_args;
    std::string maps_dir, train_data, cluster_scene, denoise_scene, denoise_tree_path, eval_data,
        eval_artifacts, query_artifacts, render_data;
    int query_view = 0, render_view = 0;
    std::vector<int> query_pixel;

    auto* c_synth = app.add_subcommand("synth", "generate a synthetic scene with label maps");
    add_common(c_synth, synth_args);

    auto* c_forest = app.add_subcommand("forest", "refine label maps and build mask trees");
    add_common(c_forest, forest_args);
    c_forest->add_option("--maps-dir", maps_dir, "directory with view{v}_l{l}.pgm maps")->required();

    auto* c_train = app.add_subcommand("train", "run the full training pipeline");
    add_common(c_train, train_args);
    c_train->add_option("--data-dir", train_data, "directory written by synth")->required();

    auto* c_cluster = app.add_subcommand("cluster", "k-means partition of a trained scene");
    add_common(c_cluster, cluster_args);
    c_cluster->add_option("--scene", cluster_scene, "trained scene PLY")->required();

    auto* c_denoise = app.add_subcommand("denoise", "graph-denoise an existing cluster tree");
    add_common(c_denoise, denoise_args);
    c_denoise->add_option("--scene", denoise_scene, "scene PLY")->required();
    c_denoise->add_option("--tree", denoise_tree_path, "tree.jsonl")->required();

    auto* c_eval = app.add_subcommand("eval", "score artifacts against ground truth");
    add_common(c_eval, eval_args);
    c_eval->add_option("--data-dir", eval_data, "directory written by synth")->required();
    c_eval->add_option("--artifacts", eval_artifacts, "directory written by train")->required();

    auto* c_query = app.add_subcommand("query", "click-based cluster lookup");
    add_common(c_query, query_args);
    c_query->add_option("--artifacts", query_artifacts, "directory written by train")->required();
    c_query->add_option("--view", query_view, "view index")->required();
    c_query->add_option("--pixel", query_pixel, "pixel as H,W")->required()->delimiter(',');

    auto* c_sweep = app.add_subcommand("sweep", "noise-robustness sweep");
    add_common(c_sweep, sweep_args);

    auto* c_render = app.add_subcommand("render", "render feature maps for one view");
    add_common(c_render, render_args);
    c_render->add_option("--data-dir", render_data, "directory with scene.ply and views.json")->required();
    c_render->add_option("--view", render_view, "view index")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_synth->parsed()) return cmd_synth(synth_args);
        if (c_forest->parsed()) return cmd_forest(forest_args, maps_dir);
        if (c_train->parsed()) return cmd_train(train_args, train_data);
        if (c_cluster->parsed()) return cmd_cluster(cluster_args, cluster_scene);
        if (c_denoise->parsed()) return cmd_denoise(denoise_args, denoise_scene, denoise_tree_path);
        if (c_eval->parsed()) return cmd_eval(eval_args, eval_data, eval_artifacts);
        if (c_query->parsed()) return cmd_query(query_args, query_artifacts, query_view, query_pixel);
        if (c_sweep->parsed()) return cmd_sweep(sweep_args);
        if (c_render->parsed()) return cmd_render(render_args, render_data, render_view);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
