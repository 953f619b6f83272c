#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include "treesplat/pipeline.hpp"
#include "treesplat/synth.hpp"

namespace treesplat {

// Noise-robustness harness: train the global stage once per seed, perturb the
// learned features at each tau, then finish the cascade twice — once
// clustering in the joint feature+position space and once on features alone —
// and record depth-1 recovery quality.

struct SweepRow {
    double tau = 0.0;
    std::string arm;  // "position" or "feature_only"
    int seed = 0;
    double ari = 0.0;
    double miou = 0.0;
    double runtime_s = 0.0;
};

inline std::vector<SweepRow> run_noise_sweep(const SynthSpec& base_spec, const NoiseSpec& noise,
                                             const TrainConfig& base_cfg) {
    std::vector<SweepRow> rows;
    for (int s = 0; s < noise.seeds; ++s) {
        SynthSpec spec = base_spec;
        spec.seed = Rng::mix(noise.base_seed, 101 + s);
        SynthResult gen = generate(spec);

        TrainConfig cfg = base_cfg;
        cfg.seed = Rng::mix(spec.seed, 7);

        const std::vector<MaskForest> forests = build_forests(gen.supervision, cfg, gen.views);

        Scene trained = gen.scene;
        init_features(trained, cfg);
        {
            PipelineContext ctx;
            ctx.views = &gen.views;
            ctx.forests = forests;
            ctx.cfg = cfg;
            train_global(trained, ctx);
        }

        for (size_t ti = 0; ti < noise.taus.size(); ++ti) {
            const double tau = noise.taus[ti];
            const Scene perturbed = perturb_features(trained, tau, Rng::mix(spec.seed, 31 + ti));
            for (const double lambda : {base_cfg.lambda_pos, 0.0}) {
                const auto t0 = std::chrono::steady_clock::now();
                Scene sc = perturbed;
                PipelineContext ctx;
                ctx.views = &gen.views;
                ctx.forests = forests;
                ctx.cfg = cfg;
                ctx.cfg.lambda_pos = lambda;
                ClusterTree tree = run_cascade(sc, ctx, /*include_global=*/false);
                denoise_tree(sc, tree, ctx.cfg.denoise);
                const std::vector<DepthMetrics> metrics = evaluate_tree(sc, tree, gen.views, gen.ground_truth);

                SweepRow row;
                row.tau = tau;
                row.arm = lambda != 0.0 ? "position" : "feature_only";
                row.seed = s;
                if (metrics.size() > 1 && metrics[1].has_ari) row.ari = metrics[1].ari;
                if (metrics.size() > 1 && metrics[1].has_seg) row.miou = metrics[1].seg.miou;
                row.runtime_s =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                rows.push_back(row);
            }
        }
    }
    return rows;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> sweep_medians(const std::vector<SweepRow>& rows, const std::string& arm,
                                         const std::vector<double>& taus, bool use_miou = false) {
    std::vector<double> out;
    for (double tau : taus) {
        std::vector<double> vals;
        for (const auto& r : rows)
            if (r.arm == arm && r.tau == tau) vals.push_back(use_miou ? r.miou : r.ari);
        out.push_back(median_of(vals));
    }
    return out;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "tau,arm,seed,ari,miou,runtime_s\n";
    for (const auto& r : rows) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%.9g,%s,%d,%.9g,%.9g,%.9g\n", r.tau, r.arm.c_str(), r.seed, r.ari,
                      r.miou, r.runtime_s);
        out << buf;
    }
}

// Median quality vs tau, one polyline per arm.
inline void write_sweep_svg(const std::vector<SweepRow>& rows, const std::vector<double>& taus,
                            const std::string& path) {
    const int w = 640, h = 420, ml = 70, mr = 30, mt = 40, mb = 60;
    const double px = w - ml - mr, py = h - mt - mb;
    const double tau_max = taus.empty() ? 1.0 : std::max(1e-9, *std::max_element(taus.begin(), taus.end()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>depth-1 ARI vs feature noise</text>\n";
    // axes
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    for (int g = 0; g <= 5; ++g) {
        const double q = g / 5.0;
        const double y = h - mb - q * py;
        out << "<text x='" << ml - 8 << "' y='" << y + 4 << "' text-anchor='end' font-size='11'>" << q
            << "</text>\n";
        out << "<line x1='" << ml << "' y1='" << y << "' x2='" << w - mr << "' y2='" << y
            << "' stroke='#dddddd'/>\n";
    }
    for (double tau : taus) {
        const double x = ml + (tau / tau_max) * px;
        out << "<text x='" << x << "' y='" << h - mb + 18 << "' text-anchor='middle' font-size='11'>" << tau
            << "</text>\n";
    }
    out << "<text x='" << w / 2 << "' y='" << h - 14 << "' text-anchor='middle' font-size='13'>tau</text>\n";

    const char* colors[2] = {"#c0392b", "#2980b9"};
    const char* arms[2] = {"position", "feature_only"};
    for (int a = 0; a < 2; ++a) {
        const std::vector<double> med = sweep_medians(rows, arms[a], taus);
        out << "<polyline fill='none' stroke='" << colors[a] << "' stroke-width='2' points='";
        for (size_t i = 0; i < taus.size(); ++i) {
            const double x = ml + (taus[i] / tau_max) * px;
            const double y = h - mb - std::clamp(med[i], 0.0, 1.0) * py;
            out << x << "," << y << " ";
        }
        out << "'/>\n";
        out << "<text x='" << w - mr - 8 << "' y='" << mt + 18 + 18 * a << "' text-anchor='end' fill='"
            << colors[a] << "' font-size='13'>" << arms[a] << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace treesplat
