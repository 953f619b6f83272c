#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "treesplat/core.hpp"
#include "treesplat/csd.hpp"

namespace treesplat {

// Region prototypes and the pull/push contrastive terms, with analytic
// gradients with respect to the rendered feature map F.
//
//   pull = sum_i sum_px [B] M_i ||F - mean_i||^2      (prototypes stop-grad)
//   push = 1/(m(m-1)) sum_{i != j} 1 / max(||mean_i - mean_j||^2, eps)
//
// The push gradient flows through the prototype means back to F; the pull
// term treats prototypes as constants (at the mask mean the direct prototype
// gradient vanishes anyway, so this matches finite differences exactly).

inline constexpr double kPushDistanceEps = 1e-8;

struct Prototype {
    int mask_node_id = -1;
    std::vector<double> mean;
    int64_t support_size = 0;
};

struct MaskView {
    int node_id = -1;
    const std::vector<int32_t>* pixels = nullptr;
};

// Mean of F over the mask support, optionally restricted to a binary region.
// Empty support yields nullopt: the caller drops that mask for this view.
inline std::optional<Prototype> prototype(const FeatureMap& f, const MaskView& mask,
                                          const BinaryMask* region = nullptr) {
    Prototype p;
    p.mask_node_id = mask.node_id;
    p.mean.assign(static_cast<size_t>(f.dim), 0.0);
    for (int32_t px : *mask.pixels) {
        if (region && !region->mask[px]) continue;
        const double* v = &f.values[static_cast<size_t>(px) * f.dim];
        for (int c = 0; c < f.dim; ++c) p.mean[c] += v[c];
        ++p.support_size;
    }
    if (p.support_size == 0) return std::nullopt;
    for (double& v : p.mean) v /= static_cast<double>(p.support_size);
    return p;
}

// Returns the loss value and accumulates d loss / d F into grad (if given).
inline double pull_loss(const FeatureMap& f, const std::vector<MaskView>& masks,
                        const std::vector<Prototype>& prototypes, const BinaryMask* region,
                        FeatureMap* grad) {
    double loss = 0.0;
    for (size_t i = 0; i < masks.size(); ++i) {
        const std::vector<double>& mean = prototypes[i].mean;
        for (int32_t px : *masks[i].pixels) {
            if (region && !region->mask[px]) continue;
            const double* v = &f.values[static_cast<size_t>(px) * f.dim];
            for (int c = 0; c < f.dim; ++c) {
                const double diff = v[c] - mean[c];
                loss += diff * diff;
                if (grad) grad->values[static_cast<size_t>(px) * f.dim + c] += 2.0 * diff;
            }
        }
    }
    return loss;
}

struct PushResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grad_means;  // d loss / d prototype mean
    bool skipped = false;                         // fewer than two prototypes
};

inline PushResult push_loss(const std::vector<Prototype>& prototypes, double eps = kPushDistanceEps) {
    PushResult out;
    const int m = static_cast<int>(prototypes.size());
    out.grad_means.assign(prototypes.size(), {});
    for (size_t i = 0; i < prototypes.size(); ++i)
        out.grad_means[i].assign(prototypes[i].mean.size(), 0.0);
    if (m < 2) {
        out.skipped = true;
        return out;
    }
    const double norm = 1.0 / (static_cast<double>(m) * (m - 1));
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            double d2 = 0.0;
            const auto& a = prototypes[i].mean;
            const auto& b = prototypes[j].mean;
            for (size_t c = 0; c < a.size(); ++c) {
                const double diff = a[c] - b[c];
                d2 += diff * diff;
            }
            if (d2 <= eps) {
                // clamped pair: flat contribution, zero gradient
                out.loss += 2.0 * norm / eps;
                continue;
            }
            out.loss += 2.0 * norm / d2;
            const double coef = -4.0 * norm / (d2 * d2);  // both ordered pairs
            for (size_t c = 0; c < a.size(); ++c) {
                const double diff = a[c] - b[c];
                out.grad_means[i][c] += coef * diff;
                out.grad_means[j][c] -= coef * diff;
            }
        }
    }
    return out;
}

struct LossBundle {
    double total = 0.0, pull = 0.0, push = 0.0;
    FeatureMap grad;  // d total / d F
    int m = 0;        // prototypes that had support
    bool push_skipped = false;
};

// Shared assembly for the global and local objectives. Masks without support
// in the region are silently dropped for this view.
inline LossBundle contrastive_loss(const FeatureMap& f, const std::vector<MaskView>& masks,
                                   const BinaryMask* region, CsdMode mode) {
    LossBundle out;
    out.grad = FeatureMap(f.height, f.width, f.dim);

    std::vector<MaskView> live;
    std::vector<Prototype> prototypes;
    for (const auto& mv : masks) {
        auto p = prototype(f, mv, region);
        if (!p) continue;
        live.push_back(mv);
        prototypes.push_back(std::move(*p));
    }
    out.m = static_cast<int>(prototypes.size());

    if (mode != CsdMode::Under) out.pull = pull_loss(f, live, prototypes, region, &out.grad);
    if (mode != CsdMode::Over) {
        PushResult push = push_loss(prototypes);
        out.push = push.loss;
        out.push_skipped = push.skipped;
        if (!push.skipped) {
            // scatter prototype-mean gradients over their supports
            for (size_t i = 0; i < live.size(); ++i) {
                const double inv = 1.0 / static_cast<double>(prototypes[i].support_size);
                for (int32_t px : *live[i].pixels) {
                    if (region && !region->mask[px]) continue;
                    double* g = &out.grad.values[static_cast<size_t>(px) * f.dim];
                    for (int c = 0; c < f.dim; ++c) g[c] += inv * push.grad_means[i][c];
                }
            }
        }
    }
    out.total = out.pull + out.push;
    return out;
}

inline LossBundle global_loss(const FeatureMap& f, const std::vector<MaskView>& coarse_masks) {
    return contrastive_loss(f, coarse_masks, nullptr, CsdMode::Optimal);
}

inline LossBundle local_loss(const FeatureMap& f, const std::vector<MaskView>& fine_masks,
                             const BinaryMask& region, CsdMode mode) {
    return contrastive_loss(f, fine_masks, &region, mode);
}

}  // namespace treesplat
