#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "treesplat/cluster.hpp"
#include "treesplat/core.hpp"
#include "treesplat/rng.hpp"

namespace treesplat {

// Graph-based cluster denoising. Edges connect points that are close in both
// position and feature space:
//
//   W_ij = exp(-|p_i-p_j|^2 / 2 sigma1^2) + exp(-|f_i-f_j|^2 / 2 sigma2^2)
//          when |p_i-p_j|^2 < tau_pos^2 and |f_i-f_j|^2 < tau_feat^2, else 0
//
// tau thresholds are multiples of the minimum nonzero pairwise distance; they
// are defined on distances and squared before the comparison so both the
// weight formula and the multiplier definition hold at once
// (square_thresholds=false compares the squared distance against the raw
// multiplier value instead).
// A point is dropped when its connection strength (row sum) falls below the
// cluster mean, then re-admitted if it lands inside the 1.2x-scaled oriented
// bounding box of the surviving points.

struct DenoiseParams {
    double tau1_multiplier = 100.0;  // position threshold, times min nonzero distance
    double tau2_multiplier = 50.0;   // feature threshold, times min nonzero distance
    double obb_scale = 1.2;
    int64_t pair_sample_cap = 100000;  // pairs used for sigma estimation on large clusters
    bool square_thresholds = true;
    uint64_t seed = 17;
};

struct ScaleEstimate {
    double sigma_pos = 0.0, sigma_feat = 0.0;
    double tau_pos = 0.0, tau_feat = 0.0;
    bool degenerate = false;  // no nonzero distance in one of the spaces
};

namespace denoise_detail {

inline double feat_sq_dist(const Scene& scene, int a, int b) {
    const auto& fa = scene.points[a].feature;
    const auto& fb = scene.points[b].feature;
    double s = 0.0;
    for (size_t c = 0; c < fa.size(); ++c) {
        const double d = fa[c] - fb[c];
        s += d * d;
    }
    return s;
}

inline double pos_sq_dist(const Scene& scene, int a, int b) {
    return (scene.points[a].position - scene.points[b].position).squared_norm();
}

}  // namespace denoise_detail

inline ScaleEstimate estimate_scales(const Scene& scene, const std::vector<int>& indices,
                                     const DenoiseParams& params) {
    ScaleEstimate est;
    const int64_t n = static_cast<int64_t>(indices.size());
    if (n < 2) {
        est.degenerate = true;
        return est;
    }

    // exact minimum nonzero distances over all pairs
    double min_pos = -1.0, min_feat = -1.0;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            const double dp = denoise_detail::pos_sq_dist(scene, indices[i], indices[j]);
            const double df = denoise_detail::feat_sq_dist(scene, indices[i], indices[j]);
            if (dp > 0.0 && (min_pos < 0.0 || dp < min_pos)) min_pos = dp;
            if (df > 0.0 && (min_feat < 0.0 || df < min_feat)) min_feat = df;
        }
    }
    if (min_pos < 0.0 || min_feat < 0.0) {
        est.degenerate = true;
        return est;
    }
    est.tau_pos = params.tau1_multiplier * std::sqrt(min_pos);
    est.tau_feat = params.tau2_multiplier * std::sqrt(min_feat);

    // sigma over the pairwise distance distributions, subsampled on large clusters
    const int64_t total_pairs = n * (n - 1) / 2;
    auto accumulate = [&](auto&& pair_fn) {
        double sum_p = 0.0, sum_p2 = 0.0, sum_f = 0.0, sum_f2 = 0.0;
        int64_t m = 0;
        pair_fn([&](int a, int b) {
            const double dp = std::sqrt(denoise_detail::pos_sq_dist(scene, a, b));
            const double df = std::sqrt(denoise_detail::feat_sq_dist(scene, a, b));
            sum_p += dp;
            sum_p2 += dp * dp;
            sum_f += df;
            sum_f2 += df * df;
            ++m;
        });
        const double mp = sum_p / m, mf = sum_f / m;
        est.sigma_pos = std::sqrt(std::max(0.0, sum_p2 / m - mp * mp));
        est.sigma_feat = std::sqrt(std::max(0.0, sum_f2 / m - mf * mf));
    };
    if (total_pairs <= params.pair_sample_cap) {
        accumulate([&](auto&& visit) {
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = i + 1; j < n; ++j) visit(indices[i], indices[j]);
        });
    } else {
        Rng rng(Rng::mix(params.seed, 0x5ca1e5));
        accumulate([&](auto&& visit) {
            for (int64_t s = 0; s < params.pair_sample_cap; ++s) {
                const int a = rng.uniform_int(static_cast<int>(n));
                int b = rng.uniform_int(static_cast<int>(n) - 1);
                if (b >= a) ++b;
                visit(indices[a], indices[b]);
            }
        });
    }
    return est;
}

// Dense symmetric adjacency, zero diagonal, row-major n x n over `indices`.
inline std::vector<double> adjacency(const Scene& scene, const std::vector<int>& indices,
                                     const ScaleEstimate& est, const DenoiseParams& params) {
    const int n = static_cast<int>(indices.size());
    std::vector<double> w(static_cast<size_t>(n) * n, 0.0);
    const double tp = params.square_thresholds ? est.tau_pos * est.tau_pos : est.tau_pos;
    const double tf = params.square_thresholds ? est.tau_feat * est.tau_feat : est.tau_feat;
    const double sp = std::max(est.sigma_pos, 1e-12);
    const double sf = std::max(est.sigma_feat, 1e-12);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dp = denoise_detail::pos_sq_dist(scene, indices[i], indices[j]);
            const double df = denoise_detail::feat_sq_dist(scene, indices[i], indices[j]);
            if (!(dp < tp && df < tf)) continue;
            const double v = std::exp(-dp / (2.0 * sp * sp)) + std::exp(-df / (2.0 * sf * sf));
            w[static_cast<size_t>(i) * n + j] = v;
            w[static_cast<size_t>(j) * n + i] = v;
        }
    }
    return w;
}

struct StrengthSplit {
    std::vector<int> kept;     // positions into the cluster index list
    std::vector<int> removed;
    std::vector<double> strength;
    double mean_strength = 0.0;
};

// Connection strength C_i = row sum; a point is removed iff C_i < mean(C).
// The maximum is never below the mean, so at least one point survives.
inline StrengthSplit filter_by_strength(const std::vector<double>& w, int n) {
    StrengthSplit out;
    out.strength.assign(static_cast<size_t>(n), 0.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += w[static_cast<size_t>(i) * n + j];
        out.strength[i] = s;
        total += s;
    }
    out.mean_strength = n > 0 ? total / n : 0.0;
    for (int i = 0; i < n; ++i) {
        if (out.strength[i] < out.mean_strength)
            out.removed.push_back(i);
        else
            out.kept.push_back(i);
    }
    return out;
}

struct OrientedBox {
    Vec3 center;
    Mat3 axes;         // rows are the box axes
    Vec3 half_extents;
    bool axis_aligned_fallback = false;

    bool contains(const Vec3& p) const {
        const Vec3 d = p - center;
        return std::fabs(axes.row(0).dot(d)) <= half_extents.x &&
               std::fabs(axes.row(1).dot(d)) <= half_extents.y &&
               std::fabs(axes.row(2).dot(d)) <= half_extents.z;
    }
};

namespace denoise_detail {

// Jacobi eigendecomposition of a symmetric 3x3 matrix; returns eigenvalues
// descending with matching rows in `vecs`.
inline void symmetric_eigen3(const double a_in[3][3], double vals[3], Vec3 vecs[3]) {
    double a[3][3];
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a[i][j] = a_in[i][j];

    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
        if (off < 1e-15) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::fabs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int r = 0; r < 3; ++r) {
                    const double arp = a[r][p], arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for (int r = 0; r < 3; ++r) {
                    const double apr = a[p][r], aqr = a[q][r];
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
                for (int r = 0; r < 3; ++r) {
                    const double vrp = v[r][p], vrq = v[r][q];
                    v[r][p] = c * vrp - s * vrq;
                    v[r][q] = s * vrp + c * vrq;
                }
            }
        }
    }
    int order[3] = {0, 1, 2};
    double d[3] = {a[0][0], a[1][1], a[2][2]};
    std::sort(order, order + 3, [&](int x, int y) { return d[x] > d[y]; });
    for (int i = 0; i < 3; ++i) {
        vals[i] = d[order[i]];
        vecs[i] = Vec3{v[0][order[i]], v[1][order[i]], v[2][order[i]]}.normalized();
    }
    // deterministic sign: first component of largest magnitude made positive
    for (int i = 0; i < 3; ++i) {
        const Vec3& e = vecs[i];
        double m = e.x;
        if (std::fabs(e.y) > std::fabs(m)) m = e.y;
        if (std::fabs(e.z) > std::fabs(m)) m = e.z;
        if (m < 0.0) vecs[i] = vecs[i] * -1.0;
    }
    vecs[2] = vecs[0].cross(vecs[1]);  // right-handed, exactly orthogonal
}

}  // namespace denoise_detail

// PCA-oriented box around the points; half-extents are the maximum absolute
// projections scaled by obb_scale. Fewer than 3 non-collinear points fall
// back to an axis-aligned box.
inline OrientedBox fit_obb(const std::vector<Vec3>& points, double obb_scale = 1.2) {
    OrientedBox box;
    if (points.empty()) {
        box.axis_aligned_fallback = true;
        return box;
    }
    Vec3 mean;
    for (const auto& p : points) mean += p;
    mean = mean * (1.0 / static_cast<double>(points.size()));
    box.center = mean;

    bool fallback = points.size() < 3;
    if (!fallback) {
        double cov[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
        for (const auto& p : points) {
            const Vec3 d = p - mean;
            const double dv[3] = {d.x, d.y, d.z};
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) cov[i][j] += dv[i] * dv[j];
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) cov[i][j] /= static_cast<double>(points.size());
        double vals[3];
        Vec3 vecs[3];
        denoise_detail::symmetric_eigen3(cov, vals, vecs);
        if (vals[1] <= 1e-12 * std::max(vals[0], 1e-300))
            fallback = true;  // collinear
        else
            box.axes = Mat3::from_rows(vecs[0], vecs[1], vecs[2]);
    }
    if (fallback) {
        box.axes = Mat3::identity();
        box.axis_aligned_fallback = true;
    }

    Vec3 ext;
    for (const auto& p : points) {
        const Vec3 d = p - box.center;
        ext.x = std::max(ext.x, std::fabs(box.axes.row(0).dot(d)));
        ext.y = std::max(ext.y, std::fabs(box.axes.row(1).dot(d)));
        ext.z = std::max(ext.z, std::fabs(box.axes.row(2).dot(d)));
    }
    box.half_extents = ext * obb_scale;
    return box;
}

// Boundary-inclusive membership test; ties favor restoration.
inline std::vector<int> restore_in_obb(const Scene& scene, const std::vector<int>& removed_indices,
                                       const OrientedBox& box) {
    std::vector<int> restored;
    for (int i : removed_indices)
        if (box.contains(scene.points[i].position)) restored.push_back(i);
    return restored;
}

struct DenoiseSummary {
    int64_t total = 0, removed = 0, restored = 0;
    double sigma_pos = 0.0, sigma_feat = 0.0;
    bool skipped = false;
};

// Full composition; fills node.kept_indices (sorted) and sets node.denoised.
inline DenoiseSummary denoise_cluster(const Scene& scene, ClusterNode& node, const DenoiseParams& params) {
    DenoiseSummary summary;
    summary.total = static_cast<int64_t>(node.point_indices.size());
    node.denoised = true;

    const ScaleEstimate est = estimate_scales(scene, node.point_indices, params);
    if (est.degenerate) {
        node.kept_indices = node.point_indices;
        summary.skipped = true;
        return summary;
    }
    summary.sigma_pos = est.sigma_pos;
    summary.sigma_feat = est.sigma_feat;

    const int n = static_cast<int>(node.point_indices.size());
    const std::vector<double> w = adjacency(scene, node.point_indices, est, params);
    const StrengthSplit split = filter_by_strength(w, n);

    std::vector<Vec3> kept_positions;
    kept_positions.reserve(split.kept.size());
    for (int k : split.kept) kept_positions.push_back(scene.points[node.point_indices[k]].position);
    const OrientedBox box = fit_obb(kept_positions, params.obb_scale);

    std::vector<int> removed_global;
    for (int r : split.removed) removed_global.push_back(node.point_indices[r]);
    const std::vector<int> restored = restore_in_obb(scene, removed_global, box);

    node.kept_indices.clear();
    for (int k : split.kept) node.kept_indices.push_back(node.point_indices[k]);
    node.kept_indices.insert(node.kept_indices.end(), restored.begin(), restored.end());
    std::sort(node.kept_indices.begin(), node.kept_indices.end());

    summary.removed = static_cast<int64_t>(split.removed.size());
    summary.restored = static_cast<int64_t>(restored.size());
    return summary;
}

}  // namespace treesplat
