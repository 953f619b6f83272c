#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "treesplat/core.hpp"
#include "treesplat/rng.hpp"

namespace treesplat {

// Joint embedding for clustering: unit-normalized feature block concatenated
// with a min-max normalized position block scaled by lambda_pos.
// Normalization statistics are computed over the given index set only.
// Returned flat buffer is index-major with stride feature_dim + 3.
inline std::vector<double> joint_embed(const Scene& scene, const std::vector<int>& indices,
                                       double lambda_pos) {
    const int d = scene.feature_dim;
    const int dim = d + 3;
    std::vector<double> out(indices.size() * static_cast<size_t>(dim), 0.0);

    Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max()};
    Vec3 hi{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
            std::numeric_limits<double>::lowest()};
    for (int i : indices) {
        const Vec3& p = scene.points[i].position;
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Vec3 range = hi - lo;

    for (size_t k = 0; k < indices.size(); ++k) {
        const auto& pt = scene.points[indices[k]];
        double* row = &out[k * dim];
        double norm = 0.0;
        for (int c = 0; c < d; ++c) norm += pt.feature[c] * pt.feature[c];
        norm = std::sqrt(norm);
        for (int c = 0; c < d; ++c) row[c] = norm > 0.0 ? pt.feature[c] / norm : 0.0;
        const Vec3 p = pt.position - lo;
        // degenerate axis range collapses to 0
        row[d + 0] = range.x > 0.0 ? lambda_pos * p.x / range.x : 0.0;
        row[d + 1] = range.y > 0.0 ? lambda_pos * p.y / range.y : 0.0;
        row[d + 2] = range.z > 0.0 ? lambda_pos * p.z / range.z : 0.0;
    }
    return out;
}

struct KmeansResult {
    std::vector<int> assignment;
    std::vector<double> centroids;  // k rows of `dim`
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // one entry per Lloyd iteration
    int iterations = 0;
};

namespace cluster_detail {

inline double sq_dist(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
        const double diff = a[c] - b[c];
        s += diff * diff;
    }
    return s;
}

}  // namespace cluster_detail

// Lloyd's algorithm with k-means++ seeding. Deterministic given (seed, input
// order): ties in assignment go to the lowest centroid index and empty
// clusters are re-seeded from the current farthest point.
inline KmeansResult kmeans(const std::vector<double>& data, int n, int dim, int k, uint64_t seed,
                           int max_iters = 100) {
    if (k < 1) throw UsageError("kmeans: k must be >= 1");
    if (k > n) throw UsageError("kmeans: k exceeds point count");
    Rng rng(Rng::mix(seed, 0x6b6d65616e73ULL));

    KmeansResult res;
    res.centroids.assign(static_cast<size_t>(k) * dim, 0.0);
    res.assignment.assign(static_cast<size_t>(n), 0);

    // k-means++ seeding
    std::vector<double> best_d2(static_cast<size_t>(n), std::numeric_limits<double>::max());
    {
        int first = rng.uniform_int(n);
        std::copy_n(&data[static_cast<size_t>(first) * dim], dim, res.centroids.begin());
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d2 = cluster_detail::sq_dist(&data[static_cast<size_t>(i) * dim],
                                                          &res.centroids[static_cast<size_t>(c - 1) * dim], dim);
                best_d2[i] = std::min(best_d2[i], d2);
                total += best_d2[i];
            }
            int chosen;
            if (total <= 0.0) {
                chosen = rng.uniform_int(n);  // all points coincide with centers
            } else {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                chosen = n - 1;
                for (int i = 0; i < n; ++i) {
                    acc += best_d2[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            }
            std::copy_n(&data[static_cast<size_t>(chosen) * dim], dim,
                        res.centroids.begin() + static_cast<size_t>(c) * dim);
        }
    }

    std::vector<int> counts(static_cast<size_t>(k), 0);
    std::vector<double> sums(static_cast<size_t>(k) * dim, 0.0);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) {
                const double d2 = cluster_detail::sq_dist(&data[static_cast<size_t>(i) * dim],
                                                          &res.centroids[static_cast<size_t>(c) * dim], dim);
                if (d2 < bd) {
                    bd = d2;
                    best = c;
                }
            }
            inertia += bd;
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }

        // re-seed empty clusters from the farthest point
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) ++counts[res.assignment[i]];
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            int far = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (counts[res.assignment[i]] <= 1) continue;  // do not empty another cluster
                const double d2 = cluster_detail::sq_dist(
                    &data[static_cast<size_t>(i) * dim],
                    &res.centroids[static_cast<size_t>(res.assignment[i]) * dim], dim);
                if (d2 > far_d) {
                    far_d = d2;
                    far = i;
                }
            }
            if (far < 0) break;  // cannot fix (k > distinct points)
            --counts[res.assignment[far]];
            res.assignment[far] = c;
            ++counts[c];
            changed = true;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            double* s = &sums[static_cast<size_t>(res.assignment[i]) * dim];
            const double* row = &data[static_cast<size_t>(i) * dim];
            for (int c = 0; c < dim; ++c) s[c] += row[c];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (int j = 0; j < dim; ++j)
                res.centroids[static_cast<size_t>(c) * dim + j] = sums[static_cast<size_t>(c) * dim + j] / counts[c];
        }

        res.inertia_trace.push_back(inertia);
        res.iterations = iter + 1;
        if (!changed && iter > 0) break;
    }

    // final inertia against the final centroids
    res.inertia = 0.0;
    for (int i = 0; i < n; ++i)
        res.inertia += cluster_detail::sq_dist(&data[static_cast<size_t>(i) * dim],
                                               &res.centroids[static_cast<size_t>(res.assignment[i]) * dim], dim);
    return res;
}

struct ClusterNode {
    int node_id = -1;
    int depth = 0;
    int parent = -1;
    std::vector<int> point_indices;
    std::vector<double> centroid;  // joint-space (D+3) centroid
    std::vector<int> children;
    bool denoised = false;
    std::vector<int> kept_indices;  // after denoising
};

struct ClusterTree {
    std::vector<ClusterNode> nodes;
    std::vector<int> roots;

    std::vector<int> nodes_at_depth(int depth) const {
        std::vector<int> ids;
        for (const auto& n : nodes)
            if (n.depth == depth) ids.push_back(n.node_id);
        return ids;
    }
    // per-point node id at a depth, -1 where unassigned
    std::vector<int> assignment_at_depth(int depth, size_t n_points) const {
        std::vector<int> a(n_points, -1);
        for (const auto& n : nodes)
            if (n.depth == depth)
                for (int i : n.point_indices) a[i] = n.node_id;
        return a;
    }
};

// Hooks that let the cascade interleave training with clustering. The global
// hook runs once before the depth-0 split; the local hook runs on each node
// before that node is split further.
struct TrainerHooks {
    std::function<void(Scene&)> train_global;
    std::function<void(Scene&, const ClusterNode&, int depth)> train_local;
};

// Cascade: global training, k-means into k_schedule[0] nodes, then per node
// local training + k-means into k_schedule[depth] children until
// max_tree_depth levels exist. Nodes too small to split become leaves.
inline ClusterTree recursive_partition(Scene& scene, const std::vector<int>& k_schedule,
                                       double lambda_pos, int max_tree_depth, int min_cluster_points,
                                       uint64_t seed, const TrainerHooks& hooks) {
    if (max_tree_depth < 1) throw UsageError("max_tree_depth must be >= 1");
    if (k_schedule.empty()) throw UsageError("k_schedule must not be empty");
    ClusterTree tree;

    if (hooks.train_global) hooks.train_global(scene);

    std::vector<int> all(scene.points.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

    auto split_into = [&](const std::vector<int>& indices, int k, int depth, int parent) {
        const std::vector<double> emb = joint_embed(scene, indices, lambda_pos);
        const KmeansResult km = kmeans(emb, static_cast<int>(indices.size()), scene.feature_dim + 3, k,
                                       Rng::mix(seed, 0xc1a5 + 131 * depth + (parent < 0 ? 0 : parent + 1)));
        std::vector<int> created;
        for (int c = 0; c < k; ++c) {
            ClusterNode node;
            node.depth = depth;
            node.parent = parent;
            for (size_t i = 0; i < indices.size(); ++i)
                if (km.assignment[i] == c) node.point_indices.push_back(indices[i]);
            if (node.point_indices.empty()) continue;
            node.centroid.assign(&km.centroids[static_cast<size_t>(c) * (scene.feature_dim + 3)],
                                 &km.centroids[static_cast<size_t>(c + 1) * (scene.feature_dim + 3)]);
            node.node_id = static_cast<int>(tree.nodes.size());
            created.push_back(node.node_id);
            if (parent >= 0) tree.nodes[parent].children.push_back(node.node_id);
            tree.nodes.push_back(std::move(node));
        }
        return created;
    };

    std::vector<int> frontier = split_into(all, k_schedule[0], 0, -1);
    tree.roots = frontier;

    for (int depth = 1; depth < max_tree_depth; ++depth) {
        const int k = k_schedule[std::min<size_t>(depth, k_schedule.size() - 1)];
        std::vector<int> next;
        for (int node_id : frontier) {
            // copy: tree.nodes may reallocate while splitting
            const std::vector<int> indices = tree.nodes[node_id].point_indices;
            if (static_cast<int>(indices.size()) < std::max(k, min_cluster_points)) continue;  // leaf
            if (hooks.train_local) hooks.train_local(scene, tree.nodes[node_id], depth - 1);
            const std::vector<int> created = split_into(indices, k, depth, node_id);
            next.insert(next.end(), created.begin(), created.end());
        }
        frontier = next;
    }
    return tree;
}

}  // namespace treesplat
