#include <gtest/gtest.h>

#include <cmath>

#include "treesplat/cluster.hpp"
#include "treesplat/rng.hpp"
#include "treesplat/synth.hpp"

using namespace treesplat;

namespace {

Scene grid_scene(const std::vector<Vec3>& positions, const std::vector<std::vector<double>>& features) {
    Scene s;
    s.feature_dim = static_cast<int>(features[0].size());
    for (size_t i = 0; i < positions.size(); ++i) {
        GaussianPoint p;
        p.position = positions[i];
        p.scale = 0.1;
        p.opacity = 1.0;
        p.feature = features[i];
        s.points.push_back(p);
    }
    return s;
}

// 2 objects x 2 parts with globally one-hot part features and separated
// object positions; the tree-recovery fixture for partition tests
Scene two_by_two_scene(Rng& rng, int per_part = 20) {
    Scene s;
    s.feature_dim = 4;
    for (int o = 0; o < 2; ++o) {
        for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < per_part; ++k) {
                GaussianPoint p;
                p.position = {o * 10.0 + rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                              j * 2.0 + rng.uniform(-0.3, 0.3)};
                p.scale = 0.1;
                p.opacity = 1.0;
                p.feature.assign(4, 0.0);
                p.feature[o * 2 + j] = 1.0 + rng.uniform(-0.05, 0.05);
                s.points.push_back(p);
                s.gt_labels.push_back({o + 1, 3 + o * 2 + j, 3 + o * 2 + j});
            }
        }
    }
    return s;
}

}  // namespace

TEST(JointEmbed, SinglePointHasZeroPositionBlock) {
    Scene s = grid_scene({{3, 4, 5}}, {{1, 2}});
    const auto emb = joint_embed(s, {0}, 1.0);
    ASSERT_EQ(emb.size(), 5u);
    EXPECT_DOUBLE_EQ(emb[2], 0.0);
    EXPECT_DOUBLE_EQ(emb[3], 0.0);
    EXPECT_DOUBLE_EQ(emb[4], 0.0);
    // feature block unit norm
    EXPECT_NEAR(emb[0] * emb[0] + emb[1] * emb[1], 1.0, 1e-12);
}

TEST(JointEmbed, ZeroLambdaDropsPositions) {
    Scene s = grid_scene({{0, 0, 0}, {9, 9, 9}}, {{1, 0}, {0, 1}});
    const auto emb = joint_embed(s, {0, 1}, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int c = 2; c < 5; ++c) EXPECT_DOUBLE_EQ(emb[i * 5 + c], 0.0);
}

TEST(JointEmbed, BlockNormsWithinBounds) {
    Rng rng(71);
    Scene s;
    s.feature_dim = 3;
    for (int i = 0; i < 40; ++i) {
        GaussianPoint p;
        p.position = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        p.scale = 0.1;
        p.opacity = 1.0;
        p.feature = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        s.points.push_back(p);
    }
    s.points[0].feature = {0, 0, 0};  // zero feature stays zero after normalization
    std::vector<int> idx(40);
    for (int i = 0; i < 40; ++i) idx[i] = i;
    const double lambda = 0.7;
    const auto emb = joint_embed(s, idx, lambda);
    for (int i = 0; i < 40; ++i) {
        double fn = 0.0;
        for (int c = 0; c < 3; ++c) fn += emb[i * 6 + c] * emb[i * 6 + c];
        if (i == 0)
            EXPECT_DOUBLE_EQ(fn, 0.0);
        else
            EXPECT_NEAR(fn, 1.0, 1e-12);
        for (int c = 3; c < 6; ++c) {
            EXPECT_GE(emb[i * 6 + c], 0.0);
            EXPECT_LE(emb[i * 6 + c], lambda + 1e-12);
        }
    }
}

TEST(Kmeans, SingleClusterIsMeanAndVariance) {
    Rng rng(72);
    std::vector<double> data;
    const int n = 30, dim = 3;
    for (int i = 0; i < n * dim; ++i) data.push_back(rng.uniform(-2, 2));
    const KmeansResult r = kmeans(data, n, dim, 1, 5);
    double mean[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < dim; ++c) mean[c] += data[i * dim + c] / n;
    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < dim; ++c) {
            const double d = data[i * dim + c] - mean[c];
            inertia += d * d;
        }
    for (int c = 0; c < dim; ++c) EXPECT_NEAR(r.centroids[c], mean[c], 1e-9);
    EXPECT_NEAR(r.inertia, inertia, 1e-9);
}

TEST(Kmeans, TwoSeparatedBlobsRecovered) {
    Rng rng(73);
    std::vector<double> data;
    std::vector<int> truth;
    for (int i = 0; i < 50; ++i) {
        const int blob = i % 2;
        truth.push_back(blob);
        data.push_back(blob * 20.0 + rng.normal() * 0.5);
        data.push_back(rng.normal() * 0.5);
    }
    const KmeansResult r = kmeans(data, 50, 2, 2, 9);
    EXPECT_DOUBLE_EQ(cluster_ari(r.assignment, truth), 1.0);
}

TEST(Kmeans, InertiaTraceNonIncreasing) {
    Rng rng(74);
    std::vector<double> data;
    for (int i = 0; i < 120; ++i) data.push_back(rng.uniform(-5, 5));
    const KmeansResult r = kmeans(data, 40, 3, 4, 11);
    for (size_t t = 1; t < r.inertia_trace.size(); ++t)
        EXPECT_LE(r.inertia_trace[t], r.inertia_trace[t - 1] + 1e-9);
}

TEST(Kmeans, DeterministicGivenSeed) {
    Rng rng(75);
    std::vector<double> data;
    for (int i = 0; i < 90; ++i) data.push_back(rng.uniform(-5, 5));
    const KmeansResult a = kmeans(data, 30, 3, 3, 21);
    const KmeansResult b = kmeans(data, 30, 3, 3, 21);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.centroids, b.centroids);
}

TEST(Kmeans, RejectsBadK) {
    std::vector<double> data{0.0, 1.0};
    EXPECT_THROW(kmeans(data, 2, 1, 3, 0), UsageError);
    EXPECT_THROW(kmeans(data, 2, 1, 0, 0), UsageError);
}

TEST(Kmeans, DuplicatePointsStillCoverAllClusters) {
    // 3 distinct locations, many duplicates, k=3: every cluster ends non-empty
    std::vector<double> data;
    for (int i = 0; i < 30; ++i) data.push_back((i % 3) * 5.0);
    const KmeansResult r = kmeans(data, 30, 1, 3, 4);
    std::vector<int> counts(3, 0);
    for (int a : r.assignment) ++counts[a];
    for (int c : counts) EXPECT_GT(c, 0);
    EXPECT_NEAR(r.inertia, 0.0, 1e-12);
}

TEST(RecursivePartition, FlatWhenDepthOne) {
    Rng rng(76);
    Scene s = two_by_two_scene(rng);
    const ClusterTree tree = recursive_partition(s, {2}, 1.0, 1, 5, 3, TrainerHooks{});
    EXPECT_EQ(tree.roots.size(), 2u);
    for (const auto& n : tree.nodes) {
        EXPECT_EQ(n.depth, 0);
        EXPECT_TRUE(n.children.empty());
    }
}

TEST(RecursivePartition, RecoversTwoByTwoHierarchy) {
    Rng rng(77);
    Scene s = two_by_two_scene(rng);
    const ClusterTree tree = recursive_partition(s, {2, 2}, 1.0, 2, 5, 3, TrainerHooks{});
    ASSERT_EQ(tree.roots.size(), 2u);
    for (int r : tree.roots) EXPECT_EQ(tree.nodes[r].children.size(), 2u);

    std::vector<int> whole(s.points.size()), part(s.points.size());
    for (size_t i = 0; i < s.points.size(); ++i) {
        whole[i] = s.gt_labels[i].whole;
        part[i] = s.gt_labels[i].part;
    }
    EXPECT_DOUBLE_EQ(cluster_ari(tree.assignment_at_depth(0, s.points.size()), whole), 1.0);
    EXPECT_DOUBLE_EQ(cluster_ari(tree.assignment_at_depth(1, s.points.size()), part), 1.0);
}

TEST(RecursivePartition, PartitionAndRefinementProperties) {
    Rng rng(78);
    Scene s = two_by_two_scene(rng, 15);
    const ClusterTree tree = recursive_partition(s, {3, 2}, 1.0, 2, 5, 3, TrainerHooks{});
    // every point in exactly one node at depth 0; at most one deeper
    for (int depth = 0; depth < 2; ++depth) {
        std::vector<int> seen(s.points.size(), 0);
        for (const auto& n : tree.nodes)
            if (n.depth == depth)
                for (int i : n.point_indices) ++seen[i];
        for (int count : seen) EXPECT_LE(count, 1);
        if (depth == 0)
            for (int count : seen) EXPECT_EQ(count, 1);
    }
    // children partition the parent exactly
    for (const auto& n : tree.nodes) {
        if (n.children.empty()) continue;
        size_t total = 0;
        for (int c : n.children) {
            total += tree.nodes[c].point_indices.size();
            for (int i : tree.nodes[c].point_indices) {
                EXPECT_TRUE(std::find(n.point_indices.begin(), n.point_indices.end(), i) !=
                            n.point_indices.end());
            }
        }
        EXPECT_EQ(total, n.point_indices.size());
    }
}

TEST(RecursivePartition, SmallNodesBecomeLeaves) {
    Rng rng(79);
    Scene s = two_by_two_scene(rng, 4);  // 16 points -> nodes of ~8
    const ClusterTree tree = recursive_partition(s, {2, 2}, 1.0, 2, 10, 3, TrainerHooks{});
    for (const auto& n : tree.nodes) {
        EXPECT_EQ(n.depth, 0);  // below min_cluster_points, never split
        EXPECT_TRUE(n.children.empty());
    }
}

TEST(RecursivePartition, HooksRunInOrder) {
    Rng rng(80);
    Scene s = two_by_two_scene(rng);
    std::vector<std::string> events;
    TrainerHooks hooks;
    hooks.train_global = [&](Scene&) { events.push_back("global"); };
    hooks.train_local = [&](Scene&, const ClusterNode& node, int depth) {
        events.push_back("local_d" + std::to_string(depth));
        EXPECT_EQ(depth, node.depth);
    };
    recursive_partition(s, {2, 2}, 1.0, 2, 5, 3, hooks);
    ASSERT_EQ(events.size(), 3u);
    EXPECT_EQ(events[0], "global");
    EXPECT_EQ(events[1], "local_d0");
    EXPECT_EQ(events[2], "local_d0");
}

TEST(JointSpace, PositionArmAtLeastAsGoodUnderFeatureNoise) {
    // features are pure noise; positions separate the objects cleanly, so the
    // joint-space arm must recover clusters no worse than features alone
    std::vector<double> pos_ari, feat_ari;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(900 + seed);
        Scene s;
        s.feature_dim = 3;
        std::vector<int> truth;
        for (int o = 0; o < 2; ++o)
            for (int k = 0; k < 40; ++k) {
                GaussianPoint p;
                p.position = {o * 8.0 + rng.normal() * 0.4, rng.normal() * 0.4, rng.normal() * 0.4};
                p.scale = 0.1;
                p.opacity = 1.0;
                p.feature = {rng.normal(), rng.normal(), rng.normal()};
                s.points.push_back(p);
                truth.push_back(o);
            }
        std::vector<int> idx(s.points.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        for (const double lambda : {1.0, 0.0}) {
            const auto emb = joint_embed(s, idx, lambda);
            const KmeansResult r = kmeans(emb, static_cast<int>(idx.size()), 6, 2, seed);
            (lambda > 0 ? pos_ari : feat_ari).push_back(cluster_ari(r.assignment, truth));
        }
    }
    std::sort(pos_ari.begin(), pos_ari.end());
    std::sort(feat_ari.begin(), feat_ari.end());
    EXPECT_GE(pos_ari[5], feat_ari[5]);  // median comparison
    EXPECT_GT(pos_ari[5], 0.9);          // and the position arm actually works
}
