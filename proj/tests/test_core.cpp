#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "treesplat/core.hpp"
#include "treesplat/io.hpp"
#include "treesplat/rng.hpp"

using namespace treesplat;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "treesplat_core_tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

Scene random_scene(Rng& rng, int n, int d) {
    Scene s;
    s.feature_dim = d;
    for (int i = 0; i < n; ++i) {
        GaussianPoint p;
        p.position = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        p.scale = rng.uniform(0.01, 2.0);
        p.opacity = rng.uniform(0.0, 1.0);
        p.color = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        for (int c = 0; c < d; ++c) p.feature.push_back(rng.uniform(-3, 3));
        s.points.push_back(p);
    }
    return s;
}

}  // namespace

TEST(ScenePly, SingleVertexInfersDim) {
    const std::string path = tmp_path("one.ply");
    write_file(path,
               "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property float x\nproperty float y\nproperty float z\n"
               "property float scale\nproperty float opacity\n"
               "property float red\nproperty float green\nproperty float blue\n"
               "property float f0\nproperty float f1\nproperty float f2\n"
               "property float f3\nproperty float f4\nproperty float f5\n"
               "end_header\n"
               "1 2 3 0.5 0.75 0.1 0.2 0.3 0 1 2 3 4 5\n");
    const Scene s = load_scene(path);
    ASSERT_EQ(s.points.size(), 1u);
    EXPECT_EQ(s.feature_dim, 6);
    EXPECT_DOUBLE_EQ(s.points[0].position.y, 2.0);
    EXPECT_DOUBLE_EQ(s.points[0].feature[5], 5.0);
}

TEST(ScenePly, OpacityOutOfRangeRejected) {
    const std::string path = tmp_path("bad_opacity.ply");
    write_file(path,
               "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property float x\nproperty float y\nproperty float z\n"
               "property float scale\nproperty float opacity\n"
               "property float red\nproperty float green\nproperty float blue\n"
               "property float f0\n"
               "end_header\n"
               "0 0 0 1 1.5 0 0 0 0\n");
    try {
        load_scene(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("opacity out of range"), std::string::npos);
    }
}

TEST(ScenePly, RoundTripRandomScenes) {
    Rng rng(42);
    for (int rep = 0; rep < 5; ++rep) {
        const Scene a = random_scene(rng, 20, 6);
        const std::string path = tmp_path("rt.ply");
        save_scene(a, path);
        const Scene b = load_scene(path);
        ASSERT_EQ(a.points.size(), b.points.size());
        EXPECT_EQ(b.feature_dim, 6);
        for (size_t i = 0; i < a.points.size(); ++i) {
            EXPECT_NEAR(a.points[i].position.x, b.points[i].position.x, 1e-6);
            EXPECT_NEAR(a.points[i].position.y, b.points[i].position.y, 1e-6);
            EXPECT_NEAR(a.points[i].position.z, b.points[i].position.z, 1e-6);
            EXPECT_NEAR(a.points[i].scale, b.points[i].scale, 1e-6);
            EXPECT_NEAR(a.points[i].opacity, b.points[i].opacity, 1e-6);
            for (int c = 0; c < 6; ++c) EXPECT_NEAR(a.points[i].feature[c], b.points[i].feature[c], 1e-6);
        }
    }
}

TEST(ScenePly, EmptySceneRoundTrips) {
    Scene empty;
    const std::string path = tmp_path("empty.ply");
    save_scene(empty, path);
    const Scene b = load_scene(path);
    EXPECT_TRUE(b.points.empty());
}

TEST(ScenePly, OptionalIntPropertiesRoundTrip) {
    Rng rng(7);
    Scene a = random_scene(rng, 8, 6);
    for (int i = 0; i < 8; ++i) {
        a.gt_labels.push_back({1 + i / 4, 10 + i / 2, 10 + i / 2});
        a.cluster_l1.push_back(i % 2);
        a.cluster_l2.push_back(i % 4);
    }
    const std::string path = tmp_path("ids.ply");
    save_scene(a, path);
    const Scene b = load_scene(path);
    ASSERT_EQ(b.gt_labels.size(), 8u);
    ASSERT_EQ(b.cluster_l1.size(), 8u);
    ASSERT_EQ(b.cluster_l2.size(), 8u);
    for (int i = 0; i < 8; ++i) {
        EXPECT_EQ(a.gt_labels[i].whole, b.gt_labels[i].whole);
        EXPECT_EQ(a.gt_labels[i].part, b.gt_labels[i].part);
        EXPECT_EQ(a.cluster_l1[i], b.cluster_l1[i]);
        EXPECT_EQ(a.cluster_l2[i], b.cluster_l2[i]);
    }
}

TEST(ScenePly, ValidationNamesPointIndex) {
    Rng rng(9);
    Scene a = random_scene(rng, 5, 3);
    a.points[3].scale = -1.0;
    try {
        a.validate();
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("point 3"), std::string::npos);
    }
}

TEST(ScenePly, GtHierarchyViolationRejected) {
    Rng rng(10);
    Scene a = random_scene(rng, 2, 3);
    a.gt_labels = {{1, 5, 5}, {2, 5, 5}};  // same part, different whole
    EXPECT_THROW(a.validate(), ParseError);
}

TEST(LabelMapPgm, SmallMapBitExact) {
    LabelMap m(0, 2, 2);
    m.at(0, 0) = 0;
    m.at(0, 1) = 1;
    m.at(1, 0) = 1;
    m.at(1, 1) = 2;
    const std::string path = tmp_path("map.pgm");
    save_labelmap(m, path);
    const LabelMap b = load_labelmap(path);
    EXPECT_EQ(m.labels, b.labels);
}

TEST(LabelMapPgm, RandomMapsRoundTrip) {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        LabelMap m(0, 1 + rng.uniform_int(20), 1 + rng.uniform_int(20));
        for (auto& v : m.labels) v = rng.uniform_int(65536);
        const std::string path = tmp_path("rand.pgm");
        save_labelmap(m, path);
        const LabelMap b = load_labelmap(path);
        EXPECT_EQ(m.labels, b.labels);
        EXPECT_EQ(m.height, b.height);
        EXPECT_EQ(m.width, b.width);
    }
}

TEST(LabelMapPgm, RejectsAsciiMagic) {
    const std::string path = tmp_path("ascii.pgm");
    write_file(path, "P2\n2 2\n65535\n0 1 2 3\n");
    EXPECT_THROW(load_labelmap(path), ParseError);
}

TEST(LabelMapPgm, RejectsWrongMaxval) {
    const std::string path = tmp_path("maxval.pgm");
    write_file(path, std::string("P5\n1 1\n255\n") + std::string(1, '\0'));
    EXPECT_THROW(load_labelmap(path), ParseError);
}

TEST(LabelMapPgm, RejectsTruncatedPayload) {
    const std::string path = tmp_path("trunc.pgm");
    write_file(path, std::string("P5\n2 2\n65535\n") + std::string(3, '\0'));
    EXPECT_THROW(load_labelmap(path), ParseError);
}

TEST(FeatureMapIo, RoundTripsAtFloatPrecision) {
    Rng rng(12);
    FeatureMap f(3, 4, 6);
    for (auto& v : f.values) v = rng.uniform(-10, 10);
    const std::string path = tmp_path("map.fmap");
    save_feature_map(f, path);
    const FeatureMap b = load_feature_map(path);
    ASSERT_EQ(b.height, 3);
    ASSERT_EQ(b.width, 4);
    ASSERT_EQ(b.dim, 6);
    for (size_t i = 0; i < f.values.size(); ++i)
        EXPECT_NEAR(f.values[i], b.values[i], 1e-6 * std::max(1.0, std::fabs(f.values[i])));
}

TEST(FeatureMapIo, RejectsBadMagic) {
    const std::string path = tmp_path("bad.fmap");
    write_file(path, "NOPE1234");
    EXPECT_THROW(load_feature_map(path), ParseError);
}

TEST(ViewsJson, RoundTrips) {
    View v;
    v.fx = 80;
    v.fy = 82;
    v.cx = 31.5;
    v.cy = 31.5;
    v.height = 64;
    v.width = 64;
    v.view_index = 3;
    const std::string path = tmp_path("views.json");
    save_views({v}, path);
    const auto loaded = load_views(path);
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_DOUBLE_EQ(loaded[0].fx, 80.0);
    EXPECT_EQ(loaded[0].view_index, 3);
}

TEST(ViewsJson, RejectsNonIncreasingIndices) {
    View a, b;
    a.height = b.height = 16;
    a.width = b.width = 16;
    a.view_index = 2;
    b.view_index = 2;
    const std::string path = tmp_path("views_dup.json");
    save_views({a, b}, path);
    EXPECT_THROW(load_views(path), ParseError);
}
