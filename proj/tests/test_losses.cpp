#include <gtest/gtest.h>

#include <cmath>

#include "treesplat/losses.hpp"
#include "treesplat/render.hpp"
#include "treesplat/rng.hpp"

using namespace treesplat;

namespace {

FeatureMap random_feature_map(Rng& rng, int h, int w, int d) {
    FeatureMap f(h, w, d);
    for (auto& v : f.values) v = rng.uniform(-2, 2);
    return f;
}

std::vector<int32_t> rect_pixels(int h0, int h1, int w0, int w1, int width) {
    std::vector<int32_t> px;
    for (int h = h0; h < h1; ++h)
        for (int w = w0; w < w1; ++w) px.push_back(h * width + w);
    return px;
}

}  // namespace

TEST(PrototypeOp, ConstantFieldGivesThatValue) {
    FeatureMap f(4, 4, 2);
    for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w) {
            f.at(h, w, 0) = 3.0;
            f.at(h, w, 1) = -1.0;
        }
    const std::vector<int32_t> px = rect_pixels(0, 2, 0, 2, 4);
    const auto p = prototype(f, {1, &px});
    ASSERT_TRUE(p.has_value());
    EXPECT_DOUBLE_EQ(p->mean[0], 3.0);
    EXPECT_DOUBLE_EQ(p->mean[1], -1.0);
    EXPECT_EQ(p->support_size, 4);
}

TEST(PrototypeOp, TwoPixelMean) {
    FeatureMap f(1, 2, 2);
    f.at(0, 0, 0) = 1.0;
    f.at(0, 0, 1) = 2.0;
    f.at(0, 1, 0) = 3.0;
    f.at(0, 1, 1) = 6.0;
    const std::vector<int32_t> px{0, 1};
    const auto p = prototype(f, {0, &px});
    ASSERT_TRUE(p.has_value());
    EXPECT_DOUBLE_EQ(p->mean[0], 2.0);
    EXPECT_DOUBLE_EQ(p->mean[1], 4.0);
}

TEST(PrototypeOp, MatchesLoopOracleWithRegion) {
    Rng rng(51);
    const FeatureMap f = random_feature_map(rng, 6, 6, 3);
    BinaryMask b(6, 6);
    for (auto& v : b.mask) v = rng.uniform() < 0.6 ? 1 : 0;
    const std::vector<int32_t> px = rect_pixels(1, 5, 2, 6, 6);
    const auto p = prototype(f, {0, &px}, &b);

    // independent oracle: explicit double loop over image coordinates
    double sum[3] = {0, 0, 0};
    int64_t count = 0;
    for (int h = 1; h < 5; ++h)
        for (int w = 2; w < 6; ++w)
            if (b.at(h, w)) {
                for (int c = 0; c < 3; ++c) sum[c] += f.at(h, w, c);
                ++count;
            }
    if (count == 0) {
        EXPECT_FALSE(p.has_value());
    } else {
        ASSERT_TRUE(p.has_value());
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(p->mean[c], sum[c] / count, 1e-12);
    }
}

TEST(PrototypeOp, EmptySupportSkips) {
    FeatureMap f(2, 2, 1);
    BinaryMask b(2, 2);  // all zero
    const std::vector<int32_t> px{0, 1};
    EXPECT_FALSE(prototype(f, {0, &px}, &b).has_value());
}

TEST(PullLoss, ZeroWhenConstantPerMask) {
    FeatureMap f(2, 4, 2);
    for (int w = 0; w < 2; ++w)
        for (int h = 0; h < 2; ++h) {
            f.at(h, w, 0) = 1.0;
            f.at(h, w + 2, 0) = -2.0;
        }
    const std::vector<int32_t> ma = rect_pixels(0, 2, 0, 2, 4), mb = rect_pixels(0, 2, 2, 4, 4);
    const std::vector<MaskView> masks{{0, &ma}, {1, &mb}};
    std::vector<Prototype> protos;
    for (const auto& m : masks) protos.push_back(*prototype(f, m));
    EXPECT_DOUBLE_EQ(pull_loss(f, masks, protos, nullptr, nullptr), 0.0);
}

TEST(PullLoss, UnitOffsetSinglePixel) {
    // prototypes are constants for the pull term, so a pixel one unit from its
    // prototype along e1 contributes exactly 1 with gradient 2 e1
    FeatureMap f(1, 1, 3);
    f.at(0, 0, 0) = 1.5;
    const std::vector<int32_t> px{0};
    const std::vector<MaskView> masks{{0, &px}};
    Prototype p;
    p.mask_node_id = 0;
    p.mean = {0.5, 0.0, 0.0};
    p.support_size = 1;
    FeatureMap grad(1, 1, 3);
    const double loss = pull_loss(f, masks, {p}, nullptr, &grad);
    EXPECT_DOUBLE_EQ(loss, 1.0);
    EXPECT_DOUBLE_EQ(grad.at(0, 0, 0), 2.0);
    EXPECT_DOUBLE_EQ(grad.at(0, 0, 1), 0.0);
}

TEST(PullLoss, MatchesBruteForceAndFiniteDifferences) {
    Rng rng(52);
    FeatureMap f = random_feature_map(rng, 5, 5, 3);
    const std::vector<int32_t> ma = rect_pixels(0, 3, 0, 3, 5), mb = rect_pixels(3, 5, 1, 4, 5);
    const std::vector<MaskView> masks{{0, &ma}, {1, &mb}};
    std::vector<Prototype> protos;
    for (const auto& m : masks) protos.push_back(*prototype(f, m));

    // brute force
    double expect = 0.0;
    for (size_t i = 0; i < masks.size(); ++i)
        for (int32_t px : *masks[i].pixels)
            for (int c = 0; c < 3; ++c) {
                const double d = f.values[px * 3 + c] - protos[i].mean[c];
                expect += d * d;
            }
    FeatureMap grad(5, 5, 3);
    EXPECT_NEAR(pull_loss(f, masks, protos, nullptr, &grad), expect, 1e-12);

    // finite differences with prototypes held fixed
    const double eps = 1e-5;
    double max_rel = 0.0;
    for (size_t i = 0; i < f.values.size(); ++i) {
        FeatureMap fp = f, fm = f;
        fp.values[i] += eps;
        fm.values[i] -= eps;
        const double fd =
            (pull_loss(fp, masks, protos, nullptr, nullptr) - pull_loss(fm, masks, protos, nullptr, nullptr)) /
            (2 * eps);
        const double rel = std::fabs(fd - grad.values[i]) / std::max({1e-8, std::fabs(fd), std::fabs(grad.values[i])});
        max_rel = std::max(max_rel, rel);
    }
    EXPECT_LT(max_rel, 1e-4);
}

TEST(PushLoss, TwoPrototypesAtUnitDistance) {
    Prototype a, b;
    a.mean = {0.0, 0.0};
    b.mean = {1.0, 0.0};
    a.support_size = b.support_size = 1;
    const PushResult r = push_loss({a, b});
    EXPECT_FALSE(r.skipped);
    EXPECT_DOUBLE_EQ(r.loss, 1.0);  // (1/2)(1 + 1)
}

TEST(PushLoss, CoincidentPrototypesClamped) {
    Prototype a, b;
    a.mean = b.mean = {0.3, -0.7};
    a.support_size = b.support_size = 1;
    const PushResult r = push_loss({a, b});
    EXPECT_DOUBLE_EQ(r.loss, 1.0 / kPushDistanceEps);
    for (double g : r.grad_means[0]) EXPECT_DOUBLE_EQ(g, 0.0);  // clamped pairs carry no gradient
}

TEST(PushLoss, SkippedBelowTwoPrototypes) {
    Prototype a;
    a.mean = {1.0};
    const PushResult r = push_loss({a});
    EXPECT_TRUE(r.skipped);
    EXPECT_DOUBLE_EQ(r.loss, 0.0);
}

TEST(PushLoss, MatchesBruteForceAndFiniteDifferences) {
    Rng rng(53);
    std::vector<Prototype> protos(3);
    for (auto& p : protos) {
        p.mean = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        p.support_size = 1;
    }
    const PushResult r = push_loss(protos);

    double expect = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (i == j) continue;
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = protos[i].mean[c] - protos[j].mean[c];
                d2 += d * d;
            }
            expect += 1.0 / std::max(d2, kPushDistanceEps) / (3.0 * 2.0);
        }
    EXPECT_NEAR(r.loss, expect, 1e-12);

    const double eps = 1e-6;
    double max_rel = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) {
            auto pp = protos, pm = protos;
            pp[i].mean[c] += eps;
            pm[i].mean[c] -= eps;
            const double fd = (push_loss(pp).loss - push_loss(pm).loss) / (2 * eps);
            const double an = r.grad_means[i][c];
            const double rel = std::fabs(fd - an) / std::max({1e-8, std::fabs(fd), std::fabs(an)});
            max_rel = std::max(max_rel, rel);
        }
    }
    EXPECT_LT(max_rel, 1e-4);
}

TEST(PushLoss, PermutationSymmetricAndMonotone) {
    Prototype a, b, c;
    a.mean = {0.0, 0.0};
    b.mean = {1.0, 0.0};
    c.mean = {0.0, 2.0};
    const double l1 = push_loss({a, b, c}).loss;
    EXPECT_DOUBLE_EQ(push_loss({c, a, b}).loss, l1);
    // moving one prototype farther away strictly decreases the loss
    c.mean = {0.0, 3.0};
    EXPECT_LT(push_loss({a, b, c}).loss, l1);
}

TEST(GlobalLoss, WellSeparatedConstantMasks) {
    FeatureMap f(2, 4, 2);
    for (int h = 0; h < 2; ++h) {
        for (int w = 0; w < 2; ++w) {
            f.at(h, w, 0) = 1.0;      // mask A at e1
            f.at(h, w + 2, 1) = 1.0;  // mask B at e2, distance sqrt(2)
        }
    }
    const std::vector<int32_t> ma = rect_pixels(0, 2, 0, 2, 4), mb = rect_pixels(0, 2, 2, 4, 4);
    const LossBundle bundle = global_loss(f, {{0, &ma}, {1, &mb}});
    EXPECT_DOUBLE_EQ(bundle.pull, 0.0);
    EXPECT_LE(bundle.total, 1.0);
    EXPECT_EQ(bundle.m, 2);
}

TEST(GlobalLoss, SingleMaskIsPullOnly) {
    Rng rng(54);
    const FeatureMap f = random_feature_map(rng, 4, 4, 2);
    const std::vector<int32_t> ma = rect_pixels(0, 3, 0, 3, 4);
    const LossBundle bundle = global_loss(f, {{0, &ma}});
    EXPECT_TRUE(bundle.push_skipped);
    EXPECT_DOUBLE_EQ(bundle.push, 0.0);
    EXPECT_DOUBLE_EQ(bundle.total, bundle.pull);
}

TEST(GlobalLoss, EndToEndGradientThroughRenderer) {
    // analytic gradient composed through prototypes and the splatter adjoint
    // vs central finite differences of the whole render-then-loss path
    Rng rng(55);
    View view;
    view.fx = view.fy = 40.0;
    view.cx = view.cy = 7.5;
    view.height = view.width = 16;

    Scene scene;
    scene.feature_dim = 3;
    for (int i = 0; i < 24; ++i) {
        GaussianPoint p;
        p.position = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(4.0, 7.0)};
        p.scale = rng.uniform(0.1, 0.4);
        p.opacity = rng.uniform(0.3, 1.0);
        p.feature = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        scene.points.push_back(p);
    }
    const ContributionTable table = rasterize(scene, view);
    const std::vector<int32_t> ma = rect_pixels(2, 9, 2, 9, 16), mb = rect_pixels(9, 15, 6, 14, 16);
    const std::vector<MaskView> masks{{0, &ma}, {1, &mb}};

    auto loss_of = [&](const Scene& sc) { return global_loss(render_features(sc, table), masks).total; };

    const LossBundle bundle = global_loss(render_features(scene, table), masks);
    const std::vector<double> grad = backprop_features(bundle.grad, table);

    const double eps = 1e-4;
    double max_rel = 0.0;
    for (size_t p = 0; p < scene.points.size(); ++p) {
        for (int c = 0; c < 3; ++c) {
            Scene sp = scene, sm = scene;
            sp.points[p].feature[c] += eps;
            sm.points[p].feature[c] -= eps;
            const double fd = (loss_of(sp) - loss_of(sm)) / (2 * eps);
            const double an = grad[p * 3 + c];
            const double rel = std::fabs(fd - an) / std::max({1e-6, std::fabs(fd), std::fabs(an)});
            max_rel = std::max(max_rel, rel);
        }
    }
    EXPECT_LT(max_rel, 1e-4);
}

TEST(LocalLoss, ModeGatingRecomposes) {
    Rng rng(56);
    const FeatureMap f = random_feature_map(rng, 6, 6, 3);
    BinaryMask region(6, 6);
    for (auto& v : region.mask) v = 1;
    const std::vector<int32_t> ma = rect_pixels(0, 3, 0, 3, 6), mb = rect_pixels(3, 6, 3, 6, 6);
    const std::vector<MaskView> masks{{0, &ma}, {1, &mb}};

    const LossBundle over = local_loss(f, masks, region, CsdMode::Over);
    const LossBundle under = local_loss(f, masks, region, CsdMode::Under);
    const LossBundle opt = local_loss(f, masks, region, CsdMode::Optimal);

    EXPECT_DOUBLE_EQ(over.push, 0.0);
    EXPECT_DOUBLE_EQ(under.pull, 0.0);
    EXPECT_DOUBLE_EQ(opt.total, over.pull + under.push);
    // gating is structural: gradients recompose bitwise
    for (size_t i = 0; i < opt.grad.values.size(); ++i)
        EXPECT_EQ(opt.grad.values[i], over.grad.values[i] + under.grad.values[i]);
}

TEST(LocalLoss, OverModeIgnoresPrototypeDistance) {
    // two configurations differing only by a constant shift of mask B's
    // features; pull is shift-invariant, so Over-mode loss must match
    FeatureMap f1(2, 4, 1), f2(2, 4, 1);
    Rng rng(57);
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) {
            const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
            f1.at(h, w, 0) = a;
            f2.at(h, w, 0) = a;
            f1.at(h, w + 2, 0) = b;
            f2.at(h, w + 2, 0) = b + 10.0;  // push prototype far away
        }
    BinaryMask region(2, 4);
    for (auto& v : region.mask) v = 1;
    const std::vector<int32_t> ma = rect_pixels(0, 2, 0, 2, 4), mb = rect_pixels(0, 2, 2, 4, 4);
    const std::vector<MaskView> masks{{0, &ma}, {1, &mb}};
    const double l1 = local_loss(f1, masks, region, CsdMode::Over).total;
    const double l2 = local_loss(f2, masks, region, CsdMode::Over).total;
    EXPECT_NEAR(l1, l2, 1e-9);
}

TEST(LocalLoss, UnderModeOnConstantMasksIsPushOnly) {
    FeatureMap f(2, 4, 2);
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) {
            f.at(h, w, 0) = 2.0;
            f.at(h, w + 2, 1) = -1.0;
        }
    BinaryMask region(2, 4);
    for (auto& v : region.mask) v = 1;
    const std::vector<int32_t> ma = rect_pixels(0, 2, 0, 2, 4), mb = rect_pixels(0, 2, 2, 4, 4);
    const LossBundle bundle = local_loss(f, {{0, &ma}, {1, &mb}}, region, CsdMode::Under);
    EXPECT_DOUBLE_EQ(bundle.pull, 0.0);
    EXPECT_GT(bundle.push, 0.0);
    EXPECT_DOUBLE_EQ(bundle.total, bundle.push);
}

TEST(LocalLoss, RegionRestrictsSupport) {
    Rng rng(58);
    const FeatureMap f = random_feature_map(rng, 4, 4, 2);
    BinaryMask region(4, 4);
    for (int h = 0; h < 4; ++h) region.at(h, 0) = 1;  // only first column
    const std::vector<int32_t> ma = rect_pixels(0, 4, 0, 2, 4);       // straddles the region edge
    const std::vector<int32_t> outside = rect_pixels(0, 4, 2, 4, 4);  // no support in region
    const LossBundle bundle = local_loss(f, {{0, &ma}, {1, &outside}}, region, CsdMode::Optimal);
    EXPECT_EQ(bundle.m, 1);  // the unsupported mask was dropped
    EXPECT_TRUE(bundle.push_skipped);
    for (int h = 0; h < 4; ++h)
        for (int w = 1; w < 4; ++w)
            for (int c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(bundle.grad.at(h, w, c), 0.0);
}

TEST(Losses, ScaleHomogeneity) {
    Rng rng(59);
    FeatureMap f = random_feature_map(rng, 5, 5, 3);
    const std::vector<int32_t> ma = rect_pixels(0, 3, 0, 5, 5), mb = rect_pixels(3, 5, 0, 5, 5);
    const std::vector<MaskView> masks{{0, &ma}, {1, &mb}};
    const LossBundle base = global_loss(f, masks);
    FeatureMap doubled = f;
    for (auto& v : doubled.values) v *= 2.0;
    const LossBundle scaled = global_loss(doubled, masks);
    EXPECT_NEAR(scaled.pull, 4.0 * base.pull, 1e-9 * std::max(1.0, base.pull));
    EXPECT_NEAR(scaled.push, 0.25 * base.push, 1e-9 * std::max(1.0, base.push));
}

TEST(Losses, EmptyMaskListIsZero) {
    FeatureMap f(2, 2, 1);
    const LossBundle bundle = global_loss(f, {});
    EXPECT_DOUBLE_EQ(bundle.total, 0.0);
    EXPECT_EQ(bundle.m, 0);
}
