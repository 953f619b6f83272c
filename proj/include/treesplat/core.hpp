#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace treesplat {

// Error taxonomy mirrored by the CLI exit codes: UsageError -> 1,
// ParseError (and any other data problem) -> 2, NumericError -> 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix; only what poses and PCA need.
struct Mat3 {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    static Mat3 identity() { return Mat3{}; }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        Mat3 a;
        a.m[0][0] = r0.x; a.m[0][1] = r0.y; a.m[0][2] = r0.z;
        a.m[1][0] = r1.x; a.m[1][1] = r1.y; a.m[1][2] = r1.z;
        a.m[2][0] = r2.x; a.m[2][1] = r2.y; a.m[2][2] = r2.z;
        return a;
    }
    Vec3 row(int i) const { return {m[i][0], m[i][1], m[i][2]}; }
    Vec3 col(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }
    Mat3 transposed() const {
        Mat3 t;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.m[i][j] = m[j][i];
        return t;
    }
    // max |R R^T - I| entry; used to validate pose rotations
    double orthonormal_error() const {
        double worst = 0.0;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double g = row(i).dot(row(j)) - (i == j ? 1.0 : 0.0);
                worst = std::max(worst, std::fabs(g));
            }
        }
        return worst;
    }
};

// One Gaussian primitive. Scale is an isotropic world-space radius; the
// feature vector is the only quantity training is allowed to touch.
struct GaussianPoint {
    Vec3 position;
    double scale = 1.0;
    double opacity = 1.0;
    Vec3 color{0.5, 0.5, 0.5};
    std::vector<double> feature;
};

// Optional per-point ground-truth labels carried by synthetic scenes.
// -1 means "not present".
struct GtLabel {
    int whole = -1;
    int part = -1;
    int subpart = -1;
};

struct Scene {
    std::vector<GaussianPoint> points;
    int feature_dim = 6;
    std::vector<double> background_feature;  // sized on demand; empty == all-zero
    std::vector<GtLabel> gt_labels;          // empty or one entry per point
    std::vector<int> cluster_l1;             // empty or one entry per point
    std::vector<int> cluster_l2;
    std::vector<int> denoise_kept;

    bool has_gt() const { return !gt_labels.empty(); }

    std::vector<double> background_or_zero() const {
        if (!background_feature.empty()) return background_feature;
        return std::vector<double>(static_cast<size_t>(feature_dim), 0.0);
    }

    void validate() const {
        for (size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            const std::string at = "point " + std::to_string(i);
            if (!(p.scale > 0.0)) throw ParseError(at + ": scale must be positive");
            if (!(p.opacity >= 0.0 && p.opacity <= 1.0))
                throw ParseError(at + ": opacity out of range [0,1]");
            if (!std::isfinite(p.position.x) || !std::isfinite(p.position.y) ||
                !std::isfinite(p.position.z))
                throw ParseError(at + ": non-finite position");
            if (static_cast<int>(p.feature.size()) != feature_dim)
                throw ParseError(at + ": feature arity mismatch");
            for (double f : p.feature)
                if (!std::isfinite(f)) throw ParseError(at + ": non-finite feature");
            for (int c = 0; c < 3; ++c)
                if (!(p.color[c] >= 0.0 && p.color[c] <= 1.0))
                    throw ParseError(at + ": color out of range [0,1]");
        }
        if (!gt_labels.empty()) {
            if (gt_labels.size() != points.size())
                throw ParseError("ground-truth label count does not match point count");
            // hierarchical refinement: equal part id forces equal whole id
            std::vector<std::pair<int, int>> part_to_whole;
            for (size_t i = 0; i < gt_labels.size(); ++i) {
                bool found = false;
                for (auto& [part, whole] : part_to_whole) {
                    if (part == gt_labels[i].part) {
                        found = true;
                        if (whole != gt_labels[i].whole)
                            throw ParseError("ground-truth ids violate hierarchy at point " +
                                             std::to_string(i));
                    }
                }
                if (!found) part_to_whole.emplace_back(gt_labels[i].part, gt_labels[i].whole);
            }
        }
    }
};

struct View {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    Mat3 rotation;     // world-to-camera
    Vec3 translation;  // world-to-camera
    int height = 0, width = 0;
    int view_index = 0;

    Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }

    void validate() const {
        if (height < 8 || width < 8) throw ParseError("view image size below 8x8");
        if (rotation.orthonormal_error() > 1e-6)
            throw ParseError("view rotation not orthonormal within 1e-6");
    }
};

// Integer label image; 0 is background. Stored wider than the on-disk
// 16-bit PGM so intermediate relabeling cannot overflow.
struct LabelMap {
    int level = 0;
    int height = 0, width = 0;
    std::vector<int32_t> labels;

    LabelMap() = default;
    LabelMap(int lv, int h, int w) : level(lv), height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}

    int32_t& at(int h, int w) { return labels[static_cast<size_t>(h) * width + w]; }
    int32_t at(int h, int w) const { return labels[static_cast<size_t>(h) * width + w]; }
    bool same_size(const LabelMap& o) const { return height == o.height && width == o.width; }
};

struct BinaryMask {
    int height = 0, width = 0;
    std::vector<uint8_t> mask;

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), mask(static_cast<size_t>(h) * w, 0) {}
    uint8_t& at(int h, int w) { return mask[static_cast<size_t>(h) * width + w]; }
    uint8_t at(int h, int w) const { return mask[static_cast<size_t>(h) * width + w]; }
    int64_t count() const {
        int64_t c = 0;
        for (uint8_t v : mask) c += v;
        return c;
    }
};

// Dense H x W x D image of rendered features, channel-fastest.
struct FeatureMap {
    int height = 0, width = 0, dim = 0;
    std::vector<double> values;

    FeatureMap() = default;
    FeatureMap(int h, int w, int d)
        : height(h), width(w), dim(d), values(static_cast<size_t>(h) * w * d, 0.0) {}

    double& at(int h, int w, int c) { return values[(static_cast<size_t>(h) * width + w) * dim + c]; }
    double at(int h, int w, int c) const { return values[(static_cast<size_t>(h) * width + w) * dim + c]; }
    const double* pixel(int h, int w) const { return &values[(static_cast<size_t>(h) * width + w) * dim]; }
    double* pixel(int h, int w) { return &values[(static_cast<size_t>(h) * width + w) * dim]; }
};

}  // namespace treesplat
