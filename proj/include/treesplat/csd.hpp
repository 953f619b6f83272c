#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "treesplat/core.hpp"

namespace treesplat {

// Consistent Segmentation Detection: count how many fine masks a cluster's
// rendered region matches per view, smooth that split number across the view
// sequence, and classify each view against the rounded reference.

enum class CsdMode { Over, Under, Optimal };

inline const char* to_string(CsdMode m) {
    switch (m) {
        case CsdMode::Over: return "over";
        case CsdMode::Under: return "under";
        default: return "optimal";
    }
}

struct CsdRecord {
    int view_index = 0;
    int split_number = 0;
    double smoothed = 0.0;
    int reference = 0;
    CsdMode mode = CsdMode::Optimal;
};

// A mask matches when its overlap with B is large enough. Default measure is
// mask recall |B∩M|/|M|; symmetric IoU |B∩M|/|B∪M| is selectable.
inline bool mask_matches_region(const BinaryMask& b, const std::vector<int32_t>& mask_pixels,
                                double match_threshold, bool symmetric_iou, int64_t b_count) {
    if (mask_pixels.empty()) return false;
    int64_t inter = 0;
    for (int32_t px : mask_pixels) inter += b.mask[px];
    const double denom = symmetric_iou
                             ? static_cast<double>(b_count + static_cast<int64_t>(mask_pixels.size()) - inter)
                             : static_cast<double>(mask_pixels.size());
    return denom > 0.0 && static_cast<double>(inter) / denom >= match_threshold;
}

inline int split_number(const BinaryMask& b, const std::vector<const std::vector<int32_t>*>& fine_masks,
                        double match_threshold = 0.5, bool symmetric_iou = false) {
    const int64_t b_count = b.count();
    if (b_count == 0) return 0;
    int n = 0;
    for (const auto* m : fine_masks)
        if (mask_matches_region(b, *m, match_threshold, symmetric_iou, b_count)) ++n;
    return n;
}

// Centered moving average; the window shrinks at sequence boundaries.
inline std::vector<double> smooth(const std::vector<int>& values, int window) {
    if (window < 1 || window % 2 == 0) throw UsageError("smoothing window must be odd and positive");
    const int n = static_cast<int>(values.size());
    const int half = window / 2;
    std::vector<double> out(values.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) sum += values[j];
        out[i] = sum / (hi - lo + 1);
    }
    return out;
}

inline CsdMode decide_mode(int n, int n_hat) {
    if (n > n_hat) return CsdMode::Over;
    if (n < n_hat) return CsdMode::Under;
    return CsdMode::Optimal;
}

struct CsdViewInput {
    int view_index = 0;
    const BinaryMask* region = nullptr;
    std::vector<const std::vector<int32_t>*> fine_masks;
};

// Full per-cluster pass. Views whose region is empty are excluded and appear
// in no record. Inputs must be ordered by view_index.
inline std::vector<CsdRecord> csd_pass(const std::vector<CsdViewInput>& views, int window,
                                       double match_threshold = 0.5, bool symmetric_iou = false) {
    std::vector<CsdRecord> records;
    std::vector<int> numbers;
    for (const auto& v : views) {
        if (v.region == nullptr || v.region->count() == 0) continue;  // excluded view
        CsdRecord r;
        r.view_index = v.view_index;
        r.split_number = split_number(*v.region, v.fine_masks, match_threshold, symmetric_iou);
        records.push_back(r);
        numbers.push_back(r.split_number);
    }
    const std::vector<double> smoothed = smooth(numbers, window);
    for (size_t i = 0; i < records.size(); ++i) {
        records[i].smoothed = smoothed[i];
        records[i].reference = static_cast<int>(std::llround(smoothed[i]));  // half away from zero
        records[i].mode = decide_mode(records[i].split_number, records[i].reference);
    }
    return records;
}

}  // namespace treesplat
