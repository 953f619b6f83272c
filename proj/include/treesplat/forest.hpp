#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

#include "treesplat/core.hpp"

namespace treesplat {

// Multi-scale label-map refinement and per-view mask trees. The refinement
// order is fixed: fill gaps, zero label-label edges, cut fine by coarse,
// filter small fragments. The composition is idempotent on its own output.

namespace forest_detail {

inline int32_t max_label(const std::vector<LabelMap>& levels) {
    int32_t m = 0;
    for (const auto& lm : levels)
        for (int32_t v : lm.labels) m = std::max(m, v);
    return m;
}

// true if any in-bounds 8-neighbour is nonzero (used to keep gap fills from
// touching existing masks, which keeps the pipeline idempotent)
inline bool touches_nonzero(const LabelMap& map, int h, int w) {
    for (int dh = -1; dh <= 1; ++dh) {
        for (int dw = -1; dw <= 1; ++dw) {
            if (dh == 0 && dw == 0) continue;
            const int nh = h + dh, nw = w + dw;
            if (nh < 0 || nh >= map.height || nw < 0 || nw >= map.width) continue;
            if (map.at(nh, nw) != 0) return true;
        }
    }
    return false;
}

}  // namespace forest_detail

// Fill pixels that are background at one level but covered at another.
// Donors are tried adjacent level first (finer before coarser); each donor
// mask contributes at most one fresh label per target level.
//
// Fills sourced from a coarser donor are applied per connected gap component
// and only when the component touches no existing label of the target map.
// Gap regions that hug surviving masks are exactly the edge gutters and
// filtered fragments the pipeline itself produces; skipping them keeps the
// refinement idempotent.
inline std::vector<LabelMap> fill_missing(const std::vector<LabelMap>& levels) {
    const int n = static_cast<int>(levels.size());
    for (int l = 1; l < n; ++l)
        if (!levels[l].same_size(levels[0])) throw ParseError("fill_missing: level size mismatch");
    std::vector<LabelMap> out = levels;
    int32_t next_label = forest_detail::max_label(levels) + 1;

    for (int target = 0; target < n; ++target) {
        // donor order: target+1, target-1, target+2, target-2, ...
        std::vector<int> donors;
        for (int step = 1; step < n; ++step) {
            if (target + step < n) donors.push_back(target + step);
            if (target - step >= 0) donors.push_back(target - step);
        }
        for (int donor : donors) {
            const LabelMap& src = levels[donor];
            LabelMap& dst = out[target];
            if (donor > target) {
                // finer donor: plain partial-footprint fill, fresh label per donor mask
                std::vector<std::pair<int32_t, int32_t>> fresh;  // donor label -> fresh label
                for (int h = 0; h < dst.height; ++h) {
                    for (int w = 0; w < dst.width; ++w) {
                        if (dst.at(h, w) != 0) continue;
                        const int32_t s = src.at(h, w);
                        if (s == 0) continue;
                        int32_t assigned = 0;
                        for (const auto& [dl, fl] : fresh) {
                            if (dl == s) {
                                assigned = fl;
                                break;
                            }
                        }
                        if (assigned == 0) {
                            assigned = next_label++;
                            fresh.emplace_back(s, assigned);
                        }
                        dst.at(h, w) = assigned;
                    }
                }
            } else {
                // coarser donor: flood-fill gap components per donor mask, keep
                // only components that touch no existing target label
                const size_t sz = dst.labels.size();
                std::vector<int32_t> comp(sz, -1);
                std::vector<std::vector<int32_t>> comp_pixels;
                std::vector<bool> comp_touches;
                std::vector<int32_t> comp_donor;
                std::vector<int32_t> stack;
                for (int h = 0; h < dst.height; ++h) {
                    for (int w = 0; w < dst.width; ++w) {
                        const int32_t start = h * dst.width + w;
                        if (comp[start] >= 0 || dst.labels[start] != 0 || src.labels[start] == 0) continue;
                        const int32_t donor_label = src.labels[start];
                        const int32_t id = static_cast<int32_t>(comp_pixels.size());
                        comp_pixels.emplace_back();
                        comp_touches.push_back(false);
                        comp_donor.push_back(donor_label);
                        comp[start] = id;
                        stack.assign(1, start);
                        while (!stack.empty()) {
                            const int32_t px = stack.back();
                            stack.pop_back();
                            comp_pixels[id].push_back(px);
                            const int ph = px / dst.width, pw = px % dst.width;
                            if (forest_detail::touches_nonzero(dst, ph, pw)) comp_touches[id] = true;
                            for (int dh = -1; dh <= 1; ++dh) {
                                for (int dw = -1; dw <= 1; ++dw) {
                                    if (dh == 0 && dw == 0) continue;
                                    const int nh = ph + dh, nw = pw + dw;
                                    if (nh < 0 || nh >= dst.height || nw < 0 || nw >= dst.width) continue;
                                    const int32_t nx = nh * dst.width + nw;
                                    if (comp[nx] >= 0 || dst.labels[nx] != 0 || src.labels[nx] != donor_label)
                                        continue;
                                    comp[nx] = id;
                                    stack.push_back(nx);
                                }
                            }
                        }
                    }
                }
                std::vector<std::pair<int32_t, int32_t>> fresh;  // donor label -> fresh label
                for (size_t id = 0; id < comp_pixels.size(); ++id) {
                    if (comp_touches[id]) continue;
                    int32_t assigned = 0;
                    for (const auto& [dl, fl] : fresh) {
                        if (dl == comp_donor[id]) {
                            assigned = fl;
                            break;
                        }
                    }
                    if (assigned == 0) {
                        assigned = next_label++;
                        fresh.emplace_back(comp_donor[id], assigned);
                    }
                    for (int32_t px : comp_pixels[id]) dst.labels[px] = assigned;
                }
            }
        }
    }
    return out;
}

// Zero every pixel with an in-bounds 8-neighbour carrying a different
// nonzero label (kernel [[1,1,1],[1,0,1],[1,1,1]]). Borders against
// background are kept.
inline LabelMap zero_edges(const LabelMap& map) {
    LabelMap out = map;
    for (int h = 0; h < map.height; ++h) {
        for (int w = 0; w < map.width; ++w) {
            const int32_t v = map.at(h, w);
            if (v == 0) continue;
            bool edge = false;
            for (int dh = -1; dh <= 1 && !edge; ++dh) {
                for (int dw = -1; dw <= 1; ++dw) {
                    if (dh == 0 && dw == 0) continue;
                    const int nh = h + dh, nw = w + dw;
                    if (nh < 0 || nh >= map.height || nw < 0 || nw >= map.width) continue;
                    const int32_t nv = map.at(nh, nw);
                    if (nv != 0 && nv != v) {
                        edge = true;
                        break;
                    }
                }
            }
            if (edge) out.at(h, w) = 0;
        }
    }
    return out;
}

// Zero the fine map wherever the coarse map is background, then split any
// fine mask that still straddles several coarse labels into one fragment per
// coarse label (fresh ids), so every fine mask lies inside exactly one
// coarse mask.
inline LabelMap cut(const LabelMap& fine, const LabelMap& coarse) {
    if (!fine.same_size(coarse)) throw ParseError("cut: size mismatch");
    LabelMap out = fine;
    for (size_t i = 0; i < out.labels.size(); ++i)
        if (coarse.labels[i] == 0) out.labels[i] = 0;

    // fine label -> set of coarse labels underneath
    std::map<int32_t, std::vector<int32_t>> parents;
    for (int h = 0; h < out.height; ++h) {
        for (int w = 0; w < out.width; ++w) {
            const int32_t f = out.at(h, w);
            if (f == 0) continue;
            auto& ps = parents[f];
            const int32_t c = coarse.at(h, w);
            if (std::find(ps.begin(), ps.end(), c) == ps.end()) ps.push_back(c);
        }
    }
    int32_t next_label = 0;
    for (int32_t v : out.labels) next_label = std::max(next_label, v);
    ++next_label;
    for (auto& [f, ps] : parents) {
        if (ps.size() < 2) continue;
        std::sort(ps.begin(), ps.end());
        std::vector<std::pair<int32_t, int32_t>> frag;  // coarse label -> fragment id
        for (int32_t c : ps) frag.emplace_back(c, next_label++);
        for (int h = 0; h < out.height; ++h) {
            for (int w = 0; w < out.width; ++w) {
                if (out.at(h, w) != f) continue;
                const int32_t c = coarse.at(h, w);
                for (const auto& [cl, id] : frag) {
                    if (cl == c) {
                        out.at(h, w) = id;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

// Drop masks with fewer than min_mask_pixels pixels (strict inequality:
// exactly min_mask_pixels survives).
inline LabelMap filter_small(const LabelMap& map, int64_t min_mask_pixels) {
    std::map<int32_t, int64_t> count;
    for (int32_t v : map.labels)
        if (v != 0) ++count[v];
    LabelMap out = map;
    for (int32_t& v : out.labels)
        if (v != 0 && count[v] < min_mask_pixels) v = 0;
    return out;
}

// Default threshold scaling: the full-resolution value was tuned for
// full-size masks, desk-scale images get a proportional floor.
inline int64_t scaled_min_mask_pixels(int height, int width, double fullres_min = 2500.0,
                                      double fullres_pixels = 738.0 * 994.0) {
    const double scaled = fullres_min * static_cast<double>(height) * width / fullres_pixels;
    return std::max<int64_t>(8, static_cast<int64_t>(std::llround(scaled)));
}

inline std::vector<LabelMap> refine_pass(const std::vector<LabelMap>& levels, int64_t min_mask_pixels) {
    std::vector<LabelMap> maps = fill_missing(levels);
    for (auto& m : maps) m = zero_edges(m);
    for (size_t l = 1; l < maps.size(); ++l) maps[l] = cut(maps[l], maps[l - 1]);
    for (auto& m : maps) m = filter_small(m, min_mask_pixels);
    return maps;
}

// The fill/zero/cut/filter pass is applied until the maps stop changing.
// A single pass is not a fixpoint in general: filtering can empty a mask's
// fine coverage and the next fill pass legitimately repopulates it. Fills
// shrink the remaining gap area every round, so this converges in a handful
// of passes.
inline std::vector<LabelMap> refine_levels(const std::vector<LabelMap>& levels, int64_t min_mask_pixels) {
    std::vector<LabelMap> maps = refine_pass(levels, min_mask_pixels);
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<LabelMap> next = refine_pass(maps, min_mask_pixels);
        bool same = true;
        for (size_t l = 0; l < maps.size(); ++l) same = same && next[l].labels == maps[l].labels;
        if (same) return maps;
        maps = std::move(next);
    }
    throw std::logic_error("refine_levels: no fixpoint after 100 passes");
}

struct MaskNode {
    int node_id = -1;
    int level = 0;
    int view_index = 0;
    int32_t label = 0;
    int64_t pixel_count = 0;
    int parent = -1;
    std::vector<int> children;
    std::vector<int32_t> pixels;  // flattened row-major indices
};

struct MaskForest {
    int view_index = 0;
    std::vector<LabelMap> levels;  // refined maps
    std::vector<MaskNode> nodes;
    std::vector<int> roots;
    int dropped_orphans = 0;

    const MaskNode* find(int level, int32_t label) const {
        for (const auto& n : nodes)
            if (n.level == level && n.label == label) return &n;
        return nullptr;
    }
    std::vector<int> nodes_at_level(int level) const {
        std::vector<int> ids;
        for (const auto& n : nodes)
            if (n.level == level) ids.push_back(n.node_id);
        return ids;
    }
};

// Build the per-view tree from refined maps: level-0 masks are roots, each
// deeper mask attaches to the unique mask containing it one level up.
// Expects maps that already went through refine_levels.
inline MaskForest build_forest(const std::vector<LabelMap>& refined, int view_index) {
    MaskForest forest;
    forest.view_index = view_index;
    forest.levels = refined;

    std::vector<std::map<int32_t, int>> label_to_node(refined.size());
    for (size_t level = 0; level < refined.size(); ++level) {
        const LabelMap& map = refined[level];
        std::map<int32_t, std::vector<int32_t>> masks;
        for (int32_t i = 0; i < static_cast<int32_t>(map.labels.size()); ++i)
            if (map.labels[i] != 0) masks[map.labels[i]].push_back(i);

        for (auto& [label, pixels] : masks) {
            MaskNode node;
            node.level = static_cast<int>(level);
            node.view_index = view_index;
            node.label = label;
            node.pixel_count = static_cast<int64_t>(pixels.size());
            node.pixels = std::move(pixels);

            if (level > 0) {
                const LabelMap& up = refined[level - 1];
                int32_t parent_label = 0;
                bool orphan = false;
                for (int32_t px : node.pixels) {
                    const int32_t pl = up.labels[px];
                    if (pl == 0) {
                        orphan = true;
                    } else if (parent_label == 0) {
                        parent_label = pl;
                    } else if (parent_label != pl) {
                        throw std::logic_error("build_forest: mask overlaps two parents, cut should have prevented this");
                    }
                }
                if (parent_label == 0) {
                    ++forest.dropped_orphans;
                    continue;  // no surviving parent anywhere under this mask
                }
                if (orphan)
                    throw std::logic_error("build_forest: mask partially outside its parent");
                node.parent = label_to_node[level - 1].at(parent_label);
            }

            node.node_id = static_cast<int>(forest.nodes.size());
            label_to_node[level][label] = node.node_id;
            if (level == 0)
                forest.roots.push_back(node.node_id);
            else
                forest.nodes[node.parent].children.push_back(node.node_id);
            forest.nodes.push_back(std::move(node));
        }
    }
    return forest;
}

}  // namespace treesplat
