#pragma once

#include "trax/core.hpp"
#include "trax/matching.hpp"

#include <memory>

namespace trax {

// Self-contained training sample: a window plus shared handles to the full gt
// graph and the video-level matching. `orig_frame` keeps the pre-augmentation
// frame of each row so sub-lineage lookups stay valid after temporal
// subsampling rescales window frames; `stride` is the subsampling factor.
struct WindowSample {
    Window win;
    std::shared_ptr<const LineageGraph> gt;
    std::shared_ptr<const VideoMatching> matching;
    std::vector<int> orig_frame;
    int stride = 1;
};

inline WindowSample make_window_sample(const std::vector<std::vector<Detection>>& by_frame,
                                       std::shared_ptr<const LineageGraph> gt,
                                       std::shared_ptr<const VideoMatching> matching,
                                       int start, int span) {
    std::vector<Detection> dets;
    for (int f = start; f < start + span && f < static_cast<int>(by_frame.size()); ++f)
        dets.insert(dets.end(), by_frame[f].begin(), by_frame[f].end());
    WindowSample s;
    s.win = Window::make(start, span, std::move(dets));
    s.gt = std::move(gt);
    s.matching = std::move(matching);
    s.orig_frame = s.win.frames();
    return s;
}

namespace detail {

// True iff `anc` is reached by walking exactly `steps` parent links up from
// `node`.
inline bool is_ancestor_at(const LineageGraph& g, std::int64_t anc, std::int64_t node,
                           int steps) {
    std::int64_t cur = node;
    for (int k = 0; k < steps; ++k) {
        auto p = g.parent(cur);
        if (!p) return false;
        cur = *p;
    }
    return cur == anc;
}

// Number of descendants exactly `steps` child links below `node` (composed
// out-degree under temporal subsampling).
inline int descendants_at(const LineageGraph& g, std::int64_t node, int steps) {
    if (steps == 0) return 1;
    int total = 0;
    for (std::int64_t c : g.children(node)) total += descendants_at(g, c, steps - 1);
    return total;
}

}  // namespace detail

// Binary target matrix: a_ij = 1 iff both detections are matched and their gt
// nodes lie on one ancestor/descendant chain. Spurious detections and
// same-frame pairs stay 0; the diagonal is 0.
inline AssociationMatrix build_target(const WindowSample& s) {
    const int n = s.win.size();
    AssociationMatrix out;
    out.role = MatrixRole::Target;
    out.frames = s.win.frames();
    out.m = Eigen::MatrixXd::Zero(n, n);
    const auto& vm = *s.matching;
    for (int i = 0; i < n; ++i) {
        std::int64_t gi = vm.gt_of(s.win.dets[i].id);
        if (gi < 0) continue;
        for (int j = i + 1; j < n; ++j) {
            std::int64_t gj = vm.gt_of(s.win.dets[j].id);
            if (gj < 0) continue;
            int steps = s.orig_frame[j] - s.orig_frame[i];
            if (steps <= 0) continue;  // rows sorted by frame; same-frame pairs unrelated
            if (detail::is_ancestor_at(*s.gt, gi, gj, steps)) {
                out.m(i, j) = 1.0;
                out.m(j, i) = 1.0;
            }
        }
    }
    return out;
}

struct WeightConfig {
    int dt = 2;  // temporal cutoff in window frames
    double lam_div = 10.0;
    double lam_cont = 1.0;
};

// Loss weights: 0 outside forward gaps 1..dt; otherwise keyed on the composed
// out-degree of the row detection's gt node (dividing 1+lam_div, continuing
// 1+lam_cont, spurious or terminal 1).
inline AssociationMatrix build_weights(const WindowSample& s, const WeightConfig& cfg = {}) {
    if (cfg.dt < 1) throw Error("build_weights: dt must be >= 1");
    if (cfg.lam_div < 0.0 || cfg.lam_cont < 0.0)
        throw Error("build_weights: lambdas must be non-negative");
    const int n = s.win.size();
    AssociationMatrix out;
    out.role = MatrixRole::Weights;
    out.frames = s.win.frames();
    out.m = Eigen::MatrixXd::Zero(n, n);
    const auto& vm = *s.matching;

    std::vector<double> row_weight(n, 1.0);
    for (int i = 0; i < n; ++i) {
        std::int64_t gi = vm.gt_of(s.win.dets[i].id);
        if (gi < 0) continue;  // spurious detection: plain weight
        int deg = detail::descendants_at(*s.gt, gi, s.stride);
        if (deg >= 2)
            row_weight[i] = 1.0 + cfg.lam_div;
        else if (deg == 1)
            row_weight[i] = 1.0 + cfg.lam_cont;
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            int gap = out.frames[j] - out.frames[i];
            if (gap < 1 || gap > cfg.dt) continue;
            out.m(i, j) = row_weight[i];
        }
    }
    return out;
}

inline AssociationMatrix build_target(const Window& win, const VideoMatching& vm,
                                      const LineageGraph& gt) {
    WindowSample s;
    s.win = win;
    s.gt = std::shared_ptr<const LineageGraph>(&gt, [](const LineageGraph*) {});
    s.matching = std::shared_ptr<const VideoMatching>(&vm, [](const VideoMatching*) {});
    s.orig_frame = win.frames();
    return build_target(s);
}

inline AssociationMatrix build_weights(const Window& win, const VideoMatching& vm,
                                       const LineageGraph& gt, const WeightConfig& cfg = {}) {
    WindowSample s;
    s.win = win;
    s.gt = std::shared_ptr<const LineageGraph>(&gt, [](const LineageGraph*) {});
    s.matching = std::shared_ptr<const VideoMatching>(&vm, [](const VideoMatching*) {});
    s.orig_frame = win.frames();
    return build_weights(s, cfg);
}

}  // namespace trax
