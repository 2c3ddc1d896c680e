#pragma once

#include "trax/core.hpp"
#include "trax/link.hpp"
#include "trax/matching.hpp"

#include <map>
#include <optional>

namespace trax {

// Node correspondence for evaluation. ns_events hold predicted nodes that
// falsely merged several reference nodes (mask mode only); the covered gt
// nodes count as matched after the split.
struct EvalMatching {
    std::unordered_map<std::int64_t, std::int64_t> pred_to_gt;
    std::unordered_map<std::int64_t, std::int64_t> gt_to_pred;
    std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> ns_events;
    std::vector<std::int64_t> fp_pred;
    std::vector<std::int64_t> fn_gt;
};

// Point mode: per-frame one-to-one minimum-cost assignment, gated at distance
// r_eval (via the 0.5 score gate with delta_max = 2 r_eval).
inline EvalMatching match_nodes_points(const std::vector<std::vector<Detection>>& pred,
                                       const std::vector<std::vector<Detection>>& gt,
                                       double r_eval) {
    if (r_eval <= 0.0) throw Error("match_nodes_points: r_eval must be positive");
    EvalMatching out;
    std::size_t frames = std::max(pred.size(), gt.size());
    static const std::vector<Detection> kEmpty;
    for (std::size_t f = 0; f < frames; ++f) {
        const auto& p = f < pred.size() ? pred[f] : kEmpty;
        const auto& g = f < gt.size() ? gt[f] : kEmpty;
        Matching m = match_frame(p, g, 2.0 * r_eval);
        for (auto [pid, gid] : m.pairs) {
            out.pred_to_gt[pid] = gid;
            out.gt_to_pred[gid] = pid;
        }
        out.fp_pred.insert(out.fp_pred.end(), m.unmatched_dets.begin(), m.unmatched_dets.end());
        out.fn_gt.insert(out.fn_gt.end(), m.unmatched_gts.begin(), m.unmatched_gts.end());
    }
    return out;
}

// Pixel-overlap counts between predicted and reference labeled regions of one
// frame, keyed by detection ids.
struct FrameOverlap {
    std::map<std::pair<std::int64_t, std::int64_t>, long> inter;  // (pred id, gt id)
    std::map<std::int64_t, long> pred_area;
    std::map<std::int64_t, long> gt_area;
};

// Mask mode: a predicted node matches every reference node whose area it
// covers by more than half; covering several at once is a node-split event.
inline EvalMatching match_nodes_masks(const std::vector<FrameOverlap>& per_frame) {
    EvalMatching out;
    for (const auto& fo : per_frame) {
        std::map<std::int64_t, std::vector<std::int64_t>> covered;  // pred -> gts
        std::unordered_set<std::int64_t> gt_seen;
        for (const auto& [key, px] : fo.inter) {
            auto [pid, gid] = key;
            if (2 * px > fo.gt_area.at(gid)) {
                covered[pid].push_back(gid);
                gt_seen.insert(gid);
            }
        }
        for (const auto& [gid, area] : fo.gt_area) {
            (void)area;
            if (!gt_seen.count(gid)) out.fn_gt.push_back(gid);
        }
        for (const auto& [pid, area] : fo.pred_area) {
            (void)area;
            auto it = covered.find(pid);
            if (it == covered.end()) {
                out.fp_pred.push_back(pid);
            } else if (it->second.size() == 1) {
                out.pred_to_gt[pid] = it->second.front();
                out.gt_to_pred[it->second.front()] = pid;
            } else {
                std::sort(it->second.begin(), it->second.end());
                out.ns_events.emplace_back(pid, it->second);
            }
        }
    }
    return out;
}

struct AogmWeights {
    double ns = 5.0, fn = 10.0, fp = 1.0, ed = 1.0, ea = 1.5, ec = 1.0;
};

struct AogmReport {
    long ns = 0, fn = 0, fp = 0, ed = 0, ea = 0, ec = 0;
    double aogm = 0.0;
    double aogm0 = 0.0;
    double tra = 0.0;
    double aogm_plus = 0.0;
    long fp_edges = 0, fn_edges = 0;
    long fp_divs = 0, fn_divs = 0, tp_divs = 0;
    double division_f1 = 1.0;
    bool empty_gt = false;
    AogmWeights weights;
};

struct DivisionConfig {
    int tol = 1;  // temporal tolerance in frames
};

namespace detail {

// Representatives of the two daughter branches at frame `target`, following
// unique child links; nullopt if a branch dies or divides again first.
inline std::optional<std::array<std::int64_t, 2>> daughters_at(
    const LineageGraph& g, std::int64_t div_node,
    const std::unordered_map<std::int64_t, int>& frames, int target) {
    auto kids = g.children(div_node);
    if (kids.size() != 2) return std::nullopt;
    std::array<std::int64_t, 2> reps{};
    for (int b = 0; b < 2; ++b) {
        std::int64_t cur = kids[b];
        while (frames.at(cur) < target) {
            auto next = g.children(cur);
            if (next.size() != 1) return std::nullopt;
            cur = next.front();
        }
        if (frames.at(cur) != target) return std::nullopt;
        reps[b] = cur;
    }
    return reps;
}

}  // namespace detail

struct DivisionErrors {
    long tp = 0, fp = 0, fn = 0;
    double f1 = 1.0;
};

// A gt division is recovered iff a predicted division within +-tol frames has
// daughter branches that map onto the gt daughter branches under the node
// matching. Divisions are paired one-to-one, closest frame offset first.
inline DivisionErrors division_errors(const LineageGraph& pred,
                                      const std::unordered_map<std::int64_t, int>& pred_frames,
                                      const LineageGraph& gt,
                                      const std::unordered_map<std::int64_t, int>& gt_frames,
                                      const EvalMatching& em, const DivisionConfig& cfg = {}) {
    if (cfg.tol < 0) throw Error("division_errors: tol must be >= 0");
    std::vector<std::int64_t> gt_divs, pred_divs;
    for (std::int64_t v : gt.nodes())
        if (gt.out_degree(v) == 2) gt_divs.push_back(v);
    for (std::int64_t v : pred.nodes())
        if (pred.out_degree(v) == 2) pred_divs.push_back(v);

    std::unordered_set<std::int64_t> used;
    DivisionErrors out;
    for (std::int64_t g : gt_divs) {
        int tg = gt_frames.at(g);
        std::vector<std::int64_t> cands;
        for (std::int64_t q : pred_divs)
            if (!used.count(q) && std::abs(pred_frames.at(q) - tg) <= cfg.tol)
                cands.push_back(q);
        std::sort(cands.begin(), cands.end(), [&](std::int64_t a, std::int64_t b) {
            int da = std::abs(pred_frames.at(a) - tg), db = std::abs(pred_frames.at(b) - tg);
            return std::tie(da, a) < std::tie(db, b);
        });
        bool hit = false;
        for (std::int64_t q : cands) {
            int target = std::max(tg, pred_frames.at(q)) + 1;
            auto gd = detail::daughters_at(gt, g, gt_frames, target);
            auto pd = detail::daughters_at(pred, q, pred_frames, target);
            if (!gd || !pd) continue;
            auto mapped = [&](std::int64_t gid) {
                auto it = em.gt_to_pred.find(gid);
                return it == em.gt_to_pred.end() ? std::int64_t(-1) : it->second;
            };
            std::int64_t m0 = mapped((*gd)[0]), m1 = mapped((*gd)[1]);
            if (m0 < 0 || m1 < 0) continue;
            bool same = (m0 == (*pd)[0] && m1 == (*pd)[1]) || (m0 == (*pd)[1] && m1 == (*pd)[0]);
            if (same) {
                used.insert(q);
                hit = true;
                break;
            }
        }
        if (hit)
            out.tp += 1;
        else
            out.fn += 1;
    }
    out.fp = static_cast<long>(pred_divs.size()) - static_cast<long>(used.size());
    long den = 2 * out.tp + out.fp + out.fn;
    out.f1 = den == 0 ? 1.0 : 2.0 * out.tp / static_cast<double>(den);
    return out;
}

// AOGM operation counts in the stated order (NS, FN, FP, ED, EA, EC), the
// weighted sum, TRA and AOGM+. Edges incident to FP or node-split predictions
// are removed by the node operations and do not count again as ED.
inline AogmReport compute_aogm(const LineageGraph& pred,
                               const std::unordered_map<std::int64_t, int>& pred_frames,
                               const LineageGraph& gt,
                               const std::unordered_map<std::int64_t, int>& gt_frames,
                               const EvalMatching& em, const DivisionConfig& div_cfg = {},
                               const AogmWeights& w = {}) {
    AogmReport r;
    r.weights = w;
    for (const auto& ev : em.ns_events) r.ns += static_cast<long>(ev.second.size()) - 1;
    r.fn = static_cast<long>(em.fn_gt.size());
    r.fp = static_cast<long>(em.fp_pred.size());

    // Mapped predicted edges: both endpoints one-to-one matched.
    std::set<std::pair<std::int64_t, std::int64_t>> gt_edge_set;
    for (const auto& e : gt.edges()) gt_edge_set.emplace(e.parent, e.child);
    std::set<std::pair<std::int64_t, std::int64_t>> covered_gt_edges;
    for (const auto& e : pred.edges()) {
        auto pu = em.pred_to_gt.find(e.parent);
        auto pv = em.pred_to_gt.find(e.child);
        if (pu == em.pred_to_gt.end() || pv == em.pred_to_gt.end()) continue;
        std::pair<std::int64_t, std::int64_t> ge{pu->second, pv->second};
        if (gt_edge_set.count(ge)) {
            covered_gt_edges.insert(ge);
            bool pred_div = pred.out_degree(e.parent) == 2;
            bool gt_div = gt.out_degree(ge.first) == 2;
            if (pred_div != gt_div) r.ec += 1;
        } else {
            r.ed += 1;
        }
    }
    r.ea = static_cast<long>(gt_edge_set.size() - covered_gt_edges.size());

    r.aogm = w.ns * r.ns + w.fn * r.fn + w.fp * r.fp + w.ed * r.ed + w.ea * r.ea + w.ec * r.ec;
    r.aogm0 = w.fn * static_cast<double>(gt.node_count()) +
              w.ea * static_cast<double>(gt.edge_count());
    if (gt.node_count() == 0) {
        r.empty_gt = true;
        r.tra = 1.0;
    } else {
        r.tra = 1.0 - std::min(r.aogm, r.aogm0) / r.aogm0;
    }
    // All solution nodes are the linker's input detections, so the matching FN
    // count is exactly the detector-attributable penalty.
    r.aogm_plus = r.aogm - w.fn * r.fn;
    r.fp_edges = r.ed;
    r.fn_edges = r.ea;

    DivisionErrors de = division_errors(pred, pred_frames, gt, gt_frames, em, div_cfg);
    r.tp_divs = de.tp;
    r.fp_divs = de.fp;
    r.fn_divs = de.fn;
    r.division_f1 = de.f1;
    return r;
}

struct ErrorEdge {
    std::string label;  // TP, FP, FN
    std::int64_t parent = 0, child = 0;
    int t_parent = 0, t_child = 0;
};

// Edge-level error annotations for plotting error trees: predicted edges are
// TP/FP (gt counterpart or not), uncovered gt edges are FN.
inline std::vector<ErrorEdge> export_error_tree(
    const LineageGraph& pred, const std::unordered_map<std::int64_t, int>& pred_frames,
    const LineageGraph& gt, const std::unordered_map<std::int64_t, int>& gt_frames,
    const EvalMatching& em) {
    std::vector<ErrorEdge> out;
    std::set<std::pair<std::int64_t, std::int64_t>> gt_edge_set;
    for (const auto& e : gt.edges()) gt_edge_set.emplace(e.parent, e.child);
    std::set<std::pair<std::int64_t, std::int64_t>> covered;
    for (const auto& e : pred.edges()) {
        auto pu = em.pred_to_gt.find(e.parent);
        auto pv = em.pred_to_gt.find(e.child);
        bool tp = false;
        if (pu != em.pred_to_gt.end() && pv != em.pred_to_gt.end()) {
            std::pair<std::int64_t, std::int64_t> ge{pu->second, pv->second};
            if (gt_edge_set.count(ge)) {
                tp = true;
                covered.insert(ge);
            }
        }
        out.push_back({tp ? "TP" : "FP", e.parent, e.child, pred_frames.at(e.parent),
                       pred_frames.at(e.child)});
    }
    for (const auto& e : gt.edges())
        if (!covered.count({e.parent, e.child}))
            out.push_back({"FN", e.parent, e.child, gt_frames.at(e.parent),
                           gt_frames.at(e.child)});
    return out;
}

inline std::unordered_map<std::int64_t, int> frames_of(
    const std::vector<std::vector<Detection>>& by_frame) {
    std::unordered_map<std::int64_t, int> out;
    for (const auto& f : by_frame)
        for (const auto& d : f) out[d.id] = d.t;
    return out;
}

}  // namespace trax
