#pragma once

#include "trax/assignment.hpp"
#include "trax/core.hpp"

#include <functional>
#include <unordered_map>
#include <vector>

namespace trax {

// Optional mask-overlap callback; returns IoU for two detections that carry
// mask references. When absent the IoU term of the match criterion is 0.
using IouFn = std::function<double(const Detection&, const Detection&)>;

struct MatchScore {
    double score = 0.0;
    bool matched = false;
};

// score = max(IoU, 1 - |p_det - p_gt| / delta_max); a pair counts as a match
// candidate only when the score strictly exceeds 0.5.
inline MatchScore match_score(const Detection& det, const Detection& gt, double delta_max,
                              double iou = 0.0) {
    if (delta_max <= 0.0) throw Error("match_score: delta_max must be positive");
    double dist_term = 1.0 - (det.p - gt.p).norm() / delta_max;
    double s = std::max(iou, dist_term);
    return {s, s > 0.5};
}

// One-to-one correspondence between detections and ground-truth objects of a
// single frame.
struct Matching {
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;  // (det_id, gt_id)
    std::vector<std::int64_t> unmatched_dets;
    std::vector<std::int64_t> unmatched_gts;
    // Augmented objective: sum of (1 - score) over pairs plus 1 per unmatched
    // entity. Exposed so oracle tests can compare optima exactly.
    double cost = 0.0;
};

// Maximum-score one-to-one assignment over the pairs passing the 0.5 gate,
// solved exactly. Pairs failing the gate are excluded outright; leaving a
// detection or gt unmatched costs 1, so any admissible pair (cost < 0.5) is
// preferred over leaving both sides unmatched.
inline Matching match_frame(const std::vector<Detection>& dets,
                            const std::vector<Detection>& gts, double delta_max,
                            const IouFn& iou = nullptr) {
    Matching out;
    if (!dets.empty() && !gts.empty()) {
        int frame = dets.front().t;
        for (const auto& d : dets)
            if (d.t != frame) throw Error("match_frame: detections span multiple frames");
        for (const auto& g : gts)
            if (g.t != frame) throw Error("match_frame: gt objects span multiple frames");
    }
    const int nd = static_cast<int>(dets.size());
    const int ng = static_cast<int>(gts.size());
    if (nd == 0 || ng == 0) {
        for (const auto& d : dets) out.unmatched_dets.push_back(d.id);
        for (const auto& g : gts) out.unmatched_gts.push_back(g.id);
        out.cost = nd + ng;
        return out;
    }

    const int n = nd + ng;
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, kForbidden);
    for (int i = 0; i < nd; ++i) {
        for (int k = 0; k < ng; ++k) {
            double overlap = iou ? iou(dets[i], gts[k]) : 0.0;
            MatchScore ms = match_score(dets[i], gts[k], delta_max, overlap);
            if (ms.matched) cost(i, k) = 1.0 - ms.score;
        }
        cost(i, ng + i) = 1.0;  // detection stays unmatched
    }
    for (int k = 0; k < ng; ++k) cost(nd + k, k) = 1.0;  // gt stays unmatched
    cost.block(nd, ng, ng, nd).setZero();

    AssignmentResult sol = solve_assignment(cost);
    for (int i = 0; i < nd; ++i) {
        int j = sol.col_of_row[i];
        if (j < ng) {
            out.pairs.emplace_back(dets[i].id, gts[j].id);
            out.cost += cost(i, j);
        } else {
            out.unmatched_dets.push_back(dets[i].id);
            out.cost += 1.0;
        }
    }
    for (int k = 0; k < ng; ++k) {
        bool taken = false;
        for (int i = 0; i < nd; ++i)
            if (sol.col_of_row[i] == k) taken = true;
        if (!taken) {
            out.unmatched_gts.push_back(gts[k].id);
            out.cost += 1.0;
        }
    }
    return out;
}

// Video-level detection <-> gt correspondence (ids are globally unique, so one
// map covers all frames).
struct VideoMatching {
    std::unordered_map<std::int64_t, std::int64_t> det_to_gt;
    std::unordered_map<std::int64_t, std::int64_t> gt_to_det;

    bool has_det(std::int64_t id) const { return det_to_gt.count(id) > 0; }
    std::int64_t gt_of(std::int64_t det) const {
        auto it = det_to_gt.find(det);
        return it == det_to_gt.end() ? -1 : it->second;
    }
};

inline VideoMatching match_video(const std::vector<std::vector<Detection>>& dets_by_frame,
                                 const std::vector<std::vector<Detection>>& gts_by_frame,
                                 double delta_max, const IouFn& iou = nullptr) {
    VideoMatching out;
    std::size_t frames = std::max(dets_by_frame.size(), gts_by_frame.size());
    static const std::vector<Detection> kEmpty;
    for (std::size_t f = 0; f < frames; ++f) {
        const auto& d = f < dets_by_frame.size() ? dets_by_frame[f] : kEmpty;
        const auto& g = f < gts_by_frame.size() ? gts_by_frame[f] : kEmpty;
        Matching m = match_frame(d, g, delta_max, iou);
        for (auto [det_id, gt_id] : m.pairs) {
            out.det_to_gt[det_id] = gt_id;
            out.gt_to_det[gt_id] = det_id;
        }
    }
    return out;
}

}  // namespace trax
