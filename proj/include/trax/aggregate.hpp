#pragma once

#include "trax/model.hpp"
#include "trax/tiling.hpp"

#include <map>

namespace trax {

struct ScoreEntry {
    double sum = 0.0;
    int count = 0;
};

// Sparse accumulator of per-window association probabilities, keyed by global
// detection id pairs with forward frame gap in [1, dt].
struct ScoreTable {
    std::map<std::pair<std::int64_t, std::int64_t>, ScoreEntry> acc;
    int window_span = 0;  // s actually used (denominator of the literal Eq-7 mean)
    bool literal_mean = false;

    void add(std::int64_t i, std::int64_t j, double v) {
        ScoreEntry& e = acc[{i, j}];
        e.sum += v;
        e.count += 1;
    }

    double mean(std::int64_t i, std::int64_t j) const {
        auto it = acc.find({i, j});
        if (it == acc.end()) return 0.0;
        double den = literal_mean ? std::max(1, window_span - 1) : it->second.count;
        return std::min(1.0, it->second.sum / den);
    }
};

struct InferOptions {
    int window = 0;  // 0 = model default s
    int dt = 2;      // store gaps 1..dt
    bool literal_mean = false;
    int threads = 1;
};

// Sliding-window inference over a whole video. Windows larger than the token
// budget are split into overlapping spatial tiles (margin d_max); a pair seen
// by several tiles of one window contributes the tile mean, so the stored
// count stays "number of contributing windows".
inline ScoreTable infer_video(const ModelParams<float>& params,
                              const std::vector<std::vector<Detection>>& by_frame,
                              const InferOptions& opt = {}) {
    const ModelConfig& cfg = params.cfg;
    const int t_frames = static_cast<int>(by_frame.size());
    if (t_frames < 2) throw Error("infer_video: need at least two frames");
    const int s = std::min(opt.window > 0 ? opt.window : cfg.window, t_frames);
    const int n_windows = t_frames - s + 1;

    ScoreTable table;
    table.window_span = s;
    table.literal_mean = opt.literal_mean;

    using PairList = std::vector<std::pair<std::pair<std::int64_t, std::int64_t>, ScoreEntry>>;
    std::vector<PairList> per_window(n_windows);

    parallel_for(n_windows, opt.threads, [&](int wi) {
        std::vector<Detection> dets;
        for (int f = wi; f < wi + s; ++f)
            dets.insert(dets.end(), by_frame[f].begin(), by_frame[f].end());
        if (dets.empty()) return;
        Window win = Window::make(wi, s, std::move(dets));

        std::map<std::pair<std::int64_t, std::int64_t>, ScoreEntry> local;
        auto run_tile = [&](const Window& tile) {
            WindowInput in = make_input(tile, cfg);
            Eigen::MatrixXd logits = forward_eval(params, in).cast<double>();
            Eigen::MatrixXd probs = normalize_scores(logits, in.frames, cfg.parental);
            const int n = tile.size();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    int gap = in.frames[j] - in.frames[i];
                    if (gap < 1 || gap > opt.dt) continue;
                    ScoreEntry& e = local[{tile.dets[i].id, tile.dets[j].id}];
                    e.sum += std::min(1.0, probs(i, j));
                    e.count += 1;
                }
            }
        };

        if (win.size() <= cfg.max_tokens) {
            run_tile(win);
        } else {
            auto tiles = tile_indices(win.positions(), cfg.max_tokens, cfg.d_max);
            for (const auto& rows : tiles) {
                std::vector<Detection> sub;
                sub.reserve(rows.size());
                for (int r : rows) sub.push_back(win.dets[r]);
                run_tile(Window::make(wi, s, std::move(sub)));
            }
        }
        per_window[wi].assign(local.begin(), local.end());
    });

    for (const auto& pl : per_window)
        for (const auto& [key, e] : pl) table.add(key.first, key.second, e.sum / e.count);
    return table;
}

struct CandidateEdge {
    std::int64_t parent = 0;
    std::int64_t child = 0;
    double score = 0.0;
};

// Thresholded, distance-gated graph of adjacent-frame link candidates. Every
// detection is a node regardless of incident edges.
struct CandidateGraph {
    std::vector<Detection> detections;  // sorted by (frame, id)
    std::unordered_map<std::int64_t, int> index_of;
    std::vector<CandidateEdge> edges;  // sorted by (parent, child)

    const Detection& det(std::int64_t id) const { return detections[index_of.at(id)]; }
    int frame_of(std::int64_t id) const { return det(id).t; }

    int min_frame() const {
        int m = std::numeric_limits<int>::max();
        for (const auto& d : detections) m = std::min(m, d.t);
        return m;
    }
    int max_frame() const {
        int m = std::numeric_limits<int>::min();
        for (const auto& d : detections) m = std::max(m, d.t);
        return m;
    }
};

inline CandidateGraph build_candidate_graph(const ScoreTable& table,
                                            const std::vector<std::vector<Detection>>& by_frame,
                                            double dist_max, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0) throw Error("build_candidate_graph: alpha must be in [0,1)");
    if (dist_max <= 0.0) throw Error("build_candidate_graph: dist_max must be positive");
    CandidateGraph g;
    for (const auto& frame : by_frame)
        for (const auto& d : frame) g.detections.push_back(d);
    std::sort(g.detections.begin(), g.detections.end(),
              [](const Detection& a, const Detection& b) {
                  return std::tie(a.t, a.id) < std::tie(b.t, b.id);
              });
    for (int i = 0; i < static_cast<int>(g.detections.size()); ++i)
        g.index_of[g.detections[i].id] = i;

    for (const auto& [key, entry] : table.acc) {
        (void)entry;
        auto [pi, ci] = key;
        const Detection& p = g.det(pi);
        const Detection& c = g.det(ci);
        if (c.t - p.t != 1) continue;  // upper blockwise diagonal only
        if ((p.p - c.p).norm() > dist_max) continue;
        double m = table.mean(pi, ci);
        if (m < alpha) continue;
        g.edges.push_back({pi, ci, m});
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const CandidateEdge& a, const CandidateEdge& b) {
        return std::tie(a.parent, a.child) < std::tie(b.parent, b.child);
    });
    return g;
}

}  // namespace trax
