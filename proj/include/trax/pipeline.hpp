#pragma once

#include "trax/io.hpp"

namespace trax {

// Euclidean-distance baseline: score = max(0, 1 - dist/dist_max) for adjacent
// frame pairs within dist_max, feeding the same candidate-graph/linker path as
// the learned scores.
inline ScoreTable distance_scores(const std::vector<std::vector<Detection>>& by_frame,
                                  double dist_max) {
    if (dist_max <= 0.0) throw Error("distance_scores: dist_max must be positive");
    ScoreTable table;
    table.window_span = 2;
    for (std::size_t f = 0; f + 1 < by_frame.size(); ++f) {
        for (const auto& p : by_frame[f]) {
            for (const auto& c : by_frame[f + 1]) {
                double d = (p.p - c.p).norm();
                if (d > dist_max) continue;
                table.add(p.id, c.id, std::max(0.0, 1.0 - d / dist_max));
            }
        }
    }
    return table;
}

struct TrackOptions {
    LinkerConfig linker;
    double dist_max = 0.0;
    int window = 0;  // 0 = model default
    int dt = 2;
    bool literal_mean = false;
    int threads = 1;
};

struct TrackOutput {
    ScoreTable table;
    CandidateGraph cand;
    TrackingSolution solution;
};

// Full inference path: scores (model or distance baseline when params is
// null), candidate graph, then the configured linker.
inline TrackOutput run_tracking(const ModelParams<float>* params,
                                const std::vector<std::vector<Detection>>& by_frame,
                                const TrackOptions& opt) {
    if (opt.dist_max <= 0.0) throw ConfigError("tracking requires data.dist_max > 0");
    TrackOutput out;
    if (params) {
        InferOptions io;
        io.window = opt.window;
        io.dt = opt.dt;
        io.literal_mean = opt.literal_mean;
        io.threads = opt.threads;
        out.table = infer_video(*params, by_frame, io);
    } else {
        out.table = distance_scores(by_frame, opt.dist_max);
    }
    out.cand = build_candidate_graph(out.table, by_frame, opt.dist_max, opt.linker.alpha);
    if (opt.linker.algorithm == "greedy")
        out.solution = link_greedy(out.cand, opt.linker.theta);
    else if (opt.linker.algorithm == "lap")
        out.solution = link_lap(out.cand, opt.linker.lap);
    else if (opt.linker.algorithm == "ilp")
        out.solution = link_ilp(out.cand, opt.linker.ilp);
    else
        throw ConfigError("unknown linker '" + opt.linker.algorithm + "'");
    return out;
}

inline AogmReport evaluate_solution(const TrackingSolution& sol,
                                    const std::vector<std::vector<Detection>>& pred_dets,
                                    const std::vector<std::vector<Detection>>& gt_dets,
                                    const LineageGraph& gt, double r_eval, int division_tol) {
    EvalMatching em = match_nodes_points(pred_dets, gt_dets, r_eval);
    DivisionConfig dc{division_tol};
    return compute_aogm(sol.graph, frames_of(pred_dets), gt, frames_of(gt_dets), em, dc);
}

inline TrainSet trainset_from_sim(const std::vector<SimResult>& train,
                                  const std::vector<SimResult>& val) {
    TrainSet ts;
    for (const auto& v : train) ts.train.push_back(video_from_gt(v.by_frame, v.gt));
    for (const auto& v : val) ts.val.push_back(video_from_gt(v.by_frame, v.gt));
    return ts;
}

inline TrainSet trainset_from_dataset(LoadedDataset& ds) {
    TrainSet ts;
    for (auto* v : ds.split("train")) ts.train.push_back(video_from_gt(v->by_frame, v->gt));
    for (auto* v : ds.split("val")) ts.val.push_back(video_from_gt(v->by_frame, v->gt));
    return ts;
}

inline void write_loss_log(const std::string& path, const std::vector<TrainLogRow>& log) {
    auto f = detail::open_out(path);
    f << "step,train_loss,val_loss\n";
    for (const auto& r : log) {
        f << r.step << ',' << detail::fmt_num(r.train_loss) << ',';
        if (!std::isnan(r.val_loss)) f << detail::fmt_num(r.val_loss);
        f << '\n';
    }
}

}  // namespace trax
