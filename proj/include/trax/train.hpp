#pragma once

#include "trax/augment.hpp"
#include "trax/model.hpp"
#include "trax/tiling.hpp"

#include <cmath>
#include <iostream>

namespace trax {

// One annotated video: detections, ground-truth lineage, and the detection<->gt
// correspondence used for target construction.
struct VideoData {
    std::vector<std::vector<Detection>> by_frame;
    std::shared_ptr<const LineageGraph> gt;
    std::shared_ptr<const VideoMatching> matching;

    int frames() const { return static_cast<int>(by_frame.size()); }
};

// Training on ground-truth detections: the matching is the identity.
inline VideoData video_from_gt(std::vector<std::vector<Detection>> by_frame,
                               LineageGraph gt) {
    VideoData v;
    auto vm = std::make_shared<VideoMatching>();
    for (const auto& frame : by_frame)
        for (const auto& d : frame) {
            vm->det_to_gt[d.id] = d.id;
            vm->gt_to_det[d.id] = d.id;
        }
    v.by_frame = std::move(by_frame);
    v.gt = std::make_shared<const LineageGraph>(std::move(gt));
    v.matching = std::move(vm);
    return v;
}

inline VideoData video_from_predictions(std::vector<std::vector<Detection>> by_frame,
                                        const std::vector<std::vector<Detection>>& gt_by_frame,
                                        LineageGraph gt, double delta_max) {
    VideoData v;
    v.matching = std::make_shared<const VideoMatching>(
        match_video(by_frame, gt_by_frame, delta_max));
    v.by_frame = std::move(by_frame);
    v.gt = std::make_shared<const LineageGraph>(std::move(gt));
    return v;
}

struct TrainSet {
    std::vector<VideoData> train;
    std::vector<VideoData> val;
};

inline FeatureStats fit_feature_stats(const std::vector<VideoData>& videos,
                                      const FeatureConfig& features) {
    const int nz = features.count();
    FeatureStats st;
    st.mean = Eigen::VectorXd::Zero(nz);
    st.stdev = Eigen::VectorXd::Ones(nz);
    if (nz == 0) return st;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(nz), sum2 = Eigen::VectorXd::Zero(nz);
    long count = 0;
    for (const auto& v : videos)
        for (const auto& frame : v.by_frame)
            for (const auto& d : frame) {
                for (int k = 0; k < nz; ++k) {
                    int c = features.channels[k];
                    if (d.z.size() <= c)
                        throw Error("detection " + std::to_string(d.id) +
                                    " missing feature channel '" + kFeatureNames[c] + "'");
                    sum(k) += d.z(c);
                    sum2(k) += d.z(c) * d.z(c);
                }
                ++count;
            }
    if (count == 0) return st;
    st.mean = sum / count;
    for (int k = 0; k < nz; ++k) {
        double var = sum2(k) / count - st.mean(k) * st.mean(k);
        st.stdev(k) = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return st;
}

// Enumerates window samples of one video, tiling windows that exceed the token
// budget into overlapping spatial tiles (margin = d_max).
inline std::vector<WindowSample> video_windows(const VideoData& v, int span, int max_tokens,
                                               double tile_margin) {
    std::vector<WindowSample> out;
    const int t = v.frames();
    if (t < 2) return out;
    const int s = std::min(span, t);
    for (int start = 0; start + s <= t; ++start) {
        WindowSample ws = make_window_sample(v.by_frame, v.gt, v.matching, start, s);
        if (ws.win.size() == 0) continue;
        if (ws.win.size() <= max_tokens) {
            out.push_back(std::move(ws));
            continue;
        }
        auto tiles = tile_indices(ws.win.positions(), max_tokens, tile_margin);
        for (const auto& rows : tiles) {
            std::vector<Detection> dets;
            dets.reserve(rows.size());
            for (int r : rows) dets.push_back(ws.win.dets[r]);
            WindowSample tile;
            tile.win = Window::make(start, s, std::move(dets));
            tile.gt = v.gt;
            tile.matching = v.matching;
            tile.orig_frame = tile.win.frames();
            out.push_back(std::move(tile));
        }
    }
    return out;
}

struct TrainConfig {
    int batch = 8;
    int steps = 1000;
    double lr = 1e-4;
    int warmup = 100;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    std::uint64_t seed = 1;
    double lambda = 1e-2;
    bool parental = true;
    WeightConfig weights;
    AugConfig aug;
    int eval_every = 50;
    int threads = 1;
    bool verbose = false;
};

struct TrainLogRow {
    int step = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    ModelParams<float> params;
    std::vector<TrainLogRow> log;
};

namespace detail {

template <class T>
struct AdamState {
    std::vector<Mat<T>> m, v;
};

// Per-sample loss (value only) on the plain evaluator.
inline double sample_loss(const ModelParams<float>& params, const WindowSample& s,
                          const LossConfig& lcfg, const WeightConfig& wcfg) {
    WindowInput in = make_input(s.win, params.cfg);
    Eigen::MatrixXd logits = forward_eval(params, in).cast<double>();
    AssociationMatrix target = build_target(s);
    AssociationMatrix weights = build_weights(s, wcfg);
    return association_loss(target.m, logits, weights.m, in.frames, lcfg).value;
}

}  // namespace detail

// Mini-batch first-order training. Deterministic for a fixed seed: batch
// sampling, per-sample augmentation streams, and the fixed-order gradient
// reduction are all independent of thread count.
inline TrainResult train(ModelConfig mcfg, const TrainConfig& tcfg, const TrainSet& data) {
    if (data.train.empty()) throw Error("train: empty dataset");
    mcfg.stats = fit_feature_stats(data.train, mcfg.features);
    mcfg.parental = tcfg.parental;
    mcfg.validate();

    std::vector<WindowSample> train_samples, val_samples;
    for (const auto& v : data.train) {
        auto w = video_windows(v, mcfg.window, mcfg.max_tokens, mcfg.d_max);
        train_samples.insert(train_samples.end(), std::make_move_iterator(w.begin()),
                             std::make_move_iterator(w.end()));
    }
    for (const auto& v : data.val) {
        auto w = video_windows(v, mcfg.window, mcfg.max_tokens, mcfg.d_max);
        val_samples.insert(val_samples.end(), std::make_move_iterator(w.begin()),
                           std::make_move_iterator(w.end()));
    }
    if (train_samples.empty()) throw Error("train: no usable windows");

    TrainResult res;
    res.params = ModelParams<float>::init(mcfg, derive_seed(tcfg.seed, 0));
    std::mt19937_64 batch_rng(derive_seed(tcfg.seed, 1));

    std::vector<Mat<float>*> param_ptrs;
    res.params.for_each_param(
        [&](const std::string&, Mat<float>& m) { param_ptrs.push_back(&m); });
    detail::AdamState<float> adam;
    for (Mat<float>* p : param_ptrs) {
        adam.m.push_back(Mat<float>::Zero(p->rows(), p->cols()));
        adam.v.push_back(Mat<float>::Zero(p->rows(), p->cols()));
    }

    LossConfig lcfg{tcfg.lambda, tcfg.parental};
    const int nparams = static_cast<int>(param_ptrs.size());

    auto eval_val = [&]() {
        if (val_samples.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::vector<double> losses(val_samples.size());
        parallel_for(static_cast<int>(val_samples.size()), tcfg.threads, [&](int i) {
            losses[i] = detail::sample_loss(res.params, val_samples[i], lcfg, tcfg.weights);
        });
        double s = 0.0;
        for (double l : losses) s += l;
        return s / losses.size();
    };

    for (int step = 0; step < tcfg.steps; ++step) {
        std::uniform_int_distribution<std::size_t> pick(0, train_samples.size() - 1);
        std::vector<std::size_t> batch(tcfg.batch);
        for (int k = 0; k < tcfg.batch; ++k) batch[k] = pick(batch_rng);

        std::vector<std::vector<Mat<float>>> grads(tcfg.batch);
        std::vector<double> losses(tcfg.batch, 0.0);
        parallel_for(tcfg.batch, tcfg.threads, [&](int k) {
            std::mt19937_64 aug_rng(
                derive_seed(tcfg.seed, 1000 + static_cast<std::uint64_t>(step) * tcfg.batch + k));
            WindowSample s = augment_sample(train_samples[batch[k]], aug_rng, tcfg.aug);
            WindowInput in = make_input(s.win, res.params.cfg);
            auto fw = forward_tape(res.params, in, true);
            Eigen::MatrixXd logits = fw.logits_value().template cast<double>();
            AssociationMatrix target = build_target(s);
            AssociationMatrix weights = build_weights(s, tcfg.weights);
            LossResult lr = association_loss(target.m, logits, weights.m, in.frames, lcfg);
            losses[k] = lr.value;
            fw.tape->backward(fw.logits, lr.d_logits.cast<float>());
            grads[k].reserve(nparams);
            for (int pi = 0; pi < nparams; ++pi)
                grads[k].push_back(fw.tape->grad(fw.param_nodes[pi]));
        });

        double mean_loss = 0.0;
        for (double l : losses) mean_loss += l;
        mean_loss /= tcfg.batch;
        if (!std::isfinite(mean_loss))
            throw NumericError("training diverged (non-finite loss) at step " +
                               std::to_string(step));

        double lr_t = tcfg.lr;
        if (tcfg.warmup > 0) lr_t *= std::min(1.0, (step + 1.0) / tcfg.warmup);
        double t = step + 1.0;
        double bc1 = 1.0 - std::pow(tcfg.adam_beta1, t);
        double bc2 = 1.0 - std::pow(tcfg.adam_beta2, t);
        for (int pi = 0; pi < nparams; ++pi) {
            Mat<float> g = grads[0][pi];
            for (int k = 1; k < tcfg.batch; ++k) g += grads[k][pi];
            g /= static_cast<float>(tcfg.batch);
            auto& m = adam.m[pi];
            auto& v = adam.v[pi];
            m = tcfg.adam_beta1 * m + (1.0f - static_cast<float>(tcfg.adam_beta1)) * g;
            v = (tcfg.adam_beta2 * v.array() +
                 (1.0f - static_cast<float>(tcfg.adam_beta2)) * g.array().square())
                    .matrix();
            auto mhat = m.array() / static_cast<float>(bc1);
            auto vhat = v.array() / static_cast<float>(bc2);
            param_ptrs[pi]->array() -=
                static_cast<float>(lr_t) * mhat / (vhat.sqrt() + static_cast<float>(tcfg.adam_eps));
        }

        TrainLogRow row;
        row.step = step;
        row.train_loss = mean_loss;
        if (tcfg.eval_every > 0 &&
            (step % tcfg.eval_every == tcfg.eval_every - 1 || step == tcfg.steps - 1))
            row.val_loss = eval_val();
        if (tcfg.verbose && (step % 10 == 0 || !std::isnan(row.val_loss)))
            std::cerr << "step " << step << " loss " << mean_loss
                      << (std::isnan(row.val_loss) ? "" : " val " + std::to_string(row.val_loss))
                      << "\n";
        res.log.push_back(row);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Gradient verification against central finite differences.
// ---------------------------------------------------------------------------

struct GradcheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    std::size_t checked = 0;

    bool pass(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Compares the analytic gradient of the full pipeline (forward + loss) with
// central finite differences over every parameter entry, in double precision.
// Each entry is probed at two steps and scored against the better one: the
// larger step serves entries whose FD noise floor (roundoff/2h) dwarfs a tiny
// gradient, the smaller step serves entries with strong curvature (the
// Fourier frequencies see factors of (2 pi |p|)^3). A genuinely wrong
// gradient fails at every step.
inline GradcheckReport gradcheck(const ModelParams<double>& params, const WindowSample& sample,
                                 const LossConfig& lcfg = {}, const WeightConfig& wcfg = {},
                                 std::vector<double> steps = {1e-5, 1e-6}) {
    WindowInput in = make_input(sample.win, params.cfg);
    AssociationMatrix target = build_target(sample);
    AssociationMatrix weights = build_weights(sample, wcfg);

    auto fw = forward_tape(params, in, true);
    LossResult base =
        association_loss(target.m, fw.logits_value(), weights.m, in.frames, lcfg);
    fw.tape->backward(fw.logits, base.d_logits);

    std::vector<Mat<double>> analytic;
    for (std::size_t pi = 0; pi < fw.param_nodes.size(); ++pi)
        analytic.push_back(fw.tape->grad(fw.param_nodes[pi]));

    ModelParams<double> probe = params;
    std::vector<std::pair<std::string, Mat<double>*>> tensors;
    probe.for_each_param(
        [&](const std::string& name, Mat<double>& m) { tensors.emplace_back(name, &m); });

    auto loss_at = [&]() {
        Eigen::MatrixXd logits = forward_eval(probe, in);
        return association_loss(target.m, logits, weights.m, in.frames, lcfg).value;
    };

    GradcheckReport rep;
    for (std::size_t pi = 0; pi < tensors.size(); ++pi) {
        Mat<double>& m = *tensors[pi].second;
        for (int idx = 0; idx < m.size(); ++idx) {
            double saved = m.data()[idx];
            double an = analytic[pi].data()[idx];
            double rel = std::numeric_limits<double>::infinity();
            for (double h : steps) {
                m.data()[idx] = saved + h;
                double lp = loss_at();
                m.data()[idx] = saved - h;
                double lm = loss_at();
                m.data()[idx] = saved;
                double fd = (lp - lm) / (2.0 * h);
                rel = std::min(rel,
                               std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
            }
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = tensors[pi].first;
                rep.worst_index = idx;
            }
        }
    }
    return rep;
}

}  // namespace trax
