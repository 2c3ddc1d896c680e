#pragma once

#include "trax/core.hpp"
#include "trax/tape.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>

namespace trax {

// Which shallow feature channels feed the tokens; empty = points-only mode.
struct FeatureConfig {
    std::vector<int> channels;

    static FeatureConfig all() { return {{0, 1, 2, 3, 4}}; }
    static FeatureConfig points_only() { return {}; }
    int count() const { return static_cast<int>(channels.size()); }
};

// Per-channel standardization statistics, frozen at training time and shipped
// in the checkpoint.
struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stdev;

    bool empty() const { return mean.size() == 0; }
};

// Rotary embedding wavelength ladders (pixels for x/y, frames for t).
struct RopeConfig {
    double spatial_min = 8.0;
    double spatial_max = 2048.0;
    double temporal_min = 2.0;
    double temporal_max = 64.0;
};

struct ModelConfig {
    int d = 256;
    int layers = 6;  // L encoder self-attention + L decoder cross-attention
    int heads = 4;
    int n_freq = 32;
    int mlp_ratio = 4;
    int head_out = 0;  // output width of the two head MLPs; 0 = d
    double d_max = 256.0;
    int window = 6;
    int max_tokens = 2048;
    double fourier_init_scale = 1.0 / 512.0;
    RopeConfig rope;
    FeatureConfig features;
    FeatureStats stats;
    bool parental = true;  // parental-softmax normalization (false = sigmoid ablation)

    int head_dim() const { return d / heads; }
    int token_dim() const { return 2 * n_freq + features.count(); }
    int out_dim() const { return head_out > 0 ? head_out : d; }
    int mlp_hidden() const { return mlp_ratio * d; }

    void validate() const {
        if (d <= 0 || heads <= 0 || d % heads != 0)
            throw ConfigError("model: head count must divide d");
        if (head_dim() % 2 != 0) throw ConfigError("model: head dim must be even for RoPE");
        if (n_freq < 1) throw ConfigError("model: n_freq must be >= 1");
        if (layers < 0) throw ConfigError("model: layers must be >= 0");
        if (window < 2) throw ConfigError("model: window must be >= 2");
        if (max_tokens < 1) throw ConfigError("model: max_tokens must be >= 1");
        if (d_max <= 0.0) throw ConfigError("model: d_max must be positive");
        for (int c : features.channels)
            if (c < 0 || c >= kNumFeatures) throw ConfigError("model: bad feature channel");
    }
};

template <class T>
struct AttnLayer {
    std::vector<Mat<T>> wq, wk, wv;  // per head, d x head_dim
    std::vector<Mat<T>> bq, bk, bv;  // per head, 1 x head_dim
    Mat<T> wo, bo;                   // d x d, 1 x d
    Mat<T> ln1_g, ln1_b, ln2_g, ln2_b;
    Mat<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <class T>
struct Mlp2 {
    Mat<T> w1, b1, w2, b2;
};

template <class T>
struct ModelParams {
    ModelConfig cfg;
    Mat<T> fourier_b;    // n_freq x 2, learned
    Mat<T> w_inp, b_inp; // token_dim x d, 1 x d
    std::vector<AttnLayer<T>> enc, dec;
    Mlp2<T> head_y, head_z;

    template <class Self, class F>
    static void visit(Self& self, F&& f) {
        f("fourier_b", self.fourier_b);
        f("w_inp", self.w_inp);
        f("b_inp", self.b_inp);
        auto visit_stack = [&](Self& s, auto& stack, const std::string& prefix) {
            for (std::size_t l = 0; l < stack.size(); ++l) {
                auto& a = stack[l];
                std::string base = prefix + std::to_string(l) + ".";
                for (int h = 0; h < s.cfg.heads; ++h) {
                    std::string hs = std::to_string(h);
                    f(base + "wq." + hs, a.wq[h]);
                    f(base + "bq." + hs, a.bq[h]);
                    f(base + "wk." + hs, a.wk[h]);
                    f(base + "bk." + hs, a.bk[h]);
                    f(base + "wv." + hs, a.wv[h]);
                    f(base + "bv." + hs, a.bv[h]);
                }
                f(base + "wo", a.wo);
                f(base + "bo", a.bo);
                f(base + "ln1_g", a.ln1_g);
                f(base + "ln1_b", a.ln1_b);
                f(base + "mlp_w1", a.mlp_w1);
                f(base + "mlp_b1", a.mlp_b1);
                f(base + "mlp_w2", a.mlp_w2);
                f(base + "mlp_b2", a.mlp_b2);
                f(base + "ln2_g", a.ln2_g);
                f(base + "ln2_b", a.ln2_b);
            }
        };
        visit_stack(self, self.enc, "enc.");
        visit_stack(self, self.dec, "dec.");
        f("head_y.w1", self.head_y.w1);
        f("head_y.b1", self.head_y.b1);
        f("head_y.w2", self.head_y.w2);
        f("head_y.b2", self.head_y.b2);
        f("head_z.w1", self.head_z.w1);
        f("head_z.b1", self.head_z.b1);
        f("head_z.w2", self.head_z.w2);
        f("head_z.b2", self.head_z.b2);
    }

    template <class F>
    void for_each_param(F&& f) {
        visit(*this, std::forward<F>(f));
    }
    template <class F>
    void for_each_param(F&& f) const {
        visit(*this, std::forward<F>(f));
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for_each_param([&](const std::string&, const Mat<T>& m) { n += m.size(); });
        return n;
    }

    template <class U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.cfg = cfg;
        out.fourier_b = fourier_b.template cast<U>();
        out.w_inp = w_inp.template cast<U>();
        out.b_inp = b_inp.template cast<U>();
        auto conv_layer = [](const AttnLayer<T>& a) {
            AttnLayer<U> o;
            for (const auto& m : a.wq) o.wq.push_back(m.template cast<U>());
            for (const auto& m : a.bq) o.bq.push_back(m.template cast<U>());
            for (const auto& m : a.wk) o.wk.push_back(m.template cast<U>());
            for (const auto& m : a.bk) o.bk.push_back(m.template cast<U>());
            for (const auto& m : a.wv) o.wv.push_back(m.template cast<U>());
            for (const auto& m : a.bv) o.bv.push_back(m.template cast<U>());
            o.wo = a.wo.template cast<U>();
            o.bo = a.bo.template cast<U>();
            o.ln1_g = a.ln1_g.template cast<U>();
            o.ln1_b = a.ln1_b.template cast<U>();
            o.ln2_g = a.ln2_g.template cast<U>();
            o.ln2_b = a.ln2_b.template cast<U>();
            o.mlp_w1 = a.mlp_w1.template cast<U>();
            o.mlp_b1 = a.mlp_b1.template cast<U>();
            o.mlp_w2 = a.mlp_w2.template cast<U>();
            o.mlp_b2 = a.mlp_b2.template cast<U>();
            return o;
        };
        for (const auto& a : enc) out.enc.push_back(conv_layer(a));
        for (const auto& a : dec) out.dec.push_back(conv_layer(a));
        auto conv_mlp = [](const Mlp2<T>& m) {
            return Mlp2<U>{m.w1.template cast<U>(), m.b1.template cast<U>(),
                           m.w2.template cast<U>(), m.b2.template cast<U>()};
        };
        out.head_y = conv_mlp(head_y);
        out.head_z = conv_mlp(head_z);
        return out;
    }

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        ModelParams p;
        p.cfg = cfg;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto dense = [&](int in, int out) {
            double s = std::sqrt(2.0 / (in + out));
            Mat<T> m(in, out);
            for (int i = 0; i < in; ++i)
                for (int j = 0; j < out; ++j) m(i, j) = static_cast<T>(normal(rng) * s);
            return m;
        };
        auto zeros = [](int c) { return Mat<T>::Zero(1, c).eval(); };
        auto ones = [](int c) { return Mat<T>::Ones(1, c).eval(); };

        p.fourier_b = Mat<T>(cfg.n_freq, 2);
        for (int i = 0; i < cfg.n_freq; ++i)
            for (int j = 0; j < 2; ++j)
                p.fourier_b(i, j) = static_cast<T>(normal(rng) * cfg.fourier_init_scale);
        p.w_inp = dense(cfg.token_dim(), cfg.d);
        p.b_inp = zeros(cfg.d);

        auto make_layer = [&]() {
            AttnLayer<T> a;
            const int dh = cfg.head_dim();
            for (int h = 0; h < cfg.heads; ++h) {
                a.wq.push_back(dense(cfg.d, dh));
                a.bq.push_back(zeros(dh));
                a.wk.push_back(dense(cfg.d, dh));
                a.bk.push_back(zeros(dh));
                a.wv.push_back(dense(cfg.d, dh));
                a.bv.push_back(zeros(dh));
            }
            a.wo = dense(cfg.d, cfg.d);
            a.bo = zeros(cfg.d);
            a.ln1_g = ones(cfg.d);
            a.ln1_b = zeros(cfg.d);
            a.mlp_w1 = dense(cfg.d, cfg.mlp_hidden());
            a.mlp_b1 = zeros(cfg.mlp_hidden());
            a.mlp_w2 = dense(cfg.mlp_hidden(), cfg.d);
            a.mlp_b2 = zeros(cfg.d);
            a.ln2_g = ones(cfg.d);
            a.ln2_b = zeros(cfg.d);
            return a;
        };
        for (int l = 0; l < cfg.layers; ++l) p.enc.push_back(make_layer());
        for (int l = 0; l < cfg.layers; ++l) p.dec.push_back(make_layer());

        p.head_y = {dense(cfg.d, cfg.d), zeros(cfg.d), dense(cfg.d, cfg.out_dim()),
                    zeros(cfg.out_dim())};
        p.head_z = {dense(cfg.d, cfg.d), zeros(cfg.d), dense(cfg.d, cfg.out_dim()),
                    zeros(cfg.out_dim())};
        return p;
    }
};

// Model-facing view of a window: raw positions/frames plus standardized
// feature columns.
struct WindowInput {
    Eigen::MatrixXd pos;  // n x 2
    std::vector<int> frames;
    Eigen::MatrixXd feats;  // n x n_channels

    int size() const { return static_cast<int>(pos.rows()); }
};

inline WindowInput make_input(const Window& w, const ModelConfig& cfg) {
    WindowInput in;
    const int n = w.size();
    const int nz = cfg.features.count();
    in.pos = w.positions();
    in.frames = w.frames();
    in.feats = Eigen::MatrixXd::Zero(n, nz);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < nz; ++k) {
            int c = cfg.features.channels[k];
            if (w.dets[i].z.size() <= c)
                throw Error("detection " + std::to_string(w.dets[i].id) +
                            " missing feature channel '" + kFeatureNames[c] + "'");
            double v = w.dets[i].z(c);
            if (!cfg.stats.empty()) {
                double sd = std::max(cfg.stats.stdev(k), 1e-12);
                v = (v - cfg.stats.mean(k)) / sd;
            }
            in.feats(i, k) = v;
        }
    }
    return in;
}

// ---------------------------------------------------------------------------
// RoPE phases and the distance mask, shared by every attention layer.
// ---------------------------------------------------------------------------

namespace detail {

// Splits head-dim channel pairs into three groups rotated by x, y and t.
inline std::array<int, 3> rope_groups(int pairs) {
    int base = pairs / 3, rem = pairs % 3;
    return {base + (rem > 0 ? 1 : 0), base + (rem > 1 ? 1 : 0), base};
}

inline std::vector<double> rope_wavelengths(int count, double lo, double hi) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = std::sqrt(lo * hi);
        return out;
    }
    for (int k = 0; k < count; ++k)
        out[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
    return out;
}

}  // namespace detail

template <class T>
struct AttnContext {
    Mat<T> mask;        // n x n additive, 0 or kMaskOff
    Mat<T> cosp, sinp;  // n x head_dim/2
};

template <class T>
AttnContext<T> make_attn_context(const ModelConfig& cfg, const WindowInput& in) {
    const int n = in.size();
    AttnContext<T> ctx;
    ctx.mask = Mat<T>::Zero(n, n);
    const double dmax2 = cfg.d_max * cfg.d_max;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if ((in.pos.row(i) - in.pos.row(j)).squaredNorm() > dmax2)
                ctx.mask(i, j) = static_cast<T>(kMaskOff);

    const int pairs = cfg.head_dim() / 2;
    auto groups = detail::rope_groups(pairs);
    std::vector<double> lam;
    auto lx = detail::rope_wavelengths(groups[0], cfg.rope.spatial_min, cfg.rope.spatial_max);
    auto ly = detail::rope_wavelengths(groups[1], cfg.rope.spatial_min, cfg.rope.spatial_max);
    auto lt = detail::rope_wavelengths(groups[2], cfg.rope.temporal_min, cfg.rope.temporal_max);
    ctx.cosp = Mat<T>(n, pairs);
    ctx.sinp = Mat<T>(n, pairs);
    for (int i = 0; i < n; ++i) {
        int k = 0;
        auto put = [&](double coord, const std::vector<double>& lams) {
            for (double l : lams) {
                double phase = 2.0 * M_PI * coord / l;
                ctx.cosp(i, k) = static_cast<T>(std::cos(phase));
                ctx.sinp(i, k) = static_cast<T>(std::sin(phase));
                ++k;
            }
        };
        put(in.pos(i, 0), lx);
        put(in.pos(i, 1), ly);
        put(static_cast<double>(in.frames[i]), lt);
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Standalone token ops (spec surface; the tape forward mirrors this math).
// ---------------------------------------------------------------------------

// Theta(p) = [sin(2 pi B p); cos(2 pi B p)].
inline Eigen::VectorXd encode_position(const Eigen::MatrixXd& fourier_b, const Vec2& p) {
    Eigen::VectorXd ang = 2.0 * M_PI * (fourier_b * p);
    Eigen::VectorXd out(2 * ang.size());
    out.head(ang.size()) = ang.array().sin();
    out.tail(ang.size()) = ang.array().cos();
    return out;
}

struct TokenBatch {
    Eigen::MatrixXd tokens;  // n x d
    Eigen::MatrixXd positions;
    std::vector<int> frames;
    double d_max = 0.0;
};

template <class T>
Mat<T> build_tokens_eval(const ModelParams<T>& params, const WindowInput& in) {
    const int n = in.size();
    const int nf = params.cfg.n_freq;
    Mat<T> ang = (in.pos.cast<T>() * params.fourier_b.transpose()) * static_cast<T>(2.0 * M_PI);
    Mat<T> tok(n, params.cfg.token_dim());
    tok.leftCols(nf) = ang.array().sin().matrix();
    tok.middleCols(nf, nf) = ang.array().cos().matrix();
    if (params.cfg.features.count() > 0)
        tok.rightCols(params.cfg.features.count()) = in.feats.cast<T>();
    Mat<T> x = (tok * params.w_inp).rowwise() + params.b_inp.row(0);
    return x;
}

inline TokenBatch build_tokens(const ModelParams<double>& params, const Window& w) {
    WindowInput in = make_input(w, params.cfg);
    TokenBatch tb;
    tb.tokens = build_tokens_eval(params, in);
    tb.positions = in.pos;
    tb.frames = in.frames;
    tb.d_max = params.cfg.d_max;
    return tb;
}

// ---------------------------------------------------------------------------
// Forward pass, tape version (training / gradcheck).
// ---------------------------------------------------------------------------

template <class T>
struct ForwardTape {
    std::unique_ptr<Tape<T>> tape;
    int logits = -1;
    std::vector<int> param_nodes;  // in for_each_param order

    const Mat<T>& logits_value() const { return tape->val(logits); }
};

template <class T>
ForwardTape<T> forward_tape(const ModelParams<T>& params, const WindowInput& in,
                            bool needs_grad = true) {
    const ModelConfig& cfg = params.cfg;
    if (in.size() > cfg.max_tokens)
        throw Error("forward: window exceeds max token budget |D|");
    ForwardTape<T> fw;
    fw.tape = std::make_unique<Tape<T>>();
    Tape<T>& tp = *fw.tape;

    std::vector<const Mat<T>*> order;
    params.for_each_param(
        [&](const std::string&, const Mat<T>& m) { order.push_back(&m); });
    std::unordered_map<const Mat<T>*, int> node_of;
    for (const Mat<T>* m : order) {
        int id = tp.input(*m, needs_grad);
        fw.param_nodes.push_back(id);
        node_of[m] = id;
    }
    auto pid = [&](const Mat<T>& m) { return node_of.at(&m); };

    AttnContext<T> ctx = make_attn_context<T>(cfg, in);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.d)));

    int pos = tp.input(in.pos.cast<T>(), false);
    int ang = tp.scale(tp.matmul_nt(pos, pid(params.fourier_b)), static_cast<T>(2.0 * M_PI));
    int theta = tp.hcat(tp.sin_of(ang), tp.cos_of(ang));
    int tok = theta;
    if (cfg.features.count() > 0) {
        int feats = tp.input(in.feats.cast<T>(), false);
        tok = tp.hcat(theta, feats);
    }
    int x = tp.add_rowvec(tp.matmul(tok, pid(params.w_inp)), pid(params.b_inp));

    auto attn_block = [&](const AttnLayer<T>& a, int q_src, int kv_src) {
        int ctx_cat = -1;
        for (int h = 0; h < cfg.heads; ++h) {
            int q = tp.rope(tp.add_rowvec(tp.matmul(q_src, pid(a.wq[h])), pid(a.bq[h])),
                            ctx.cosp, ctx.sinp);
            int k = tp.rope(tp.add_rowvec(tp.matmul(kv_src, pid(a.wk[h])), pid(a.bk[h])),
                            ctx.cosp, ctx.sinp);
            int v = tp.add_rowvec(tp.matmul(kv_src, pid(a.wv[h])), pid(a.bv[h]));
            int att = tp.softmax_masked(tp.scale(tp.matmul_nt(q, k), scale), ctx.mask);
            int head = tp.matmul(att, v);
            ctx_cat = h == 0 ? head : tp.hcat(ctx_cat, head);
        }
        int o = tp.add_rowvec(tp.matmul(ctx_cat, pid(a.wo)), pid(a.bo));
        int x1 = tp.layer_norm(tp.add(q_src, o), pid(a.ln1_g), pid(a.ln1_b));
        int m1 = tp.gelu(tp.add_rowvec(tp.matmul(x1, pid(a.mlp_w1)), pid(a.mlp_b1)));
        int m2 = tp.add_rowvec(tp.matmul(m1, pid(a.mlp_w2)), pid(a.mlp_b2));
        return tp.layer_norm(tp.add(x1, m2), pid(a.ln2_g), pid(a.ln2_b));
    };

    int y = x;
    for (const auto& a : params.enc) y = attn_block(a, y, y);
    int z = x;
    for (const auto& a : params.dec) z = attn_block(a, z, y);

    auto mlp2 = [&](const Mlp2<T>& m, int src) {
        int h = tp.gelu(tp.add_rowvec(tp.matmul(src, pid(m.w1)), pid(m.b1)));
        return tp.add_rowvec(tp.matmul(h, pid(m.w2)), pid(m.b2));
    };
    fw.logits = tp.matmul_nt(mlp2(params.head_y, y), mlp2(params.head_z, z));
    return fw;
}

// ---------------------------------------------------------------------------
// Forward pass, plain evaluator (inference; no tape, bounded scratch).
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void softmax_rows_inplace(Mat<T>& s) {
    for (long r = 0; r < s.rows(); ++r) {
        T m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
    }
}

template <class T>
void rope_inplace(Mat<T>& x, const Mat<T>& cosp, const Mat<T>& sinp) {
    const long pairs = x.cols() / 2;
    for (long k = 0; k < pairs; ++k) {
        auto a = x.col(2 * k).eval();
        auto b = x.col(2 * k + 1).eval();
        x.col(2 * k) = a.cwiseProduct(cosp.col(k)) - b.cwiseProduct(sinp.col(k));
        x.col(2 * k + 1) = a.cwiseProduct(sinp.col(k)) + b.cwiseProduct(cosp.col(k));
    }
}

template <class T>
Mat<T> layer_norm_rows(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, T eps = T(1e-5)) {
    Mat<T> out(x.rows(), x.cols());
    for (long r = 0; r < x.rows(); ++r) {
        T mu = x.row(r).mean();
        T var = (x.row(r).array() - mu).square().mean();
        out.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + eps)) * g.row(0).array() +
                     b.row(0).array();
    }
    return out;
}

}  // namespace detail

template <class T>
Mat<T> forward_eval(const ModelParams<T>& params, const WindowInput& in) {
    const ModelConfig& cfg = params.cfg;
    if (in.size() > cfg.max_tokens)
        throw Error("forward: window exceeds max token budget |D|");
    AttnContext<T> ctx = make_attn_context<T>(cfg, in);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.d)));
    const int n = in.size();
    const int dh = cfg.head_dim();

    Mat<T> x = build_tokens_eval(params, in);

    auto attn_block = [&](const AttnLayer<T>& a, const Mat<T>& q_src, const Mat<T>& kv_src) {
        Mat<T> cat(n, cfg.d);
        for (int h = 0; h < cfg.heads; ++h) {
            Mat<T> q = (q_src * a.wq[h]).rowwise() + a.bq[h].row(0);
            Mat<T> k = (kv_src * a.wk[h]).rowwise() + a.bk[h].row(0);
            Mat<T> v = (kv_src * a.wv[h]).rowwise() + a.bv[h].row(0);
            detail::rope_inplace(q, ctx.cosp, ctx.sinp);
            detail::rope_inplace(k, ctx.cosp, ctx.sinp);
            Mat<T> s = q * k.transpose() * scale + ctx.mask;
            detail::softmax_rows_inplace(s);
            cat.middleCols(h * dh, dh) = s * v;
        }
        Mat<T> o = (cat * a.wo).rowwise() + a.bo.row(0);
        Mat<T> x1 = detail::layer_norm_rows<T>(q_src + o, a.ln1_g, a.ln1_b);
        Mat<T> m = Tape<T>::gelu_eval(((x1 * a.mlp_w1).rowwise() + a.mlp_b1.row(0)).eval());
        Mat<T> m2 = (m * a.mlp_w2).rowwise() + a.mlp_b2.row(0);
        return detail::layer_norm_rows<T>((x1 + m2).eval(), a.ln2_g, a.ln2_b);
    };

    Mat<T> y = x;
    for (const auto& a : params.enc) y = attn_block(a, y, y);
    Mat<T> z = x;
    for (const auto& a : params.dec) z = attn_block(a, z, y);

    auto mlp2 = [&](const Mlp2<T>& m, const Mat<T>& src) {
        Mat<T> h = Tape<T>::gelu_eval(((src * m.w1).rowwise() + m.b1.row(0)).eval());
        return ((h * m.w2).rowwise() + m.b2.row(0)).eval();
    };
    return mlp2(params.head_y, y) * mlp2(params.head_z, z).transpose();
}

// ---------------------------------------------------------------------------
// Parental softmax and the training loss.
// ---------------------------------------------------------------------------

namespace detail {

// Rows of each frame value, for parent-block lookups.
inline std::unordered_map<int, std::vector<int>> rows_by_frame(const std::vector<int>& frames) {
    std::unordered_map<int, std::vector<int>> out;
    for (int i = 0; i < static_cast<int>(frames.size()); ++i) out[frames[i]].push_back(i);
    return out;
}

}  // namespace detail

// Quiet column-block softmax over candidate parents (Phi). Entries outside the
// parent blocks are not probabilities under the quiet softmax; where a
// probability is required they are clamped to 1.
inline Eigen::MatrixXd parental_softmax(const Eigen::MatrixXd& logits,
                                        const std::vector<int>& frames) {
    const int n = static_cast<int>(logits.rows());
    if (logits.cols() != n || static_cast<int>(frames.size()) != n)
        throw Error("parental_softmax: shape mismatch");
    auto by_frame = detail::rows_by_frame(frames);
    Eigen::MatrixXd out(n, n);
    static const std::vector<int> kNone;
    for (int j = 0; j < n; ++j) {
        auto it = by_frame.find(frames[j] - 1);
        const std::vector<int>& parents = it == by_frame.end() ? kNone : it->second;
        // Quiet logsumexp over {0} u {logits of candidate parents}.
        double m = 0.0;
        for (int i : parents) m = std::max(m, logits(i, j));
        double den = std::exp(-m);
        for (int i : parents) den += std::exp(logits(i, j) - m);
        double lse = m + std::log(den);
        for (int i = 0; i < n; ++i) out(i, j) = std::min(1.0, std::exp(logits(i, j) - lse));
    }
    return out;
}

inline Eigen::MatrixXd sigmoid_probabilities(const Eigen::MatrixXd& logits) {
    return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

inline Eigen::MatrixXd normalize_scores(const Eigen::MatrixXd& logits,
                                        const std::vector<int>& frames, bool parental) {
    return parental ? parental_softmax(logits, frames) : sigmoid_probabilities(logits);
}

struct LossConfig {
    double lambda = 1e-2;
    bool parental = true;  // false: sigmoid-only ablation (lambda forced to 1)
};

struct LossResult {
    double value = 0.0;
    Eigen::MatrixXd d_logits;
};

// Weighted elementwise BCE on the parental-softmax probabilities plus a
// lambda-weighted BCE on the sigmoid probabilities, each normalized by its own
// weight mass. The quiet softmax is a probability only inside the parent
// blocks (gap exactly one frame), so the first term is restricted to them;
// wider forward gaps contribute through the sigmoid term.
inline LossResult association_loss(const Eigen::MatrixXd& target,
                                   const Eigen::MatrixXd& logits,
                                   const Eigen::MatrixXd& weights,
                                   const std::vector<int>& frames,
                                   const LossConfig& cfg = {}) {
    const int n = static_cast<int>(logits.rows());
    if (target.rows() != n || weights.rows() != n || static_cast<int>(frames.size()) != n)
        throw Error("association_loss: shape mismatch");
    LossResult res;
    res.d_logits = Eigen::MatrixXd::Zero(n, n);

    // Sigmoid term.
    double w_sig = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w_sig += weights(i, j);
    double sig_loss = 0.0;
    Eigen::MatrixXd sig_grad = Eigen::MatrixXd::Zero(n, n);
    if (w_sig > 0.0) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double w = weights(i, j);
                if (w == 0.0) continue;
                double x = logits(i, j), t = target(i, j);
                sig_loss += w * (std::max(x, 0.0) - t * x + std::log1p(std::exp(-std::abs(x))));
                sig_grad(i, j) = w * (1.0 / (1.0 + std::exp(-x)) - t);
            }
        }
        sig_loss /= w_sig;
        sig_grad /= w_sig;
    }

    if (!cfg.parental) {
        res.value = sig_loss;
        res.d_logits = sig_grad;
        return res;
    }

    // Parental term, computed per column block in a logsumexp-stable form.
    auto by_frame = detail::rows_by_frame(frames);
    double w_par = 0.0;
    for (int j = 0; j < n; ++j) {
        auto it = by_frame.find(frames[j] - 1);
        if (it == by_frame.end()) continue;
        for (int i : it->second) w_par += weights(i, j);
    }
    double par_loss = 0.0;
    Eigen::MatrixXd par_grad = Eigen::MatrixXd::Zero(n, n);
    if (w_par > 0.0) {
        for (int j = 0; j < n; ++j) {
            auto it = by_frame.find(frames[j] - 1);
            if (it == by_frame.end()) continue;
            const std::vector<int>& parents = it->second;
            const int np = static_cast<int>(parents.size());
            double m = 0.0;
            for (int i : parents) m = std::max(m, logits(i, j));
            std::vector<double> e(np);
            double sum_e = 0.0;
            for (int k = 0; k < np; ++k) {
                e[k] = std::exp(logits(parents[k], j) - m);
                sum_e += e[k];
            }
            double den = std::exp(-m) + sum_e;
            double lse = m + std::log(den);
            // r_k = (p_k - t_k) / (1 - p_k); exactly -1 for targets.
            double weighted_r = 0.0;  // sum_k c_k r_k
            std::vector<double> p(np), r(np, 0.0), c(np, 0.0);
            for (int k = 0; k < np; ++k) {
                int i = parents[k];
                p[k] = e[k] / den;
                double w = weights(i, j);
                if (w == 0.0) continue;
                c[k] = w / w_par;
                double t = target(i, j);
                if (t > 0.5) {
                    par_loss += c[k] * (lse - logits(i, j));
                    r[k] = -1.0;
                } else {
                    double num = den - e[k];  // exp(-m) + sum of other parents
                    par_loss += c[k] * (lse - m - std::log(num));
                    r[k] = e[k] / num;
                }
                weighted_r += c[k] * r[k];
            }
            for (int k = 0; k < np; ++k)
                par_grad(parents[k], j) += c[k] * r[k] - p[k] * weighted_r;
        }
    }
    res.value = par_loss + cfg.lambda * sig_loss;
    res.d_logits = par_grad + cfg.lambda * sig_grad;
    return res;
}

}  // namespace trax
