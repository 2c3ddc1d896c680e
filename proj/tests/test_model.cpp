#include "trax/model.hpp"

#include <gtest/gtest.h>

#include <random>

namespace trax {
namespace {

Detection det(std::int64_t id, int t, double x, double y, bool with_features = false) {
    Detection d;
    d.id = id;
    d.t = t;
    d.p = Vec2(x, y);
    if (with_features) {
        d.z.resize(5);
        d.z << 100.0 + id, 50.0, 25.0, 16.0, 2.0;
    }
    return d;
}

ModelConfig small_config(int layers = 1, bool features = false) {
    ModelConfig cfg;
    cfg.d = 16;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.n_freq = 3;
    cfg.mlp_ratio = 2;
    cfg.d_max = 100.0;
    cfg.window = 4;
    cfg.max_tokens = 64;
    cfg.fourier_init_scale = 0.01;
    if (features) cfg.features = FeatureConfig::all();
    return cfg;
}

WindowInput input_of(const std::vector<Detection>& dets, const ModelConfig& cfg, int start,
                     int span) {
    return make_input(Window::make(start, span, dets), cfg);
}

TEST(EncodePosition, OriginGivesSinZeroCosOne) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Random(5, 2);
    Eigen::VectorXd enc = encode_position(b, Vec2(0, 0));
    ASSERT_EQ(enc.size(), 10);
    EXPECT_EQ(enc.head(5), Eigen::VectorXd::Zero(5));
    EXPECT_EQ(enc.tail(5), Eigen::VectorXd::Ones(5));
}

TEST(EncodePosition, DeterministicGivenSeed) {
    auto p1 = ModelParams<double>::init(small_config(), 123);
    auto p2 = ModelParams<double>::init(small_config(), 123);
    EXPECT_EQ(encode_position(p1.fourier_b, Vec2(3.7, -1.2)),
              encode_position(p2.fourier_b, Vec2(3.7, -1.2)));
}

TEST(BuildTokens, PointsOnlyMatchesProjectedEncoding) {
    ModelConfig cfg = small_config();
    auto params = ModelParams<double>::init(cfg, 7);
    Window w = Window::make(0, 2, {det(1, 0, 3.0, 4.0), det(2, 1, 5.0, 6.0)});
    TokenBatch tb = build_tokens(params, w);
    ASSERT_EQ(tb.tokens.rows(), 2);
    ASSERT_EQ(tb.tokens.cols(), cfg.d);
    Eigen::VectorXd theta = encode_position(params.fourier_b, Vec2(3.0, 4.0));
    Eigen::VectorXd expect =
        (theta.transpose() * params.w_inp).transpose() + params.b_inp.row(0).transpose();
    EXPECT_LT((tb.tokens.row(0).transpose() - expect).norm(), 1e-12);
}

TEST(BuildTokens, FullConfigHasFiveChannels) {
    ModelConfig cfg = small_config(1, true);
    EXPECT_EQ(cfg.token_dim(), 2 * cfg.n_freq + 5);
    auto params = ModelParams<double>::init(cfg, 7);
    Window w = Window::make(0, 2, {det(1, 0, 0, 0, true), det(2, 1, 1, 1, true)});
    TokenBatch tb = build_tokens(params, w);
    EXPECT_EQ(tb.tokens.cols(), cfg.d);
}

TEST(BuildTokens, EmptyWindowGivesEmptyBatch) {
    ModelConfig cfg = small_config();
    auto params = ModelParams<double>::init(cfg, 7);
    Window w;
    w.start = 0;
    w.span = 2;
    TokenBatch tb = build_tokens(params, w);
    EXPECT_EQ(tb.tokens.rows(), 0);
}

TEST(BuildTokens, MissingFeatureNamesDetectionAndChannel) {
    ModelConfig cfg = small_config(1, true);
    auto params = ModelParams<double>::init(cfg, 7);
    Window w = Window::make(0, 2, {det(42, 0, 0, 0, false), det(2, 1, 1, 1, true)});
    try {
        build_tokens(params, w);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("area"), std::string::npos);
    }
}

TEST(Forward, SingleTokenGivesOneByOne) {
    ModelConfig cfg = small_config(2);
    auto params = ModelParams<float>::init(cfg, 1);
    WindowInput in = input_of({det(1, 0, 5, 5)}, cfg, 0, 2);
    Mat<float> lg = forward_eval(params, in);
    EXPECT_EQ(lg.rows(), 1);
    EXPECT_EQ(lg.cols(), 1);
    EXPECT_TRUE(std::isfinite(lg(0, 0)));
}

TEST(Forward, TapeAndEvalAgree) {
    ModelConfig cfg = small_config(2, true);
    auto params = ModelParams<float>::init(cfg, 3);
    std::vector<Detection> dets;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 40.0);
    std::int64_t id = 1;
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i < 4; ++i) dets.push_back(det(id++, t, u(rng), u(rng), true));
    WindowInput in = input_of(dets, cfg, 0, 3);
    Mat<float> ev = forward_eval(params, in);
    auto fw = forward_tape(params, in, false);
    EXPECT_LT((ev - fw.logits_value()).norm(), 1e-5 * std::max(1.0f, ev.norm()));
}

TEST(Forward, DistanceMaskLocalityAtOneLayer) {
    // Tokens farther apart than d_max cannot influence each other in a single
    // layer: perturbing token 1's features leaves token 0's logits row
    // pattern unchanged only through its own path, so the encoder output of
    // token 0 must be identical.
    ModelConfig cfg = small_config(1, true);
    cfg.d_max = 10.0;
    auto params = ModelParams<float>::init(cfg, 11);
    std::vector<Detection> a = {det(1, 0, 0, 0, true), det(2, 1, 500, 500, true)};
    std::vector<Detection> b = a;
    b[1].z(0) += 40.0;
    b[1].z(1) -= 10.0;
    cfg.stats = FeatureStats{};
    WindowInput ia = input_of(a, cfg, 0, 2), ib = input_of(b, cfg, 0, 2);
    Mat<float> la = forward_eval(params, ia), lb = forward_eval(params, ib);
    EXPECT_EQ(la(0, 0), lb(0, 0));  // token 0 self-logit untouched
}

TEST(Forward, RigidTranslationInvarianceWithZeroFourier) {
    ModelConfig cfg = small_config(1);
    auto params = ModelParams<double>::init(cfg, 17);
    params.fourier_b.setZero();
    std::vector<Detection> dets = {det(1, 0, 3, 4), det(2, 0, 9, 2), det(3, 1, 4, 5),
                                   det(4, 1, 10, 3)};
    std::vector<Detection> moved = dets;
    for (auto& d : moved) d.p += Vec2(123.5, -77.25);
    Mat<double> l0 = forward_eval(params, input_of(dets, cfg, 0, 2));
    Mat<double> l1 = forward_eval(params, input_of(moved, cfg, 0, 2));
    EXPECT_LT((l0 - l1).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Forward, PermutationEquivariance) {
    ModelConfig cfg = small_config(2);
    auto params = ModelParams<double>::init(cfg, 23);
    std::vector<Detection> dets = {det(3, 0, 1, 2), det(1, 0, 4, 1), det(7, 1, 2, 2),
                                   det(5, 1, 3, 4), det(9, 1, 1, 1)};
    WindowInput in = input_of(dets, cfg, 0, 2);
    Mat<double> base = forward_eval(params, in);

    // Window::make fixes the row order; permute by feeding a row-permuted
    // input directly.
    std::vector<int> perm = {2, 0, 4, 1, 3};
    WindowInput pin;
    pin.pos.resize(5, 2);
    pin.frames.resize(5);
    pin.feats.resize(5, 0);
    for (int i = 0; i < 5; ++i) {
        pin.pos.row(i) = in.pos.row(perm[i]);
        pin.frames[i] = in.frames[perm[i]];
    }
    Mat<double> permuted = forward_eval(params, pin);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            EXPECT_NEAR(permuted(i, j), base(perm[i], perm[j]), 1e-10);
}

TEST(Forward, ZeroLayersIsHeadOnlyOuterProduct) {
    ModelConfig cfg = small_config(0);
    auto params = ModelParams<double>::init(cfg, 29);
    std::vector<Detection> dets = {det(1, 0, 1, 1), det(2, 1, 2, 2)};
    WindowInput in = input_of(dets, cfg, 0, 2);
    Mat<double> lg = forward_eval(params, in);

    Mat<double> x = build_tokens_eval(params, in);
    auto mlp2 = [&](const Mlp2<double>& m, const Mat<double>& src) {
        Mat<double> h =
            Tape<double>::gelu_eval(((src * m.w1).rowwise() + m.b1.row(0)).eval());
        return ((h * m.w2).rowwise() + m.b2.row(0)).eval();
    };
    Mat<double> expect = mlp2(params.head_y, x) * mlp2(params.head_z, x).transpose();
    EXPECT_LT((lg - expect).norm(), 1e-12);
}

TEST(Forward, RejectsOversizedWindow) {
    ModelConfig cfg = small_config(1);
    cfg.max_tokens = 2;
    auto params = ModelParams<float>::init(cfg, 31);
    WindowInput in = input_of({det(1, 0, 0, 0), det(2, 0, 1, 0), det(3, 1, 0, 1)}, cfg, 0, 2);
    EXPECT_THROW(forward_eval(params, in), Error);
}

// ---------------------------------------------------------------------------
// Parental softmax.
// ---------------------------------------------------------------------------

TEST(ParentalSoftmax, SingleParentLogitZeroGivesHalf) {
    Eigen::MatrixXd lg = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd p = parental_softmax(lg, {0, 1});
    EXPECT_NEAR(p(0, 1), 0.5, 1e-12);
}

TEST(ParentalSoftmax, TwoParentsLogitZeroGiveThird) {
    Eigen::MatrixXd lg = Eigen::MatrixXd::Zero(3, 3);
    std::vector<int> frames = {0, 0, 1};
    Eigen::MatrixXd p = parental_softmax(lg, frames);
    EXPECT_NEAR(p(0, 2), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(p(1, 2), 1.0 / 3.0, 1e-12);
}

TEST(ParentalSoftmax, BlockSumsStayBelowOne) {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 7;
        std::vector<int> frames = {0, 0, 0, 1, 1, 2, 2};
        Eigen::MatrixXd lg(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) lg(i, j) = g(rng);
        Eigen::MatrixXd p = parental_softmax(lg, frames);
        for (int j = 0; j < n; ++j) {
            double block = 0.0;
            for (int i = 0; i < n; ++i) {
                if (frames[i] != frames[j] - 1) continue;
                EXPECT_GT(p(i, j), 0.0);
                EXPECT_LT(p(i, j), 1.0);
                block += p(i, j);
            }
            if (block > 0.0) EXPECT_LT(block, 1.0);  // appearance slack
        }
    }
}

TEST(ParentalSoftmax, MonotonePerEntry) {
    std::mt19937_64 rng(43);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<int> frames = {0, 0, 0, 1};
    Eigen::MatrixXd lg(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) lg(i, j) = g(rng);
    Eigen::MatrixXd p0 = parental_softmax(lg, frames);
    Eigen::MatrixXd bumped = lg;
    bumped(1, 3) += 0.5;
    Eigen::MatrixXd p1 = parental_softmax(bumped, frames);
    EXPECT_GT(p1(1, 3), p0(1, 3));
    EXPECT_LT(p1(0, 3), p0(0, 3));
    EXPECT_LT(p1(2, 3), p0(2, 3));
}

TEST(ParentalSoftmax, EmptyParentBlockDenominatorIsOne) {
    Eigen::MatrixXd lg = Eigen::MatrixXd::Constant(2, 2, -1.0);
    std::vector<int> frames = {0, 0};  // no frame -1 rows
    Eigen::MatrixXd p = parental_softmax(lg, frames);
    EXPECT_NEAR(p(0, 1), std::exp(-1.0), 1e-12);
}

TEST(ParentalSoftmax, NumericallyStableForLargeLogits) {
    Eigen::MatrixXd lg = Eigen::MatrixXd::Zero(2, 2);
    lg(0, 1) = 1000.0;
    Eigen::MatrixXd p = parental_softmax(lg, {0, 1});
    EXPECT_TRUE(std::isfinite(p(0, 1)));
    EXPECT_NEAR(p(0, 1), 1.0, 1e-12);
    EXPECT_LT(p(0, 1), 1.0 + 1e-15);
}

// ---------------------------------------------------------------------------
// Loss.
// ---------------------------------------------------------------------------

TEST(Loss, PerfectLogitsDriveLossToZero) {
    std::vector<int> frames = {0, 0, 1};
    Eigen::MatrixXd target = Eigen::MatrixXd::Zero(3, 3);
    target(0, 2) = 1.0;
    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(3, 3);
    weights(0, 2) = 2.0;
    weights(1, 2) = 1.0;
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(3, 3);
    logits(0, 2) = 60.0;
    logits(1, 2) = -60.0;
    LossResult r = association_loss(target, logits, weights, frames);
    EXPECT_LT(r.value, 1e-12);
}

TEST(Loss, AllZeroWeightsGiveZeroLossAndGradient) {
    std::vector<int> frames = {0, 1};
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd logits = Eigen::MatrixXd::Random(2, 2);
    LossResult r = association_loss(z, logits, z, frames);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_EQ(r.d_logits.norm(), 0.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> g(0.0, 1.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> frames = {0, 0, 1, 2};
    const int n = 4;
    for (bool parental : {true, false}) {
        Eigen::MatrixXd logits(n, n), target(n, n), weights(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                logits(i, j) = g(rng);
                target(i, j) = u(rng) < 0.3 ? 1.0 : 0.0;
                int gap = frames[j] - frames[i];
                weights(i, j) = (gap >= 1 && gap <= 2) ? (u(rng) < 0.2 ? 0.0 : 1.0 + u(rng))
                                                       : 0.0;
            }
        LossConfig cfg{1e-2, parental};
        LossResult r = association_loss(target, logits, weights, frames, cfg);
        const double h = 1e-5;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Eigen::MatrixXd lp = logits, lm = logits;
                lp(i, j) += h;
                lm(i, j) -= h;
                double fd = (association_loss(target, lp, weights, frames, cfg).value -
                             association_loss(target, lm, weights, frames, cfg).value) /
                            (2 * h);
                EXPECT_NEAR(r.d_logits(i, j), fd,
                            1e-4 * std::max({1.0, std::abs(fd), std::abs(r.d_logits(i, j))}))
                    << "parental=" << parental << " (" << i << "," << j << ")";
            }
    }
}

TEST(Loss, SigmoidOnlyModeIgnoresParentalTerm) {
    std::vector<int> frames = {0, 1};
    Eigen::MatrixXd target = Eigen::MatrixXd::Zero(2, 2);
    target(0, 1) = 1.0;
    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(2, 2);
    weights(0, 1) = 1.0;
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 2);
    LossConfig cfg{1.0, false};
    LossResult r = association_loss(target, logits, weights, frames, cfg);
    // Pure sigmoid BCE at logit 0 on a single weighted target: -log(0.5).
    EXPECT_NEAR(r.value, std::log(2.0), 1e-12);
}

}  // namespace
}  // namespace trax
