#include "trax/tape.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

namespace trax {
namespace {

using M = Mat<double>;

M randm(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    M m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
}

// Checks d(sum(seed . f(inputs)))/d(inputs) against central differences.
void check_op(const std::vector<M>& inputs,
              const std::function<int(Tape<double>&, const std::vector<int>&)>& build,
              double tol = 1e-7) {
    std::mt19937_64 rng(99);
    auto run = [&](const std::vector<M>& vals, const M& seed, std::vector<M>* grads) {
        Tape<double> tp;
        std::vector<int> ids;
        for (const auto& v : vals) ids.push_back(tp.input(v, true));
        int out = build(tp, ids);
        double val = tp.val(out).cwiseProduct(seed).sum();
        if (grads) {
            tp.backward(out, seed);
            grads->clear();
            for (int id : ids) grads->push_back(tp.grad(id));
        }
        return val;
    };

    Tape<double> probe;
    std::vector<int> probe_ids;
    for (const auto& v : inputs) probe_ids.push_back(probe.input(v, false));
    int probe_out = build(probe, probe_ids);
    M seed = randm(static_cast<int>(probe.val(probe_out).rows()),
                   static_cast<int>(probe.val(probe_out).cols()), rng);

    std::vector<M> analytic;
    run(inputs, seed, &analytic);

    const double h = 1e-6;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (int idx = 0; idx < inputs[k].size(); ++idx) {
            std::vector<M> pert = inputs;
            pert[k].data()[idx] += h;
            double lp = run(pert, seed, nullptr);
            pert[k].data()[idx] -= 2 * h;
            double lm = run(pert, seed, nullptr);
            double fd = (lp - lm) / (2 * h);
            double an = analytic[k].data()[idx];
            EXPECT_NEAR(an, fd, tol * std::max({1.0, std::abs(an), std::abs(fd)}))
                << "input " << k << " entry " << idx;
        }
    }
}

TEST(TapeOps, Matmul) {
    std::mt19937_64 rng(1);
    check_op({randm(3, 4, rng), randm(4, 2, rng)},
             [](Tape<double>& t, const std::vector<int>& in) { return t.matmul(in[0], in[1]); });
}

TEST(TapeOps, MatmulNT) {
    std::mt19937_64 rng(2);
    check_op({randm(3, 4, rng), randm(5, 4, rng)},
             [](Tape<double>& t, const std::vector<int>& in) {
                 return t.matmul_nt(in[0], in[1]);
             });
}

TEST(TapeOps, AddAndRowvecAndScale) {
    std::mt19937_64 rng(3);
    check_op({randm(3, 4, rng), randm(3, 4, rng), randm(1, 4, rng)},
             [](Tape<double>& t, const std::vector<int>& in) {
                 return t.scale(t.add_rowvec(t.add(in[0], in[1]), in[2]), 1.7);
             });
}

TEST(TapeOps, HadamardSinCosHcat) {
    std::mt19937_64 rng(4);
    check_op({randm(3, 3, rng), randm(3, 3, rng)},
             [](Tape<double>& t, const std::vector<int>& in) {
                 return t.hcat(t.hadamard(t.sin_of(in[0]), in[1]), t.cos_of(in[0]));
             });
}

TEST(TapeOps, Gelu) {
    std::mt19937_64 rng(5);
    check_op({randm(4, 4, rng, 2.0)},
             [](Tape<double>& t, const std::vector<int>& in) { return t.gelu(in[0]); });
}

TEST(TapeOps, LayerNorm) {
    std::mt19937_64 rng(6);
    check_op({randm(3, 6, rng), randm(1, 6, rng), randm(1, 6, rng)},
             [](Tape<double>& t, const std::vector<int>& in) {
                 return t.layer_norm(in[0], in[1], in[2]);
             },
             1e-6);
}

TEST(TapeOps, MaskedSoftmax) {
    std::mt19937_64 rng(7);
    M mask = M::Zero(4, 4);
    mask(0, 2) = kMaskOff;
    mask(3, 0) = kMaskOff;
    mask(3, 1) = kMaskOff;
    check_op({randm(4, 4, rng)}, [mask](Tape<double>& t, const std::vector<int>& in) {
        return t.softmax_masked(in[0], mask);
    });
}

TEST(TapeOps, MaskedSoftmaxZerosMaskedEntries) {
    Tape<double> t;
    M x = M::Ones(2, 2);
    M mask = M::Zero(2, 2);
    mask(0, 1) = kMaskOff;
    int out = t.softmax_masked(t.input(x, false), mask);
    EXPECT_DOUBLE_EQ(t.val(out)(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(t.val(out)(0, 0), 1.0);
    EXPECT_NEAR(t.val(out)(1, 0), 0.5, 1e-12);
}

TEST(TapeOps, Rope) {
    std::mt19937_64 rng(8);
    M phases = randm(3, 2, rng);
    M cosp = phases.array().cos();
    M sinp = phases.array().sin();
    check_op({randm(3, 4, rng)}, [cosp, sinp](Tape<double>& t, const std::vector<int>& in) {
        return t.rope(in[0], cosp, sinp);
    });
}

TEST(TapeOps, RopePreservesDotProductsUnderSharedRotation) {
    // Equal per-token phases rotate q and k jointly, leaving dot products
    // unchanged: RoPE encodes only relative offsets.
    Tape<double> t;
    std::mt19937_64 rng(9);
    M q = randm(2, 2, rng), k = randm(2, 2, rng);
    M phase(2, 1);
    phase << 0.3, 0.3;
    M c = phase.array().cos(), s = phase.array().sin();
    int qr = t.rope(t.input(q, false), c, s);
    int kr = t.rope(t.input(k, false), c, s);
    double before = q.row(0).dot(k.row(1));
    double after = t.val(qr).row(0).dot(t.val(kr).row(1));
    EXPECT_NEAR(before, after, 1e-12);
}

TEST(TapeOps, ChainedGraphAccumulatesReusedNodeGrads) {
    std::mt19937_64 rng(10);
    check_op({randm(3, 3, rng)}, [](Tape<double>& t, const std::vector<int>& in) {
        return t.add(t.gelu(in[0]), t.hadamard(in[0], in[0]));
    });
}

}  // namespace
}  // namespace trax
