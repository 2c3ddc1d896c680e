#include "trax/matching.hpp"

#include <gtest/gtest.h>

#include <random>

namespace trax {
namespace {

Detection det(std::int64_t id, int t, double x, double y) {
    Detection d;
    d.id = id;
    d.t = t;
    d.p = Vec2(x, y);
    return d;
}

// Brute force over all injective partial det->gt assignments, minimizing the
// same augmented objective as match_frame: sum(1 - score) + 1 per unmatched.
double brute_force_cost(const std::vector<Detection>& dets, const std::vector<Detection>& gts,
                        double delta_max) {
    const int nd = static_cast<int>(dets.size());
    const int ng = static_cast<int>(gts.size());
    double best = 1e18;
    std::vector<int> assign(nd, -1);
    std::function<void(int, std::vector<bool>&)> rec = [&](int i, std::vector<bool>& used) {
        if (i == nd) {
            double cost = 0.0;
            int matched = 0;
            for (int k = 0; k < nd; ++k) {
                if (assign[k] < 0) {
                    cost += 1.0;
                    continue;
                }
                MatchScore ms = match_score(dets[k], gts[assign[k]], delta_max);
                if (!ms.matched) return;  // infeasible assignment
                cost += 1.0 - ms.score;
                ++matched;
            }
            cost += ng - matched;
            best = std::min(best, cost);
            return;
        }
        assign[i] = -1;
        rec(i + 1, used);
        for (int k = 0; k < ng; ++k) {
            if (used[k]) continue;
            used[k] = true;
            assign[i] = k;
            rec(i + 1, used);
            assign[i] = -1;
            used[k] = false;
        }
    };
    std::vector<bool> used(ng, false);
    rec(0, used);
    return best;
}

TEST(MatchScore, IdenticalCentersScoreOne) {
    MatchScore ms = match_score(det(1, 0, 0, 0), det(2, 0, 0, 0), 10.0);
    EXPECT_DOUBLE_EQ(ms.score, 1.0);
    EXPECT_TRUE(ms.matched);
}

TEST(MatchScore, HalfDistanceIsStrictlyNotMatched) {
    MatchScore ms = match_score(det(1, 0, 0, 0), det(2, 0, 5, 0), 10.0);
    EXPECT_DOUBLE_EQ(ms.score, 0.5);
    EXPECT_FALSE(ms.matched);  // strict >
}

TEST(MatchScore, IoUDominatesNegativeDistanceTerm) {
    // Negative distance term is dominated by the absent-mask IoU term of 0.
    MatchScore no_mask = match_score(det(1, 0, 0, 0), det(2, 0, 12, 0), 10.0);
    EXPECT_DOUBLE_EQ(no_mask.score, 0.0);
    EXPECT_FALSE(no_mask.matched);
    MatchScore with_iou = match_score(det(1, 0, 0, 0), det(2, 0, 12, 0), 10.0, 0.8);
    EXPECT_DOUBLE_EQ(with_iou.score, 0.8);
    EXPECT_TRUE(with_iou.matched);
}

TEST(MatchFrame, SingleObviousPair) {
    Matching m = match_frame({det(1, 0, 0, 0)}, {det(10, 0, 0, 0)}, 10.0);
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_EQ(m.pairs[0], (std::pair<std::int64_t, std::int64_t>{1, 10}));
}

TEST(MatchFrame, EmptyInputs) {
    Matching m = match_frame({}, {}, 10.0);
    EXPECT_TRUE(m.pairs.empty());
    m = match_frame({det(1, 0, 0, 0)}, {}, 10.0);
    EXPECT_EQ(m.unmatched_dets.size(), 1u);
}

TEST(MatchFrame, GreedyNearestNeighborIsSuboptimal) {
    // det1 is closest to gt1, but taking that pair forces det2 onto a far gt;
    // the optimal assignment swaps them.
    std::vector<Detection> dets = {det(1, 0, 0.0, 0), det(2, 0, 1.0, 0)};
    std::vector<Detection> gts = {det(10, 0, 0.4, 0), det(11, 0, 3.0, 0)};
    Matching m = match_frame(dets, gts, 10.0);
    double brute = brute_force_cost(dets, gts, 10.0);
    EXPECT_NEAR(m.cost, brute, 1e-12);
    // Exhaustive check over both full permutations: {1->10, 2->11} costs
    // (0.04 + 0.2)/10, the swap costs (0.06 + 0.26)/10.
    ASSERT_EQ(m.pairs.size(), 2u);
    EXPECT_EQ(m.pairs[0].second, 10);
    EXPECT_EQ(m.pairs[1].second, 11);
}

TEST(MatchFrame, RandomInstancesMatchBruteForce) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> coord(0.0, 20.0);
    std::uniform_int_distribution<int> count(0, 5);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Detection> dets, gts;
        int nd = count(rng), ng = count(rng);
        for (int i = 0; i < nd; ++i) dets.push_back(det(i + 1, 3, coord(rng), coord(rng)));
        for (int k = 0; k < ng; ++k) gts.push_back(det(100 + k, 3, coord(rng), coord(rng)));
        Matching m = match_frame(dets, gts, 15.0);
        EXPECT_NEAR(m.cost, brute_force_cost(dets, gts, 15.0), 1e-9);
    }
}

TEST(MatchFrame, FivePermutationOracle) {
    // All-gated 5x5 instance: solver cost equals the minimum over all 120
    // permutations of sum(1 - score).
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> jitter(-2.0, 2.0);
    std::vector<Detection> dets, gts;
    for (int i = 0; i < 5; ++i) {
        double x = 10.0 * i;
        dets.push_back(det(i + 1, 0, x + jitter(rng), jitter(rng)));
        gts.push_back(det(50 + i, 0, x + jitter(rng), jitter(rng)));
    }
    Matching m = match_frame(dets, gts, 50.0);
    ASSERT_EQ(m.pairs.size(), 5u);

    std::vector<int> perm = {0, 1, 2, 3, 4};
    double best = 1e18;
    do {
        double c = 0.0;
        bool ok = true;
        for (int i = 0; i < 5; ++i) {
            MatchScore ms = match_score(dets[i], gts[perm[i]], 50.0);
            ok = ok && ms.matched;
            c += 1.0 - ms.score;
        }
        if (ok) best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(m.cost, best, 1e-9);
}

TEST(MatchFrame, OneToOneProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coord(0.0, 30.0);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Detection> dets, gts;
        for (int i = 0; i < 8; ++i) dets.push_back(det(i + 1, 0, coord(rng), coord(rng)));
        for (int k = 0; k < 6; ++k) gts.push_back(det(100 + k, 0, coord(rng), coord(rng)));
        Matching m = match_frame(dets, gts, 12.0);
        std::set<std::int64_t> seen_d, seen_g;
        for (auto [d, g] : m.pairs) {
            EXPECT_TRUE(seen_d.insert(d).second);
            EXPECT_TRUE(seen_g.insert(g).second);
        }
        EXPECT_EQ(m.pairs.size() + m.unmatched_dets.size(), dets.size());
        EXPECT_EQ(m.pairs.size() + m.unmatched_gts.size(), gts.size());
    }
}

TEST(MatchFrame, MixedFramesThrow) {
    EXPECT_THROW(match_frame({det(1, 0, 0, 0), det(2, 1, 0, 0)}, {det(3, 0, 0, 0)}, 5.0),
                 Error);
}

}  // namespace
}  // namespace trax
