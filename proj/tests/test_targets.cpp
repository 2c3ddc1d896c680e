#include "trax/targets.hpp"

#include <gtest/gtest.h>

namespace trax {
namespace {

Detection det(std::int64_t id, int t, double x = 0, double y = 0) {
    Detection d;
    d.id = id;
    d.t = t;
    d.p = Vec2(x, y);
    return d;
}

// Builds a gt-detection sample: detections == gt objects, identity matching.
WindowSample gt_sample(std::vector<Detection> dets, LineageGraph gt, int start, int span) {
    auto vm = std::make_shared<VideoMatching>();
    for (const auto& d : dets) {
        vm->det_to_gt[d.id] = d.id;
        vm->gt_to_det[d.id] = d.id;
    }
    WindowSample s;
    s.win = Window::make(start, span, std::move(dets));
    s.gt = std::make_shared<const LineageGraph>(std::move(gt));
    s.matching = std::move(vm);
    s.orig_frame = s.win.frames();
    return s;
}

TEST(BuildTarget, ChainConnectsAllForwardPairs) {
    LineageGraph gt;
    for (std::int64_t id : {1, 2, 3}) gt.add_node(id);
    gt.add_edge(1, 2);
    gt.add_edge(2, 3);
    auto s = gt_sample({det(1, 0), det(2, 1), det(3, 2)}, gt, 0, 3);
    AssociationMatrix a = build_target(s);
    EXPECT_EQ(a.m(0, 1), 1.0);
    EXPECT_EQ(a.m(1, 2), 1.0);
    EXPECT_EQ(a.m(0, 2), 1.0);  // non-adjacent timepoints supported
    EXPECT_EQ(a.m(0, 0), 0.0);
    EXPECT_TRUE((a.m - a.m.transpose()).norm() == 0.0);
}

TEST(BuildTarget, SpuriousDetectionRowIsZero) {
    LineageGraph gt;
    for (std::int64_t id : {1, 2}) gt.add_node(id);
    gt.add_edge(1, 2);
    std::vector<Detection> dets = {det(1, 0), det(2, 1), det(99, 1, 50, 50)};
    auto vm = std::make_shared<VideoMatching>();
    vm->det_to_gt[1] = 1;
    vm->gt_to_det[1] = 1;
    vm->det_to_gt[2] = 2;
    vm->gt_to_det[2] = 2;  // 99 unmatched
    WindowSample s;
    s.win = Window::make(0, 2, dets);
    s.gt = std::make_shared<const LineageGraph>(gt);
    s.matching = vm;
    s.orig_frame = s.win.frames();
    AssociationMatrix a = build_target(s);
    int r99 = s.win.row_of.at(99);
    EXPECT_EQ(a.m.row(r99).sum(), 0.0);
    EXPECT_EQ(a.m.col(r99).sum(), 0.0);
    EXPECT_EQ(a.m(0, 1), 1.0);
}

TEST(BuildTarget, SiblingsAreNotAssociated) {
    LineageGraph gt;
    for (std::int64_t id : {1, 2, 3}) gt.add_node(id);
    gt.add_edge(1, 2);
    gt.add_edge(1, 3);
    auto s = gt_sample({det(1, 0), det(2, 1), det(3, 1)}, gt, 0, 2);
    AssociationMatrix a = build_target(s);
    int r1 = s.win.row_of.at(1), r2 = s.win.row_of.at(2), r3 = s.win.row_of.at(3);
    EXPECT_EQ(a.m(r1, r2), 1.0);
    EXPECT_EQ(a.m(r1, r3), 1.0);
    // Oracle: siblings are in neither closure of each other.
    Closure c2 = lineage_closure(*s.gt, 2);
    EXPECT_FALSE(c2.ancestors.count(3) || c2.descendants.count(3));
    EXPECT_EQ(a.m(r2, r3), 0.0);
}

TEST(BuildTarget, ParentUniquenessPerColumn) {
    // Forward single-frame pairs: each column has at most one 1 among rows of
    // the immediately preceding frame.
    LineageGraph gt;
    for (std::int64_t id : {1, 2, 3, 4, 5}) gt.add_node(id);
    gt.add_edge(1, 3);
    gt.add_edge(2, 4);
    gt.add_edge(3, 5);
    auto s = gt_sample({det(1, 0), det(2, 0), det(3, 1), det(4, 1), det(5, 2)}, gt, 0, 3);
    AssociationMatrix a = build_target(s);
    auto frames = s.win.frames();
    for (int j = 0; j < a.size(); ++j) {
        int ones = 0;
        for (int i = 0; i < a.size(); ++i)
            if (frames[i] + 1 == frames[j] && a.m(i, j) == 1.0) ++ones;
        EXPECT_LE(ones, 1);
    }
}

TEST(BuildWeights, TemporalCutoffAndForwardOnly) {
    LineageGraph gt;
    for (std::int64_t id : {1, 2, 3, 4, 5}) gt.add_node(id);
    gt.add_edge(1, 2);
    gt.add_edge(2, 3);
    gt.add_edge(3, 4);
    gt.add_edge(4, 5);
    auto s = gt_sample({det(1, 0), det(2, 1), det(3, 2), det(4, 3), det(5, 4)}, gt, 0, 5);
    AssociationMatrix w = build_weights(s, {2, 10.0, 1.0});
    // gap 3 exceeds dt
    EXPECT_EQ(w.m(0, 3), 0.0);
    // same-frame and backward pairs
    EXPECT_EQ(w.m(0, 0), 0.0);
    EXPECT_EQ(w.m(1, 0), 0.0);
    // forward gaps 1 and 2 from a continuing track
    EXPECT_EQ(w.m(0, 1), 2.0);
    EXPECT_EQ(w.m(0, 2), 2.0);
}

TEST(BuildWeights, DividingRowGetsElevenByDefault) {
    LineageGraph gt;
    for (std::int64_t id : {1, 2, 3}) gt.add_node(id);
    gt.add_edge(1, 2);
    gt.add_edge(1, 3);
    auto s = gt_sample({det(1, 0), det(2, 1), det(3, 1)}, gt, 0, 2);
    AssociationMatrix w = build_weights(s);
    int r1 = s.win.row_of.at(1), r2 = s.win.row_of.at(2);
    EXPECT_EQ(w.m(r1, r2), 11.0);  // 1 + lam_div, defaults
}

TEST(BuildWeights, UnmatchedRowFallsToOtherwiseBranch) {
    LineageGraph gt;
    gt.add_node(2);
    std::vector<Detection> dets = {det(77, 0), det(2, 1)};
    auto vm = std::make_shared<VideoMatching>();
    vm->det_to_gt[2] = 2;
    vm->gt_to_det[2] = 2;
    WindowSample s;
    s.win = Window::make(0, 2, dets);
    s.gt = std::make_shared<const LineageGraph>(gt);
    s.matching = vm;
    s.orig_frame = s.win.frames();
    AssociationMatrix w = build_weights(s);
    EXPECT_EQ(w.m(s.win.row_of.at(77), s.win.row_of.at(2)), 1.0);
}

TEST(BuildWeights, TerminalTrackRowWeightOne) {
    LineageGraph gt;
    for (std::int64_t id : {1, 2}) gt.add_node(id);
    // node 1 has no children: disappearing object
    auto s = gt_sample({det(1, 0), det(2, 1)}, gt, 0, 2);
    AssociationMatrix w = build_weights(s);
    EXPECT_EQ(w.m(0, 1), 1.0);
}

}  // namespace
}  // namespace trax
