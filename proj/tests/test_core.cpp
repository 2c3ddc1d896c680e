#include "trax/core.hpp"

#include <gtest/gtest.h>

#include <random>

namespace trax {
namespace {

std::unordered_map<std::int64_t, int> frames_map(
    std::initializer_list<std::pair<std::int64_t, int>> init) {
    return {init.begin(), init.end()};
}

TEST(ValidateLineage, EmptyGraphIsValid) {
    LineageGraph g;
    EXPECT_TRUE(validate_lineage(g, {}).empty());
}

TEST(ValidateLineage, DivisionIsValid) {
    LineageGraph g;
    for (std::int64_t id : {1, 2, 3}) g.add_node(id);
    g.add_edge(1, 2);
    g.add_edge(1, 3);
    EXPECT_TRUE(validate_lineage(g, frames_map({{1, 0}, {2, 1}, {3, 1}})).empty());
}

TEST(ValidateLineage, TwoParentsIsViolation) {
    LineageGraph g;
    for (std::int64_t id : {1, 2, 3}) g.add_node(id);
    g.add_edge(1, 3);
    g.add_edge(2, 3);
    auto v = validate_lineage(g, frames_map({{1, 0}, {2, 0}, {3, 1}}));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::MultiParent);
    EXPECT_EQ(v[0].node, 3);
    EXPECT_NE(v[0].detail.find("in-degree 2"), std::string::npos);
}

TEST(ValidateLineage, ThreeChildrenIsViolation) {
    LineageGraph g;
    for (std::int64_t id : {1, 2, 3, 4}) g.add_node(id);
    g.add_edge(1, 2);
    g.add_edge(1, 3);
    g.add_edge(1, 4);
    auto v = validate_lineage(g, frames_map({{1, 0}, {2, 1}, {3, 1}, {4, 1}}));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::TooManyChildren);
}

TEST(ValidateLineage, WrongFrameGap) {
    LineageGraph g;
    g.add_node(1);
    g.add_node(2);
    g.add_edge(1, 2);
    auto v = validate_lineage(g, frames_map({{1, 0}, {2, 2}}));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::WrongFrameGap);
}

TEST(ValidateLineage, UnknownNodeIsStructuralError) {
    LineageGraph g;
    g.add_node(1);
    g.add_edge(1, 99);
    EXPECT_THROW(validate_lineage(g, frames_map({{1, 0}, {99, 1}})), StructureError);
}

TEST(LineageClosure, Chain) {
    LineageGraph g;
    for (std::int64_t id : {1, 2, 3}) g.add_node(id);
    g.add_edge(1, 2);
    g.add_edge(2, 3);
    Closure c = lineage_closure(g, 2);
    EXPECT_EQ(c.ancestors, (std::set<std::int64_t>{1}));
    EXPECT_EQ(c.descendants, (std::set<std::int64_t>{3}));
}

TEST(LineageClosure, Division) {
    LineageGraph g;
    for (std::int64_t id : {1, 2, 3}) g.add_node(id);
    g.add_edge(1, 2);
    g.add_edge(1, 3);
    Closure c = lineage_closure(g, 1);
    EXPECT_TRUE(c.ancestors.empty());
    EXPECT_EQ(c.descendants, (std::set<std::int64_t>{2, 3}));
}

TEST(LineageClosure, IsolatedNode) {
    LineageGraph g;
    g.add_node(7);
    Closure c = lineage_closure(g, 7);
    EXPECT_TRUE(c.ancestors.empty());
    EXPECT_TRUE(c.descendants.empty());
}

TEST(LineageClosure, UnknownNodeThrows) {
    LineageGraph g;
    EXPECT_THROW(lineage_closure(g, 1), StructureError);
}

// Random forests: y in descendants(x) <=> x in ancestors(y).
TEST(LineageClosure, ConsistencyOnRandomForests) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> size_dist(2, 50);
        int n = size_dist(rng);
        LineageGraph g;
        std::vector<int> frame(n);
        std::vector<int> out_deg(n, 0);
        for (int i = 0; i < n; ++i) {
            g.add_node(i);
            if (i == 0) {
                frame[i] = 0;
                continue;
            }
            std::uniform_int_distribution<int> pick(0, i - 1);
            int tries = 8;
            while (tries-- > 0) {
                int p = pick(rng);
                if (out_deg[p] < 2) {
                    g.add_edge(p, i);
                    frame[i] = frame[p] + 1;
                    out_deg[p] += 1;
                    break;
                }
            }
            if (tries < 0) frame[i] = 0;  // stays a root
        }
        std::vector<Closure> closures;
        for (int i = 0; i < n; ++i) closures.push_back(lineage_closure(g, i));
        for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y) {
                bool y_desc_x = closures[x].descendants.count(y) > 0;
                bool x_anc_y = closures[y].ancestors.count(x) > 0;
                EXPECT_EQ(y_desc_x, x_anc_y);
            }
    }
}

TEST(Window, SortsRowsByFrameThenId) {
    std::vector<Detection> dets(3);
    dets[0].id = 5;
    dets[0].t = 1;
    dets[1].id = 2;
    dets[1].t = 0;
    dets[2].id = 9;
    dets[2].t = 0;
    Window w = Window::make(0, 2, dets);
    EXPECT_EQ(w.dets[0].id, 2);
    EXPECT_EQ(w.dets[1].id, 9);
    EXPECT_EQ(w.dets[2].id, 5);
    EXPECT_EQ(w.row_of.at(9), 1);
}

TEST(Window, RejectsOutOfRangeAndDuplicates) {
    std::vector<Detection> dets(1);
    dets[0].id = 1;
    dets[0].t = 5;
    EXPECT_THROW(Window::make(0, 2, dets), Error);
    std::vector<Detection> dup(2);
    dup[0].id = 1;
    dup[0].t = 0;
    dup[1].id = 1;
    dup[1].t = 1;
    EXPECT_THROW(Window::make(0, 2, dup), Error);
}

TEST(Detection, InertiaPsdCheck) {
    Detection d;
    d.z.resize(5);
    d.z << 10.0, 5.0, 4.0, 1.0, 3.0;  // 4*1 - 9 < 0
    EXPECT_TRUE(detection_issue(d).has_value());
    d.z(4) = 1.0;
    EXPECT_FALSE(detection_issue(d).has_value());
}

TEST(AssociationMatrixChecks, RoleInvariants) {
    AssociationMatrix a;
    a.role = MatrixRole::Target;
    a.m = Eigen::MatrixXd::Zero(2, 2);
    a.frames = {0, 1};
    EXPECT_FALSE(association_issue(a).has_value());
    a.m(0, 1) = 0.5;
    EXPECT_TRUE(association_issue(a).has_value());
    a.role = MatrixRole::Probabilities;
    EXPECT_FALSE(association_issue(a).has_value());
    a.m(0, 1) = 1.5;
    EXPECT_TRUE(association_issue(a).has_value());
}

}  // namespace
}  // namespace trax
