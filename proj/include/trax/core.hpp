#pragma once

#include "trax/common.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace trax {

// Canonical feature channel order, matching the detections CSV columns.
inline constexpr std::array<const char*, 5> kFeatureNames = {
    "area", "intensity", "ixx", "iyy", "ixy"};
inline constexpr int kNumFeatures = 5;
inline constexpr double kInertiaPsdTol = 1e-6;

// One detected object in one frame. `z` holds the shallow feature channels in
// kFeatureNames order (all five or a prefix; empty in points-only mode).
// Inertia components are central second moments normalized by area (px^2).
struct Detection {
    std::int64_t id = 0;
    int t = 0;
    Vec2 p = Vec2::Zero();
    Eigen::VectorXd z;
    std::int64_t mask_ref = -1;  // label in an external mask image, -1 = none

    bool has_mask() const { return mask_ref >= 0; }
};

// Checks the per-detection invariants; returns a message for the first
// violation or nullopt if the detection is well formed.
inline std::optional<std::string> detection_issue(const Detection& d) {
    if (d.t < 0) return "negative frame index";
    if (d.z.size() > 0 && d.z(0) < 0.0) return "negative area";
    if (d.z.size() >= 5) {
        double ixx = d.z(2), iyy = d.z(3), ixy = d.z(4);
        if (ixx < 0.0 || iyy < 0.0) return "negative inertia diagonal";
        if (ixx * iyy - ixy * ixy < -kInertiaPsdTol)
            return "inertia tensor not positive semidefinite";
    }
    return std::nullopt;
}

struct LineageEdge {
    std::int64_t parent = 0;
    std::int64_t child = 0;
    double score = 1.0;
};

// Directed forest over detections; edges point parent -> child one frame
// ahead. The container itself accepts arbitrary directed graphs so that
// validate_lineage can report rule violations on malformed inputs.
class LineageGraph {
public:
    void add_node(std::int64_t id) { nodes_.insert(id); }

    bool has_node(std::int64_t id) const { return nodes_.count(id) > 0; }

    void add_edge(std::int64_t parent, std::int64_t child, double score = 1.0) {
        children_[parent].push_back(child);
        parents_[child].push_back(parent);
        scores_[key(parent, child)] = score;
        ++edge_count_;
    }

    bool has_edge(std::int64_t parent, std::int64_t child) const {
        return scores_.count(key(parent, child)) > 0;
    }

    double edge_score(std::int64_t parent, std::int64_t child) const {
        auto it = scores_.find(key(parent, child));
        if (it == scores_.end()) throw StructureError("edge_score: no such edge");
        return it->second;
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edge_count_; }

    std::vector<std::int64_t> nodes() const {
        std::vector<std::int64_t> out(nodes_.begin(), nodes_.end());
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<LineageEdge> edges() const {
        std::vector<LineageEdge> out;
        out.reserve(edge_count_);
        for (const auto& [p, kids] : children_)
            for (std::int64_t c : kids) out.push_back({p, c, scores_.at(key(p, c))});
        std::sort(out.begin(), out.end(), [](const LineageEdge& a, const LineageEdge& b) {
            return std::tie(a.parent, a.child) < std::tie(b.parent, b.child);
        });
        return out;
    }

    std::vector<std::int64_t> children(std::int64_t id) const {
        auto it = children_.find(id);
        if (it == children_.end()) return {};
        auto out = it->second;
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::int64_t> parents(std::int64_t id) const {
        auto it = parents_.find(id);
        if (it == parents_.end()) return {};
        auto out = it->second;
        std::sort(out.begin(), out.end());
        return out;
    }

    int out_degree(std::int64_t id) const {
        auto it = children_.find(id);
        return it == children_.end() ? 0 : static_cast<int>(it->second.size());
    }

    int in_degree(std::int64_t id) const {
        auto it = parents_.find(id);
        return it == parents_.end() ? 0 : static_cast<int>(it->second.size());
    }

    // Unique parent, or nullopt. Throws if the node has several parents;
    // callers that tolerate invalid graphs must use parents().
    std::optional<std::int64_t> parent(std::int64_t id) const {
        auto it = parents_.find(id);
        if (it == parents_.end() || it->second.empty()) return std::nullopt;
        if (it->second.size() > 1) throw StructureError("parent: node has multiple parents");
        return it->second.front();
    }

private:
    static std::pair<std::int64_t, std::int64_t> key(std::int64_t p, std::int64_t c) {
        return {p, c};
    }

    std::unordered_set<std::int64_t> nodes_;
    std::unordered_map<std::int64_t, std::vector<std::int64_t>> children_;
    std::unordered_map<std::int64_t, std::vector<std::int64_t>> parents_;
    std::map<std::pair<std::int64_t, std::int64_t>, double> scores_;
    std::size_t edge_count_ = 0;
};

enum class ViolationKind { MultiParent, TooManyChildren, WrongFrameGap };

struct Violation {
    ViolationKind kind;
    std::int64_t node;
    std::string detail;
};

// Checks the lineage rules: in-degree <= 1, out-degree <= 2, and every edge
// spanning exactly one frame. Edges referencing ids missing from the graph or
// the frame map are structural errors, not rule violations.
inline std::vector<Violation> validate_lineage(
    const LineageGraph& g, const std::unordered_map<std::int64_t, int>& frames) {
    std::vector<Violation> out;
    for (const auto& e : g.edges()) {
        for (std::int64_t id : {e.parent, e.child}) {
            if (!g.has_node(id))
                throw StructureError("validate_lineage: edge references unknown node " +
                                     std::to_string(id));
            if (!frames.count(id))
                throw StructureError("validate_lineage: no frame for node " +
                                     std::to_string(id));
        }
        int gap = frames.at(e.child) - frames.at(e.parent);
        if (gap != 1) {
            std::ostringstream msg;
            msg << "edge " << e.parent << "->" << e.child << " spans " << gap << " frames";
            out.push_back({ViolationKind::WrongFrameGap, e.parent, msg.str()});
        }
    }
    for (std::int64_t id : g.nodes()) {
        if (g.in_degree(id) > 1)
            out.push_back({ViolationKind::MultiParent, id,
                           "in-degree " + std::to_string(g.in_degree(id)) + " at node " +
                               std::to_string(id)});
        if (g.out_degree(id) > 2)
            out.push_back({ViolationKind::TooManyChildren, id,
                           "out-degree " + std::to_string(g.out_degree(id)) + " at node " +
                               std::to_string(id)});
    }
    return out;
}

struct Closure {
    std::set<std::int64_t> ancestors;
    std::set<std::int64_t> descendants;
};

// Transitive closure along parent and child links; the node itself is
// excluded from both sets.
inline Closure lineage_closure(const LineageGraph& g, std::int64_t node) {
    if (!g.has_node(node))
        throw StructureError("lineage_closure: unknown node " + std::to_string(node));
    Closure out;
    std::vector<std::int64_t> stack{node};
    while (!stack.empty()) {
        std::int64_t cur = stack.back();
        stack.pop_back();
        for (std::int64_t p : g.parents(cur))
            if (out.ancestors.insert(p).second) stack.push_back(p);
    }
    stack = {node};
    while (!stack.empty()) {
        std::int64_t cur = stack.back();
        stack.pop_back();
        for (std::int64_t c : g.children(cur))
            if (out.descendants.insert(c).second) stack.push_back(c);
    }
    return out;
}

// A window of consecutive frames with its detections in (frame, id) order.
struct Window {
    int start = 0;
    int span = 0;
    std::vector<Detection> dets;
    std::unordered_map<std::int64_t, int> row_of;

    static Window make(int start, int span, std::vector<Detection> dets) {
        if (span < 2) throw Error("Window: span must be >= 2");
        Window w;
        w.start = start;
        w.span = span;
        w.dets = std::move(dets);
        for (const auto& d : w.dets)
            if (d.t < start || d.t >= start + span)
                throw Error("Window: detection " + std::to_string(d.id) +
                            " outside frame range");
        std::sort(w.dets.begin(), w.dets.end(), [](const Detection& a, const Detection& b) {
            return std::tie(a.t, a.id) < std::tie(b.t, b.id);
        });
        w.row_of.reserve(w.dets.size());
        for (int i = 0; i < static_cast<int>(w.dets.size()); ++i) {
            auto [it, fresh] = w.row_of.emplace(w.dets[i].id, i);
            (void)it;
            if (!fresh)
                throw Error("Window: duplicate detection id " + std::to_string(w.dets[i].id));
        }
        return w;
    }

    int size() const { return static_cast<int>(dets.size()); }

    std::vector<int> frames() const {
        std::vector<int> f(dets.size());
        for (std::size_t i = 0; i < dets.size(); ++i) f[i] = dets[i].t;
        return f;
    }

    Eigen::MatrixX2d positions() const {
        Eigen::MatrixX2d p(dets.size(), 2);
        for (std::size_t i = 0; i < dets.size(); ++i) p.row(i) = dets[i].p.transpose();
        return p;
    }
};

enum class MatrixRole { Target, Logits, Probabilities, Weights, Aggregated };

// Dense pairwise matrix over one window's detections, rows and columns in
// window order.
struct AssociationMatrix {
    MatrixRole role = MatrixRole::Target;
    Eigen::MatrixXd m;
    std::vector<int> frames;

    int size() const { return static_cast<int>(m.rows()); }
};

inline std::optional<std::string> association_issue(const AssociationMatrix& a) {
    if (a.m.rows() != a.m.cols()) return "matrix not square";
    if (static_cast<int>(a.frames.size()) != a.m.rows()) return "frame vector size mismatch";
    switch (a.role) {
        case MatrixRole::Target:
            for (int i = 0; i < a.m.rows(); ++i)
                for (int j = 0; j < a.m.cols(); ++j)
                    if (a.m(i, j) != 0.0 && a.m(i, j) != 1.0) return "target entry not in {0,1}";
            break;
        case MatrixRole::Probabilities:
        case MatrixRole::Aggregated:
            if ((a.m.array() < 0.0).any() || (a.m.array() > 1.0).any())
                return "probability entry outside [0,1]";
            break;
        case MatrixRole::Weights:
            if ((a.m.array() < 0.0).any()) return "negative weight";
            break;
        case MatrixRole::Logits:
            break;
    }
    return std::nullopt;
}

}  // namespace trax
