#pragma once

#include "trax/aggregate.hpp"
#include "trax/assignment.hpp"
#include "trax/core.hpp"

#include <numeric>

namespace trax {

struct TrackingSolution {
    LineageGraph graph;
    std::string solver;
    double objective = std::numeric_limits<double>::quiet_NaN();  // ilp only
};

namespace detail {

inline std::unordered_map<std::int64_t, int> frame_map(const CandidateGraph& cand) {
    std::unordered_map<std::int64_t, int> f;
    for (const auto& d : cand.detections) f[d.id] = d.t;
    return f;
}

inline void check_solution(const TrackingSolution& sol, const CandidateGraph& cand) {
    auto frames = frame_map(cand);
    auto violations = validate_lineage(sol.graph, frames);
    if (!violations.empty())
        throw Error("linker produced an invalid lineage: " + violations.front().detail);
}

}  // namespace detail

// Accepts candidate edges in descending score order (ties by ascending
// (parent, child)) subject to out-degree <= 2, in-degree <= 1 and score >= theta.
inline TrackingSolution link_greedy(const CandidateGraph& cand, double theta = 0.5) {
    if (theta < 0.0 || theta > 1.0) throw Error("link_greedy: theta must be in [0,1]");
    TrackingSolution sol;
    sol.solver = "greedy";
    for (const auto& d : cand.detections) sol.graph.add_node(d.id);

    std::vector<CandidateEdge> order = cand.edges;
    std::sort(order.begin(), order.end(), [](const CandidateEdge& a, const CandidateEdge& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::tie(a.parent, a.child) < std::tie(b.parent, b.child);
    });
    std::unordered_map<std::int64_t, int> out_cnt;
    std::unordered_set<std::int64_t> has_parent;
    for (const auto& e : order) {
        if (e.score < theta) break;
        if (out_cnt[e.parent] >= 2) continue;
        if (has_parent.count(e.child)) continue;
        sol.graph.add_edge(e.parent, e.child, e.score);
        out_cnt[e.parent] += 1;
        has_parent.insert(e.child);
    }
    detail::check_solution(sol, cand);
    return sol;
}

// ---------------------------------------------------------------------------
// Two-step linear assignment linking (Jaqaman-style).
// ---------------------------------------------------------------------------

struct LapConfig {
    double max_dist = std::numeric_limits<double>::infinity();  // extra gate on link length
    double nolink_percentile = 0.90;
    double nolink_factor = 1.05;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * v.size()));
    rank = std::min(std::max<std::size_t>(rank, 1), v.size());
    return v[rank - 1];
}

// Rectangular assignment with a per-entity no-link alternative, embedded in a
// square matrix. Returns selected (row, col) pairs among the real links.
inline std::vector<std::pair<int, int>> assign_with_nolink(const Eigen::MatrixXd& link_cost,
                                                           double nolink) {
    const int nr = static_cast<int>(link_cost.rows());
    const int nc = static_cast<int>(link_cost.cols());
    const int n = nr + nc;
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, kForbidden);
    cost.topLeftCorner(nr, nc) = link_cost;
    for (int r = 0; r < nr; ++r) cost(r, nc + r) = nolink;
    for (int c = 0; c < nc; ++c) cost(nr + c, c) = nolink;
    cost.bottomRightCorner(nc, nr).setZero();
    AssignmentResult res = solve_assignment(cost);
    std::vector<std::pair<int, int>> links;
    for (int r = 0; r < nr; ++r)
        if (res.col_of_row[r] < nc && link_cost(r, res.col_of_row[r]) < kForbidden / 2)
            links.emplace_back(r, res.col_of_row[r]);
    return links;
}

}  // namespace detail

// Step 1 forms linear chains per frame transition; step 2 stitches segment
// starts onto running tracks one frame back, which creates divisions and
// recovers links that step 1 priced out.
inline TrackingSolution link_lap(const CandidateGraph& cand, const LapConfig& cfg = {}) {
    TrackingSolution sol;
    sol.solver = "lap";
    for (const auto& d : cand.detections) sol.graph.add_node(d.id);
    if (cand.detections.empty()) return sol;

    auto usable = [&](const CandidateEdge& e) {
        return (cand.det(e.parent).p - cand.det(e.child).p).norm() <= cfg.max_dist;
    };

    const int f_lo = cand.min_frame();
    const int f_hi = cand.max_frame();

    // Transition -> candidate edges.
    std::map<int, std::vector<CandidateEdge>> by_transition;
    for (const auto& e : cand.edges)
        if (usable(e)) by_transition[cand.frame_of(e.parent)].push_back(e);

    std::unordered_map<std::int64_t, std::int64_t> next_of, prev_of;

    // Step 1: per-transition rectangular assignment, one-to-one, forming chains.
    for (int f = f_lo; f < f_hi; ++f) {
        auto it = by_transition.find(f);
        if (it == by_transition.end()) continue;
        const auto& edges = it->second;
        std::vector<std::int64_t> parents, children;
        for (const auto& e : edges) {
            parents.push_back(e.parent);
            children.push_back(e.child);
        }
        std::sort(parents.begin(), parents.end());
        parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
        std::sort(children.begin(), children.end());
        children.erase(std::unique(children.begin(), children.end()), children.end());
        std::unordered_map<std::int64_t, int> prow, ccol;
        for (int i = 0; i < static_cast<int>(parents.size()); ++i) prow[parents[i]] = i;
        for (int i = 0; i < static_cast<int>(children.size()); ++i) ccol[children[i]] = i;

        Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(parents.size(), children.size(),
                                                         kForbidden);
        std::vector<double> realized;
        for (const auto& e : edges) {
            double c = 1.0 - e.score;
            cost(prow[e.parent], ccol[e.child]) = c;
            realized.push_back(c);
        }
        double nolink = cfg.nolink_factor *
                        std::max(detail::percentile(realized, cfg.nolink_percentile), 1e-9);
        for (auto [r, c] : detail::assign_with_nolink(cost, nolink)) {
            next_of[parents[r]] = children[c];
            prev_of[children[c]] = parents[r];
        }
    }

    // Step 2: attach segment starts to any node with spare out-capacity in the
    // previous frame (its track may continue: that is a division).
    std::map<int, std::vector<std::int64_t>> starts_by_frame;
    for (const auto& d : cand.detections)
        if (!prev_of.count(d.id) && d.t > f_lo) starts_by_frame[d.t].push_back(d.id);

    for (auto& [f, starts] : starts_by_frame) {
        std::sort(starts.begin(), starts.end());
        auto it = by_transition.find(f - 1);
        if (it == by_transition.end()) continue;
        std::vector<std::int64_t> attach;
        std::vector<CandidateEdge> usable_edges;
        for (const auto& e : it->second) {
            if (!std::binary_search(starts.begin(), starts.end(), e.child)) continue;
            if (next_of.count(e.parent) && next_of[e.parent] == e.child) continue;
            usable_edges.push_back(e);
            attach.push_back(e.parent);
        }
        std::sort(attach.begin(), attach.end());
        attach.erase(std::unique(attach.begin(), attach.end()), attach.end());
        if (attach.empty()) continue;
        std::unordered_map<std::int64_t, int> arow, scol;
        for (int i = 0; i < static_cast<int>(attach.size()); ++i) arow[attach[i]] = i;
        for (int i = 0; i < static_cast<int>(starts.size()); ++i) scol[starts[i]] = i;

        Eigen::MatrixXd cost =
            Eigen::MatrixXd::Constant(attach.size(), starts.size(), kForbidden);
        std::vector<double> realized;
        for (const auto& e : usable_edges) {
            double c = 1.0 - e.score;
            cost(arow[e.parent], scol[e.child]) = c;
            realized.push_back(c);
        }
        double nolink = cfg.nolink_factor *
                        std::max(detail::percentile(realized, cfg.nolink_percentile), 1e-9);
        for (auto [r, c] : detail::assign_with_nolink(cost, nolink)) {
            std::int64_t parent = attach[r], child = starts[c];
            // Each attach row is assigned at most once, so the parent gains at
            // most one extra child on top of its step-1 successor.
            prev_of[child] = parent;
        }
    }

    // Fix scores and materialize step-1 chain links.
    std::map<std::pair<std::int64_t, std::int64_t>, double> score_of;
    for (const auto& e : cand.edges) score_of[{e.parent, e.child}] = e.score;
    LineageGraph g;
    for (const auto& d : cand.detections) g.add_node(d.id);
    for (const auto& [p, c] : next_of) g.add_edge(p, c, score_of.at({p, c}));
    for (const auto& [c, p] : prev_of)
        if (!(next_of.count(p) && next_of.at(p) == c)) g.add_edge(p, c, score_of.at({p, c}));
    sol.graph = std::move(g);

    detail::check_solution(sol, cand);
    return sol;
}

// ---------------------------------------------------------------------------
// Exact ILP linking via depth-first branch-and-bound.
// ---------------------------------------------------------------------------

struct IlpCosts {
    double c_app = std::log(0.75 / 0.25);  // logit(0.5 + margin), margin 0.25
    double c_dis = std::log(0.75 / 0.25);
    double c_div = 1.0;
    double eps = 1e-6;
    std::size_t max_component_edges = 5000;

    double edge_cost(double score) const {
        double p = std::min(std::max(score, eps), 1.0 - eps);
        return -std::log(p / (1.0 - p));
    }
};

// Objective of an arbitrary feasible edge subset, computed from the
// definition. Shared by the solver, the incumbent check, and oracle tests.
inline double ilp_objective(const CandidateGraph& cand,
                            const std::vector<CandidateEdge>& selected, const IlpCosts& costs) {
    const int t_min = cand.min_frame();
    const int t_max = cand.max_frame();
    std::unordered_map<std::int64_t, int> in_cnt, out_cnt;
    double total = 0.0;
    for (const auto& e : selected) {
        total += costs.edge_cost(e.score);
        in_cnt[e.child] += 1;
        out_cnt[e.parent] += 1;
    }
    for (const auto& d : cand.detections) {
        if (d.t > t_min && in_cnt[d.id] == 0) total += costs.c_app;
        if (d.t < t_max && out_cnt[d.id] == 0) total += costs.c_dis;
        if (out_cnt[d.id] == 2) total += costs.c_div;
    }
    return total;
}

namespace detail {

struct IlpEdge {
    int parent = 0, child = 0;  // local node indices
    double cost = 0.0;
    double optimistic = 0.0;  // cost - available appearance/disappearance savings
    const CandidateEdge* src = nullptr;
};

// Exact DFS branch-and-bound over one component's edges. `best` enters with
// the incumbent's variable-part value and is tightened in place.
class ComponentSolver {
public:
    ComponentSolver(std::vector<IlpEdge> edges, std::vector<double> app_saving,
                    std::vector<double> dis_saving, double c_div)
        : edges_(std::move(edges)),
          app_(std::move(app_saving)),
          dis_(std::move(dis_saving)),
          c_div_(c_div) {
        std::sort(edges_.begin(), edges_.end(), [](const IlpEdge& a, const IlpEdge& b) {
            return a.optimistic < b.optimistic;
        });
        suffix_.assign(edges_.size() + 1, 0.0);
        for (int i = static_cast<int>(edges_.size()) - 1; i >= 0; --i)
            suffix_[i] = suffix_[i + 1] + std::min(0.0, edges_[i].optimistic);
        in_cnt_.assign(app_.size(), 0);
        out_cnt_.assign(dis_.size(), 0);
    }

    std::pair<double, std::vector<const CandidateEdge*>> solve(double incumbent_value,
                                                               std::vector<const CandidateEdge*>
                                                                   incumbent_edges) {
        best_ = incumbent_value;
        best_edges_ = std::move(incumbent_edges);
        chosen_.clear();
        dfs(0, 0.0);
        return {best_, best_edges_};
    }

private:
    void dfs(std::size_t i, double value) {
        if (value + suffix_[i] >= best_ - 1e-12) return;
        if (i == edges_.size()) {
            if (value < best_) {
                best_ = value;
                best_edges_.clear();
                for (const IlpEdge* e : chosen_) best_edges_.push_back(e->src);
            }
            return;
        }
        const IlpEdge& e = edges_[i];
        if (in_cnt_[e.child] == 0 && out_cnt_[e.parent] < 2) {
            double delta = e.cost - app_[e.child];
            delta -= out_cnt_[e.parent] == 0 ? dis_[e.parent] : 0.0;
            delta += out_cnt_[e.parent] == 1 ? c_div_ : 0.0;
            in_cnt_[e.child] = 1;
            out_cnt_[e.parent] += 1;
            chosen_.push_back(&e);
            dfs(i + 1, value + delta);
            chosen_.pop_back();
            in_cnt_[e.child] = 0;
            out_cnt_[e.parent] -= 1;
        }
        dfs(i + 1, value);
    }

    std::vector<IlpEdge> edges_;
    std::vector<double> app_, dis_;
    double c_div_;
    std::vector<double> suffix_;
    std::vector<int> in_cnt_, out_cnt_;
    std::vector<const IlpEdge*> chosen_;
    double best_ = 0.0;
    std::vector<const CandidateEdge*> best_edges_;
};

}  // namespace detail

// Minimizes edge costs plus appearance/disappearance/division node terms under
// in-degree <= 1 and out-degree <= 2, with detections fixed as vertices. The
// problem separates exactly per frame transition and per connected component
// within a transition; each component is solved to optimality by B&B seeded
// with the greedy incumbent.
inline TrackingSolution link_ilp(const CandidateGraph& cand, const IlpCosts& costs = {}) {
    TrackingSolution sol;
    sol.solver = "ilp";
    for (const auto& d : cand.detections) sol.graph.add_node(d.id);
    if (cand.detections.empty()) {
        sol.objective = 0.0;
        return sol;
    }
    const int t_min = cand.min_frame();
    const int t_max = cand.max_frame();

    // Constant part: every node pays appearance + disappearance up front;
    // selected edges earn the savings back.
    double objective = 0.0;
    for (const auto& d : cand.detections) {
        if (d.t > t_min) objective += costs.c_app;
        if (d.t < t_max) objective += costs.c_dis;
    }

    TrackingSolution greedy = link_greedy(cand, 0.5);

    // Group candidate edges by transition (parent frame).
    std::map<int, std::vector<const CandidateEdge*>> by_transition;
    for (const auto& e : cand.edges) by_transition[cand.frame_of(e.parent)].push_back(&e);

    for (auto& [f, edge_ptrs] : by_transition) {
        (void)f;
        // Connected components via union-find. Parent and child sides are
        // qualified separately: a node id can appear on both sides of
        // different transitions without coupling them.
        auto pkey = [](std::int64_t id) { return id * 2; };
        auto ckey = [](std::int64_t id) { return id * 2 + 1; };
        std::unordered_map<std::int64_t, std::int64_t> uf;
        for (const CandidateEdge* e : edge_ptrs) {
            uf.emplace(pkey(e->parent), pkey(e->parent));
            uf.emplace(ckey(e->child), ckey(e->child));
        }
        auto find = [&](std::int64_t x) {
            while (uf[x] != x) {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            return x;
        };
        for (const CandidateEdge* e : edge_ptrs) {
            std::int64_t a = find(pkey(e->parent)), b = find(ckey(e->child));
            if (a != b) uf[a] = b;
        }
        std::map<std::int64_t, std::vector<const CandidateEdge*>> comps;
        for (const CandidateEdge* e : edge_ptrs) comps[find(pkey(e->parent))].push_back(e);

        for (auto& [root, comp] : comps) {
            (void)root;
            if (comp.size() > costs.max_component_edges)
                throw Error("link_ilp: component of " + std::to_string(comp.size()) +
                            " edges exceeds the budget; chunk the video temporally");
            // Local node tables.
            std::unordered_map<std::int64_t, int> pidx, cidx;
            std::vector<double> dis_saving, app_saving;
            std::vector<detail::IlpEdge> edges;
            for (const CandidateEdge* e : comp) {
                if (!pidx.count(e->parent)) {
                    pidx[e->parent] = static_cast<int>(dis_saving.size());
                    dis_saving.push_back(cand.frame_of(e->parent) < t_max ? costs.c_dis : 0.0);
                }
                if (!cidx.count(e->child)) {
                    cidx[e->child] = static_cast<int>(app_saving.size());
                    app_saving.push_back(cand.frame_of(e->child) > t_min ? costs.c_app : 0.0);
                }
                detail::IlpEdge ie;
                ie.parent = pidx[e->parent];
                ie.child = cidx[e->child];
                ie.cost = costs.edge_cost(e->score);
                ie.optimistic = ie.cost - app_saving[ie.child] - dis_saving[ie.parent];
                ie.src = e;
                // Edges that cannot pay for themselves even with both savings
                // can never appear in an optimal solution.
                if (ie.optimistic < 0.0) edges.push_back(ie);
            }

            // Incumbent: greedy edges restricted to this component.
            double inc_value = 0.0;
            std::vector<const CandidateEdge*> inc_edges;
            {
                std::unordered_map<std::int64_t, int> in_cnt, out_cnt;
                for (const CandidateEdge* e : comp) {
                    if (!greedy.graph.has_edge(e->parent, e->child)) continue;
                    inc_edges.push_back(e);
                    double delta = costs.edge_cost(e->score) - app_saving[cidx[e->child]];
                    delta -= out_cnt[e->parent] == 0 ? dis_saving[pidx[e->parent]] : 0.0;
                    delta += out_cnt[e->parent] == 1 ? costs.c_div : 0.0;
                    inc_value += delta;
                    in_cnt[e->child] += 1;
                    out_cnt[e->parent] += 1;
                }
                if (inc_value > 0.0) {  // empty selection beats the incumbent
                    inc_value = 0.0;
                    inc_edges.clear();
                }
            }

            detail::ComponentSolver solver(std::move(edges), app_saving, dis_saving,
                                           costs.c_div);
            auto [value, picked] = solver.solve(inc_value, std::move(inc_edges));
            objective += value;
            for (const CandidateEdge* e : picked)
                sol.graph.add_edge(e->parent, e->child, e->score);
        }
    }
    sol.objective = objective;
    detail::check_solution(sol, cand);
    return sol;
}

}  // namespace trax
