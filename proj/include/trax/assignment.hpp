#pragma once

#include "trax/common.hpp"

#include <limits>
#include <vector>

namespace trax {

inline constexpr double kForbidden = 1e30;  // assignment cells that must not be chosen

struct AssignmentResult {
    std::vector<int> col_of_row;
    double cost = 0.0;
};

// Exact minimum-cost perfect assignment on a square matrix (shortest
// augmenting path with potentials, O(n^3)). Cells set to kForbidden are
// avoided whenever a finite-cost perfect assignment exists; callers embed
// their problems so that one always does.
inline AssignmentResult solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw Error("solve_assignment: matrix must be square");
    AssignmentResult res;
    res.col_of_row.assign(n, -1);
    if (n == 0) return res;

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) res.col_of_row[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i) res.cost += cost(i, res.col_of_row[i]);
    return res;
}

}  // namespace trax
