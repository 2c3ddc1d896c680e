#pragma once

#include "trax/common.hpp"

#include <algorithm>
#include <vector>

namespace trax {

// Recursive spatial bisection of a point set into overlapping tiles of at
// most `cap` points. The split axis is the wider extent; both halves keep a
// `margin` band past the split so that any pair closer than `margin` lands in
// at least one common tile. Returns sorted row-index subsets.
inline std::vector<std::vector<int>> tile_indices(const Eigen::MatrixXd& pos, int cap,
                                                  double margin) {
    std::vector<std::vector<int>> out;
    std::vector<int> all(pos.rows());
    for (int i = 0; i < static_cast<int>(pos.rows()); ++i) all[i] = i;

    std::function<void(std::vector<int>)> split = [&](std::vector<int> idx) {
        if (static_cast<int>(idx.size()) <= cap) {
            out.push_back(std::move(idx));
            return;
        }
        Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
        for (int i : idx) {
            lo = lo.cwiseMin(pos.row(i).transpose());
            hi = hi.cwiseMax(pos.row(i).transpose());
        }
        int axis = (hi.x() - lo.x()) >= (hi.y() - lo.y()) ? 0 : 1;
        std::vector<double> coords;
        coords.reserve(idx.size());
        for (int i : idx) coords.push_back(pos(i, axis));
        std::nth_element(coords.begin(), coords.begin() + coords.size() / 2, coords.end());
        double mid = coords[coords.size() / 2];

        std::vector<int> left, right;
        for (int i : idx) {
            if (pos(i, axis) <= mid + margin) left.push_back(i);
            if (pos(i, axis) > mid - margin) right.push_back(i);
        }
        // Degenerate point cloud: splitting cannot shrink the set, accept the
        // oversized tile instead of recursing forever.
        if (left.size() == idx.size() || right.size() == idx.size()) {
            out.push_back(std::move(idx));
            return;
        }
        split(std::move(left));
        split(std::move(right));
    };
    split(std::move(all));
    return out;
}

}  // namespace trax
