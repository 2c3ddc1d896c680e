#pragma once

#include "trax/targets.hpp"

#include <random>

namespace trax {

struct AugConfig {
    bool enabled = true;
    bool flip = true;
    double max_shift = 0.0;      // px, uniform per axis
    double max_rotate = M_PI;    // radians, uniform symmetric
    double max_shear = 0.0;
    double scale_min = 1.0, scale_max = 1.0;
    double intensity_shift_sigma = 0.0;
    double intensity_scale_min = 1.0, intensity_scale_max = 1.0;
    std::vector<int> subsample = {1, 2};
};

struct Affine2 {
    Eigen::Matrix2d lin = Eigen::Matrix2d::Identity();
    Vec2 shift = Vec2::Zero();
};

// Applies one spatial transform jointly to all detections of the sample:
// positions map affinely about `center`, areas scale with |det|, and the
// inertia tensor (area-normalized second moments) transforms by congruence.
inline void apply_affine(WindowSample& s, const Affine2& a, const Vec2& center) {
    double det = std::abs(a.lin.determinant());
    for (auto& d : s.win.dets) {
        d.p = a.lin * (d.p - center) + center + a.shift;
        if (d.z.size() >= 1) d.z(0) *= det;
        if (d.z.size() >= 5) {
            Eigen::Matrix2d t;
            t << d.z(2), d.z(4), d.z(4), d.z(3);
            t = (a.lin * t * a.lin.transpose()).eval();
            d.z(2) = t(0, 0);
            d.z(3) = t(1, 1);
            d.z(4) = t(0, 1);
        }
    }
}

inline void apply_intensity(WindowSample& s, double scale, double shift) {
    for (auto& d : s.win.dets)
        if (d.z.size() >= 2) d.z(1) = scale * d.z(1) + shift;
}

// Keeps every k-th frame of the window and rescales frames to be consecutive.
// orig_frame keeps the pre-subsampling frames so that sub-lineage and
// composed-division lookups against the full gt graph remain exact.
inline void subsample_time(WindowSample& s, int k) {
    if (k <= 1) return;
    std::vector<Detection> kept;
    std::vector<std::pair<std::int64_t, int>> orig;
    for (std::size_t i = 0; i < s.win.dets.size(); ++i) {
        const Detection& d = s.win.dets[i];
        int off = d.t - s.win.start;
        if (off % k != 0) continue;
        Detection nd = d;
        nd.t = off / k;
        kept.push_back(nd);
        orig.emplace_back(d.id, s.orig_frame[i]);
    }
    int span = (s.win.span + k - 1) / k;
    s.win = Window::make(0, std::max(2, span), std::move(kept));
    std::unordered_map<std::int64_t, int> orig_of(orig.begin(), orig.end());
    s.orig_frame.resize(s.win.dets.size());
    for (std::size_t i = 0; i < s.win.dets.size(); ++i)
        s.orig_frame[i] = orig_of.at(s.win.dets[i].id);
    s.stride *= k;
}

// Samples one joint transform set and applies it. Draw order is fixed, so the
// result is a pure function of (sample, rng state, config).
inline WindowSample augment_sample(const WindowSample& in, std::mt19937_64& rng,
                                   const AugConfig& cfg) {
    WindowSample s = in;
    if (!cfg.enabled) return s;

    std::uniform_int_distribution<int> pick_k(0, static_cast<int>(cfg.subsample.size()) - 1);
    int k = cfg.subsample.empty() ? 1 : cfg.subsample[pick_k(rng)];

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Affine2 a;
    for (int attempt = 0; attempt < 100; ++attempt) {
        bool flip = cfg.flip && unit(rng) < 0.5;
        double rot = (2.0 * unit(rng) - 1.0) * cfg.max_rotate;
        double shear = (2.0 * unit(rng) - 1.0) * cfg.max_shear;
        double scale = cfg.scale_min + unit(rng) * (cfg.scale_max - cfg.scale_min);
        Eigen::Matrix2d r, sh;
        r << std::cos(rot), -std::sin(rot), std::sin(rot), std::cos(rot);
        sh << 1.0, shear, 0.0, 1.0;
        a.lin = r * sh * (scale * Eigen::Matrix2d::Identity());
        if (flip) a.lin.col(0) *= -1.0;
        if (std::abs(a.lin.determinant()) > 1e-6) break;
    }
    a.shift = Vec2((2.0 * unit(rng) - 1.0) * cfg.max_shift,
                   (2.0 * unit(rng) - 1.0) * cfg.max_shift);

    std::normal_distribution<double> normal(0.0, 1.0);
    double int_scale = cfg.intensity_scale_min +
                       unit(rng) * (cfg.intensity_scale_max - cfg.intensity_scale_min);
    double int_shift = cfg.intensity_shift_sigma > 0.0
                           ? normal(rng) * cfg.intensity_shift_sigma
                           : 0.0;

    if (k > 1) subsample_time(s, k);
    Vec2 center = Vec2::Zero();
    if (!s.win.dets.empty()) {
        for (const auto& d : s.win.dets) center += d.p;
        center /= static_cast<double>(s.win.dets.size());
    }
    apply_affine(s, a, center);
    apply_intensity(s, int_scale, int_shift);
    return s;
}

}  // namespace trax
