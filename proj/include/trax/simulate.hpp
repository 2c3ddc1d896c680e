#pragma once

#include "trax/core.hpp"

#include <iostream>
#include <random>

namespace trax {

struct SimConfig {
    int frames = 50;
    int initial_objects = 20;
    double width = 512.0, height = 512.0;
    // Motion: global drift + per-object persistent velocity + diffusion.
    double sigma = 2.0;
    Vec2 drift = Vec2::Zero();
    double velocity_sigma = 0.0;   // per-object velocity magnitude at birth
    double velocity_jitter = 0.0;  // per-step velocity random walk
    double division_prob = 0.01;
    double disappearance_prob = 0.0;
    double appearance_rate = 0.0;  // expected new objects per frame
    double min_spacing = 6.0;
    int division_refractory = 5;
    // Feature model.
    double area_mean = 100.0, area_sigma = 15.0;
    double intensity_mean = 100.0, intensity_sigma = 10.0;
    double elongation_min = 1.2, elongation_max = 2.5;
    double feature_noise = 0.02;
    std::uint64_t seed = 1;
    // Matching/linking scales recorded with datasets made from this config.
    double delta_max_hint = 10.0;
    double dist_max_hint = 15.0;

    void validate() const {
        if (frames < 2) throw ConfigError("sim: frames must be >= 2");
        if (initial_objects < 0) throw ConfigError("sim: initial_objects must be >= 0");
        if (width <= 0 || height <= 0) throw ConfigError("sim: arena must be positive");
        for (double p : {division_prob, disappearance_prob})
            if (p < 0.0 || p > 1.0) throw ConfigError("sim: probabilities must be in [0,1]");
        if (sigma < 0.0 || velocity_sigma < 0.0 || velocity_jitter < 0.0)
            throw ConfigError("sim: motion scales must be >= 0");
        if (appearance_rate < 0.0) throw ConfigError("sim: appearance_rate must be >= 0");
        if (elongation_min < 1.0 || elongation_max < elongation_min)
            throw ConfigError("sim: bad elongation range");
    }
};

struct SimStats {
    long division_opportunities = 0;
    int divisions = 0;
    int placement_failures = 0;
};

struct SimResult {
    std::vector<std::vector<Detection>> by_frame;
    LineageGraph gt;
    SimStats stats;
};

namespace detail {

struct SimObject {
    Vec2 pos = Vec2::Zero();
    Vec2 vel = Vec2::Zero();
    double area = 0.0, intensity = 0.0, elong = 1.0, orient = 0.0;
    int frames_since_division = 1000;
    std::int64_t last_det = -1;
};

inline Eigen::VectorXd object_features(const SimObject& o) {
    double a = std::sqrt(o.area * o.elong / M_PI);
    double b = std::sqrt(o.area / (M_PI * o.elong));
    Eigen::Matrix2d rot;
    rot << std::cos(o.orient), -std::sin(o.orient), std::sin(o.orient), std::cos(o.orient);
    Eigen::Matrix2d principal = Eigen::Vector2d(a * a / 4.0, b * b / 4.0).asDiagonal();
    Eigen::Matrix2d t = rot * principal * rot.transpose();
    Eigen::VectorXd z(5);
    z << o.area, o.intensity, t(0, 0), t(1, 1), t(0, 1);
    return z;
}

}  // namespace detail

// Deterministic drift+diffusion lineage video. Objects divide into two
// offspring (placed at +- a small offset, each inheriting about half the
// area), disappear, and appear; the emitted gt graph is valid by construction.
inline SimResult simulate(const SimConfig& cfg) {
    cfg.validate();
    SimResult res;
    res.by_frame.resize(cfg.frames);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<detail::SimObject> objects;
    std::int64_t next_id = 1;  // 0 is reserved for "no parent" in the CSV format

    auto far_enough = [&](const Vec2& p) {
        for (const auto& o : objects)
            if ((o.pos - p).norm() < cfg.min_spacing) return false;
        return true;
    };
    auto spawn = [&](std::optional<Vec2> at) {
        detail::SimObject o;
        bool placed = false;
        for (int attempt = 0; attempt < 100; ++attempt) {
            Vec2 p = at ? *at
                        : Vec2(unit(rng) * cfg.width, unit(rng) * cfg.height);
            if (at || far_enough(p)) {
                o.pos = p;
                placed = true;
                break;
            }
        }
        if (!placed) {
            res.stats.placement_failures += 1;
            return false;
        }
        o.vel = Vec2(gauss(rng), gauss(rng)) * cfg.velocity_sigma;
        o.area = std::max(1.0, cfg.area_mean + gauss(rng) * cfg.area_sigma);
        o.intensity = std::max(0.0, cfg.intensity_mean + gauss(rng) * cfg.intensity_sigma);
        o.elong = cfg.elongation_min + unit(rng) * (cfg.elongation_max - cfg.elongation_min);
        o.orient = unit(rng) * M_PI;
        objects.push_back(o);
        return true;
    };

    for (int i = 0; i < cfg.initial_objects; ++i)
        if (!spawn(std::nullopt))
            std::cerr << "simulate: placement skipped (overcrowded arena)\n";

    auto reflect = [](double x, double hi) {
        while (x < 0.0 || x > hi) {
            if (x < 0.0) x = -x;
            if (x > hi) x = 2.0 * hi - x;
        }
        return x;
    };

    for (int f = 0; f < cfg.frames; ++f) {
        // Emit detections and lineage nodes/edges for this frame.
        for (auto& o : objects) {
            Detection d;
            d.id = next_id++;
            d.t = f;
            d.p = o.pos;
            d.z = detail::object_features(o);
            res.gt.add_node(d.id);
            if (o.last_det >= 0) res.gt.add_edge(o.last_det, d.id);
            o.last_det = d.id;
            res.by_frame[f].push_back(d);
        }
        if (f + 1 == cfg.frames) break;

        // Transition to the next frame: divisions, disappearances, motion.
        std::vector<detail::SimObject> next;
        next.reserve(objects.size() + 4);
        for (auto& o : objects) {
            if (cfg.disappearance_prob > 0.0 && unit(rng) < cfg.disappearance_prob) continue;
            bool can_divide = o.frames_since_division >= cfg.division_refractory;
            if (can_divide) res.stats.division_opportunities += 1;
            if (can_divide && unit(rng) < cfg.division_prob) {
                res.stats.divisions += 1;
                double angle = unit(rng) * M_PI;
                Vec2 axis(std::cos(angle), std::sin(angle));
                double off = std::max(cfg.min_spacing * 0.5, std::sqrt(o.area) * 0.5);
                for (int b = 0; b < 2; ++b) {
                    detail::SimObject c = o;
                    c.pos = o.pos + (b == 0 ? off : -off) * axis + cfg.drift +
                            Vec2(gauss(rng), gauss(rng)) * cfg.sigma;
                    c.pos.x() = reflect(c.pos.x(), cfg.width);
                    c.pos.y() = reflect(c.pos.y(), cfg.height);
                    c.vel = o.vel + Vec2(gauss(rng), gauss(rng)) * cfg.velocity_jitter;
                    c.area = std::max(1.0, o.area * 0.5 * (1.0 + gauss(rng) * cfg.feature_noise));
                    c.intensity =
                        std::max(0.0, o.intensity * (1.0 + gauss(rng) * cfg.feature_noise));
                    c.orient = angle;
                    c.frames_since_division = 0;
                    c.last_det = o.last_det;  // both children link to the mother detection
                    next.push_back(c);
                }
                continue;
            }
            detail::SimObject m = o;
            m.vel += Vec2(gauss(rng), gauss(rng)) * cfg.velocity_jitter;
            m.pos += cfg.drift + m.vel + Vec2(gauss(rng), gauss(rng)) * cfg.sigma;
            m.pos.x() = reflect(m.pos.x(), cfg.width);
            m.pos.y() = reflect(m.pos.y(), cfg.height);
            m.area = std::max(1.0, m.area * (1.0 + gauss(rng) * cfg.feature_noise));
            m.intensity = std::max(0.0, m.intensity * (1.0 + gauss(rng) * cfg.feature_noise));
            m.orient += gauss(rng) * 0.05;
            m.frames_since_division += 1;
            next.push_back(m);
        }
        objects = std::move(next);

        if (cfg.appearance_rate > 0.0) {
            std::poisson_distribution<int> births(cfg.appearance_rate);
            int n = births(rng);
            for (int i = 0; i < n; ++i)
                if (!spawn(std::nullopt))
                    std::cerr << "simulate: placement skipped (overcrowded arena)\n";
        }
    }
    return res;
}

// Named desk-scale presets. "easy": sparse, slow, few divisions. "hard":
// dense, drifting, heterogeneous per-object motion and division-rich, a
// regime where nearest-neighbour linking makes systematic errors.
inline SimConfig sim_preset(const std::string& name) {
    SimConfig c;
    if (name == "easy") {
        c.frames = 30;
        c.initial_objects = 15;
        c.width = c.height = 256.0;
        c.sigma = 1.5;
        c.velocity_sigma = 0.0;
        c.division_prob = 0.01;
        c.division_refractory = 8;
        c.min_spacing = 14.0;
        c.delta_max_hint = 8.0;
        c.dist_max_hint = 12.0;
        return c;
    }
    if (name == "hard") {
        c.frames = 50;
        c.initial_objects = 90;
        c.width = c.height = 420.0;
        c.sigma = 1.5;
        c.drift = Vec2(7.0, 3.0);
        c.velocity_sigma = 4.5;
        c.velocity_jitter = 0.6;
        c.division_prob = 0.02;
        c.disappearance_prob = 0.018;
        c.division_refractory = 6;
        c.min_spacing = 9.0;
        c.area_mean = 80.0;
        c.delta_max_hint = 12.0;
        c.dist_max_hint = 26.0;
        return c;
    }
    throw ConfigError("unknown simulator preset '" + name + "' (presets: easy, hard)");
}

struct Dataset {
    std::vector<SimConfig> train_cfgs, val_cfgs, test_cfgs;
    std::vector<SimResult> train, val, test;
};

// Independent videos per split with disjoint seed streams.
inline Dataset make_dataset(const SimConfig& base, int n_videos, double r_train, double r_val,
                            double r_test, std::uint64_t seed) {
    if (n_videos < 1) throw ConfigError("make_dataset: need at least one video");
    if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
        throw ConfigError("make_dataset: split ratios must sum to 1");
    int n_test = static_cast<int>(std::lround(r_test * n_videos));
    int n_val = static_cast<int>(std::lround(r_val * n_videos));
    int n_train = n_videos - n_test - n_val;
    if (n_train < 0) throw ConfigError("make_dataset: ratios leave no training videos");

    Dataset ds;
    for (int i = 0; i < n_videos; ++i) {
        SimConfig c = base;
        c.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        if (i < n_train) {
            ds.train_cfgs.push_back(c);
            ds.train.push_back(simulate(c));
        } else if (i < n_train + n_val) {
            ds.val_cfgs.push_back(c);
            ds.val.push_back(simulate(c));
        } else {
            ds.test_cfgs.push_back(c);
            ds.test.push_back(simulate(c));
        }
    }
    return ds;
}

}  // namespace trax
