#pragma once

#include "trax/aggregate.hpp"
#include "trax/augment.hpp"
#include "trax/checkpoint.hpp"
#include "trax/link.hpp"
#include "trax/metrics.hpp"
#include "trax/simulate.hpp"
#include "trax/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace trax {

namespace detail {

inline std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);  // binary keeps LF endings everywhere
    if (!f) throw Error("cannot write '" + path + "'");
    return f;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read '" + path + "'");
    return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Detections CSV: header frame,id,x,y[,area,intensity,ixx,iyy,ixy].
// Feature columns are an optional contiguous prefix of the canonical order.
// ---------------------------------------------------------------------------

inline void write_detections_csv(const std::string& path,
                                 const std::vector<std::vector<Detection>>& by_frame) {
    int nz = 0;
    for (const auto& f : by_frame)
        for (const auto& d : f) nz = std::max(nz, static_cast<int>(d.z.size()));
    auto f = detail::open_out(path);
    f << "frame,id,x,y";
    for (int k = 0; k < nz; ++k) f << ',' << kFeatureNames[k];
    f << '\n';
    for (const auto& frame : by_frame) {
        for (const auto& d : frame) {
            f << d.t << ',' << d.id << ',' << detail::fmt_num(d.p.x()) << ','
              << detail::fmt_num(d.p.y());
            for (int k = 0; k < nz; ++k)
                f << ',' << detail::fmt_num(k < d.z.size() ? d.z(k) : 0.0);
            f << '\n';
        }
    }
}

inline std::vector<std::vector<Detection>> read_detections_csv(const std::string& path) {
    auto f = detail::open_in(path);
    std::string line;
    if (!std::getline(f, line)) return {};
    auto header = detail::split_csv_line(line);
    if (header.size() < 4 || header[0] != "frame" || header[1] != "id" || header[2] != "x" ||
        header[3] != "y")
        throw ConfigError("'" + path + "': detections header must start frame,id,x,y");
    int nz = static_cast<int>(header.size()) - 4;
    for (int k = 0; k < nz; ++k)
        if (header[4 + k] != kFeatureNames[k])
            throw ConfigError("'" + path + "': feature columns must follow the order " +
                              "area,intensity,ixx,iyy,ixy");
    std::vector<std::vector<Detection>> by_frame;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (static_cast<int>(cells.size()) != 4 + nz)
            throw ConfigError("'" + path + "': bad column count");
        Detection d;
        d.t = std::stoi(cells[0]);
        d.id = std::stoll(cells[1]);
        d.p = Vec2(std::stod(cells[2]), std::stod(cells[3]));
        d.z.resize(nz);
        for (int k = 0; k < nz; ++k) d.z(k) = std::stod(cells[4 + k]);
        if (auto issue = detection_issue(d))
            throw ConfigError("'" + path + "': detection " + std::to_string(d.id) + ": " +
                              *issue);
        if (d.t >= static_cast<int>(by_frame.size())) by_frame.resize(d.t + 1);
        by_frame[d.t].push_back(d);
    }
    for (auto& frame : by_frame)
        std::sort(frame.begin(), frame.end(),
                  [](const Detection& a, const Detection& b) { return a.id < b.id; });
    return by_frame;
}

// ---------------------------------------------------------------------------
// Lineage CSV: id,parent_id with 0 = track start; one row per detection.
// ---------------------------------------------------------------------------

inline void write_lineage_csv(const std::string& path, const LineageGraph& g) {
    auto f = detail::open_out(path);
    f << "id,parent_id\n";
    for (std::int64_t id : g.nodes()) {
        auto parents = g.parents(id);
        f << id << ',' << (parents.empty() ? 0 : parents.front()) << '\n';
    }
}

inline LineageGraph read_lineage_csv(const std::string& path) {
    auto f = detail::open_in(path);
    std::string line;
    if (!std::getline(f, line) || detail::split_csv_line(line) !=
                                      std::vector<std::string>{"id", "parent_id"})
        throw ConfigError("'" + path + "': lineage header must be id,parent_id");
    LineageGraph g;
    std::vector<std::pair<std::int64_t, std::int64_t>> edges;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 2) throw ConfigError("'" + path + "': bad lineage row");
        std::int64_t id = std::stoll(cells[0]), parent = std::stoll(cells[1]);
        g.add_node(id);
        if (parent != 0) edges.emplace_back(parent, id);
    }
    for (auto [p, c] : edges) {
        if (!g.has_node(p))
            throw ConfigError("'" + path + "': parent " + std::to_string(p) + " missing");
        g.add_edge(p, c);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Solution edges CSV and CTC-style tracks CSV.
// ---------------------------------------------------------------------------

inline void write_edges_csv(const std::string& path, const LineageGraph& g) {
    auto f = detail::open_out(path);
    f << "parent_id,child_id,score\n";
    for (const auto& e : g.edges())
        f << e.parent << ',' << e.child << ',' << detail::fmt_num(e.score) << '\n';
}

inline std::vector<LineageEdge> read_edges_csv(const std::string& path) {
    auto f = detail::open_in(path);
    std::string line;
    if (!std::getline(f, line) ||
        detail::split_csv_line(line) !=
            std::vector<std::string>{"parent_id", "child_id", "score"})
        throw ConfigError("'" + path + "': edges header must be parent_id,child_id,score");
    std::vector<LineageEdge> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 3) throw ConfigError("'" + path + "': bad edge row");
        out.push_back({std::stoll(cells[0]), std::stoll(cells[1]), std::stod(cells[2])});
    }
    return out;
}

struct TrackRow {
    std::int64_t track_id = 0;
    int start_frame = 0, end_frame = 0;
    std::int64_t parent_track = 0;  // 0 = none
};

// CTC convention: a track is a maximal linear chain; division daughters start
// new tracks carrying the mother's track id as parent.
inline std::vector<TrackRow> make_tracks(const LineageGraph& g,
                                         const std::unordered_map<std::int64_t, int>& frames) {
    std::vector<std::int64_t> starts;
    for (std::int64_t v : g.nodes()) {
        auto parents = g.parents(v);
        if (parents.empty() || g.out_degree(parents.front()) == 2) starts.push_back(v);
    }
    std::sort(starts.begin(), starts.end(), [&](std::int64_t a, std::int64_t b) {
        return std::tie(frames.at(a), a) < std::tie(frames.at(b), b);
    });
    std::unordered_map<std::int64_t, std::int64_t> track_of;  // node -> track id
    std::vector<TrackRow> rows;
    std::vector<std::int64_t> start_parent(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        std::int64_t cur = starts[i];
        TrackRow row;
        row.track_id = static_cast<std::int64_t>(i + 1);
        row.start_frame = frames.at(cur);
        auto parents = g.parents(cur);
        start_parent[i] = parents.empty() ? 0 : parents.front();
        while (true) {
            track_of[cur] = row.track_id;
            row.end_frame = frames.at(cur);
            auto kids = g.children(cur);
            if (kids.size() != 1) break;
            cur = kids.front();
        }
        rows.push_back(row);
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i].parent_track = start_parent[i] == 0 ? 0 : track_of.at(start_parent[i]);
    return rows;
}

inline void write_tracks_csv(const std::string& path, const std::vector<TrackRow>& rows) {
    auto f = detail::open_out(path);
    f << "track_id,start_frame,end_frame,parent_track_id\n";
    for (const auto& r : rows)
        f << r.track_id << ',' << r.start_frame << ',' << r.end_frame << ',' << r.parent_track
          << '\n';
}

// ---------------------------------------------------------------------------
// Score dump, metric report, error tree.
// ---------------------------------------------------------------------------

inline void write_scores_csv(const std::string& path, const ScoreTable& table,
                             const std::unordered_map<std::int64_t, int>& frames) {
    auto f = detail::open_out(path);
    f << "parent_id,child_id,frame_gap,mean_score,window_count\n";
    for (const auto& [key, e] : table.acc) {
        auto [p, c] = key;
        f << p << ',' << c << ',' << frames.at(c) - frames.at(p) << ','
          << detail::fmt_num(table.mean(p, c)) << ',' << e.count << '\n';
    }
}

inline nlohmann::json report_to_json(const AogmReport& r) {
    nlohmann::json j;
    j["counts"] = {{"NS", r.ns}, {"FN", r.fn}, {"FP", r.fp},
                   {"ED", r.ed}, {"EA", r.ea}, {"EC", r.ec}};
    j["weights"] = {{"NS", r.weights.ns}, {"FN", r.weights.fn}, {"FP", r.weights.fp},
                    {"ED", r.weights.ed}, {"EA", r.weights.ea}, {"EC", r.weights.ec}};
    j["aogm"] = r.aogm;
    j["aogm0"] = r.aogm0;
    j["tra"] = r.tra;
    j["aogm_plus"] = r.aogm_plus;
    j["fp_edges"] = r.fp_edges;
    j["fn_edges"] = r.fn_edges;
    j["fp_divs"] = r.fp_divs;
    j["fn_divs"] = r.fn_divs;
    j["tp_divs"] = r.tp_divs;
    j["division_f1"] = r.division_f1;
    j["empty_gt_warning"] = r.empty_gt;
    return j;
}

inline void write_error_tree_csv(const std::string& path, const std::vector<ErrorEdge>& edges) {
    auto f = detail::open_out(path);
    f << "label,parent_id,child_id,t_parent,t_child\n";
    for (const auto& e : edges)
        f << e.label << ',' << e.parent << ',' << e.child << ',' << e.t_parent << ','
          << e.t_child << '\n';
}

// ---------------------------------------------------------------------------
// Simulator config and dataset manifest.
// ---------------------------------------------------------------------------

inline nlohmann::json sim_config_to_json(const SimConfig& c) {
    return nlohmann::json{{"frames", c.frames},
                          {"initial_objects", c.initial_objects},
                          {"width", c.width},
                          {"height", c.height},
                          {"sigma", c.sigma},
                          {"drift", {c.drift.x(), c.drift.y()}},
                          {"velocity_sigma", c.velocity_sigma},
                          {"velocity_jitter", c.velocity_jitter},
                          {"division_prob", c.division_prob},
                          {"disappearance_prob", c.disappearance_prob},
                          {"appearance_rate", c.appearance_rate},
                          {"min_spacing", c.min_spacing},
                          {"division_refractory", c.division_refractory},
                          {"area_mean", c.area_mean},
                          {"area_sigma", c.area_sigma},
                          {"intensity_mean", c.intensity_mean},
                          {"intensity_sigma", c.intensity_sigma},
                          {"elongation_min", c.elongation_min},
                          {"elongation_max", c.elongation_max},
                          {"feature_noise", c.feature_noise},
                          {"seed", c.seed},
                          {"delta_max_hint", c.delta_max_hint},
                          {"dist_max_hint", c.dist_max_hint}};
}

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig c;
    c.frames = j.value("frames", c.frames);
    c.initial_objects = j.value("initial_objects", c.initial_objects);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.sigma = j.value("sigma", c.sigma);
    if (j.contains("drift"))
        c.drift = Vec2(j["drift"][0].get<double>(), j["drift"][1].get<double>());
    c.velocity_sigma = j.value("velocity_sigma", c.velocity_sigma);
    c.velocity_jitter = j.value("velocity_jitter", c.velocity_jitter);
    c.division_prob = j.value("division_prob", c.division_prob);
    c.disappearance_prob = j.value("disappearance_prob", c.disappearance_prob);
    c.appearance_rate = j.value("appearance_rate", c.appearance_rate);
    c.min_spacing = j.value("min_spacing", c.min_spacing);
    c.division_refractory = j.value("division_refractory", c.division_refractory);
    c.area_mean = j.value("area_mean", c.area_mean);
    c.area_sigma = j.value("area_sigma", c.area_sigma);
    c.intensity_mean = j.value("intensity_mean", c.intensity_mean);
    c.intensity_sigma = j.value("intensity_sigma", c.intensity_sigma);
    c.elongation_min = j.value("elongation_min", c.elongation_min);
    c.elongation_max = j.value("elongation_max", c.elongation_max);
    c.feature_noise = j.value("feature_noise", c.feature_noise);
    c.seed = j.value("seed", c.seed);
    c.delta_max_hint = j.value("delta_max_hint", c.delta_max_hint);
    c.dist_max_hint = j.value("dist_max_hint", c.dist_max_hint);
    return c;
}

// Writes one dataset split to dir and returns the manifest video entries.
inline nlohmann::json write_split(const std::string& dir, const std::string& split,
                                  const std::vector<SimResult>& videos,
                                  const std::vector<SimConfig>& cfgs) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < videos.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03zu", split.c_str(), i);
        std::string det = std::string(name) + "_detections.csv";
        std::string lin = std::string(name) + "_lineage.csv";
        write_detections_csv(dir + "/" + det, videos[i].by_frame);
        write_lineage_csv(dir + "/" + lin, videos[i].gt);
        out.push_back({{"name", name},
                       {"split", split},
                       {"config", sim_config_to_json(cfgs[i])},
                       {"detections", det},
                       {"lineage", lin}});
    }
    return out;
}

inline void write_dataset(const std::string& dir, const Dataset& ds, const SimConfig& base,
                          std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["base_config"] = sim_config_to_json(base);
    manifest["seed"] = seed;
    nlohmann::json videos = nlohmann::json::array();
    for (const auto& v : write_split(dir, "train", ds.train, ds.train_cfgs)) videos.push_back(v);
    for (const auto& v : write_split(dir, "val", ds.val, ds.val_cfgs)) videos.push_back(v);
    for (const auto& v : write_split(dir, "test", ds.test, ds.test_cfgs)) videos.push_back(v);
    manifest["videos"] = videos;
    auto f = detail::open_out(dir + "/manifest.json");
    f << manifest.dump(2) << '\n';
}

struct LoadedVideo {
    std::string name;
    std::string split;
    std::vector<std::vector<Detection>> by_frame;
    LineageGraph gt;
};

struct LoadedDataset {
    nlohmann::json manifest;
    std::vector<LoadedVideo> videos;

    std::vector<LoadedVideo*> split(const std::string& s) {
        std::vector<LoadedVideo*> out;
        for (auto& v : videos)
            if (v.split == s) out.push_back(&v);
        return out;
    }
};

inline LoadedDataset load_dataset(const std::string& dir) {
    auto mf = detail::open_in(dir + "/manifest.json");
    LoadedDataset ds;
    mf >> ds.manifest;
    for (const auto& v : ds.manifest.at("videos")) {
        LoadedVideo lv;
        lv.name = v.at("name").get<std::string>();
        lv.split = v.at("split").get<std::string>();
        lv.by_frame = read_detections_csv(dir + "/" + v.at("detections").get<std::string>());
        lv.gt = read_lineage_csv(dir + "/" + v.at("lineage").get<std::string>());
        ds.videos.push_back(std::move(lv));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// PGM label images and region properties.
// ---------------------------------------------------------------------------

struct PgmImage {
    int width = 0, height = 0, maxval = 0;
    std::vector<std::uint16_t> px;

    std::uint16_t at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
};

inline PgmImage read_pgm(const std::string& path) {
    auto f = detail::open_in(path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw ConfigError("'" + path + "': only binary PGM (P5) is supported");
    auto next_int = [&]() {
        int v;
        while (true) {
            f >> std::ws;
            if (f.peek() == '#') {
                std::string comment;
                std::getline(f, comment);
                continue;
            }
            if (!(f >> v)) throw ConfigError("'" + path + "': bad PGM header");
            return v;
        }
    };
    PgmImage img;
    img.width = next_int();
    img.height = next_int();
    img.maxval = next_int();
    f.get();  // single whitespace after maxval
    img.px.resize(static_cast<std::size_t>(img.width) * img.height);
    if (img.maxval < 256) {
        std::vector<unsigned char> raw(img.px.size());
        f.read(reinterpret_cast<char*>(raw.data()), raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) img.px[i] = raw[i];
    } else {
        std::vector<unsigned char> raw(img.px.size() * 2);
        f.read(reinterpret_cast<char*>(raw.data()), raw.size());
        for (std::size_t i = 0; i < img.px.size(); ++i)
            img.px[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    if (!f) throw ConfigError("'" + path + "': truncated PGM data");
    return img;
}

// Centroid, area, mean intensity (against an optional raw image) and central
// second moments per label of one frame. Detection ids = id_offset + label.
inline std::vector<Detection> regionprops(const PgmImage& labels, const PgmImage* raw,
                                          int frame, std::int64_t id_offset) {
    if (raw && (raw->width != labels.width || raw->height != labels.height))
        throw ConfigError("regionprops: raw/label image size mismatch");
    std::map<std::uint16_t, std::array<double, 7>> acc;  // n, sx, sy, sxx, syy, sxy, sint
    for (int y = 0; y < labels.height; ++y) {
        for (int x = 0; x < labels.width; ++x) {
            std::uint16_t l = labels.at(x, y);
            if (l == 0) continue;
            auto& a = acc[l];
            a[0] += 1.0;
            a[1] += x;
            a[2] += y;
            a[3] += static_cast<double>(x) * x;
            a[4] += static_cast<double>(y) * y;
            a[5] += static_cast<double>(x) * y;
            a[6] += raw ? raw->at(x, y) : 0.0;
        }
    }
    std::vector<Detection> out;
    for (const auto& [label, a] : acc) {
        double n = a[0], cx = a[1] / n, cy = a[2] / n;
        Detection d;
        d.id = id_offset + label;
        d.t = frame;
        d.p = Vec2(cx, cy);
        d.mask_ref = label;
        d.z.resize(5);
        d.z << n, raw ? a[6] / n : 0.0, a[3] / n - cx * cx, a[4] / n - cy * cy,
            a[5] / n - cx * cy;
        out.push_back(d);
    }
    return out;
}

inline FrameOverlap frame_overlap(const PgmImage& pred, const PgmImage& gt,
                                  std::int64_t pred_offset, std::int64_t gt_offset) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw ConfigError("frame_overlap: image size mismatch");
    FrameOverlap fo;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            std::uint16_t pl = pred.at(x, y), gl = gt.at(x, y);
            if (pl != 0) fo.pred_area[pred_offset + pl] += 1;
            if (gl != 0) fo.gt_area[gt_offset + gl] += 1;
            if (pl != 0 && gl != 0) fo.inter[{pred_offset + pl, gt_offset + gl}] += 1;
        }
    }
    return fo;
}

// ---------------------------------------------------------------------------
// Run configuration (strict JSON schema: unknown keys are rejected).
// ---------------------------------------------------------------------------

struct DataConfig {
    std::string dataset_dir;
    double dist_max = 0.0;   // required for tracking
    double delta_max = 0.0;  // matching threshold for target construction
};

struct LinkerConfig {
    std::string algorithm = "greedy";
    double theta = 0.5;
    double alpha = 0.05;
    IlpCosts ilp;
    LapConfig lap;
};

struct EvalRunConfig {
    double r_eval = 0.0;  // 0 = use delta_max
    int division_tol = 1;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    LinkerConfig linker;
    EvalRunConfig eval;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("unknown key '" + it.key() + "' in config section '" + where +
                              "'");
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig rc;
    detail::check_keys(j, {"data", "model", "train", "linker", "eval"}, "<root>");
    if (j.contains("data")) {
        const auto& d = j["data"];
        detail::check_keys(d, {"dataset_dir", "dist_max", "delta_max"}, "data");
        rc.data.dataset_dir = d.value("dataset_dir", std::string());
        rc.data.dist_max = d.value("dist_max", 0.0);
        rc.data.delta_max = d.value("delta_max", 0.0);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        detail::check_keys(m,
                           {"d", "layers", "heads", "n_freq", "mlp_ratio", "head_out", "d_max",
                            "window", "max_tokens", "fourier_init_scale", "rope", "features"},
                           "model");
        rc.model.d = m.value("d", rc.model.d);
        rc.model.layers = m.value("layers", rc.model.layers);
        rc.model.heads = m.value("heads", rc.model.heads);
        rc.model.n_freq = m.value("n_freq", rc.model.n_freq);
        rc.model.mlp_ratio = m.value("mlp_ratio", rc.model.mlp_ratio);
        rc.model.head_out = m.value("head_out", rc.model.head_out);
        rc.model.d_max = m.value("d_max", 0.0);
        rc.model.window = m.value("window", rc.model.window);
        rc.model.max_tokens = m.value("max_tokens", rc.model.max_tokens);
        rc.model.fourier_init_scale = m.value("fourier_init_scale", rc.model.fourier_init_scale);
        if (m.contains("rope")) {
            const auto& r = m["rope"];
            detail::check_keys(r, {"spatial_min", "spatial_max", "temporal_min", "temporal_max"},
                               "model.rope");
            rc.model.rope.spatial_min = r.value("spatial_min", rc.model.rope.spatial_min);
            rc.model.rope.spatial_max = r.value("spatial_max", rc.model.rope.spatial_max);
            rc.model.rope.temporal_min = r.value("temporal_min", rc.model.rope.temporal_min);
            rc.model.rope.temporal_max = r.value("temporal_max", rc.model.rope.temporal_max);
        }
        if (m.contains("features")) {
            rc.model.features.channels.clear();
            for (const auto& name : m["features"]) {
                bool found = false;
                for (int c = 0; c < kNumFeatures; ++c)
                    if (name.get<std::string>() == kFeatureNames[c]) {
                        rc.model.features.channels.push_back(c);
                        found = true;
                    }
                if (!found)
                    throw ConfigError("unknown feature '" + name.get<std::string>() + "'");
            }
        }
    } else {
        rc.model.features = FeatureConfig::all();
    }
    if (!j.contains("model") || !j["model"].contains("features"))
        rc.model.features = FeatureConfig::all();

    if (j.contains("train")) {
        const auto& t = j["train"];
        detail::check_keys(t,
                           {"batch", "steps", "lr", "warmup", "adam_beta1", "adam_beta2",
                            "adam_eps", "seed", "lambda", "parental", "weights", "aug",
                            "eval_every", "threads"},
                           "train");
        rc.train.batch = t.value("batch", rc.train.batch);
        rc.train.steps = t.value("steps", rc.train.steps);
        rc.train.lr = t.value("lr", rc.train.lr);
        rc.train.warmup = t.value("warmup", rc.train.warmup);
        rc.train.adam_beta1 = t.value("adam_beta1", rc.train.adam_beta1);
        rc.train.adam_beta2 = t.value("adam_beta2", rc.train.adam_beta2);
        rc.train.adam_eps = t.value("adam_eps", rc.train.adam_eps);
        rc.train.seed = t.value("seed", rc.train.seed);
        rc.train.lambda = t.value("lambda", rc.train.lambda);
        rc.train.parental = t.value("parental", rc.train.parental);
        if (t.contains("weights")) {
            const auto& w = t["weights"];
            detail::check_keys(w, {"dt", "lam_div", "lam_cont"}, "train.weights");
            rc.train.weights.dt = w.value("dt", rc.train.weights.dt);
            rc.train.weights.lam_div = w.value("lam_div", rc.train.weights.lam_div);
            rc.train.weights.lam_cont = w.value("lam_cont", rc.train.weights.lam_cont);
        }
        if (t.contains("aug")) {
            const auto& a = t["aug"];
            detail::check_keys(a,
                               {"enabled", "flip", "max_shift", "max_rotate", "max_shear",
                                "scale_min", "scale_max", "intensity_shift_sigma",
                                "intensity_scale_min", "intensity_scale_max", "subsample"},
                               "train.aug");
            rc.train.aug.enabled = a.value("enabled", rc.train.aug.enabled);
            rc.train.aug.flip = a.value("flip", rc.train.aug.flip);
            rc.train.aug.max_shift = a.value("max_shift", rc.train.aug.max_shift);
            rc.train.aug.max_rotate = a.value("max_rotate", rc.train.aug.max_rotate);
            rc.train.aug.max_shear = a.value("max_shear", rc.train.aug.max_shear);
            rc.train.aug.scale_min = a.value("scale_min", rc.train.aug.scale_min);
            rc.train.aug.scale_max = a.value("scale_max", rc.train.aug.scale_max);
            rc.train.aug.intensity_shift_sigma =
                a.value("intensity_shift_sigma", rc.train.aug.intensity_shift_sigma);
            rc.train.aug.intensity_scale_min =
                a.value("intensity_scale_min", rc.train.aug.intensity_scale_min);
            rc.train.aug.intensity_scale_max =
                a.value("intensity_scale_max", rc.train.aug.intensity_scale_max);
            if (a.contains("subsample"))
                rc.train.aug.subsample = a["subsample"].get<std::vector<int>>();
        }
        rc.train.eval_every = t.value("eval_every", rc.train.eval_every);
        rc.train.threads = t.value("threads", rc.train.threads);
    }
    if (j.contains("linker")) {
        const auto& l = j["linker"];
        detail::check_keys(l, {"algorithm", "theta", "alpha", "ilp", "lap"}, "linker");
        rc.linker.algorithm = l.value("algorithm", rc.linker.algorithm);
        rc.linker.theta = l.value("theta", rc.linker.theta);
        rc.linker.alpha = l.value("alpha", rc.linker.alpha);
        if (l.contains("ilp")) {
            const auto& c = l["ilp"];
            detail::check_keys(c, {"c_app", "c_dis", "c_div", "eps", "max_component_edges"},
                               "linker.ilp");
            rc.linker.ilp.c_app = c.value("c_app", rc.linker.ilp.c_app);
            rc.linker.ilp.c_dis = c.value("c_dis", rc.linker.ilp.c_dis);
            rc.linker.ilp.c_div = c.value("c_div", rc.linker.ilp.c_div);
            rc.linker.ilp.eps = c.value("eps", rc.linker.ilp.eps);
            rc.linker.ilp.max_component_edges =
                c.value("max_component_edges", rc.linker.ilp.max_component_edges);
        }
        if (l.contains("lap")) {
            const auto& c = l["lap"];
            detail::check_keys(c, {"max_dist", "nolink_percentile", "nolink_factor"},
                               "linker.lap");
            rc.linker.lap.max_dist = c.value("max_dist", rc.linker.lap.max_dist);
            rc.linker.lap.nolink_percentile =
                c.value("nolink_percentile", rc.linker.lap.nolink_percentile);
            rc.linker.lap.nolink_factor = c.value("nolink_factor", rc.linker.lap.nolink_factor);
        }
        if (rc.linker.algorithm != "greedy" && rc.linker.algorithm != "lap" &&
            rc.linker.algorithm != "ilp")
            throw ConfigError("linker.algorithm must be greedy, lap or ilp");
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        detail::check_keys(e, {"r_eval", "division_tol"}, "eval");
        rc.eval.r_eval = e.value("r_eval", rc.eval.r_eval);
        rc.eval.division_tol = e.value("division_tol", rc.eval.division_tol);
    }

    // Resolve dependent defaults.
    if (rc.model.d_max <= 0.0 && rc.data.dist_max > 0.0) rc.model.d_max = 2.0 * rc.data.dist_max;
    if (rc.eval.r_eval <= 0.0) rc.eval.r_eval = rc.data.delta_max;
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    auto f = detail::open_in(path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace trax
