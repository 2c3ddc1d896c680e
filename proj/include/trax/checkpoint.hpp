#pragma once

#include "trax/model.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace trax {

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["d"] = cfg.d;
    j["layers"] = cfg.layers;
    j["heads"] = cfg.heads;
    j["n_freq"] = cfg.n_freq;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["head_out"] = cfg.head_out;
    j["d_max"] = cfg.d_max;
    j["window"] = cfg.window;
    j["max_tokens"] = cfg.max_tokens;
    j["fourier_init_scale"] = cfg.fourier_init_scale;
    j["rope"] = {{"spatial_min", cfg.rope.spatial_min},
                 {"spatial_max", cfg.rope.spatial_max},
                 {"temporal_min", cfg.rope.temporal_min},
                 {"temporal_max", cfg.rope.temporal_max}};
    j["parental"] = cfg.parental;
    std::vector<std::string> feats;
    for (int c : cfg.features.channels) feats.push_back(kFeatureNames[c]);
    j["features"] = feats;
    j["stats"] = {{"mean", std::vector<double>(cfg.stats.mean.data(),
                                               cfg.stats.mean.data() + cfg.stats.mean.size())},
                  {"stdev", std::vector<double>(cfg.stats.stdev.data(),
                                                cfg.stats.stdev.data() + cfg.stats.stdev.size())}};
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.d = j.at("d").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.n_freq = j.at("n_freq").get<int>();
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
    cfg.head_out = j.value("head_out", cfg.head_out);
    cfg.d_max = j.at("d_max").get<double>();
    cfg.window = j.at("window").get<int>();
    cfg.max_tokens = j.at("max_tokens").get<int>();
    cfg.fourier_init_scale = j.value("fourier_init_scale", cfg.fourier_init_scale);
    if (j.contains("rope")) {
        const auto& r = j.at("rope");
        cfg.rope.spatial_min = r.value("spatial_min", cfg.rope.spatial_min);
        cfg.rope.spatial_max = r.value("spatial_max", cfg.rope.spatial_max);
        cfg.rope.temporal_min = r.value("temporal_min", cfg.rope.temporal_min);
        cfg.rope.temporal_max = r.value("temporal_max", cfg.rope.temporal_max);
    }
    cfg.parental = j.value("parental", true);
    cfg.features.channels.clear();
    for (const auto& name : j.at("features")) {
        bool found = false;
        for (int c = 0; c < kNumFeatures; ++c)
            if (name.get<std::string>() == kFeatureNames[c]) {
                cfg.features.channels.push_back(c);
                found = true;
            }
        if (!found)
            throw ConfigError("unknown feature channel '" + name.get<std::string>() + "'");
    }
    if (j.contains("stats")) {
        auto mean = j.at("stats").at("mean").get<std::vector<double>>();
        auto stdev = j.at("stats").at("stdev").get<std::vector<double>>();
        cfg.stats.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), mean.size());
        cfg.stats.stdev = Eigen::Map<Eigen::VectorXd>(stdev.data(), stdev.size());
    }
    return cfg;
}

inline constexpr char kCheckpointMagic[5] = {'T', 'R', 'A', 'X', '1'};

// Checkpoint layout: magic "TRAX1", little-endian u32 header length, UTF-8
// JSON header (hyperparameters, feature config, standardization stats, tensor
// manifest), then raw float32 tensor data in manifest order (row-major).
inline void save_checkpoint(const std::string& path, const ModelParams<float>& params) {
    nlohmann::json header;
    header["version"] = 1;
    header["model"] = model_config_to_json(params.cfg);
    nlohmann::json manifest = nlohmann::json::array();
    std::size_t offset = 0;
    params.for_each_param([&](const std::string& name, const Mat<float>& m) {
        manifest.push_back({{"name", name},
                            {"rows", m.rows()},
                            {"cols", m.cols()},
                            {"offset", offset}});
        offset += static_cast<std::size_t>(m.size()) * sizeof(float);
    });
    header["tensors"] = manifest;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write checkpoint '" + path + "'");
    f.write(kCheckpointMagic, 5);
    std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), hs.size());
    params.for_each_param([&](const std::string&, const Mat<float>& m) {
        for (long r = 0; r < m.rows(); ++r)
            for (long c = 0; c < m.cols(); ++c) {
                float v = m(r, c);
                f.write(reinterpret_cast<const char*>(&v), sizeof(float));
            }
    });
    if (!f) throw Error("failed writing checkpoint '" + path + "'");
}

inline ModelParams<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read checkpoint '" + path + "'");
    char magic[5];
    f.read(magic, 5);
    if (!f || std::memcmp(magic, kCheckpointMagic, 5) != 0)
        throw Error("'" + path + "' is not a TRAX1 checkpoint");
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f) throw Error("truncated checkpoint header");
    nlohmann::json header = nlohmann::json::parse(hs);
    ModelConfig cfg = model_config_from_json(header.at("model"));

    ModelParams<float> params = ModelParams<float>::init(cfg, 0);
    std::size_t i = 0;
    const auto& manifest = header.at("tensors");
    params.for_each_param([&](const std::string& name, Mat<float>& m) {
        if (i >= manifest.size()) throw Error("checkpoint manifest too short");
        const auto& entry = manifest[i++];
        if (entry.at("name").get<std::string>() != name ||
            entry.at("rows").get<long>() != m.rows() ||
            entry.at("cols").get<long>() != m.cols())
            throw Error("checkpoint tensor mismatch at '" + name + "'");
        for (long r = 0; r < m.rows(); ++r)
            for (long c = 0; c < m.cols(); ++c) {
                float v = 0.0f;
                f.read(reinterpret_cast<char*>(&v), sizeof(float));
                m(r, c) = v;
            }
    });
    if (i != manifest.size()) throw Error("checkpoint manifest too long");
    if (!f) throw Error("truncated checkpoint data");
    return params;
}

}  // namespace trax
