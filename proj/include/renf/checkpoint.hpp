#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "renf/model.hpp"
#include "renf/training.hpp"

namespace renf {

// Checkpoint file layout (version 1, little-endian):
//   magic "RENFCKPT", u32 version
//   u32 json length, model-config JSON bytes
//   i64 step counter
//   u32 parameter count, then per parameter:
//     u32 name length, name bytes
//     u64 rows, u64 cols
//     rows*cols f64 value (the best shadow weights), adam_m, adam_v
constexpr char kCkptMagic[9] = "RENFCKPT";
constexpr std::uint32_t kCkptVersion = 1;

inline nlohmann::json model_config_json(const ModelConfig& c) {
    return nlohmann::json{{"variant", variant_name(c.variant)},
                          {"stages", c.stages},
                          {"lookback", c.lookback},
                          {"horizon", c.horizon},
                          {"d_model", c.d_model},
                          {"n_variates", c.n_variates},
                          {"dropout", c.dropout},
                          {"alpha_mix", c.alpha_mix},
                          {"gamma_stage", c.gamma_stage},
                          {"activation", c.activation == Activation::Gelu ? "gelu" : "relu"},
                          {"revin_affine", c.revin_affine},
                          {"detach_concat", c.detach_concat},
                          {"feed_forecast", c.feed_forecast},
                          {"supervise_prefixes", c.supervise_prefixes},
                          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.variant = j.at("variant").get<std::string>() == "beta" ? Variant::Beta : Variant::Alpha;
    c.stages = j.at("stages").get<std::size_t>();
    c.lookback = j.at("lookback").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_variates = j.at("n_variates").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.alpha_mix = j.at("alpha_mix").get<double>();
    c.gamma_stage = j.at("gamma_stage").get<double>();
    c.activation =
        j.at("activation").get<std::string>() == "relu" ? Activation::Relu : Activation::Gelu;
    c.revin_affine = j.at("revin_affine").get<bool>();
    c.detach_concat = j.at("detach_concat").get<bool>();
    c.feed_forecast = j.at("feed_forecast").get<bool>();
    c.supervise_prefixes = j.at("supervise_prefixes").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(in.good(), "checkpoint: truncated file");
    return v;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::istream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    require(in.good(), "checkpoint: truncated file");
}

}  // namespace detail

/// Writes the best shadow weights plus optimizer moments at the best epoch.
inline void save_checkpoint(const std::string& path, ReNFModel& model, const TrainState& state) {
    auto params = model.parameters();
    require(state.best_shadow.size() == params.size(),
            "save_checkpoint: no best snapshot in state");
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_checkpoint: cannot write " + path);

    out.write(kCkptMagic, 8);
    detail::write_pod(out, kCkptVersion);
    const std::string cfg = model_config_json(model.config).dump();
    detail::write_pod(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    detail::write_pod(out, state.best_step);
    detail::write_pod(out, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Param* p = params[i];
        detail::write_pod(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        detail::write_pod(out, static_cast<std::uint64_t>(p->value.rows));
        detail::write_pod(out, static_cast<std::uint64_t>(p->value.cols));
        detail::write_doubles(out, state.best_shadow[i].data);
        detail::write_doubles(out, state.best_adam_m[i].data);
        detail::write_doubles(out, state.best_adam_v[i].data);
    }
    require(out.good(), "save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    ReNFModel model;  // values = stored shadow weights
    std::int64_t step = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
            "load_checkpoint: bad magic in " + path);
    const auto version = detail::read_pod<std::uint32_t>(in);
    require(version == kCkptVersion,
            "load_checkpoint: unsupported version " + std::to_string(version));
    const auto cfg_len = detail::read_pod<std::uint32_t>(in);
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    require(in.good(), "load_checkpoint: truncated config");

    LoadedCheckpoint loaded;
    loaded.model = build_model(model_config_from_json(nlohmann::json::parse(cfg)));
    loaded.step = detail::read_pod<std::int64_t>(in);
    const auto n_params = detail::read_pod<std::uint32_t>(in);
    auto params = loaded.model.parameters();
    require(n_params == params.size(), "load_checkpoint: parameter count mismatch");
    for (Param* p : params) {
        const auto name_len = detail::read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        require(in.good() && name == p->name, "load_checkpoint: parameter order mismatch at '" +
                                                  name + "', expected '" + p->name + "'");
        const auto rows = detail::read_pod<std::uint64_t>(in);
        const auto cols = detail::read_pod<std::uint64_t>(in);
        require(rows == p->value.rows && cols == p->value.cols,
                "load_checkpoint: shape mismatch for '" + name + "'");
        detail::read_doubles(in, p->value.data);
        detail::read_doubles(in, p->adam_m.data);
        detail::read_doubles(in, p->adam_v.data);
    }
    return loaded;
}

}  // namespace renf
