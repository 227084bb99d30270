#pragma once

#include "anchorsplat/errors.hpp"
#include "anchorsplat/io/formats.hpp"
#include "anchorsplat/trainer.hpp"

#include <functional>
#include <map>
#include <string>

namespace anchorsplat::io {

namespace detail {

inline bool parse_bool(const std::string &key, const std::string &v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
        return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

inline double parse_num(const std::string &key, const std::string &v) {
    double out;
    if (!parse_double(v, out) || !std::isfinite(out))
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return out;
}

template <typename Int>
Int parse_integer(const std::string &key, const std::string &v) {
    Int out;
    if (!parse_int(v, out))
        throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    return out;
}

using Setter = std::function<void(TrainConfig &, const std::string &, const std::string &)>;

inline const std::map<std::string, Setter> &train_keys() {
    static const std::map<std::string, Setter> keys = [] {
        std::map<std::string, Setter> k;
        auto num = [&](const char *name, auto member) {
            k[name] = [member](TrainConfig &c, const std::string &key, const std::string &v) {
                member(c) = parse_num(key, v);
            };
        };
        auto integer = [&](const char *name, auto member) {
            k[name] = [member](TrainConfig &c, const std::string &key, const std::string &v) {
                using T = std::remove_reference_t<decltype(member(c))>;
                member(c) = parse_integer<T>(key, v);
            };
        };
        auto flag = [&](const char *name, auto member) {
            k[name] = [member](TrainConfig &c, const std::string &key, const std::string &v) {
                member(c) = parse_bool(key, v);
            };
        };
        integer("iterations", [](TrainConfig &c) -> long & { return c.iterations; });
        num("lr_mlp", [](TrainConfig &c) -> double & { return c.lr_mlp; });
        num("lr_features", [](TrainConfig &c) -> double & { return c.lr_features; });
        num("lr_view_scales", [](TrainConfig &c) -> double & { return c.lr_view_scales; });
        num("lr_floor", [](TrainConfig &c) -> double & { return c.lr_floor; });
        integer("calibration_warmup", [](TrainConfig &c) -> long & { return c.calibration_warmup; });
        num("lambda_p", [](TrainConfig &c) -> double & { return c.weights.lambda_p; });
        num("lambda_s", [](TrainConfig &c) -> double & { return c.weights.lambda_s; });
        num("lambda_d", [](TrainConfig &c) -> double & { return c.weights.lambda_d; });
        num("lambda_u", [](TrainConfig &c) -> double & { return c.weights.lambda_u; });
        num("ssim_weight", [](TrainConfig &c) -> double & { return c.weights.w; });
        num("aniso_ratio", [](TrainConfig &c) -> double & { return c.weights.r; });
        num("depth_min_alpha", [](TrainConfig &c) -> double & { return c.depth_min_alpha; });
        integer("seed", [](TrainConfig &c) -> std::uint64_t & { return c.seed; });
        integer("eval_interval", [](TrainConfig &c) -> long & { return c.eval_interval; });
        integer("checkpoint_interval", [](TrainConfig &c) -> long & { return c.checkpoint_interval; });
        integer("scale_log_interval", [](TrainConfig &c) -> long & { return c.scale_log_interval; });
        integer("k", [](TrainConfig &c) -> int & { return c.k; });
        num("voxel_resolution", [](TrainConfig &c) -> double & { return c.voxel_resolution; });
        integer("stride", [](TrainConfig &c) -> int & { return c.stride; });
        num("offset_bound", [](TrainConfig &c) -> double & { return c.offset_bound; });
        num("init_opacity", [](TrainConfig &c) -> double & { return c.init_opacity; });
        num("feature_init_std", [](TrainConfig &c) -> double & { return c.feature_init_std; });
        integer("hidden", [](TrainConfig &c) -> int & { return c.hidden; });
        flag("direct_color", [](TrainConfig &c) -> bool & { return c.direct_color; });
        flag("calibrate_depth", [](TrainConfig &c) -> bool & { return c.calibrate_depth; });
        integer("tile_size", [](TrainConfig &c) -> int & { return c.raster.tile_size; });
        integer("workers", [](TrainConfig &c) -> int & { return c.raster.workers; });
        flag("deterministic", [](TrainConfig &c) -> bool & { return c.raster.deterministic; });
        num("dilation", [](TrainConfig &c) -> double & { return c.raster.dilation; });
        return k;
    }();
    return keys;
}

} // namespace detail

// Applies key=value settings; unknown keys are an error so typos surface.
inline void apply_config(TrainConfig &cfg, const Config &kv) {
    const auto &keys = detail::train_keys();
    for (const auto &[key, value] : kv) {
        auto it = keys.find(key);
        if (it == keys.end())
            throw ConfigError("unknown training config key '" + key + "'");
        it->second(cfg, key, value);
    }
}

inline std::vector<std::string> train_config_keys() {
    std::vector<std::string> out;
    for (const auto &[k, _] : detail::train_keys())
        out.push_back(k);
    return out;
}

} // namespace anchorsplat::io
