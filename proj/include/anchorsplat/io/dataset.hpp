#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/errors.hpp"
#include "anchorsplat/io/formats.hpp"

#include "json.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

// Dataset directory:
//   images/NNNNN.ppm|png   8-bit RGB
//   depth/NNNNN.pfm        float32 depth, NaN = invalid
//   poses.txt              idx tx ty tz qw qx qy qz, camera-to-world
//   intrinsics.txt         fx fy cx cy width height
//   manifest.json          optional: split, background, synthetic ground truth
namespace anchorsplat::io {

struct Manifest {
    std::optional<std::uint64_t> seed;
    std::vector<double> true_scales; // s*ᵢ, monocular depth = true depth / s*ᵢ
    double depth_noise = 0.0;
    std::string scene_hash;
    std::vector<int> train;
    std::vector<int> eval;
    Vec3 background = Vec3::Zero();
    bool has_split = false;
};

inline nlohmann::json manifest_to_json(const Manifest &m) {
    nlohmann::json j;
    if (m.seed)
        j["seed"] = *m.seed;
    j["true_depth_scales"] = m.true_scales;
    j["depth_convention"] = "depth_file = true_depth / s_star";
    j["depth_noise_sigma"] = m.depth_noise;
    j["scene_hash"] = m.scene_hash;
    j["background"] = {m.background.x(), m.background.y(), m.background.z()};
    if (m.has_split) {
        j["train"] = m.train;
        j["eval"] = m.eval;
    }
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json &j, const std::string &source) {
    Manifest m;
    try {
        if (j.contains("seed"))
            m.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("true_depth_scales"))
            m.true_scales = j.at("true_depth_scales").get<std::vector<double>>();
        if (j.contains("depth_noise_sigma"))
            m.depth_noise = j.at("depth_noise_sigma").get<double>();
        if (j.contains("scene_hash"))
            m.scene_hash = j.at("scene_hash").get<std::string>();
        if (j.contains("background")) {
            const auto bg = j.at("background").get<std::vector<double>>();
            if (bg.size() != 3)
                throw FormatError(source + ": background must have 3 components");
            m.background = Vec3(bg[0], bg[1], bg[2]);
        }
        if (j.contains("train") || j.contains("eval")) {
            m.has_split = true;
            if (j.contains("train"))
                m.train = j.at("train").get<std::vector<int>>();
            if (j.contains("eval"))
                m.eval = j.at("eval").get<std::vector<int>>();
        }
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(source + ": " + e.what());
    }
    return m;
}

inline void write_manifest(const fs::path &p, const Manifest &m) {
    auto f = open_out(p);
    f << manifest_to_json(m).dump(2) << '\n';
    check_written(f, p);
}

inline Manifest read_manifest(const fs::path &p) {
    auto f = open_in(p);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(p.string() + ": " + e.what());
    }
    return manifest_from_json(j, p.string());
}

inline std::string frame_name(int idx) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", idx);
    return buf;
}

struct Dataset {
    fs::path root;
    Intrinsics intrinsics;
    std::vector<TrainingView> views; // all loaded frames, id = file index
    std::optional<Manifest> manifest;
    std::vector<std::string> warnings;

    std::vector<int> train_positions; // indices into `views`
    std::vector<int> eval_positions;

    std::vector<TrainingView> subset(const std::vector<int> &positions) const {
        std::vector<TrainingView> out;
        for (int p : positions)
            out.push_back(views.at(p));
        return out;
    }
    std::vector<TrainingView> train_views() const { return subset(train_positions); }
    std::vector<TrainingView> eval_views() const { return subset(eval_positions); }
    Vec3 background() const { return manifest ? manifest->background : Vec3::Zero(); }
};

struct DatasetOptions {
    int stride_frames = 1; // keep every n-th frame
    bool load_depth = true;
};

inline fs::path find_image(const fs::path &root, int idx) {
    for (const char *ext : {".ppm", ".png"}) {
        auto p = root / "images" / (frame_name(idx) + ext);
        if (fs::exists(p))
            return p;
    }
    throw IoError("missing image for frame " + std::to_string(idx) + " under '" + (root / "images").string() + "'");
}

inline Dataset load_dataset(const fs::path &root, const DatasetOptions &opt = {}) {
    if (opt.stride_frames < 1)
        throw ConfigError("stride-frames must be >= 1");
    if (!fs::is_directory(root) || !fs::exists(root / "poses.txt"))
        throw InputError("no views found in '" + root.string() + "'");
    Dataset ds;
    ds.root = root;
    auto poses = read_poses(root / "poses.txt");
    if (poses.world_to_cam.empty())
        throw InputError("no views found in '" + root.string() + "'");
    ds.warnings = poses.warnings;
    ds.intrinsics = read_intrinsics(root / "intrinsics.txt");
    if (fs::exists(root / "manifest.json"))
        ds.manifest = read_manifest(root / "manifest.json");

    std::vector<int> file_to_pos(poses.world_to_cam.size(), -1);
    for (int i = 0; i < static_cast<int>(poses.world_to_cam.size()); i += opt.stride_frames) {
        TrainingView v;
        v.id = i;
        v.camera = Camera(ds.intrinsics, poses.world_to_cam[i]);
        const auto ip = find_image(root, i);
        v.image = read_image(ip);
        if (v.image.width() != ds.intrinsics.width || v.image.height() != ds.intrinsics.height)
            throw InputError(ip.string() + ": image size does not match intrinsics.txt");
        if (opt.load_depth) {
            const auto dp = root / "depth" / (frame_name(i) + ".pfm");
            v.depth = read_pfm(dp);
            if (!v.depth.same_shape(DepthMap(v.image.width(), v.image.height(), 1)))
                throw InputError(dp.string() + ": depth size does not match image");
        }
        file_to_pos[i] = static_cast<int>(ds.views.size());
        ds.views.push_back(std::move(v));
    }

    auto map_ids = [&](const std::vector<int> &ids, const char *what) {
        std::vector<int> out;
        for (int id : ids) {
            if (id < 0 || id >= static_cast<int>(file_to_pos.size()))
                throw FormatError("manifest " + std::string(what) + " index " + std::to_string(id) + " out of range");
            if (file_to_pos[id] >= 0)
                out.push_back(file_to_pos[id]);
        }
        return out;
    };
    if (ds.manifest && ds.manifest->has_split) {
        ds.train_positions = map_ids(ds.manifest->train, "train");
        ds.eval_positions = map_ids(ds.manifest->eval, "eval");
    } else {
        for (int p = 0; p < static_cast<int>(ds.views.size()); ++p)
            ds.train_positions.push_back(p);
    }
    if (ds.train_positions.empty())
        throw InputError("no views found in '" + root.string() + "' (training split is empty)");
    return ds;
}

// Writes one frame's image and depth into a dataset directory.
inline void write_frame(const fs::path &root, int idx, const ImageF &image, const DepthMap &depth) {
    write_ppm(root / "images" / (frame_name(idx) + ".ppm"), image);
    write_pfm(root / "depth" / (frame_name(idx) + ".pfm"), depth);
}

} // namespace anchorsplat::io
