#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/gaussian_decoder.hpp"
#include "anchorsplat/rasterizer.hpp"
#include "anchorsplat/scene_model.hpp"

#include <vector>

namespace anchorsplat {

// Everything a checkpoint holds: anchors with features and per-view scales,
// the decoder bank, and the source cameras the anchors hang off.
struct SceneModel {
    AnchorSet anchors;
    DecoderBank decoder;
    std::vector<Camera> source_cameras; // indexed by PerViewGroup::view_id
    Vec3 background = Vec3::Zero();
};

struct ModelForward {
    std::vector<Vec3> world_mu;
    std::vector<Vec3> ray_dirs; // R·p꜀ per anchor, the derivative of pᵂ w.r.t. ŝ
    DecodeCache decode;
    std::vector<GaussianSplat> splats; // anchor-major, k per anchor
};

struct ModelGrads {
    DecoderGrads decoder;
    MatrixX features;
    std::vector<double> log_s;
    std::vector<double> log_lambda;
};

inline ModelGrads zero_model_grads(const SceneModel &m) {
    ModelGrads g;
    g.decoder = m.decoder.zero_grads();
    g.features = MatrixX::Zero(m.anchors.feature_dim, static_cast<Eigen::Index>(m.anchors.size()));
    g.log_s.assign(m.anchors.groups.size(), 0.0);
    g.log_lambda.assign(m.anchors.groups.size(), 0.0);
    return g;
}

inline ModelForward model_forward(const SceneModel &m) {
    const auto &set = m.anchors;
    if (set.groups.size() != m.source_cameras.size())
        throw UsageError("model has " + std::to_string(set.groups.size()) + " view groups but " +
                         std::to_string(m.source_cameras.size()) + " source cameras");
    ModelForward f;
    f.world_mu.resize(set.size());
    f.ray_dirs.resize(set.size());
    for (const auto &g : set.groups) {
        const Camera &cam = m.source_cameras[g.view_id];
        const Mat3 r = cam.rotation().transpose();
        const Vec3 t = cam.center();
        const double s = g.depth_scale_s();
        for (int id : g.anchor_ids) {
            const Vec3 &pc = set.anchors[id].position_cam;
            f.ray_dirs[id] = r * pc;
            f.world_mu[id] = anchor_world_position(pc, s, r, t);
        }
    }
    f.decode = m.decoder.decode(feature_matrix(set));
    const int k = m.decoder.k();
    const bool direct = m.decoder.options().direct_color;
    f.splats.resize(set.size() * k);
    for (std::size_t j = 0; j < set.size(); ++j)
        for (int c = 0; c < k; ++c)
            f.splats[j * k + c] =
                spawn_splat(set.anchors[j], f.world_mu[j], m.decoder.residual(f.decode, static_cast<int>(j), c), direct);
    return f;
}

// Chains per-splat gradients through spawn, the decoders and the anchor
// placement; accumulates into `g`.
inline void model_backward(const SceneModel &m, const ModelForward &f, std::span<const SplatGrad> splat_grads,
                           ModelGrads &g) {
    const auto &set = m.anchors;
    const int k = m.decoder.k();
    if (splat_grads.size() != set.size() * k)
        throw UsageError("model_backward: expected one gradient per spawned splat");
    auto grad_raw = zero_raw_grads(f.decode);
    std::vector<Vec3> g_world(set.size(), Vec3::Zero());
    for (std::size_t j = 0; j < set.size(); ++j)
        for (int c = 0; c < k; ++c)
            g_world[j] += spawn_backward(m.decoder, f.decode, set.anchors[j], static_cast<int>(j), c,
                                         splat_grads[j * k + c], grad_raw);
    m.decoder.backward(feature_matrix(set), f.decode, grad_raw, g.decoder, &g.features);
    for (const auto &grp : set.groups) {
        double acc = 0.0;
        for (int id : grp.anchor_ids)
            acc += g_world[id].dot(f.ray_dirs[id]);
        g.log_s[grp.view_id] += acc * grp.depth_scale_s();
    }
}

inline Rendering render_model(const SceneModel &m, const Camera &cam, const RasterSettings &rs = {}) {
    const auto f = model_forward(m);
    return render(f.splats, cam, m.background, rs);
}

// Splats built directly from the anchors' nominal attributes at their
// current world positions, each repeated k times in spawn order.
inline std::vector<GaussianSplat> nominal_splats(const SceneModel &m) {
    std::vector<GaussianSplat> out;
    const auto &set = m.anchors;
    std::vector<double> scale_of(set.size(), 1.0);
    std::vector<const Camera *> cam_of(set.size(), nullptr);
    for (const auto &g : set.groups)
        for (int id : g.anchor_ids) {
            scale_of[id] = g.depth_scale_s();
            cam_of[id] = &m.source_cameras[g.view_id];
        }
    for (std::size_t j = 0; j < set.size(); ++j) {
        const Anchor &a = set.anchors[j];
        GaussianSplat s;
        s.mu = anchor_world_position(a.position_cam, scale_of[j], cam_of[j]->rotation().transpose(),
                                     cam_of[j]->center());
        s.rot = a.nominal_rot;
        s.scale = a.nominal_scale;
        s.opacity = a.nominal_opacity;
        s.color = a.nominal_color;
        for (int c = 0; c < m.decoder.k(); ++c)
            out.push_back(s);
    }
    return out;
}

} // namespace anchorsplat
