#pragma once

#include "anchorsplat/errors.hpp"
#include "anchorsplat/image.hpp"
#include "anchorsplat/scene_model.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace anchorsplat {

// Single-channel metric-ambiguous depth; NaN (or any non-positive or
// non-finite value) marks an invalid pixel.
using DepthMap = ImageF;

inline bool valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

// One input frame. The learnable depth scales belonging to this view are
// kept in its PerViewGroup.
struct TrainingView {
    int id = 0;
    Camera camera;
    ImageF image; // RGB in [0,1]
    DepthMap depth;
};

struct AnchorSet {
    std::vector<Anchor> anchors;
    std::vector<PerViewGroup> groups;
    double voxel_resolution = 0.05;
    int feature_dim = kFeatureDim;
    std::vector<double> features; // anchors.size() x feature_dim, anchor-major

    std::size_t size() const { return anchors.size(); }
    std::span<double> feature(std::size_t i) {
        return {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)};
    }
    std::span<const double> feature(std::size_t i) const {
        return {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)};
    }
};

struct UnprojectedSample {
    Vec3 position_cam;
    Vec3 color;
    int px = 0;
    int py = 0;
};

// Samples the pixel grid x = stride/2 + i*stride (likewise y) and lifts each
// valid pixel center (x + 0.5, y + 0.5) to the camera frame.
inline std::vector<UnprojectedSample> unproject_view(const Camera &cam, const DepthMap &depth,
                                                     const ImageF &image, int stride) {
    if (stride < 1)
        throw InputError("stride must be >= 1");
    if (depth.width() != cam.width() || depth.height() != cam.height() || depth.channels() != 1)
        throw InputError("depth map dimensions do not match camera (" + std::to_string(depth.width()) + "x" +
                         std::to_string(depth.height()) + " vs " + std::to_string(cam.width()) + "x" +
                         std::to_string(cam.height()) + ")");
    const bool has_image = !image.empty();
    if (has_image && (image.width() != cam.width() || image.height() != cam.height() || image.channels() != 3))
        throw InputError("training image dimensions do not match camera");

    std::vector<UnprojectedSample> out;
    for (int y = stride / 2; y < cam.height(); y += stride) {
        for (int x = stride / 2; x < cam.width(); x += stride) {
            const double d = depth(x, y);
            if (!valid_depth(d))
                continue;
            UnprojectedSample s;
            s.position_cam = unproject_to_camera(cam.intrinsics(), x + 0.5, y + 0.5, d);
            s.color = has_image ? Vec3(image(x, y, 0), image(x, y, 1), image(x, y, 2)) : Vec3::Zero();
            s.px = x;
            s.py = y;
            out.push_back(s);
        }
    }
    return out;
}

struct VoxelKey {
    std::int64_t x, y, z;
    friend bool operator==(const VoxelKey &, const VoxelKey &) = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey &k) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (std::int64_t v : {k.x, k.y, k.z}) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ull;
            h ^= h >> 29;
        }
        return static_cast<std::size_t>(h);
    }
};

inline VoxelKey voxel_of(const Vec3 &p, double eps) {
    return {static_cast<std::int64_t>(std::floor(p.x() / eps)), static_cast<std::int64_t>(std::floor(p.y() / eps)),
            static_cast<std::int64_t>(std::floor(p.z() / eps))};
}

// Occupancy of an origin-anchored grid with cell edge eps.
class VoxelGrid {
  public:
    explicit VoxelGrid(double eps) : eps_(eps) {
        if (!(eps > 0.0))
            throw DomainError("voxel resolution must be positive");
    }
    // True if the cell was free (and is now taken).
    bool insert(const Vec3 &p) { return cells_.insert(voxel_of(p, eps_)).second; }
    bool contains(const Vec3 &p) const { return cells_.contains(voxel_of(p, eps_)); }
    std::size_t occupied() const { return cells_.size(); }
    double resolution() const { return eps_; }

  private:
    double eps_;
    std::unordered_set<VoxelKey, VoxelKeyHash> cells_;
};

// First-seen representative per occupied voxel, in input order.
inline std::vector<std::size_t> voxel_dedup(std::span<const Vec3> points, double eps) {
    VoxelGrid grid(eps);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (grid.insert(points[i]))
            kept.push_back(i);
    return kept;
}

// pᵂ = ŝ·(R·p꜀) + t with (R, t) the camera-to-world transform of the source view.
inline Vec3 anchor_world_position(const Vec3 &position_cam, double depth_scale, const Mat3 &r_c2w,
                                  const Vec3 &t_c2w) {
    return depth_scale * (r_c2w * position_cam) + t_c2w;
}

inline Vec3 anchor_world_position(const Anchor &anchor, const PerViewGroup &group, const Camera &source) {
    if (anchor.view_id != group.view_id)
        throw UsageError("anchor does not belong to the given view group");
    return anchor_world_position(anchor.position_cam, group.depth_scale_s(), source.rotation().transpose(),
                                 source.center());
}

struct AnchorInitOptions {
    double voxel_resolution = 0.05;
    int stride = 4;
    double init_opacity = 0.1;
};

// Views are processed in order; each view's samples are deduplicated against
// every anchor accepted so far (including earlier views).
inline AnchorSet build_anchor_set(std::span<const TrainingView> views, const AnchorInitOptions &opt) {
    if (views.empty())
        throw ConfigError("no views given for anchor initialization");
    if (!(opt.init_opacity >= 0.0 && opt.init_opacity <= 1.0))
        throw DomainError("initial opacity must lie in [0,1]");

    AnchorSet set;
    set.voxel_resolution = opt.voxel_resolution;
    VoxelGrid grid(opt.voxel_resolution);
    const double eps = opt.voxel_resolution;

    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        const TrainingView &view = views[vi];
        PerViewGroup group;
        group.view_id = static_cast<int>(vi);
        const Mat3 r_c2w = view.camera.rotation().transpose();
        const Vec3 t_c2w = view.camera.center();
        for (const auto &s : unproject_view(view.camera, view.depth, view.image, opt.stride)) {
            const Vec3 world = anchor_world_position(s.position_cam, group.depth_scale_s(), r_c2w, t_c2w);
            if (!grid.insert(world))
                continue;
            Anchor a;
            a.position_cam = s.position_cam;
            a.view_id = group.view_id;
            a.nominal_mu = world;
            a.nominal_color = s.color;
            a.nominal_opacity = opt.init_opacity;
            a.nominal_scale = Vec3::Constant(eps);
            group.anchor_ids.push_back(static_cast<int>(set.anchors.size()));
            set.anchors.push_back(a);
        }
        set.groups.push_back(std::move(group));
    }
    if (set.anchors.empty())
        throw ConfigError("anchor set is empty after voxel deduplication (no valid depth pixels?)");
    set.features.assign(set.anchors.size() * set.feature_dim, 0.0);
    return set;
}

} // namespace anchorsplat
