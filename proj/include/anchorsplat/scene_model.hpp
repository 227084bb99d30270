#pragma once

#include "anchorsplat/errors.hpp"
#include "anchorsplat/math.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace anchorsplat {

inline constexpr double kDefaultNearPlane = 0.01;
inline constexpr double kDefaultDilation = 0.3;
inline constexpr int kFeatureDim = 32;

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0))
            throw DomainError("focal lengths must be positive");
        if (width < 1 || height < 1)
            throw DomainError("image size must be at least 1x1");
        if (!std::isfinite(cx) || !std::isfinite(cy))
            throw DomainError("principal point must be finite");
    }

    friend bool operator==(const Intrinsics &, const Intrinsics &) = default;
};

// Rigid transform p' = R p + t with R given by a unit quaternion.
struct Pose {
    Quat rot;
    Vec3 t = Vec3::Zero();

    Mat3 rotation() const { return quat_to_rotmat(rot); }
    Vec3 apply(const Vec3 &p) const { return rotation() * p + t; }

    Pose inverse() const {
        const Quat qi = quat_conjugate(rot.normalized());
        return {qi, -(quat_to_rotmat(qi) * t)};
    }

    static Pose from_rt(const Mat3 &r, const Vec3 &t) { return {rotmat_to_quat(r), t}; }

    friend bool operator==(const Pose &a, const Pose &b) { return a.rot == b.rot && a.t == b.t; }
};

// Pinhole camera; the pose maps world points into the camera frame
// (x right, y down, z forward).
class Camera {
  public:
    Camera() : Camera(Intrinsics{}, Pose{}) {}
    Camera(const Intrinsics &intr, const Pose &world_to_cam) : intr_(intr) {
        intr_.validate();
        pose_ = {world_to_cam.rot.normalized(), world_to_cam.t};
        if (!pose_.t.allFinite())
            throw DomainError("camera translation must be finite");
        r_ = quat_to_rotmat(pose_.rot);
    }

    const Intrinsics &intrinsics() const { return intr_; }
    const Pose &pose() const { return pose_; }
    const Mat3 &rotation() const { return r_; }
    const Vec3 &translation() const { return pose_.t; }
    int width() const { return intr_.width; }
    int height() const { return intr_.height; }

    Vec3 to_camera(const Vec3 &p_world) const { return r_ * p_world + pose_.t; }
    Vec3 to_world(const Vec3 &p_cam) const { return r_.transpose() * (p_cam - pose_.t); }
    Vec3 center() const { return -(r_.transpose() * pose_.t); }
    Pose cam_to_world() const { return pose_.inverse(); }

  private:
    Intrinsics intr_;
    Pose pose_;
    Mat3 r_ = Mat3::Identity();
};

struct GaussianSplat {
    Vec3 mu = Vec3::Zero();
    Quat rot;
    Vec3 scale = Vec3::Ones();
    double opacity = 1.0;
    Vec3 color = Vec3::Zero();
};

// A fixed point unprojected from one training view. The learnable feature
// lives in AnchorSet's contiguous feature buffer, indexed by anchor id.
struct Anchor {
    Vec3 position_cam = Vec3::Zero();
    int view_id = 0;
    Vec3 nominal_mu = Vec3::Zero();
    Vec3 nominal_color = Vec3::Zero();
    double nominal_opacity = 0.1;
    Vec3 nominal_scale = Vec3::Ones();
    Quat nominal_rot; // always identity

    friend bool operator==(const Anchor &a, const Anchor &b) {
        return a.position_cam == b.position_cam && a.view_id == b.view_id && a.nominal_mu == b.nominal_mu &&
               a.nominal_color == b.nominal_color && a.nominal_opacity == b.nominal_opacity &&
               a.nominal_scale == b.nominal_scale && a.nominal_rot == b.nominal_rot;
    }
};

// Anchors initialized from one view share its two depth scales, stored as
// logarithms so positivity is structural.
struct PerViewGroup {
    int view_id = 0;
    std::vector<int> anchor_ids;
    double log_depth_scale_s = 0.0;
    double log_depth_scale_lambda = 0.0;

    double depth_scale_s() const { return std::exp(log_depth_scale_s); }
    double depth_scale_lambda() const { return std::exp(log_depth_scale_lambda); }

    friend bool operator==(const PerViewGroup &, const PerViewGroup &) = default;
};

// Reverse-mode gradient of a scalar loss with respect to one splat.
struct SplatGrad {
    Vec3 mu = Vec3::Zero();
    Vec4 rot = Vec4::Zero();
    Vec3 scale = Vec3::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();

    SplatGrad &operator+=(const SplatGrad &o) {
        mu += o.mu;
        rot += o.rot;
        scale += o.scale;
        opacity += o.opacity;
        color += o.color;
        return *this;
    }
};

struct PixelProjection {
    double u = 0.0;
    double v = 0.0;
    double z = 0.0;
};

inline Mat3 compose_covariance(const Quat &rot, const Vec3 &scale) {
    if (!(scale.array() > 0.0).all())
        throw DomainError("covariance scales must be positive");
    const Mat3 m = quat_to_rotmat(rot) * scale.asDiagonal();
    return m * m.transpose();
}

// Returns nullopt when the point lies at or behind the near plane.
inline std::optional<PixelProjection> project_point(const Camera &cam, const Vec3 &p_world,
                                                    double near_plane = kDefaultNearPlane) {
    const Vec3 p = cam.to_camera(p_world);
    if (!(p.z() > near_plane))
        return std::nullopt;
    const auto &k = cam.intrinsics();
    return PixelProjection{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

// Inverse pinhole map in continuous image coordinates.
inline Vec3 unproject_to_camera(const Intrinsics &k, double u, double v, double depth) {
    return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

inline Vec3 unproject_point(const Camera &cam, double u, double v, double depth) {
    return cam.to_world(unproject_to_camera(cam.intrinsics(), u, v, depth));
}

// Jacobian of (u, v) with respect to the camera-frame point.
inline Mat23 pinhole_jacobian(const Intrinsics &k, const Vec3 &p_cam) {
    const double iz = 1.0 / p_cam.z();
    Mat23 j;
    j << k.fx * iz, 0.0, -k.fx * p_cam.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p_cam.y() * iz * iz;
    return j;
}

// Local affine projection of a world covariance to the image plane plus a
// diagonal dilation in px².
inline std::optional<Mat2> project_covariance(const Camera &cam, const Vec3 &mu_world, const Mat3 &sigma,
                                              double dilation = kDefaultDilation,
                                              double near_plane = kDefaultNearPlane) {
    const Vec3 p = cam.to_camera(mu_world);
    if (!(p.z() > near_plane))
        return std::nullopt;
    const Mat23 t = pinhole_jacobian(cam.intrinsics(), p) * cam.rotation();
    Mat2 cov = t * sigma * t.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov.diagonal().array() += dilation;
    return cov;
}

} // namespace anchorsplat
