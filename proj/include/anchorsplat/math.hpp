#pragma once

#include "anchorsplat/errors.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>

namespace anchorsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

// Quaternion stored as (w, x, y, z). Kept separate from Eigen::Quaterniond,
// whose coefficient storage order is (x, y, z, w), so file formats and
// gradient code can index components without surprises.
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Quat identity() { return {}; }
    static Quat from_vec(const Vec4 &v) { return {v[0], v[1], v[2], v[3]}; }
    Vec4 vec() const { return {w, x, y, z}; }
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        const double n = norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw DegenerateInputError("quaternion has zero or non-finite norm");
        return {w / n, x / n, y / n, z / n};
    }

    friend bool operator==(const Quat &, const Quat &) = default;
};

// Rotation matrix of q / |q|.
inline Mat3 quat_to_rotmat(const Quat &q_in) {
    const Quat q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// Reverse-mode pass of quat_to_rotmat, including the normalization.
inline Vec4 quat_to_rotmat_backward(const Quat &q_in, const Mat3 &g) {
    const double n = q_in.norm();
    if (!(n > 0.0))
        throw DegenerateInputError("quaternion has zero norm");
    const Quat q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Vec4 gq;
    gq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    gq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                 w * g(2, 1) - 2 * x * g(2, 2));
    gq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                 z * g(2, 1) - 2 * y * g(2, 2));
    gq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                 x * g(2, 0) + y * g(2, 1));
    // d(q/|q|)/dq = (I - q̂q̂ᵀ)/|q|
    const Vec4 qh = q.vec();
    return (gq - qh * qh.dot(gq)) / n;
}

inline Quat rotmat_to_quat(const Mat3 &r) {
    Eigen::Quaterniond e(r);
    e.normalize();
    Quat q{e.w(), e.x(), e.y(), e.z()};
    if (q.w < 0)
        q = {-q.w, -q.x, -q.y, -q.z};
    return q;
}

inline Quat quat_multiply(const Quat &a, const Quat &b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat quat_conjugate(const Quat &q) { return {q.w, -q.x, -q.y, -q.z}; }

} // namespace anchorsplat
