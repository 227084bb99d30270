#include "anchorsplat/math.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace anchorsplat;

namespace {

Quat random_quat(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return Quat{n(rng), n(rng), n(rng), n(rng)};
}

} // namespace

TEST(Quat, IdentityGivesIdentityMatrix) { EXPECT_TRUE(quat_to_rotmat(Quat::identity()).isIdentity(0.0)); }

TEST(Quat, QuarterTurnAboutZ) {
    const double h = std::sqrt(0.5);
    const Mat3 r = quat_to_rotmat(Quat{h, 0, 0, h});
    EXPECT_TRUE((r * Vec3::UnitX()).isApprox(Vec3::UnitY(), 1e-15));
    EXPECT_TRUE((r * Vec3::UnitY()).isApprox(-Vec3::UnitX(), 1e-15));
}

TEST(Quat, ZeroNormThrows) { EXPECT_THROW(Quat(0, 0, 0, 0).normalized(), DegenerateInputError); }

TEST(Quat, PropertyRotationIsOrthonormal) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const Mat3 r = quat_to_rotmat(random_quat(rng));
        EXPECT_TRUE((r * r.transpose()).isIdentity(1e-12));
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    }
}

TEST(Quat, PropertyScaleInvariant) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        const Quat q = random_quat(rng);
        const Quat q3{3 * q.w, 3 * q.x, 3 * q.y, 3 * q.z};
        EXPECT_TRUE(quat_to_rotmat(q).isApprox(quat_to_rotmat(q3), 1e-13));
    }
}

TEST(Quat, PropertyMatrixRoundTrip) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const Mat3 r = quat_to_rotmat(random_quat(rng));
        const Quat q = rotmat_to_quat(r);
        EXPECT_GE(q.w, 0.0);
        EXPECT_TRUE(quat_to_rotmat(q).isApprox(r, 1e-12));
    }
}

TEST(Quat, MultiplyMatchesMatrixProduct) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        const Quat a = random_quat(rng).normalized(), b = random_quat(rng).normalized();
        EXPECT_TRUE(quat_to_rotmat(quat_multiply(a, b)).isApprox(quat_to_rotmat(a) * quat_to_rotmat(b), 1e-12));
        EXPECT_TRUE(quat_to_rotmat(quat_conjugate(a)).isApprox(quat_to_rotmat(a).transpose(), 1e-12));
    }
}

TEST(Quat, BackwardMatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Quat q = random_quat(rng);
        Mat3 g;
        for (int i = 0; i < 9; ++i)
            g(i / 3, i % 3) = n(rng);
        const Vec4 analytic = quat_to_rotmat_backward(q, g);
        const double h = 1e-6;
        for (int c = 0; c < 4; ++c) {
            Vec4 p = q.vec(), m = q.vec();
            p[c] += h;
            m[c] -= h;
            const double fp = (quat_to_rotmat(Quat::from_vec(p)).array() * g.array()).sum();
            const double fm = (quat_to_rotmat(Quat::from_vec(m)).array() * g.array()).sum();
            EXPECT_NEAR(analytic[c], (fp - fm) / (2 * h), 1e-7 * (1 + std::abs(analytic[c])));
        }
    }
}

TEST(Quat, BackwardOrthogonalToQuaternion) {
    // the rotation does not depend on |q|, so the gradient has no radial part
    std::mt19937_64 rng(6);
    const Quat q = random_quat(rng);
    const Vec4 g = quat_to_rotmat_backward(q, Mat3::Constant(0.7));
    EXPECT_NEAR(g.dot(q.vec()), 0.0, 1e-12);
}
