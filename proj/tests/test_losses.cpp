#include "anchorsplat/losses.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace anchorsplat;

namespace {

ImageF random_image(std::mt19937_64 &rng, int w, int h, int c = 3) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageF img(w, h, c);
    for (double &v : img.storage())
        v = u(rng);
    return img;
}

ImageF constant(int w, int h, int c, double v) { return ImageF(w, h, c, v); }

GaussianSplat with_scale(const Vec3 &s) {
    GaussianSplat g;
    g.scale = s;
    return g;
}

} // namespace

// ---- SSIM / photometric ----------------------------------------------------------

TEST(Ssim, SelfSimilarityIsOne) {
    std::mt19937_64 rng(1);
    const auto img = random_image(rng, 16, 12);
    EXPECT_NEAR(ssim(img, img), 1.0, 1e-12);
}

TEST(Ssim, Symmetric) {
    std::mt19937_64 rng(2);
    const auto a = random_image(rng, 16, 16), b = random_image(rng, 16, 16);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
}

TEST(Ssim, MatchesDefinitionalOracle) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 3; ++t) {
        const auto a = random_image(rng, 20, 13), b = random_image(rng, 20, 13);
        EXPECT_NEAR(ssim(a, b), testutil::ssim_oracle(a, b), 1e-12);
    }
}

TEST(Photometric, IdentityIsZero) {
    std::mt19937_64 rng(4);
    const auto img = random_image(rng, 8, 8);
    EXPECT_NEAR(photometric_loss(img, img, 0.2).value, 0.0, 1e-15);
}

TEST(Photometric, PureL1OnConstants) {
    EXPECT_DOUBLE_EQ(photometric_loss(constant(4, 4, 3, 0.0), constant(4, 4, 3, 1.0), 0.0).value, 1.0);
}

TEST(Photometric, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    const auto target = random_image(rng, 8, 8);
    auto rendered = random_image(rng, 8, 8);
    for (double w : {0.0, 0.2, 1.0}) {
        const auto l = photometric_loss(target, rendered, w);
        const double h = 1e-6;
        for (std::size_t i = 0; i < rendered.size(); i += 7) {
            const double v = rendered.storage()[i];
            rendered.storage()[i] = v + h;
            const double fp = photometric_loss(target, rendered, w).value;
            rendered.storage()[i] = v - h;
            const double fm = photometric_loss(target, rendered, w).value;
            rendered.storage()[i] = v;
            EXPECT_NEAR(l.grad.storage()[i], (fp - fm) / (2 * h), 1e-4 * std::max(1.0, std::abs(l.grad.storage()[i])));
        }
    }
}

TEST(Photometric, ShapeMismatchThrows) {
    EXPECT_THROW(photometric_loss(constant(4, 4, 3, 0), constant(5, 4, 3, 0), 0.2), InputError);
}

// ---- depth ----------------------------------------------------------------------------

TEST(DepthLoss, PerfectCalibrationIsZero) {
    ImageF d(3, 3, 1, 2.0), dh(3, 3, 1, 3.0), a(3, 3, 1, 1.0);
    EXPECT_EQ(depth_loss(d, dh, a, 1.5).value, 0.0);
}

TEST(DepthLoss, SinglePixelPlugIn) {
    ImageF d(1, 1, 1, 2.0), dh(1, 1, 1, 1.0), a(1, 1, 1, 1.0);
    EXPECT_DOUBLE_EQ(depth_loss(d, dh, a, 1.0).value, std::log(2.0));
}

TEST(DepthLoss, MasksInvalidAndUncovered) {
    ImageF d(3, 1, 1, 1.0), dh(3, 1, 1, 2.0), a(3, 1, 1, 1.0);
    d(0, 0) = std::numeric_limits<double>::quiet_NaN();
    a(1, 0) = 0.49;
    const auto l = depth_loss(d, dh, a, 1.0);
    EXPECT_EQ(l.valid_pixels, 1u);
    EXPECT_DOUBLE_EQ(l.value, std::log(2.0));
    EXPECT_EQ(l.grad_depth(0, 0), 0.0);
    EXPECT_EQ(l.grad_depth(1, 0), 0.0);
}

TEST(DepthLoss, NoValidPixelsGivesZero) {
    ImageF d(2, 2, 1, std::numeric_limits<double>::quiet_NaN()), dh(2, 2, 1, 1.0), a(2, 2, 1, 1.0);
    const auto l = depth_loss(d, dh, a, 1.0);
    EXPECT_EQ(l.value, 0.0);
    EXPECT_EQ(l.grad_lambda, 0.0);
}

TEST(DepthLoss, NonPositiveLambdaThrows) {
    ImageF d(1, 1, 1, 1.0);
    EXPECT_THROW(depth_loss(d, d, d, 0.0), DomainError);
}

TEST(DepthLoss, JointRescaleInvariance) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    ImageF d(8, 8, 1), dh(8, 8, 1), a(8, 8, 1, 1.0);
    for (double &v : d.storage())
        v = u(rng);
    for (double &v : dh.storage())
        v = u(rng);
    // c a power of two keeps λ̂·D bit-identical
    for (double c : {0.25, 2.0, 8.0}) {
        ImageF dc = d;
        for (double &v : dc.storage())
            v *= c;
        EXPECT_EQ(depth_loss(dc, dh, a, 1.3 / c).value, depth_loss(d, dh, a, 1.3).value);
    }
}

TEST(DepthLoss, GradientDescentRecoversLambda) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    ImageF d(6, 6, 1), dh(6, 6, 1), a(6, 6, 1, 1.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.storage()[i] = u(rng);
        dh.storage()[i] = 2.0 * d.storage()[i];
    }
    double log_l = 0.0;
    // the L1-type loss needs a decaying step to settle
    for (int it = 0; it < 8000; ++it)
        log_l -= 0.05 * std::pow(0.999, it) * depth_loss(d, dh, a, std::exp(log_l)).grad_log_lambda;
    EXPECT_NEAR(std::exp(log_l), 2.0, 1e-3);
}

TEST(DepthLoss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    ImageF d(8, 8, 1), dh(8, 8, 1), a(8, 8, 1, 1.0);
    for (double &v : d.storage())
        v = u(rng);
    for (double &v : dh.storage())
        v = u(rng);
    const double lam = 1.1, h = 1e-6;
    const auto l = depth_loss(d, dh, a, lam);
    EXPECT_NEAR(l.grad_lambda, (depth_loss(d, dh, a, lam + h).value - depth_loss(d, dh, a, lam - h).value) / (2 * h), 1e-6);
    for (std::size_t i = 0; i < dh.size(); i += 5) {
        ImageF p = dh, m = dh;
        p.storage()[i] += h;
        m.storage()[i] -= h;
        EXPECT_NEAR(l.grad_depth.storage()[i], (depth_loss(d, p, a, lam).value - depth_loss(d, m, a, lam).value) / (2 * h), 1e-6);
    }
}

// ---- shape regularizers -------------------------------------------------------------------

TEST(Volumetric, HandValues) {
    const std::vector<GaussianSplat> one{with_scale(Vec3(1, 1, 1))};
    EXPECT_EQ(volumetric_loss(one).value, 1.0);
    EXPECT_EQ(volumetric_loss(one).grad[0], Vec3(1, 1, 1));
    const std::vector<GaussianSplat> s{with_scale(Vec3(2, 3, 4))};
    const auto l = volumetric_loss(s);
    EXPECT_EQ(l.value, 24.0);
    EXPECT_EQ(l.grad[0], Vec3(12, 8, 6));
}

TEST(Volumetric, MatchesDirectSum) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.01, 2.0);
    std::vector<GaussianSplat> s;
    long double ref = 0;
    for (int i = 0; i < 100; ++i) {
        s.push_back(with_scale(Vec3(u(rng), u(rng), u(rng))));
        ref += static_cast<long double>(s.back().scale.x()) * s.back().scale.y() * s.back().scale.z();
    }
    EXPECT_NEAR(volumetric_loss(s).value, static_cast<double>(ref), 1e-9);
}

TEST(Aniso, HandValues) {
    const std::vector<GaussianSplat> iso{with_scale(Vec3(1, 1, 1))};
    EXPECT_EQ(aniso_loss(iso, 10.0).value, 0.0);
    const std::vector<GaussianSplat> needle{with_scale(Vec3(20, 1, 1))};
    EXPECT_EQ(aniso_loss(needle, 10.0).value, 10.0);
    EXPECT_THROW(aniso_loss(iso, 0.5), DomainError);
}

TEST(Aniso, GradientOffKink) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    std::vector<GaussianSplat> s;
    for (int i = 0; i < 20; ++i)
        s.push_back(with_scale(Vec3(u(rng), u(rng), u(rng))));
    const double r = 3.0, h = 1e-7;
    const auto l = aniso_loss(s, r);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            auto p = s, m = s;
            p[i].scale[c] += h;
            m[i].scale[c] -= h;
            EXPECT_NEAR(l.grad[i][c], (aniso_loss(p, r).value - aniso_loss(m, r).value) / (2 * h), 1e-4);
        }
}

// ---- total ---------------------------------------------------------------------------------

TEST(TotalLoss, WeightedSumAndBreakdown) {
    const LossComponents c{0.3, 2.0, 0.7, 0.1};
    LossWeights zero{0, 0, 0, 0, 0.2, 10};
    EXPECT_EQ(total_loss(c, zero).total, 0.0);
    LossWeights photo_only{1, 0, 0, 0, 0.2, 10};
    EXPECT_EQ(total_loss(c, photo_only).total, 0.3);
    const auto b = total_loss(c, LossWeights{});
    EXPECT_NEAR(b.photo + b.scale + b.depth + b.aniso, b.total, 1e-12);
}

TEST(TotalLoss, MonotoneInEachComponent) {
    const LossWeights w;
    const LossComponents base{0.3, 2.0, 0.7, 0.1};
    for (int k = 0; k < 4; ++k) {
        LossComponents up = base;
        (&up.photo)[k] += 0.5;
        EXPECT_GE(total_loss(up, w).total, total_loss(base, w).total);
    }
}
