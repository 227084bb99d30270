#include "anchorsplat/optim.hpp"

#include <gtest/gtest.h>

using namespace anchorsplat;

TEST(Adam, FirstStepByHand) {
    // after one step the bias-corrected moments are g and g², so the update is lr·g/(|g|+eps)
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 0.0};
    ParamGroup grp("p", 0.1);
    grp.add(p);
    std::span<const double> gs(g);
    grp.step(std::span(&gs, 1), 1.0, AdamConfig{});
    EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.3 / (0.3 + 1e-8), 1e-15);
    EXPECT_NEAR(p[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_EQ(p[2], 0.5);
    EXPECT_NEAR(grp.first_moment(0)[0], 0.03, 1e-16);
    EXPECT_NEAR(grp.second_moment(0)[1], 0.016, 1e-16);
    EXPECT_EQ(grp.steps(), 1);
}

TEST(Adam, SecondStepByHand) {
    std::vector<double> p{0.0};
    const std::vector<double> g1{1.0}, g2{-0.5};
    ParamGroup grp("p", 0.01);
    grp.add(p);
    const AdamConfig c;
    std::span<const double> s1(g1), s2(g2);
    grp.step(std::span(&s1, 1), 1.0, c);
    grp.step(std::span(&s2, 1), 1.0, c);
    const double m = 0.9 * 0.1 + 0.1 * -0.5, v = 0.999 * 0.001 + 0.001 * 0.25;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    EXPECT_NEAR(p[0], -0.01 * 1.0 / (1.0 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
}

TEST(Adam, ZeroLearningRateFreezes) {
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{5.0, -5.0};
    ParamGroup grp("p", 0.0);
    grp.add(p);
    std::span<const double> gs(g);
    for (int i = 0; i < 10; ++i)
        grp.step(std::span(&gs, 1), 1.0, AdamConfig{});
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, ShapeMismatchIsUsageError) {
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{5.0};
    ParamGroup grp("p", 0.1);
    grp.add(p);
    std::span<const double> gs(g);
    EXPECT_THROW(grp.step(std::span(&gs, 1), 1.0, AdamConfig{}), UsageError);
    EXPECT_THROW(grp.step({}, 1.0, AdamConfig{}), UsageError);
}

TEST(Adam, NonFiniteParameterIsNumericError) {
    std::vector<double> p{1.0};
    const std::vector<double> g{std::numeric_limits<double>::quiet_NaN()};
    ParamGroup grp("p", 0.1);
    grp.add(p);
    std::span<const double> gs(g);
    EXPECT_THROW(grp.step(std::span(&gs, 1), 1.0, AdamConfig{}), NumericError);
}

TEST(CosineSchedule, EndpointsAndMonotone) {
    EXPECT_EQ(cosine_lr_scale(0, 100), 1.0);
    EXPECT_NEAR(cosine_lr_scale(99, 100), 0.1, 1e-15);
    EXPECT_NEAR(cosine_lr_scale(500, 100), 0.1, 1e-15);
    EXPECT_EQ(cosine_lr_scale(0, 1), 1.0);
    for (long s = 1; s < 100; ++s)
        EXPECT_LE(cosine_lr_scale(s, 100), cosine_lr_scale(s - 1, 100));
}
