#include "anchorsplat/synth.hpp"
#include "anchorsplat/trainer.hpp"

#include <gtest/gtest.h>

using namespace anchorsplat;

namespace {

SynthSceneSpec small(std::uint64_t seed = 1) {
    SynthSceneSpec s;
    s.seed = seed;
    s.n_splats = 40;
    s.n_train_views = 8;
    s.width = s.height = 32;
    s.focal = 32;
    return s;
}

} // namespace

TEST(Synth, CleanUnitScaleDepthIsTrueDepth) {
    auto s = small();
    s.corrupt_scales = false;
    s.depth_noise = 0.0;
    s.edge_filter = 0.0;
    const auto ds = generate_synthetic(s);
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const auto &d = ds.views[i].depth;
        long valid = 0;
        for (std::size_t p = 0; p < d.size(); ++p) {
            if (!valid_depth(d.storage()[p]))
                continue;
            ++valid;
            EXPECT_EQ(d.storage()[p], static_cast<double>(static_cast<float>(ds.true_depth[i].storage()[p])));
        }
        EXPECT_GT(valid, 0);
    }
}

TEST(Synth, CorruptedScalesDivideDepth) {
    const auto ds = generate_synthetic(small());
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const double s = ds.manifest.true_scales[i];
        EXPECT_GE(s, 0.5);
        EXPECT_LE(s, 2.0);
        const auto &d = ds.views[i].depth;
        for (std::size_t p = 0; p < d.size(); ++p) {
            if (valid_depth(d.storage()[p])) {
                EXPECT_NEAR(d.storage()[p] * s, ds.true_depth[i].storage()[p], 1e-6 * ds.true_depth[i].storage()[p]);
            }
        }
    }
}

TEST(Synth, EdgeFilterOnlyRemovesPixels) {
    auto s = small();
    s.edge_filter = 0.0;
    const auto raw = generate_synthetic(s);
    s.edge_filter = 0.05;
    const auto filtered = generate_synthetic(s);
    long dropped = 0;
    for (std::size_t i = 0; i < raw.views.size(); ++i)
        for (std::size_t p = 0; p < raw.views[i].depth.size(); ++p) {
            const double a = raw.views[i].depth.storage()[p], b = filtered.views[i].depth.storage()[p];
            if (valid_depth(b))
                EXPECT_EQ(a, b);
            else
                dropped += valid_depth(a);
        }
    EXPECT_GT(dropped, 0);
}

TEST(Synth, OrbitPosesAreDistinctAndFaceTheCenter) {
    const auto ds = generate_synthetic(small());
    ASSERT_EQ(ds.views.size(), 8u);
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const auto &cam = ds.views[i].camera;
        const auto p = project_point(cam, Vec3::Zero());
        ASSERT_TRUE(p);
        EXPECT_NEAR(p->u, 16.0, 1e-9);
        EXPECT_NEAR(p->v, 16.0, 1e-9);
        EXPECT_NEAR(p->z, 3.0, 1e-9);
        for (std::size_t j = 0; j < i; ++j)
            EXPECT_GT((cam.center() - ds.views[j].camera.center()).norm(), 0.5);
    }
}

TEST(Synth, FreePathStaysOutsideTheScene) {
    auto s = small();
    s.path = CameraPath::FreeTrajectory;
    const auto ds = generate_synthetic(s);
    for (const auto &v : ds.views)
        EXPECT_GT(v.camera.center().norm(), s.extent / 2);
}

TEST(Synth, SameSeedIsBitIdentical) {
    const auto a = generate_synthetic(small(3)), b = generate_synthetic(small(3)), c = generate_synthetic(small(4));
    EXPECT_EQ(a.manifest.scene_hash, b.manifest.scene_hash);
    EXPECT_NE(a.manifest.scene_hash, c.manifest.scene_hash);
    EXPECT_EQ(a.manifest.true_scales, b.manifest.true_scales);
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        EXPECT_EQ(a.views[i].image, b.views[i].image);
        EXPECT_TRUE(std::equal(a.views[i].depth.storage().begin(), a.views[i].depth.storage().end(),
                               b.views[i].depth.storage().begin(), [](double x, double y) {
                                   return (std::isnan(x) && std::isnan(y)) || x == y;
                               }));
    }
}

TEST(Synth, SplitCounts) {
    auto s = small();
    s.n_eval_views = 3;
    const auto ds = generate_synthetic(s);
    EXPECT_EQ(ds.train_views().size(), 8u);
    EXPECT_EQ(ds.eval_views().size(), 3u);
    EXPECT_EQ(ds.manifest.train.size(), 8u);
    EXPECT_EQ(ds.manifest.eval, (std::vector<int>{8, 9, 10}));
}

TEST(Synth, SpecValidation) {
    auto s = small();
    s.orbit_radius = 0.5;
    EXPECT_THROW(generate_synthetic(s), ConfigError);
    io::Config cfg{{"path", "spiral"}};
    EXPECT_THROW(synth_spec_from_config(cfg), ConfigError);
    io::Config ok{{"n_splats", "12"}, {"environment", "false"}};
    const auto parsed = synth_spec_from_config(ok);
    EXPECT_EQ(parsed.n_splats, 12);
    EXPECT_FALSE(parsed.environment);
}

TEST(ScaleRecovery, PerfectAndGaugeInvariant) {
    const auto ds = generate_synthetic(small());
    TrainConfig cfg;
    cfg.stride = 8;
    auto model = initialize_model(cfg, ds.train_views(), ds.spec.background);
    const auto &s_star = ds.manifest.true_scales;
    for (double gauge : {1.0, 3.0, 0.25}) {
        for (auto &g : model.anchors.groups) {
            g.log_depth_scale_s = std::log(gauge * s_star[g.view_id]);
            g.log_depth_scale_lambda = std::log(gauge * s_star[g.view_id]);
        }
        const auto rep = eval_scale_recovery(model, s_star);
        EXPECT_LT(rep.max_dev, 1e-12) << "gauge " << gauge;
        EXPECT_LT(rep.max_dev_lambda, 1e-12);
    }
    model.anchors.groups[2].log_depth_scale_s += std::log(1.1);
    EXPECT_GT(eval_scale_recovery(model, s_star).max_dev, 0.05);
    EXPECT_THROW(eval_scale_recovery(model, std::vector<double>{1.0}), InputError);
}

TEST(Ablation, ResidualStartsNoWorseThanDirect) {
    auto s = small();
    s.environment = false;
    const auto ds = generate_synthetic(s);
    TrainConfig cfg;
    cfg.stride = 2;
    cfg.voxel_resolution = 0.08;
    cfg.init_opacity = 0.5;
    cfg.k = 2;
    Trainer residual(cfg, ds.train_views(), s.background);
    cfg.direct_color = true;
    Trainer direct(cfg, ds.train_views(), s.background);
    const auto views = ds.train_views();
    EXPECT_LE(eval_render(direct.model(), views).mean_psnr, eval_render(residual.model(), views).mean_psnr);
}
