#include "anchorsplat/io/checkpoint.hpp"
#include "anchorsplat/io/dataset.hpp"
#include "anchorsplat/io/formats.hpp"
#include "anchorsplat/io/train_config.hpp"
#include "anchorsplat/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace anchorsplat;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

SynthSceneSpec small_spec() {
    SynthSceneSpec s;
    s.n_splats = 30;
    s.n_train_views = 3;
    s.n_eval_views = 1;
    s.width = s.height = 24;
    s.focal = 24;
    s.environment = false;
    return s;
}

} // namespace

// ---- poses -------------------------------------------------------------------

TEST(Poses, ParsesCameraToWorld) {
    std::istringstream in("# comment\n0 1 2 3 1 0 0 0\n1 0 0 0 0.7071067811865476 0 0 0.7071067811865476\n");
    const auto pf = io::parse_poses(in);
    ASSERT_EQ(pf.world_to_cam.size(), 2u);
    EXPECT_TRUE(pf.warnings.empty());
    // identity rotation: world-to-camera translation is the negated center
    const Camera cam(Intrinsics{1, 1, 0, 0, 1, 1}, pf.world_to_cam[0]);
    EXPECT_TRUE(cam.center().isApprox(Vec3(1, 2, 3), 1e-15));
}

TEST(Poses, WarnsAndNormalizesOffUnitQuaternion) {
    std::istringstream in("0 0 0 0 1.01 0 0 0\n");
    const auto pf = io::parse_poses(in);
    ASSERT_EQ(pf.warnings.size(), 1u);
    EXPECT_NEAR(pf.world_to_cam[0].rot.norm(), 1.0, 1e-15);
}

TEST(Poses, NoWarningWithinTolerance) {
    std::istringstream in("0 0 0 0 1.0005 0 0 0\n");
    EXPECT_TRUE(io::parse_poses(in).warnings.empty());
}

TEST(Poses, RejectsMalformedLines) {
    auto parse = [](const std::string &s) {
        std::istringstream in(s);
        return io::parse_poses(in);
    };
    EXPECT_THROW(parse("0 1 2 3 1 0 0\n"), ParseError);
    EXPECT_THROW(parse("0 1 2 x 1 0 0 0\n"), ParseError);
    EXPECT_THROW(parse("0 1 2 3 0 0 0 0\n"), ParseError);
    EXPECT_THROW(parse("0 1 2 3 1 0 0 0\n2 1 2 3 1 0 0 0\n"), FormatError);
    EXPECT_THROW(parse("0 1 2 nan 1 0 0 0\n"), ParseError);
}

TEST(Poses, RoundTrip) {
    TempDir tmp("poses");
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 1);
    std::vector<Pose> poses;
    for (int i = 0; i < 5; ++i)
        poses.push_back({Quat{n(rng), n(rng), n(rng), n(rng)}.normalized(), Vec3(n(rng), n(rng), n(rng))});
    io::write_poses(tmp.path / "poses.txt", poses);
    const auto back = io::read_poses(tmp.path / "poses.txt");
    ASSERT_EQ(back.world_to_cam.size(), poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        EXPECT_TRUE(back.world_to_cam[i].rotation().isApprox(poses[i].rotation(), 1e-14));
        EXPECT_TRUE(back.world_to_cam[i].t.isApprox(poses[i].t, 1e-14));
    }
}

// ---- intrinsics ---------------------------------------------------------------

TEST(Intrinsics, RoundTripAndValidation) {
    TempDir tmp("intr");
    const Intrinsics k{500.5, 499.25, 320, 240, 640, 480};
    io::write_intrinsics(tmp.path / "k.txt", k);
    EXPECT_EQ(io::read_intrinsics(tmp.path / "k.txt"), k);
    std::ofstream(tmp.path / "bad.txt") << "500 500 320 240 640\n";
    EXPECT_THROW(io::read_intrinsics(tmp.path / "bad.txt"), ParseError);
    std::ofstream(tmp.path / "neg.txt") << "-1 500 320 240 640 480\n";
    EXPECT_THROW(io::read_intrinsics(tmp.path / "neg.txt"), DomainError);
}

// ---- images ---------------------------------------------------------------------

TEST(Images, PfmRoundTripKeepsNaN) {
    TempDir tmp("pfm");
    ImageF d(5, 3, 1);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x)
            d(x, y) = 0.5 + x + 10 * y;
    d(2, 1) = std::numeric_limits<double>::quiet_NaN();
    io::write_pfm(tmp.path / "d.pfm", d);
    const auto back = io::read_pfm(tmp.path / "d.pfm");
    ASSERT_TRUE(back.same_shape(d));
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) {
            if (x == 2 && y == 1)
                EXPECT_TRUE(std::isnan(back(x, y)));
            else
                EXPECT_EQ(back(x, y), d(x, y));
        }
}

TEST(Images, PfmRejectsGarbage) {
    TempDir tmp("pfmbad");
    std::ofstream(tmp.path / "x.pfm") << "P7\n1 1\n-1\n";
    EXPECT_THROW(io::read_pfm(tmp.path / "x.pfm"), Error);
}

TEST(Images, PpmAndPngRoundTripQuantized) {
    TempDir tmp("img");
    ImageF img(7, 4, 3);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.storage()[i] = (i * 37 % 256) / 255.0;
    io::write_ppm(tmp.path / "a.ppm", img);
    io::write_png(tmp.path / "a.png", img);
    EXPECT_EQ(io::read_image(tmp.path / "a.ppm"), img);
    EXPECT_EQ(io::read_image(tmp.path / "a.png"), img);
}

// ---- config -----------------------------------------------------------------------

TEST(Config, ParsesKeyValueWithComments) {
    std::istringstream in("# header\niterations = 300\n\n lr_mlp=0.01 # trailing\n");
    const auto c = io::parse_config(in);
    EXPECT_EQ(c.at("iterations"), "300");
    EXPECT_EQ(c.at("lr_mlp"), "0.01");
    std::istringstream bad("novalue\n");
    EXPECT_THROW(io::parse_config(bad), ParseError);
}

TEST(Config, AppliesTrainingKeys) {
    TrainConfig cfg;
    io::apply_config(cfg, {{"iterations", "123"}, {"lambda_d", "0.5"}, {"direct_color", "true"}, {"k", "3"}});
    EXPECT_EQ(cfg.iterations, 123);
    EXPECT_EQ(cfg.weights.lambda_d, 0.5);
    EXPECT_TRUE(cfg.direct_color);
    EXPECT_EQ(cfg.k, 3);
    EXPECT_THROW(io::apply_config(cfg, {{"iteratoins", "1"}}), ConfigError);
    EXPECT_THROW(io::apply_config(cfg, {{"k", "3.5"}}), ConfigError);
    EXPECT_THROW(io::apply_config(cfg, {{"direct_color", "maybe"}}), ConfigError);
}

// ---- PLY ------------------------------------------------------------------------------

TEST(Ply, AnchorLineFormat) {
    TempDir tmp("ply");
    io::PlyTable t;
    t.properties = {{"x", "float"}, {"y", "float"}, {"z", "float"}, {"red", "uchar"}, {"green", "uchar"}, {"blue", "uchar"}};
    t.rows.push_back({1, 2, 3, 255.0 * 1, 0, 0});
    io::write_ply(tmp.path / "a.ply", t);
    const auto text = slurp(tmp.path / "a.ply");
    EXPECT_NE(text.find("element vertex 1\n"), std::string::npos);
    EXPECT_NE(text.find("end_header\n1 2 3 255 0 0\n"), std::string::npos);
    const auto back = io::read_ply(tmp.path / "a.ply");
    ASSERT_EQ(back.rows.size(), 1u);
    EXPECT_EQ(back.rows[0], t.rows[0]);
}

// ---- checkpoint ------------------------------------------------------------------------

TEST(Checkpoint, RoundTripRendersIdentically) {
    const auto ds = generate_synthetic(small_spec());
    TrainConfig cfg;
    cfg.iterations = 5;
    Trainer t(cfg, ds.train_views(), ds.spec.background);
    for (int i = 0; i < 5; ++i)
        t.step();
    std::stringstream ss;
    io::write_checkpoint(ss, t.model());
    const auto back = io::read_checkpoint(ss);
    EXPECT_EQ(back.anchors.anchors, t.model().anchors.anchors);
    EXPECT_EQ(back.anchors.groups, t.model().anchors.groups);
    EXPECT_EQ(back.anchors.features, t.model().anchors.features);
    for (const auto &v : ds.views) {
        const auto a = render_model(t.model(), v.camera);
        const auto b = render_model(back, v.camera);
        EXPECT_EQ(a.target.color, b.target.color);
        EXPECT_EQ(a.target.depth, b.target.depth);
    }
}

TEST(Checkpoint, RejectsTruncatedAndForeignData) {
    const auto ds = generate_synthetic(small_spec());
    const auto m = initialize_model(TrainConfig{}, ds.train_views(), ds.spec.background);
    std::stringstream ss;
    io::write_checkpoint(ss, m);
    const std::string full = ss.str();
    std::stringstream cut(full.substr(0, full.size() / 2));
    EXPECT_THROW(io::read_checkpoint(cut), FormatError);
    std::stringstream foreign("NOTACKPT" + full.substr(8));
    EXPECT_THROW(io::read_checkpoint(foreign), FormatError);
}

// ---- dataset ------------------------------------------------------------------------------

TEST(Dataset, EmptyDirectoryHasNoViews) {
    TempDir tmp("empty");
    try {
        io::load_dataset(tmp.path);
        FAIL() << "expected InputError";
    } catch (const InputError &e) {
        EXPECT_NE(std::string(e.what()).find("no views found"), std::string::npos);
    }
}

TEST(Dataset, SyntheticRoundTrip) {
    TempDir tmp("ds");
    const auto ds = generate_synthetic(small_spec());
    write_synthetic(ds, tmp.path);
    const auto back = io::load_dataset(tmp.path);
    ASSERT_EQ(back.views.size(), ds.views.size());
    ASSERT_TRUE(back.manifest.has_value());
    EXPECT_EQ(back.manifest->true_scales, ds.manifest.true_scales);
    EXPECT_EQ(back.manifest->scene_hash, ds.manifest.scene_hash);
    EXPECT_EQ(back.train_positions.size(), 3u);
    EXPECT_EQ(back.eval_positions.size(), 1u);
    EXPECT_EQ(back.intrinsics, ds.intrinsics);
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        EXPECT_EQ(back.views[i].image, ds.views[i].image);
        for (std::size_t p = 0; p < ds.views[i].depth.size(); ++p) {
            const double a = back.views[i].depth.storage()[p], b = ds.views[i].depth.storage()[p];
            EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
        }
        EXPECT_TRUE(back.views[i].camera.rotation().isApprox(ds.views[i].camera.rotation(), 1e-14));
    }
}

TEST(Dataset, FrameStrideKeepsSplitConsistent) {
    TempDir tmp("stride");
    write_synthetic(generate_synthetic(small_spec()), tmp.path);
    const auto back = io::load_dataset(tmp.path, {2, true});
    ASSERT_EQ(back.views.size(), 2u); // frames 0 and 2
    EXPECT_EQ(back.views[1].id, 2);
    EXPECT_EQ(back.train_positions.size(), 2u);
    EXPECT_TRUE(back.eval_positions.empty());
}

TEST(Dataset, MismatchedImageSizeIsAnError) {
    TempDir tmp("mismatch");
    write_synthetic(generate_synthetic(small_spec()), tmp.path);
    io::write_intrinsics(tmp.path / "intrinsics.txt", Intrinsics{24, 24, 12, 12, 30, 24});
    EXPECT_THROW(io::load_dataset(tmp.path), InputError);
}
