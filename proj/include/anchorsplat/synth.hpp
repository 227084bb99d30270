#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/errors.hpp"
#include "anchorsplat/io/dataset.hpp"
#include "anchorsplat/io/formats.hpp"
#include "anchorsplat/metrics.hpp"
#include "anchorsplat/rasterizer.hpp"
#include "anchorsplat/trainer.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace anchorsplat {

enum class CameraPath { Orbit, FreeTrajectory };

struct SynthSceneSpec {
    std::uint64_t seed = 1;
    int n_splats = 150;
    double extent = 1.6; // splat centers inside a ball of diameter `extent`
    int n_train_views = 8;
    int n_eval_views = 0;
    CameraPath path = CameraPath::Orbit;
    int width = 64;
    int height = 64;
    double focal = 64.0;
    double orbit_radius = 3.0;
    double elevation = 0.35; // radians above the horizon
    double splat_scale_min = 0.06;
    double splat_scale_max = 0.18;
    double opacity_min = 0.9;
    bool corrupt_scales = true;            // draw s*ᵢ log-uniform in [scale_lo, scale_hi]
    double scale_lo = 0.5, scale_hi = 2.0; // ignored when corrupt_scales is false
    double depth_noise = 0.0;              // multiplicative log-normal σ
    // Pixels whose 3x3 neighbourhood spans a relative depth jump above this
    // are marked invalid, as a depth sensor's edge filter would. Alpha-blended
    // depth at silhouettes lies between the two surfaces and unprojects into
    // free space otherwise. Non-positive disables.
    double edge_filter = 0.05;
    Vec3 background = Vec3(0.5, 0.5, 0.5);
    // Surroundings: a floor disk and a cylindrical wall tiled with flat splats
    // whose color varies smoothly, so every pixel sees geometry.
    bool environment = true;
    double env_radius = 5.0;
    double floor_z = -0.9;
    double wall_height = 4.0;
    double surface_spacing = 0.2;

    int total_views() const { return n_train_views + n_eval_views; }

    void validate() const {
        if (n_splats < 1)
            throw ConfigError("n_splats must be >= 1");
        if (n_train_views < 1 || n_eval_views < 0)
            throw ConfigError("need at least one training view");
        if (width < 1 || height < 1 || !(focal > 0))
            throw ConfigError("bad image size or focal length");
        if (!(extent > 0) || !(orbit_radius > extent / 2))
            throw ConfigError("cameras must sit outside the scene");
        if (!(splat_scale_min > 0) || splat_scale_max < splat_scale_min)
            throw ConfigError("bad splat scale range");
        if (!(scale_lo > 0) || scale_hi < scale_lo)
            throw ConfigError("bad depth scale range");
        if (depth_noise < 0)
            throw ConfigError("depth noise must be non-negative");
        if (edge_filter < 0)
            throw ConfigError("edge filter threshold must be non-negative");
        if (environment && (!(env_radius > orbit_radius) || !(surface_spacing > 0) || !(wall_height > 0)))
            throw ConfigError("environment wall must enclose the cameras");
    }
};

inline SynthSceneSpec synth_spec_from_config(const io::Config &cfg, SynthSceneSpec s = {}) {
    auto num = [&](const char *key, auto &out) {
        auto it = cfg.find(key);
        if (it == cfg.end())
            return;
        double v;
        if (!io::parse_double(it->second, v))
            throw ConfigError(std::string("bad value for '") + key + "': " + it->second);
        out = static_cast<std::remove_reference_t<decltype(out)>>(v);
    };
    num("seed", s.seed);
    num("n_splats", s.n_splats);
    num("extent", s.extent);
    num("n_train_views", s.n_train_views);
    num("n_eval_views", s.n_eval_views);
    num("width", s.width);
    num("height", s.height);
    num("focal", s.focal);
    num("orbit_radius", s.orbit_radius);
    num("elevation", s.elevation);
    num("splat_scale_min", s.splat_scale_min);
    num("splat_scale_max", s.splat_scale_max);
    num("opacity_min", s.opacity_min);
    num("scale_lo", s.scale_lo);
    num("scale_hi", s.scale_hi);
    num("depth_noise", s.depth_noise);
    num("edge_filter", s.edge_filter);
    num("env_radius", s.env_radius);
    num("floor_z", s.floor_z);
    num("wall_height", s.wall_height);
    num("surface_spacing", s.surface_spacing);
    if (auto it = cfg.find("environment"); it != cfg.end())
        s.environment = it->second == "1" || it->second == "true";
    if (auto it = cfg.find("corrupt_scales"); it != cfg.end())
        s.corrupt_scales = it->second == "1" || it->second == "true";
    if (auto it = cfg.find("path"); it != cfg.end()) {
        if (it->second == "orbit")
            s.path = CameraPath::Orbit;
        else if (it->second == "free")
            s.path = CameraPath::FreeTrajectory;
        else
            throw ConfigError("path must be 'orbit' or 'free', got '" + it->second + "'");
    }
    if (auto it = cfg.find("background"); it != cfg.end()) {
        const auto tok = io::split_ws(it->second);
        if (tok.size() != 3)
            throw ConfigError("background needs three numbers");
        for (int c = 0; c < 3; ++c)
            if (!io::parse_double(tok[c], s.background[c]))
                throw ConfigError("bad background component '" + tok[c] + "'");
    }
    s.validate();
    return s;
}

// World-to-camera pose looking from `eye` at `target`; world z is up,
// camera y points down.
inline Pose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up = Vec3::UnitZ()) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9)
        x = z.cross(Vec3::UnitX());
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 c2w;
    c2w.col(0) = x;
    c2w.col(1) = y;
    c2w.col(2) = z;
    return Pose{rotmat_to_quat(c2w), eye}.inverse();
}

inline std::vector<Pose> camera_path(const SynthSceneSpec &s, std::mt19937_64 &rng) {
    const int n = s.total_views();
    std::vector<Vec3> eyes;
    std::vector<Vec3> targets;
    if (s.path == CameraPath::Orbit) {
        // Training views evenly on the circle, eval views offset between them.
        auto on_circle = [&](double a, double elev) {
            return Vec3(s.orbit_radius * std::cos(elev) * std::cos(a), s.orbit_radius * std::cos(elev) * std::sin(a),
                        s.orbit_radius * std::sin(elev));
        };
        for (int i = 0; i < s.n_train_views; ++i)
            eyes.push_back(on_circle(2 * std::numbers::pi * i / s.n_train_views, s.elevation));
        for (int j = 0; j < s.n_eval_views; ++j)
            eyes.push_back(on_circle(2 * std::numbers::pi * (j + 0.37) / s.n_eval_views, s.elevation * 0.8));
        targets.assign(n, Vec3::Zero());
    } else {
        std::normal_distribution<double> nd(0.0, 1.0);
        const double step = 2 * std::numbers::pi * s.orbit_radius / std::max(n, 1);
        Vec3 eye(s.orbit_radius, 0.0, s.orbit_radius * std::sin(s.elevation));
        for (int i = 0; i < n; ++i) {
            eyes.push_back(eye);
            targets.push_back(Vec3(nd(rng), nd(rng), nd(rng)) * (0.05 * s.extent));
            // walk roughly tangentially, then pull back onto a shell around the scene
            Vec3 tangent = Vec3::UnitZ().cross(eye).normalized();
            eye += step * (tangent + 0.3 * Vec3(nd(rng), nd(rng), 0.5 * nd(rng)));
            const double r = std::clamp(eye.norm(), 0.85 * s.orbit_radius, 1.15 * s.orbit_radius);
            eye = eye.normalized() * r;
        }
    }
    const bool coincident = std::all_of(eyes.begin(), eyes.end(), [&](const Vec3 &e) { return (e - eyes[0]).norm() < 1e-6; });
    if (eyes.size() > 1 && coincident)
        throw ConfigError("degenerate camera path: all views coincide");
    std::vector<Pose> poses;
    for (int i = 0; i < n; ++i)
        poses.push_back(look_at(eyes[i], targets[i]));
    return poses;
}

inline std::vector<GaussianSplat> random_scene(const SynthSceneSpec &s, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<GaussianSplat> out;
    const double r = s.extent / 2;
    const double ls0 = std::log(s.splat_scale_min), ls1 = std::log(s.splat_scale_max);
    while (static_cast<int>(out.size()) < s.n_splats) {
        const Vec3 p(2 * u01(rng) - 1, 2 * u01(rng) - 1, 2 * u01(rng) - 1);
        if (p.squaredNorm() > 1.0)
            continue;
        GaussianSplat g;
        g.mu = p * r;
        g.rot = Quat{nd(rng), nd(rng), nd(rng), nd(rng)}.normalized();
        for (int c = 0; c < 3; ++c)
            g.scale[c] = std::exp(ls0 + (ls1 - ls0) * u01(rng));
        g.opacity = s.opacity_min + (1.0 - s.opacity_min) * u01(rng);
        for (int c = 0; c < 3; ++c)
            g.color[c] = 0.1 + 0.8 * u01(rng);
        out.push_back(g);
    }
    if (!s.environment)
        return out;

    // Smooth color field: a few random plane waves per channel.
    struct Wave {
        Vec3 k;
        double phase;
    };
    std::array<std::array<Wave, 3>, 3> waves;
    for (auto &ch : waves)
        for (auto &w : ch)
            w = {Vec3(nd(rng), nd(rng), nd(rng)) * 0.8, 2 * std::numbers::pi * u01(rng)};
    auto field = [&](const Vec3 &p) {
        Vec3 c;
        for (int ch = 0; ch < 3; ++ch) {
            double v = 0.0;
            for (const auto &w : waves[ch])
                v += std::sin(w.k.dot(p) + w.phase);
            c[ch] = std::clamp(0.5 + 0.13 * v, 0.05, 0.95);
        }
        return c;
    };
    auto surfel = [&](const Vec3 &p, const Vec3 &normal) {
        GaussianSplat g;
        g.mu = p;
        // rotate the splat's z axis onto the surface normal
        g.rot = rotmat_to_quat(Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal).toRotationMatrix());
        const double t = s.surface_spacing * (0.9 + 0.2 * u01(rng));
        g.scale = Vec3(t, t, 0.02 * s.surface_spacing);
        g.opacity = 1.0;
        g.color = field(p);
        out.push_back(g);
    };
    const double sp = s.surface_spacing;
    for (double x = -s.env_radius; x <= s.env_radius; x += sp)
        for (double y = -s.env_radius; y <= s.env_radius; y += sp)
            if (x * x + y * y <= s.env_radius * s.env_radius)
                surfel(Vec3(x + 0.3 * sp * (u01(rng) - 0.5), y + 0.3 * sp * (u01(rng) - 0.5), s.floor_z), Vec3::UnitZ());
    const int around = static_cast<int>(std::ceil(2 * std::numbers::pi * s.env_radius / sp));
    for (int i = 0; i < around; ++i) {
        const double a = 2 * std::numbers::pi * i / around;
        const Vec3 radial(std::cos(a), std::sin(a), 0.0);
        for (double z = s.floor_z; z <= s.floor_z + s.wall_height; z += sp)
            surfel(radial * s.env_radius + Vec3(0, 0, z), -radial);
    }
    return out;
}

// FNV-1a over the raw bytes of the scene's doubles.
inline std::string scene_hash(const std::vector<GaussianSplat> &scene) {
    std::uint64_t h = 1469598103934665603ull;
    auto eat = [&](double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    for (const auto &g : scene) {
        for (int c = 0; c < 3; ++c)
            eat(g.mu[c]);
        eat(g.rot.w), eat(g.rot.x), eat(g.rot.y), eat(g.rot.z);
        for (int c = 0; c < 3; ++c)
            eat(g.scale[c]);
        eat(g.opacity);
        for (int c = 0; c < 3; ++c)
            eat(g.color[c]);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct SynthDataset {
    SynthSceneSpec spec;
    Intrinsics intrinsics;
    std::vector<GaussianSplat> scene;
    std::vector<TrainingView> views; // train views first, then eval views
    std::vector<ImageF> true_depth;
    io::Manifest manifest;

    std::vector<TrainingView> train_views() const {
        return {views.begin(), views.begin() + spec.n_train_views};
    }
    std::vector<TrainingView> eval_views() const { return {views.begin() + spec.n_train_views, views.end()}; }
};

inline bool depth_edge(const ImageF &depth, const ImageF &alpha, int x, int y, double rel) {
    const double d = depth(x, y, 0);
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= depth.width() || ny >= depth.height())
                continue;
            if (alpha(nx, ny, 0) < 0.5 || std::abs(depth(nx, ny, 0) - d) > rel * d)
                return true;
        }
    return false;
}

// Generates the dataset in memory exactly as it reads back from disk: colors
// quantized to 8 bits and depths rounded to float32.
inline SynthDataset generate_synthetic(const SynthSceneSpec &spec) {
    spec.validate();
    SynthDataset ds;
    ds.spec = spec;
    std::mt19937_64 rng(spec.seed);
    ds.scene = random_scene(spec, rng);
    const auto poses = camera_path(spec, rng);
    ds.intrinsics = Intrinsics{spec.focal, spec.focal, spec.width / 2.0, spec.height / 2.0, spec.width, spec.height};

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int n = spec.total_views();
    std::vector<double> s_star(n, 1.0);
    if (spec.corrupt_scales)
        for (double &s : s_star)
            s = std::exp(std::log(spec.scale_lo) + (std::log(spec.scale_hi) - std::log(spec.scale_lo)) * u01(rng));

    RasterSettings rs;
    for (int i = 0; i < n; ++i) {
        TrainingView v;
        v.id = i;
        v.camera = Camera(ds.intrinsics, poses[i]);
        const auto r = render(ds.scene, v.camera, spec.background, rs);
        v.image = r.target.color;
        for (double &c : v.image.storage())
            c = io::quantize_u8(c) / 255.0;
        v.depth = DepthMap(spec.width, spec.height, 1);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                if (r.target.alpha_acc(x, y, 0) < 0.5) {
                    v.depth(x, y, 0) = std::numeric_limits<double>::quiet_NaN();
                    continue;
                }
                if (spec.edge_filter > 0 && depth_edge(r.target.depth, r.target.alpha_acc, x, y, spec.edge_filter)) {
                    v.depth(x, y, 0) = std::numeric_limits<double>::quiet_NaN();
                    continue;
                }
                const double noise = spec.depth_noise > 0 ? std::exp(spec.depth_noise * nd(rng)) : 1.0;
                v.depth(x, y, 0) = static_cast<float>(r.target.depth(x, y, 0) / s_star[i] * noise);
            }
        ds.true_depth.push_back(r.target.depth);
        ds.views.push_back(std::move(v));
    }

    auto &m = ds.manifest;
    m.seed = spec.seed;
    m.true_scales = s_star;
    m.depth_noise = spec.depth_noise;
    m.scene_hash = scene_hash(ds.scene);
    m.background = spec.background;
    m.has_split = true;
    for (int i = 0; i < n; ++i)
        (i < spec.n_train_views ? m.train : m.eval).push_back(i);
    return ds;
}

inline void write_synthetic(const SynthDataset &ds, const io::fs::path &root) {
    std::vector<Pose> poses;
    for (const auto &v : ds.views) {
        io::write_frame(root, v.id, v.image, v.depth);
        poses.push_back(v.camera.pose());
    }
    io::write_poses(root / "poses.txt", poses);
    io::write_intrinsics(root / "intrinsics.txt", ds.intrinsics);
    io::write_manifest(root / "manifest.json", ds.manifest);
}

// ---- scale recovery ----------------------------------------------------------

struct ScaleRecoveryRow {
    int view = 0;
    double s_hat = 1.0, lambda_hat = 1.0, s_star = 1.0;
    double rho = 1.0;        // gauge-normalized ŝᵢ / s*ᵢ
    double rho_lambda = 1.0; // gauge-normalized λ̂ᵢ / s*ᵢ
};

struct ScaleRecoveryReport {
    std::vector<ScaleRecoveryRow> rows;
    double max_dev = 0.0;        // max |ρᵢ − 1|
    double max_dev_lambda = 0.0; // same for λ̂
    bool pass(double tol) const { return max_dev < tol; }
};

// The monocular depth of view i is true depth / s*ᵢ, so a calibrated model
// has ŝᵢ = s*ᵢ. Ratios are divided by their geometric mean to remove the one
// global scale a monocular setup cannot pin down.
inline ScaleRecoveryReport eval_scale_recovery(const SceneModel &m, std::span<const double> s_star) {
    const auto &groups = m.anchors.groups;
    if (s_star.size() < groups.size())
        throw InputError("manifest lists " + std::to_string(s_star.size()) + " true scales for " +
                         std::to_string(groups.size()) + " views");
    ScaleRecoveryReport rep;
    double log_mean = 0.0, log_mean_l = 0.0;
    for (const auto &g : groups) {
        ScaleRecoveryRow r;
        r.view = g.view_id;
        r.s_hat = g.depth_scale_s();
        r.lambda_hat = g.depth_scale_lambda();
        r.s_star = s_star[g.view_id];
        log_mean += std::log(r.s_hat / r.s_star);
        log_mean_l += std::log(r.lambda_hat / r.s_star);
        rep.rows.push_back(r);
    }
    if (rep.rows.empty())
        return rep;
    log_mean /= static_cast<double>(rep.rows.size());
    log_mean_l /= static_cast<double>(rep.rows.size());
    for (auto &r : rep.rows) {
        r.rho = std::exp(std::log(r.s_hat / r.s_star) - log_mean);
        r.rho_lambda = std::exp(std::log(r.lambda_hat / r.s_star) - log_mean_l);
        rep.max_dev = std::max(rep.max_dev, std::abs(r.rho - 1.0));
        rep.max_dev_lambda = std::max(rep.max_dev_lambda, std::abs(r.rho_lambda - 1.0));
    }
    return rep;
}

// ---- decoder ablation --------------------------------------------------------

struct CurvePoint {
    long iteration = 0;
    double psnr = 0.0;
};

struct AblationRun {
    std::string name;
    std::vector<CurvePoint> curve; // mean train-view PSNR
    double final_train_psnr = 0.0;
    double final_eval_psnr = 0.0;
};

struct AblationResult {
    AblationRun full, direct, no_calibration;
    long iterations = 0;
    long residual_reach_iteration = -1; // first curve point where full >= direct's final PSNR
    bool speed_pass = false;            // reached within half the iterations
    bool ordering_pass = false;         // full >= both ablations on eval PSNR
};

inline AblationRun run_variant(const std::string &name, const TrainConfig &cfg, const SynthDataset &ds,
                               long curve_interval) {
    AblationRun run;
    run.name = name;
    const auto train = ds.train_views();
    const auto eval = ds.eval_views();
    Trainer t(cfg, train, ds.spec.background);
    auto sample = [&] {
        run.curve.push_back({t.steps_done(), eval_render(t.model(), train, cfg.raster).mean_psnr});
    };
    sample();
    while (t.steps_done() < cfg.iterations) {
        t.step();
        if (t.steps_done() % curve_interval == 0 || t.steps_done() == cfg.iterations)
            sample();
    }
    run.final_train_psnr = run.curve.back().psnr;
    run.final_eval_psnr = eval.empty() ? 0.0 : eval_render(t.model(), eval, cfg.raster).mean_psnr;
    return run;
}

inline AblationResult ablation_residual_vs_direct(const SynthDataset &ds, TrainConfig cfg, long curve_interval) {
    AblationResult res;
    res.iterations = cfg.iterations;
    cfg.direct_color = false;
    cfg.calibrate_depth = true;
    res.full = run_variant("full", cfg, ds, curve_interval);
    TrainConfig d = cfg;
    d.direct_color = true;
    res.direct = run_variant("direct_color", d, ds, curve_interval);
    TrainConfig nc = cfg;
    nc.calibrate_depth = false;
    res.no_calibration = run_variant("no_depth_calibration", nc, ds, curve_interval);

    const double target = res.direct.final_train_psnr;
    for (const auto &p : res.full.curve)
        if (p.psnr >= target) {
            res.residual_reach_iteration = p.iteration;
            break;
        }
    res.speed_pass = res.residual_reach_iteration >= 0 && 2 * res.residual_reach_iteration <= cfg.iterations;
    res.ordering_pass = res.full.final_eval_psnr >= res.direct.final_eval_psnr &&
                        res.full.final_eval_psnr >= res.no_calibration.final_eval_psnr;
    return res;
}

} // namespace anchorsplat
