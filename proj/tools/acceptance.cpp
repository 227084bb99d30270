// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and scene
// configurations are fixed here; `--only N` runs a single criterion.

#include "anchorsplat/gradcheck.hpp"
#include "anchorsplat/io/checkpoint.hpp"
#include "anchorsplat/metrics.hpp"
#include "anchorsplat/synth.hpp"
#include "anchorsplat/trainer.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace anchorsplat;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---- 1: gradients -------------------------------------------------------------

Outcome gradient_oracle() {
    constexpr double kTol = 1e-3, kH = 1e-4, kBudget = 120;
    const auto t0 = Clock::now();
    gradcheck::Options opt;
    opt.h = kH;
    opt.tol = kTol;
    bool ok = true;
    std::ostringstream os;
    for (const auto &r : gradcheck::run_all(opt)) {
        ok = ok && r.pass();
        os << r.name << "=" << fmt("%.2e", r.max_rel_err) << " ";
    }
    const double t = seconds_since(t0);
    os << fmt("(%.1fs)", t);
    return {ok && t < kBudget, os.str()};
}

// ---- 2: tiled vs naive ------------------------------------------------------------

Outcome rasterizer_oracle() {
    constexpr double kTol = 1e-6, kBudget = 60;
    constexpr int kScenes = 50, kMaxSplats = 50, kSize = 64;
    const auto t0 = Clock::now();
    double worst = 0;
    for (int seed = 0; seed < kScenes; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::uniform_int_distribution<int> count(1, kMaxSplats);
        std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi), el(-0.6, 0.6), bg(0, 1);
        const auto splats = testutil::random_splats(rng, count(rng));
        const double a = ang(rng), e = el(rng);
        const Vec3 eye = 3.0 * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
        const Camera cam(Intrinsics{kSize, kSize, kSize / 2.0, kSize / 2.0, kSize, kSize},
                         look_at(eye, Vec3::Zero()));
        const Vec3 background(bg(rng), bg(rng), bg(rng));
        const auto tiled = render(splats, cam, background);
        const auto naive = testutil::naive_render(splats, cam, background);
        worst = std::max({worst, testutil::max_abs_diff(tiled.target.color, naive.color),
                          testutil::max_abs_diff(tiled.target.depth, naive.depth),
                          testutil::max_abs_diff(tiled.target.alpha_acc, naive.alpha_acc)});
    }
    const double t = seconds_since(t0);
    return {worst <= kTol && t < kBudget, fmt("max |tiled - naive| = %.3e over %d scenes (%.1fs)", worst, kScenes, t)};
}

// ---- 3: neutrality at step 0 ---------------------------------------------------------

Outcome residual_neutrality() {
    SynthSceneSpec s;
    s.seed = 11;
    const auto ds = generate_synthetic(s);
    TrainConfig cfg;
    cfg.seed = 11;
    const auto model = initialize_model(cfg, ds.train_views(), s.background);
    const auto nominal = nominal_splats(model);
    double worst = 0;
    for (const auto &v : ds.views) {
        const auto decoded = render_model(model, v.camera);
        const auto raw = render(nominal, v.camera, model.background);
        worst = std::max({worst, testutil::max_abs_diff(decoded.target.color, raw.target.color),
                          testutil::max_abs_diff(decoded.target.depth, raw.target.depth)});
    }
    return {worst == 0.0, fmt("max |decoded - nominal| = %.3e over %zu views", worst, ds.views.size())};
}

// ---- 4: scale recovery -----------------------------------------------------------------

Outcome scale_recovery() {
    constexpr double kTol = 0.05, kBudget = 900;
    constexpr long kIterations = 2000;
    static_assert(kIterations <= 5000);
    const auto t0 = Clock::now();
    SynthSceneSpec s;
    s.seed = 1;
    s.n_train_views = 8;
    s.corrupt_scales = true;
    s.scale_lo = 0.5;
    s.scale_hi = 2.0;
    s.depth_noise = 0.0;
    const auto ds = generate_synthetic(s);

    TrainConfig cfg;
    cfg.iterations = kIterations;
    cfg.calibration_warmup = 400;
    cfg.lr_view_scales = 2e-2;
    cfg.voxel_resolution = 0.1;
    cfg.stride = 4;
    cfg.lr_mlp = cfg.lr_features = 3e-3;
    cfg.weights.lambda_d = 1.0;
    cfg.init_opacity = 0.5;

    Trainer t(cfg, ds.train_views(), s.background);
    while (t.steps_done() < cfg.iterations)
        t.step();
    const auto rep = eval_scale_recovery(t.model(), ds.manifest.true_scales);
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << fmt("max |rho - 1| = %.4f after %ld iterations (%.0fs); rho =", rep.max_dev, cfg.iterations, secs);
    for (const auto &r : rep.rows)
        os << fmt(" %.3f", r.rho);
    return {rep.pass(kTol) && secs < kBudget, os.str()};
}

// ---- 5: overfit capacity -----------------------------------------------------------------

SynthSceneSpec twenty_view_scene() {
    SynthSceneSpec s;
    s.seed = 1;
    s.n_train_views = 20;
    s.n_eval_views = 10;
    s.corrupt_scales = false;
    return s;
}

TrainConfig capacity_config() {
    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.voxel_resolution = 0.1;
    cfg.stride = 4;
    cfg.lr_mlp = cfg.lr_features = 3e-3;
    cfg.weights.lambda_d = 1.0;
    cfg.init_opacity = 0.5;
    return cfg;
}

Outcome overfit_capacity() {
    constexpr double kTrainPsnr = 28, kEvalPsnr = 22, kBudget = 1200;
    const auto t0 = Clock::now();
    const auto s = twenty_view_scene();
    const auto ds = generate_synthetic(s);
    const auto cfg = capacity_config();
    Trainer t(cfg, ds.train_views(), s.background);
    while (t.steps_done() < cfg.iterations)
        t.step();
    const double tr = eval_render(t.model(), ds.train_views()).mean_psnr;
    const double ev = eval_render(t.model(), ds.eval_views()).mean_psnr;
    const double secs = seconds_since(t0);
    return {tr > kTrainPsnr && ev > kEvalPsnr && secs < kBudget,
            fmt("train PSNR %.2f dB, eval PSNR %.2f dB after %ld iterations (%.0fs)", tr, ev, cfg.iterations, secs)};
}

// ---- 6: ablation -----------------------------------------------------------------------------

Outcome ablation() {
    const auto t0 = Clock::now();
    auto s = twenty_view_scene();
    s.n_train_views = 8;
    s.n_eval_views = 8;
    s.corrupt_scales = true;
    const auto ds = generate_synthetic(s);
    auto cfg = capacity_config();
    // no warm-up: with a fast warm-up every view pulls its anchors toward its
    // own camera and the common scale collapses
    cfg.lr_view_scales = 6e-3;
    const auto res = ablation_residual_vs_direct(ds, cfg, 50);
    const double secs = seconds_since(t0);
    return {res.speed_pass && res.ordering_pass,
            fmt("residual reaches direct's final %.2f dB at iteration %ld of %ld; eval PSNR full %.2f, direct %.2f, "
                "no calibration %.2f (%.0fs)",
                res.direct.final_train_psnr, res.residual_reach_iteration, res.iterations, res.full.final_eval_psnr,
                res.direct.final_eval_psnr, res.no_calibration.final_eval_psnr, secs)};
}

// ---- 7: determinism and checkpoints -------------------------------------------------------------

Outcome determinism() {
    SynthSceneSpec s;
    s.seed = 21;
    s.n_train_views = 4;
    s.width = s.height = 48;
    s.focal = 48;
    const auto ds = generate_synthetic(s);
    TrainConfig cfg;
    cfg.iterations = 100;
    cfg.seed = 21;
    cfg.k = 3;
    cfg.voxel_resolution = 0.1;
    cfg.raster.deterministic = true;
    cfg.raster.workers = 2;

    auto trajectory = [&] {
        Trainer t(cfg, ds.train_views(), s.background);
        std::vector<double> losses;
        while (t.steps_done() < cfg.iterations)
            losses.push_back(t.step().loss.total);
        return std::pair{losses, t.model()};
    };
    const auto [a, model] = trajectory();
    const auto [b, unused] = trajectory();
    const bool same_trajectory = a == b;

    std::stringstream buf;
    io::write_checkpoint(buf, model);
    const auto back = io::read_checkpoint(buf);
    double worst = 0;
    for (const auto &v : ds.views) {
        const auto r0 = render_model(model, v.camera, cfg.raster), r1 = render_model(back, v.camera, cfg.raster);
        worst = std::max({worst, testutil::max_abs_diff(r0.target.color, r1.target.color),
                          testutil::max_abs_diff(r0.target.depth, r1.target.depth)});
    }
    return {same_trajectory && worst == 0.0,
            fmt("loss trajectories %s over %ld steps; checkpoint round-trip max pixel diff %.3e",
                same_trajectory ? "bit-identical" : "differ", cfg.iterations, worst)};
}

// ---- 8: metric definitions ------------------------------------------------------------------------

Outcome metric_definitions() {
    constexpr double kPsnrTol = 1e-9, kSsimTol = 1e-6;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    std::normal_distribution<double> n(0, 0.1);
    double dp = 0, ds = 0;
    for (int pair = 0; pair < 8; ++pair) {
        ImageF a(40 + pair, 33, 3), b(40 + pair, 33, 3);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a.storage()[i] = u(rng);
            b.storage()[i] = std::clamp(a.storage()[i] + n(rng) * (pair + 1) * 0.3, 0.0, 1.0);
        }
        dp = std::max(dp, std::abs(psnr(a, b) - testutil::psnr_oracle(a, b)));
        ds = std::max(ds, std::abs(ssim(a, b) - testutil::ssim_oracle(a, b)));
    }

    // D -> cD with lambda -> lambda/c; powers of two keep every product exact
    ImageF d(32, 32, 1), dh(32, 32, 1), alpha(32, 32, 1, 1.0);
    std::uniform_real_distribution<double> depth(0.3, 4.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.storage()[i] = depth(rng);
        dh.storage()[i] = depth(rng);
    }
    const double lam = 1.37;
    const auto base = depth_loss(d, dh, alpha, lam);
    bool invariant = true;
    for (double c : {0.125, 0.5, 2.0, 16.0}) {
        ImageF dc = d;
        for (double &x : dc.storage())
            x *= c;
        const auto l = depth_loss(dc, dh, alpha, lam / c);
        invariant = invariant && l.value == base.value && l.grad_depth == base.grad_depth;
    }
    return {dp <= kPsnrTol && ds <= kSsimTol && invariant,
            fmt("|dPSNR| = %.2e, |dSSIM| = %.2e, depth-loss rescale invariance %s", dp, ds,
                invariant ? "exact" : "broken")};
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"acceptance checks"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria{
        {"gradient oracle", gradient_oracle},
        {"rasterizer oracle", rasterizer_oracle},
        {"residual neutrality", residual_neutrality},
        {"scale recovery", scale_recovery},
        {"overfit capacity", overfit_capacity},
        {"ablation", ablation},
        {"determinism and checkpoints", determinism},
        {"metric definitions", metric_definitions},
    };
    bool all = true;
    for (int i = 1; i <= 8; ++i) {
        if (only && only != i)
            continue;
        Outcome o;
        try {
            o = criteria[i - 1].second();
        } catch (const std::exception &e) {
            o = {false, std::string("error: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << "[" << i << "] " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i - 1].first << ": "
                  << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
