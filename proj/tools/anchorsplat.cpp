#include "anchorsplat/gradcheck.hpp"
#include "anchorsplat/io/checkpoint.hpp"
#include "anchorsplat/io/dataset.hpp"
#include "anchorsplat/io/formats.hpp"
#include "anchorsplat/io/train_config.hpp"
#include "anchorsplat/io/train_run.hpp"
#include "anchorsplat/metrics.hpp"
#include "anchorsplat/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <iostream>
#include <optional>

using namespace anchorsplat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    int workers = 0;
    std::string config;
    std::vector<std::string> sets;
};

io::Config gather_config(const Common &c) {
    io::Config kv;
    if (!c.config.empty())
        kv = io::read_config(c.config);
    for (const auto &s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("--set expects key=value, got '" + s + "'");
        kv[io::trim(s.substr(0, eq))] = io::trim(s.substr(eq + 1));
    }
    return kv;
}

TrainConfig train_config(const Common &c, const io::Config &kv) {
    TrainConfig cfg;
    io::apply_config(cfg, kv);
    if (c.seed)
        cfg.seed = *c.seed;
    if (c.deterministic)
        cfg.raster.deterministic = true;
    if (c.workers > 0)
        cfg.raster.workers = c.workers;
    cfg.validate();
    return cfg;
}

RasterSettings raster_settings(const Common &c) {
    RasterSettings rs;
    if (c.workers > 0)
        rs.workers = c.workers;
    if (c.deterministic)
        rs.deterministic = true;
    return rs;
}

void add_common(CLI::App *app, Common &c, bool with_config) {
    app->add_option("--seed", c.seed, "RNG seed");
    app->add_flag("--deterministic", c.deterministic, "fixed tile order and reduction order");
    app->add_option("--workers", c.workers, "rasterizer worker threads")->check(CLI::PositiveNumber);
    if (with_config) {
        app->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
        app->add_option("--set", c.sets, "override one config key (key=value), repeatable");
    }
}

void print_warnings(const io::Dataset &ds) {
    for (const auto &w : ds.warnings)
        std::cerr << "warning: " << w << "\n";
}

// True scales for the model's view groups, which are numbered by position in
// the training split rather than by frame index.
std::vector<double> group_true_scales(const io::Dataset &ds) {
    std::vector<double> out;
    if (!ds.manifest || ds.manifest->true_scales.empty())
        return out;
    for (int p : ds.train_positions) {
        const int id = ds.views.at(p).id;
        if (id >= static_cast<int>(ds.manifest->true_scales.size()))
            return {};
        out.push_back(ds.manifest->true_scales[id]);
    }
    return out;
}

std::vector<TrainingView> pick_views(const io::Dataset &ds, const std::string &split) {
    if (split == "train")
        return ds.train_views();
    if (split == "eval")
        return ds.eval_views();
    return ds.views;
}

// ---- subcommands ---------------------------------------------------------------

int cmd_generate(const Common &c, const fs::path &out) {
    auto kv = gather_config(c);
    if (c.seed)
        kv["seed"] = std::to_string(*c.seed);
    const auto spec = synth_spec_from_config(kv);
    const auto ds = generate_synthetic(spec);
    write_synthetic(ds, out);
    std::cout << "wrote " << ds.views.size() << " views (" << spec.n_train_views << " train, " << spec.n_eval_views
              << " eval) to " << out.string() << "\n";
    return 0;
}

int cmd_train(const Common &c, const fs::path &data, const fs::path &out, const fs::path &log,
              const fs::path &ckpt_dir, int stride_frames, long progress) {
    const auto cfg = train_config(c, gather_config(c));
    const auto ds = io::load_dataset(data, {stride_frames, true});
    print_warnings(ds);
    Trainer t(cfg, ds.train_views(), ds.background());
    std::cerr << "training on " << ds.train_positions.size() << " views, " << t.model().anchors.size()
              << " anchors\n";
    io::TrainRunOptions opt;
    opt.checkpoint = out;
    opt.log = log;
    opt.checkpoint_dir = ckpt_dir;
    opt.progress = progress > 0 ? &std::cerr : nullptr;
    opt.progress_interval = progress;
    io::run_training(t, ds.eval_views(), opt);

    const auto train_eval = eval_render(t.model(), ds.train_views(), cfg.raster);
    std::cout << "train psnr " << train_eval.mean_psnr << "\n";
    if (!ds.eval_positions.empty())
        std::cout << "eval psnr " << eval_render(t.model(), ds.eval_views(), cfg.raster).mean_psnr << "\n";
    return 0;
}

int cmd_render(const Common &c, const fs::path &ckpt, const fs::path &data, const fs::path &out,
               const std::string &split) {
    const auto model = io::load_checkpoint(ckpt);
    const auto ds = io::load_dataset(data, {1, false});
    print_warnings(ds);
    const auto rs = raster_settings(c);
    const auto views = pick_views(ds, split);
    for (const auto &v : views) {
        const auto r = render_model(model, v.camera, rs);
        io::write_ppm(out / "images" / (io::frame_name(v.id) + ".ppm"), r.target.color);
        io::write_pfm(out / "depth" / (io::frame_name(v.id) + ".pfm"), r.target.depth);
    }
    std::cout << "rendered " << views.size() << " views to " << out.string() << "\n";
    return 0;
}

int cmd_eval(const Common &c, const fs::path &ckpt, const fs::path &data, const fs::path &out,
             const std::string &split) {
    const auto model = io::load_checkpoint(ckpt);
    const auto ds = io::load_dataset(data, {1, false});
    print_warnings(ds);
    std::string which = split;
    if (which == "eval" && ds.eval_positions.empty()) {
        std::cerr << "warning: dataset has no eval split, evaluating training views\n";
        which = "train";
    }
    const auto rep = eval_render(model, pick_views(ds, which), raster_settings(c));

    std::optional<std::ofstream> f;
    if (!out.empty())
        f = io::open_out(out);
    std::ostream &os = f ? static_cast<std::ostream &>(*f) : std::cout;
    for (const auto &vm : rep.views)
        os << json{{"view", vm.view_id}, {"split", which}, {"psnr", vm.psnr}, {"ssim", vm.ssim}}.dump() << '\n';
    os << json{{"split", which}, {"mean_psnr", rep.mean_psnr}, {"mean_ssim", rep.mean_ssim}}.dump() << '\n';

    const auto s_star = group_true_scales(ds);
    if (!s_star.empty() && s_star.size() == model.anchors.groups.size()) {
        const auto sr = eval_scale_recovery(model, s_star);
        for (const auto &r : sr.rows)
            os << json{{"view", ds.views.at(ds.train_positions.at(r.view)).id},
                       {"s_hat", r.s_hat},
                       {"lambda_hat", r.lambda_hat},
                       {"s_star", r.s_star},
                       {"rho", r.rho}}
                      .dump()
               << '\n';
        os << json{{"scale_recovery_max_dev", sr.max_dev}}.dump() << '\n';
    }
    if (f)
        io::check_written(*f, out);
    std::cerr << which << " mean psnr " << rep.mean_psnr << " ssim " << rep.mean_ssim << "\n";
    return 0;
}

int cmd_gradcheck(const Common &c, double h, double tol) {
    gradcheck::Options opt;
    if (c.seed)
        opt.seed = *c.seed;
    opt.h = h;
    opt.tol = tol;
    bool ok = true;
    for (const auto &r : gradcheck::run_all(opt)) {
        std::cout << (r.pass() ? "PASS " : "FAIL ") << r.name << " checked=" << r.checked << " skipped=" << r.skipped
                  << " max_rel_err=" << r.max_rel_err << (r.worst.empty() ? "" : " worst=" + r.worst) << "\n";
        ok = ok && r.pass();
    }
    return ok ? 0 : 1;
}

int cmd_ablate(const Common &c, const std::string &scene_cfg, const fs::path &out, long curve_interval) {
    const auto cfg = train_config(c, gather_config(c));
    io::Config skv;
    if (!scene_cfg.empty())
        skv = io::read_config(scene_cfg);
    const auto spec = synth_spec_from_config(skv);
    const auto ds = generate_synthetic(spec);
    const auto res = ablation_residual_vs_direct(ds, cfg, curve_interval);

    auto run_json = [](const AblationRun &r) {
        json curve = json::array();
        for (const auto &p : r.curve)
            curve.push_back({{"iteration", p.iteration}, {"psnr", p.psnr}});
        return json{{"name", r.name},
                    {"final_train_psnr", r.final_train_psnr},
                    {"final_eval_psnr", r.final_eval_psnr},
                    {"curve", curve}};
    };
    json j{{"iterations", res.iterations},
           {"residual_reach_iteration", res.residual_reach_iteration},
           {"speed_pass", res.speed_pass},
           {"ordering_pass", res.ordering_pass},
           {"runs", {run_json(res.full), run_json(res.direct), run_json(res.no_calibration)}}};
    if (!out.empty()) {
        auto f = io::open_out(out);
        f << j.dump(2) << '\n';
        io::check_written(f, out);
    }
    for (const auto *r : {&res.full, &res.direct, &res.no_calibration})
        std::cout << r->name << ": train psnr " << r->final_train_psnr << " eval psnr " << r->final_eval_psnr
                  << "\n";
    std::cout << "residual reaches direct's final psnr at iteration " << res.residual_reach_iteration << " of "
              << res.iterations << "\n";
    return 0;
}

int cmd_export(const fs::path &ckpt, const fs::path &out, const std::string &what) {
    const auto model = io::load_checkpoint(ckpt);
    io::PlyTable t;
    const auto f = model_forward(model);
    if (what == "anchors") {
        t.properties = {{"x", "float"},   {"y", "float"},     {"z", "float"},
                        {"red", "uchar"}, {"green", "uchar"}, {"blue", "uchar"}};
        for (std::size_t j = 0; j < model.anchors.size(); ++j) {
            const Vec3 &p = f.world_mu[j];
            const Vec3 &col = model.anchors.anchors[j].nominal_color;
            t.rows.push_back({p.x(), p.y(), p.z(), double(io::quantize_u8(col.x())), double(io::quantize_u8(col.y())),
                              double(io::quantize_u8(col.z()))});
        }
    } else {
        t.properties = {{"x", "float"},       {"y", "float"},       {"z", "float"},     {"red", "uchar"},
                        {"green", "uchar"},   {"blue", "uchar"},    {"opacity", "float"}, {"scale_0", "float"},
                        {"scale_1", "float"}, {"scale_2", "float"}, {"rot_0", "float"}, {"rot_1", "float"},
                        {"rot_2", "float"},   {"rot_3", "float"}};
        for (const auto &s : f.splats)
            t.rows.push_back({s.mu.x(), s.mu.y(), s.mu.z(), double(io::quantize_u8(s.color.x())),
                              double(io::quantize_u8(s.color.y())), double(io::quantize_u8(s.color.z())), s.opacity,
                              s.scale.x(), s.scale.y(), s.scale.z(), s.rot.w, s.rot.x, s.rot.y, s.rot.z});
    }
    io::write_ply(out, t);
    std::cout << "wrote " << t.rows.size() << " " << what << " to " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"anchored Gaussian splatting with per-view depth-scale calibration"};
    app.require_subcommand(1);
    Common c;

    fs::path out, data, ckpt, log, ckpt_dir;
    std::string split = "eval", what = "anchors", scene_cfg;
    int stride_frames = 1;
    long progress = 100, curve_interval = 50;
    double h = 1e-4, tol = 1e-3;

    auto *gen = app.add_subcommand("generate", "write a synthetic dataset");
    add_common(gen, c, true);
    gen->add_option("--out", out, "dataset directory")->required();

    auto *train = app.add_subcommand("train", "train a model on a dataset directory");
    add_common(train, c, true);
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--out", out, "final checkpoint path")->required();
    train->add_option("--log", log, "per-step loss log (newline-delimited JSON)");
    train->add_option("--checkpoint-dir", ckpt_dir, "directory for periodic checkpoints");
    train->add_option("--stride-frames", stride_frames, "use every n-th frame")->check(CLI::PositiveNumber);
    train->add_option("--progress", progress, "print progress every n steps (0 disables)");

    auto *rend = app.add_subcommand("render", "render views from a checkpoint");
    add_common(rend, c, false);
    rend->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    rend->add_option("--data", data, "dataset directory supplying the cameras")->required();
    rend->add_option("--out", out, "output directory")->required();
    rend->add_option("--split", split, "views to render")->check(CLI::IsMember({"train", "eval", "all"}));

    auto *ev = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint against a dataset");
    add_common(ev, c, false);
    ev->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "dataset directory")->required();
    ev->add_option("--out", out, "metrics file (newline-delimited JSON); stdout if omitted");
    ev->add_option("--split", split, "views to evaluate")->check(CLI::IsMember({"train", "eval", "all"}));

    auto *gc = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
    add_common(gc, c, false);
    gc->add_option("--step", h, "central-difference step")->check(CLI::PositiveNumber);
    gc->add_option("--tol", tol, "relative error tolerance")->check(CLI::PositiveNumber);

    auto *abl = app.add_subcommand("ablate", "residual vs direct decoder and calibration ablation");
    add_common(abl, c, true);
    abl->add_option("--scene", scene_cfg, "synthetic scene config")->check(CLI::ExistingFile);
    abl->add_option("--out", out, "results JSON");
    abl->add_option("--curve-interval", curve_interval, "PSNR sampling interval")->check(CLI::PositiveNumber);

    auto *exp = app.add_subcommand("export", "write anchors or decoded splats as ASCII PLY");
    add_common(exp, c, false);
    exp->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    exp->add_option("--out", out, "PLY path")->required();
    exp->add_option("--what", what, "anchors or splats")->check(CLI::IsMember({"anchors", "splats"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen)
            return cmd_generate(c, out);
        if (*train)
            return cmd_train(c, data, out, log, ckpt_dir, stride_frames, progress);
        if (*rend)
            return cmd_render(c, ckpt, data, out, split);
        if (*ev)
            return cmd_eval(c, ckpt, data, out, split);
        if (*gc)
            return cmd_gradcheck(c, h, tol);
        if (*abl)
            return cmd_ablate(c, scene_cfg, out, curve_interval);
        if (*exp)
            return cmd_export(ckpt, out, what);
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
