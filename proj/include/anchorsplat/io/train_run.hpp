#pragma once

#include "anchorsplat/io/checkpoint.hpp"
#include "anchorsplat/io/dataset.hpp"
#include "anchorsplat/metrics.hpp"
#include "anchorsplat/trainer.hpp"

#include "json.hpp"

#include <functional>
#include <iostream>
#include <optional>

namespace anchorsplat::io {

struct TrainRunOptions {
    fs::path checkpoint;     // final checkpoint
    fs::path log;            // newline-delimited JSON, one record per step; empty disables
    fs::path checkpoint_dir; // periodic checkpoints; empty disables
    std::ostream *progress = nullptr;
    long progress_interval = 100;
};

inline nlohmann::json step_record(const StepReport &r, const Trainer &t, bool with_scales) {
    nlohmann::json j;
    j["step"] = r.step;
    j["view"] = t.views()[r.view].id;
    j["photo"] = r.loss.photo;
    j["scale"] = r.loss.scale;
    j["depth"] = r.loss.depth;
    j["aniso"] = r.loss.aniso;
    j["total"] = r.loss.total;
    if (with_scales) {
        std::vector<double> s, l;
        for (const auto &g : t.model().anchors.groups) {
            s.push_back(g.depth_scale_s());
            l.push_back(g.depth_scale_lambda());
        }
        j["s_hat"] = s;
        j["lambda_hat"] = l;
    }
    return j;
}

inline nlohmann::json eval_record(long step, const EvalReport &rep) {
    nlohmann::json j;
    j["step"] = step;
    j["eval_mean_psnr"] = rep.mean_psnr;
    j["eval_mean_ssim"] = rep.mean_ssim;
    return j;
}

// Trains on the dataset's training split, logging and checkpointing along the
// way. Returns the per-step loss totals.
inline std::vector<double> run_training(Trainer &t, const std::vector<TrainingView> &eval_views,
                                        const TrainRunOptions &opt) {
    const auto &cfg = t.config();
    std::optional<std::ofstream> log;
    if (!opt.log.empty())
        log = open_out(opt.log);
    std::vector<double> totals;
    while (t.steps_done() < cfg.iterations) {
        const auto rep = t.step();
        totals.push_back(rep.loss.total);
        const long done = t.steps_done();
        const bool scales = cfg.scale_log_interval > 0 && (done % cfg.scale_log_interval == 0 || done == 1);
        if (log)
            *log << step_record(rep, t, scales).dump() << '\n';
        if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 && !eval_views.empty()) {
            const auto ev = eval_render(t.model(), eval_views, cfg.raster);
            if (log)
                *log << eval_record(done, ev).dump() << '\n';
            if (opt.progress)
                *opt.progress << "step " << done << " eval psnr " << ev.mean_psnr << "\n";
        }
        if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 && !opt.checkpoint_dir.empty())
            save_checkpoint(opt.checkpoint_dir / ("step_" + std::to_string(done) + ".ckpt"), t.model());
        if (opt.progress && opt.progress_interval > 0 && done % opt.progress_interval == 0)
            *opt.progress << "step " << done << " loss " << rep.loss.total << "\n";
    }
    if (log)
        check_written(*log, opt.log);
    if (!opt.checkpoint.empty())
        save_checkpoint(opt.checkpoint, t.model());
    return totals;
}

} // namespace anchorsplat::io
