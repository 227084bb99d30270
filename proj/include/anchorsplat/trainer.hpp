#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/errors.hpp"
#include "anchorsplat/gaussian_decoder.hpp"
#include "anchorsplat/losses.hpp"
#include "anchorsplat/model.hpp"
#include "anchorsplat/optim.hpp"
#include "anchorsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace anchorsplat {

struct TrainConfig {
    long iterations = 2000;
    double lr_mlp = 2e-3;
    double lr_features = 5e-3;
    double lr_view_scales = 1e-3;
    double lr_floor = 0.1; // cosine decay target as a fraction of the base rate
    // Steps at the start during which only the view scales learn; the
    // decoder and features are held fixed so offsets cannot absorb scale error.
    long calibration_warmup = 0;
    LossWeights weights;
    double depth_min_alpha = 0.5;
    std::uint64_t seed = 0;
    long eval_interval = 0;
    long checkpoint_interval = 0;
    long scale_log_interval = 50;

    // anchor / decoder passthroughs
    int k = 5;
    double voxel_resolution = 0.05;
    int stride = 4;
    double offset_bound = 0.0; // <= 0 selects 2 * voxel_resolution
    double init_opacity = 0.1;
    double feature_init_std = 1.0;
    int hidden = 32;

    // ablation switches
    bool direct_color = false;   // direct-form color decoder
    bool calibrate_depth = true; // learn ŝᵢ and λ̂ᵢ

    RasterSettings raster;

    double resolved_offset_bound() const { return offset_bound > 0.0 ? offset_bound : 2.0 * voxel_resolution; }

    void validate() const {
        if (iterations < 1)
            throw ConfigError("iterations must be >= 1");
        if (calibration_warmup < 0 || calibration_warmup >= iterations)
            throw ConfigError("calibration_warmup must lie in [0, iterations)");
        if (lr_mlp < 0 || lr_features < 0 || lr_view_scales < 0)
            throw ConfigError("learning rates must be non-negative");
        if (k < 1 || stride < 1 || hidden < 1)
            throw ConfigError("k, stride and hidden width must be >= 1");
        if (!(voxel_resolution > 0))
            throw ConfigError("voxel resolution must be positive");
        weights.validate();
    }
};

struct StepReport {
    long step = 0;
    int view = 0;
    LossComponents raw;
    LossBreakdown loss;
};

// Builds the anchor set from the training views and initializes features and
// decoders from the config seed.
inline SceneModel initialize_model(const TrainConfig &cfg, std::span<const TrainingView> views,
                                   const Vec3 &background) {
    cfg.validate();
    SceneModel m;
    m.anchors = build_anchor_set(views, {cfg.voxel_resolution, cfg.stride, cfg.init_opacity});
    DecoderOptions dopt;
    dopt.feature_dim = m.anchors.feature_dim;
    dopt.hidden = cfg.hidden;
    dopt.k = cfg.k;
    dopt.offset_bound = cfg.resolved_offset_bound();
    dopt.direct_color = cfg.direct_color;
    m.decoder = DecoderBank(dopt);
    std::mt19937_64 rng(cfg.seed);
    m.decoder.initialize(rng);
    initialize_features(m.anchors, rng, cfg.feature_init_std);
    for (const auto &v : views)
        m.source_cameras.push_back(v.camera);
    m.background = background;
    return m;
}

struct StepEval {
    LossComponents raw;
    LossBreakdown loss;
    ModelGrads grads;
};

// Full training objective on one view and its gradient with respect to every
// learnable quantity of the model.
inline StepEval evaluate_step(const SceneModel &m, const TrainingView &view, int view_index, const TrainConfig &cfg) {
    const auto &w = cfg.weights;
    const auto fwd = model_forward(m);
    const auto rend = render(fwd.splats, view.camera, m.background, cfg.raster);

    const auto photo = photometric_loss(view.image, rend.target.color, w.w);
    const double lambda = m.anchors.groups.at(view_index).depth_scale_lambda();
    const auto depth = depth_loss(view.depth, rend.target.depth, rend.target.alpha_acc, lambda, cfg.depth_min_alpha);
    const auto vol = volumetric_loss(fwd.splats);
    const auto aniso = aniso_loss(fwd.splats, w.r);

    StepEval ev;
    ev.raw = {photo.value, vol.value, depth.value, aniso.value};
    ev.loss = total_loss(ev.raw, w);

    TargetGrad tg;
    tg.color = photo.grad;
    for (double &g : tg.color.storage())
        g *= w.lambda_p;
    tg.depth = depth.grad_depth;
    for (double &g : tg.depth.storage())
        g *= w.lambda_d;
    auto splat_grads = render_backward(rend.cache, fwd.splats, tg);
    for (std::size_t i = 0; i < splat_grads.size(); ++i)
        splat_grads[i].scale += w.lambda_s * vol.grad[i] + w.lambda_u * aniso.grad[i];

    ev.grads = zero_model_grads(m);
    model_backward(m, fwd, splat_grads, ev.grads);
    ev.grads.log_lambda[view_index] += w.lambda_d * depth.grad_log_lambda;
    return ev;
}

class Trainer {
  public:
    Trainer(const TrainConfig &cfg, const std::vector<TrainingView> &views, const Vec3 &background)
        : Trainer(cfg, initialize_model(cfg, views, background), views) {}

    Trainer(const TrainConfig &cfg, SceneModel model, std::vector<TrainingView> views)
        : cfg_(cfg), model_(std::move(model)), views_(std::move(views)), rng_(cfg.seed ^ 0x5bd1e995ull),
          mlp_("mlp_weights", cfg.lr_mlp), features_("anchor_features", cfg.lr_features),
          view_s_("view_s_log", cfg.calibrate_depth ? cfg.lr_view_scales : 0.0),
          view_lambda_("view_lambda_log", cfg.calibrate_depth ? cfg.lr_view_scales : 0.0) {
        cfg_.validate();
        if (views_.empty())
            throw ConfigError("no views found");
        if (views_.size() != model_.anchors.groups.size())
            throw ConfigError("view count does not match the model's view groups");
        for (auto &mlp : model_.decoder.mlps())
            mlp_.add(mlp.params());
        features_.add(model_.anchors.features);
        gather_view_scalars();
        view_s_.add(log_s_);
        view_lambda_.add(log_lambda_);
    }

    Trainer(const Trainer &) = delete;
    Trainer &operator=(const Trainer &) = delete;

    const SceneModel &model() const { return model_; }
    SceneModel &model() { return model_; }
    const TrainConfig &config() const { return cfg_; }
    const std::vector<TrainingView> &views() const { return views_; }
    long steps_done() const { return step_; }
    const ParamGroup &group(int i) const {
        const ParamGroup *g[] = {&mlp_, &features_, &view_s_, &view_lambda_};
        return *g[i];
    }
    const ModelGrads &last_grads() const { return last_grads_; }

    // Next view from a seeded shuffle, reshuffled every epoch.
    int next_view() {
        if (cursor_ >= order_.size()) {
            order_.resize(views_.size());
            std::iota(order_.begin(), order_.end(), 0);
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        return order_[cursor_++];
    }

    StepReport step() { return step_on(next_view()); }

    StepReport step_on(int view_index) {
        auto ev = evaluate_step(model_, views_.at(view_index), view_index, cfg_);
        StepReport rep{step_, view_index, ev.raw, ev.loss};
        if (!std::isfinite(rep.loss.total)) {
            std::ostringstream os;
            os << "non-finite loss at step " << step_ << " (view " << view_index << "): photo=" << rep.raw.photo
               << " scale=" << rep.raw.scale << " depth=" << rep.raw.depth << " aniso=" << rep.raw.aniso;
            throw NumericError(os.str());
        }
        ModelGrads &g = ev.grads;

        const double scale = cosine_lr_scale(step_, cfg_.iterations, cfg_.lr_floor);
        const AdamConfig adam;
        if (step_ >= cfg_.calibration_warmup) {
            std::vector<std::span<const double>> gs;
            for (const auto &d : g.decoder)
                gs.emplace_back(d);
            mlp_.step(gs, scale, adam);
            std::span<const double> gf(g.features.data(), static_cast<std::size_t>(g.features.size()));
            features_.step(std::span(&gf, 1), scale, adam);
        }
        {
            std::span<const double> gsv(g.log_s);
            view_s_.step(std::span(&gsv, 1), scale, adam);
            std::span<const double> glv(g.log_lambda);
            view_lambda_.step(std::span(&glv, 1), scale, adam);
        }
        scatter_view_scalars();
        last_grads_ = std::move(ev.grads);
        ++step_;
        return rep;
    }

  private:
    void gather_view_scalars() {
        log_s_.clear();
        log_lambda_.clear();
        for (const auto &g : model_.anchors.groups) {
            log_s_.push_back(g.log_depth_scale_s);
            log_lambda_.push_back(g.log_depth_scale_lambda);
        }
    }
    void scatter_view_scalars() {
        auto &groups = model_.anchors.groups;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            groups[i].log_depth_scale_s = log_s_[i];
            groups[i].log_depth_scale_lambda = log_lambda_[i];
        }
    }

    TrainConfig cfg_;
    SceneModel model_;
    std::vector<TrainingView> views_;
    std::mt19937_64 rng_;
    std::vector<int> order_;
    std::size_t cursor_ = 0;
    long step_ = 0;
    std::vector<double> log_s_, log_lambda_;
    ParamGroup mlp_, features_, view_s_, view_lambda_;
    ModelGrads last_grads_;
};

} // namespace anchorsplat
