#pragma once

#include "anchorsplat/errors.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace anchorsplat {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One named parameter group: a list of parameter buffers sharing a learning
// rate and a step counter, each with its own first/second moments.
class ParamGroup {
  public:
    ParamGroup(std::string name, double lr) : name_(std::move(name)), lr_(lr) {}

    void add(std::span<double> params) {
        params_.push_back(params);
        m_.emplace_back(params.size(), 0.0);
        v_.emplace_back(params.size(), 0.0);
    }

    const std::string &name() const { return name_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    long steps() const { return step_; }
    std::size_t slot_count() const { return params_.size(); }
    std::span<double> slot(std::size_t i) const { return params_[i]; }
    const std::vector<double> &first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double> &second_moment(std::size_t i) const { return v_[i]; }

    // Bias-corrected Adam update; `grads[i]` must match slot i.
    void step(std::span<const std::span<const double>> grads, double lr_scale, const AdamConfig &cfg) {
        if (grads.size() != params_.size())
            throw UsageError("parameter group '" + name_ + "': gradient slot count mismatch");
        ++step_;
        const double lr = lr_ * lr_scale;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        for (std::size_t s = 0; s < params_.size(); ++s) {
            auto p = params_[s];
            auto g = grads[s];
            if (g.size() != p.size() || m_[s].size() != p.size())
                throw UsageError("parameter group '" + name_ + "': gradient shape mismatch");
            auto &m = m_[s];
            auto &v = v_[s];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                p[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
            }
            for (double x : p)
                if (!std::isfinite(x))
                    throw NumericError("parameter group '" + name_ + "' became non-finite after update");
        }
    }

  private:
    std::string name_;
    double lr_;
    long step_ = 0;
    std::vector<std::span<double>> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Cosine decay from 1 to `floor` over `total` steps.
inline double cosine_lr_scale(long step, long total, double floor = 0.1) {
    if (total <= 1)
        return 1.0;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
    return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

} // namespace anchorsplat
