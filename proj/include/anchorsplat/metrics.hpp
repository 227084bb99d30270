#pragma once

#include "anchorsplat/image.hpp"
#include "anchorsplat/losses.hpp"
#include "anchorsplat/model.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace anchorsplat {

inline constexpr double kPsnrCap = 99.0;

inline double mse(const ImageF &a, const ImageF &b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    const auto &x = a.storage();
    const auto &y = b.storage();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

// Peak signal 1.0; identical images report kPsnrCap.
inline double psnr(const ImageF &a, const ImageF &b) {
    const double m = mse(a, b);
    if (m <= 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

struct ViewMetrics {
    int view_id = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

inline EvalReport eval_render(const SceneModel &m, std::span<const TrainingView> views, const RasterSettings &rs = {}) {
    EvalReport rep;
    if (views.empty())
        return rep;
    const auto fwd = model_forward(m);
    for (const auto &v : views) {
        const auto r = render(fwd.splats, v.camera, m.background, rs);
        ViewMetrics vm{v.id, psnr(v.image, r.target.color), ssim(v.image, r.target.color)};
        rep.mean_psnr += vm.psnr;
        rep.mean_ssim += vm.ssim;
        rep.views.push_back(vm);
    }
    rep.mean_psnr /= static_cast<double>(views.size());
    rep.mean_ssim /= static_cast<double>(views.size());
    return rep;
}

} // namespace anchorsplat
