#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/errors.hpp"
#include "anchorsplat/image.hpp"
#include "anchorsplat/scene_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace anchorsplat {

struct LossWeights {
    double lambda_p = 1.0;  // photometric
    double lambda_s = 0.01; // volumetric
    double lambda_d = 0.2;  // depth
    double lambda_u = 0.01; // anisotropy
    double w = 0.2;         // D-SSIM share of the photometric term
    double r = 10.0;        // anisotropy ratio threshold

    void validate() const {
        if (lambda_p < 0 || lambda_s < 0 || lambda_d < 0 || lambda_u < 0)
            throw ConfigError("loss weights must be non-negative");
        if (!(w >= 0.0 && w <= 1.0))
            throw ConfigError("D-SSIM weight must lie in [0,1]");
        if (!(r >= 1.0))
            throw ConfigError("anisotropy ratio threshold must be >= 1");
    }
};

struct ImageLoss {
    double value = 0.0;
    ImageF grad; // d value / d rendered image
};

// ---- SSIM ---------------------------------------------------------------

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-double((i - half) * (i - half)) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double &v : k)
        v /= sum;
    return k;
}

// Separable "same"-size correlation with zero padding on one channel plane.
inline std::vector<double> blur(const std::vector<double> &src, int w, int h, const std::vector<double> &k) {
    const int half = static_cast<int>(k.size()) / 2;
    std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w)
                    acc += k[i + half] * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < h)
                    acc += k[i + half] * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    return out;
}

inline std::vector<double> plane(const ImageF &img, int c) {
    std::vector<double> p(static_cast<std::size_t>(img.width()) * img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            p[y * img.width() + x] = img(x, y, c);
    return p;
}

} // namespace detail

// Mean SSIM over pixels and channels; when `grad_y` is given it receives
// d SSIM / d y.
inline double ssim(const ImageF &x, const ImageF &y, const SsimParams &prm = {}, ImageF *grad_y = nullptr) {
    require_same_shape(x, y, "ssim");
    const int w = x.width(), h = x.height(), nc = x.channels();
    const double n = static_cast<double>(w) * h * nc;
    if (n == 0)
        throw InputError("ssim: empty image");
    const auto k = detail::gaussian_kernel(prm.window, prm.sigma);
    if (grad_y)
        *grad_y = ImageF(w, h, nc);
    double total = 0.0;
    const std::size_t np = static_cast<std::size_t>(w) * h;
    for (int c = 0; c < nc; ++c) {
        const auto xp = detail::plane(x, c), yp = detail::plane(y, c);
        std::vector<double> xx(np), yy(np), xy(np);
        for (std::size_t i = 0; i < np; ++i) {
            xx[i] = xp[i] * xp[i];
            yy[i] = yp[i] * yp[i];
            xy[i] = xp[i] * yp[i];
        }
        const auto mx = detail::blur(xp, w, h, k), my = detail::blur(yp, w, h, k);
        const auto exx = detail::blur(xx, w, h, k), eyy = detail::blur(yy, w, h, k), exy = detail::blur(xy, w, h, k);
        std::vector<double> ga(np), gb(np), gcx(np);
        for (std::size_t i = 0; i < np; ++i) {
            const double sxx = exx[i] - mx[i] * mx[i];
            const double syy = eyy[i] - my[i] * my[i];
            const double sxy = exy[i] - mx[i] * my[i];
            const double n1 = 2.0 * mx[i] * my[i] + prm.c1, n2 = 2.0 * sxy + prm.c2;
            const double d1 = mx[i] * mx[i] + my[i] * my[i] + prm.c1, d2 = sxx + syy + prm.c2;
            const double s = (n1 * n2) / (d1 * d2);
            total += s;
            if (grad_y) {
                const double ds_dmy = (2.0 * mx[i] * n2) / (d1 * d2) - s * 2.0 * my[i] / d1;
                const double ds_dsyy = -s / d2;
                const double ds_dsxy = 2.0 * n1 / (d1 * d2);
                gb[i] = ds_dsyy / n;
                gcx[i] = ds_dsxy / n;
                ga[i] = ds_dmy / n - 2.0 * my[i] * gb[i] - mx[i] * gcx[i];
            }
        }
        if (grad_y) {
            const auto ba = detail::blur(ga, w, h, k), bb = detail::blur(gb, w, h, k), bc = detail::blur(gcx, w, h, k);
            for (int py = 0; py < h; ++py)
                for (int px = 0; px < w; ++px) {
                    const std::size_t i = static_cast<std::size_t>(py) * w + px;
                    (*grad_y)(px, py, c) = ba[i] + 2.0 * yp[i] * bb[i] + xp[i] * bc[i];
                }
        }
    }
    return total / n;
}

// ---- Photometric ---------------------------------------------------------

// w·(1 − SSIM)/2 + (1 − w)·mean|I − Î|, gradient with respect to Î.
inline ImageLoss photometric_loss(const ImageF &target, const ImageF &rendered, double w,
                                  const SsimParams &prm = {}) {
    require_same_shape(target, rendered, "photometric_loss");
    const double n = static_cast<double>(target.size());
    ImageLoss out;
    out.grad = ImageF(rendered.width(), rendered.height(), rendered.channels());
    double l1 = 0.0;
    const auto t = target.data();
    const auto r = rendered.data();
    auto g = out.grad.data();
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = r[i] - t[i];
        l1 += std::abs(d);
        g[i] = (1.0 - w) * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
    }
    l1 /= n;
    double dssim = 0.0;
    if (w > 0.0) {
        ImageF gs;
        const double s = ssim(target, rendered, prm, &gs);
        dssim = 0.5 * (1.0 - s);
        const auto gsd = gs.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += -0.5 * w * gsd[i];
    }
    out.value = w * dssim + (1.0 - w) * l1;
    return out;
}

// ---- Scale-consistent depth -----------------------------------------------

struct DepthLoss {
    double value = 0.0;
    ImageF grad_depth;          // d value / d rendered depth
    double grad_lambda = 0.0;   // d value / d λ̂
    double grad_log_lambda = 0.0;
    std::size_t valid_pixels = 0;
};

// Mean over supervised pixels of log(1 + |λ̂·D − D̂|). A pixel is supervised
// when its monocular depth is valid and the rendered coverage reaches
// `min_alpha`; with no such pixel the term and its gradients are zero.
inline DepthLoss depth_loss(const DepthMap &mono, const ImageF &rendered_depth, const ImageF &alpha_acc,
                            double lambda, double min_alpha = 0.5) {
    if (!(lambda > 0.0))
        throw DomainError("depth loss scale must be positive");
    require_same_shape(mono, rendered_depth, "depth_loss");
    require_same_shape(mono, alpha_acc, "depth_loss");
    DepthLoss out;
    out.grad_depth = ImageF(mono.width(), mono.height(), 1);
    const auto d = mono.data();
    const auto dh = rendered_depth.data();
    const auto a = alpha_acc.data();
    double sum = 0.0, gl = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (valid_depth(d[i]) && a[i] >= min_alpha)
            ++n;
    if (n == 0)
        return out;
    auto g = out.grad_depth.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(valid_depth(d[i]) && a[i] >= min_alpha))
            continue;
        const double e = lambda * d[i] - dh[i];
        const double ae = std::abs(e);
        sum += std::log1p(ae);
        const double sgn = e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0);
        const double de = sgn / (1.0 + ae) / static_cast<double>(n);
        g[i] = -de;
        gl += de * d[i];
    }
    out.value = sum / static_cast<double>(n);
    out.grad_lambda = gl;
    out.grad_log_lambda = gl * lambda;
    out.valid_pixels = n;
    return out;
}

// ---- Shape regularizers -----------------------------------------------------

struct SplatScaleLoss {
    double value = 0.0;
    std::vector<Vec3> grad; // per splat, d value / d scale
};

// Σ sx·sy·sz over splats.
inline SplatScaleLoss volumetric_loss(std::span<const GaussianSplat> splats) {
    SplatScaleLoss out;
    out.grad.resize(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const Vec3 &s = splats[i].scale;
        out.value += s.x() * s.y() * s.z();
        out.grad[i] = {s.y() * s.z(), s.x() * s.z(), s.x() * s.y()};
    }
    return out;
}

// Mean over splats of max(max(s)/min(s), r) − r.
inline SplatScaleLoss aniso_loss(std::span<const GaussianSplat> splats, double r) {
    if (!(r >= 1.0))
        throw DomainError("anisotropy ratio threshold must be >= 1");
    SplatScaleLoss out;
    out.grad.assign(splats.size(), Vec3::Zero());
    if (splats.empty())
        return out;
    const double inv_n = 1.0 / static_cast<double>(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const Vec3 &s = splats[i].scale;
        int imax = 0, imin = 0;
        for (int c = 1; c < 3; ++c) {
            if (s[c] > s[imax])
                imax = c;
            if (s[c] < s[imin])
                imin = c;
        }
        const double ratio = s[imax] / s[imin];
        if (ratio > r) {
            out.value += (ratio - r) * inv_n;
            out.grad[i][imax] += inv_n / s[imin];
            out.grad[i][imin] -= inv_n * s[imax] / (s[imin] * s[imin]);
        }
    }
    return out;
}

// ---- Total ----------------------------------------------------------------

struct LossComponents {
    double photo = 0.0;
    double scale = 0.0; // volumetric term
    double depth = 0.0;
    double aniso = 0.0;
};

struct LossBreakdown {
    double photo = 0.0;
    double scale = 0.0;
    double depth = 0.0;
    double aniso = 0.0;
    double total = 0.0;
};

inline LossBreakdown total_loss(const LossComponents &c, const LossWeights &w) {
    LossBreakdown b;
    b.photo = w.lambda_p * c.photo;
    b.scale = w.lambda_s * c.scale;
    b.depth = w.lambda_d * c.depth;
    b.aniso = w.lambda_u * c.aniso;
    b.total = b.photo + b.scale + b.depth + b.aniso;
    return b;
}

} // namespace anchorsplat
