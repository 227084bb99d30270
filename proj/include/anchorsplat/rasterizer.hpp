#pragma once

#include "anchorsplat/errors.hpp"
#include "anchorsplat/image.hpp"
#include "anchorsplat/scene_model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

namespace anchorsplat {

struct RasterSettings {
    int tile_size = 16;
    double alpha_max = 0.99;
    double alpha_min = 1.0 / 255.0;
    double transmittance_min = 1e-4;
    double dilation = kDefaultDilation;
    double near_plane = kDefaultNearPlane;
    // Footprint half-extent in standard deviations. The effective extent is
    // widened for opaque splats until the alpha skip threshold is reached,
    // so nothing outside the footprint could have contributed.
    double extent_sigma = 3.0;
    double depth_alpha_floor = 1e-6;
    // Splats whose projected center falls further than this fraction of the
    // image size outside the border are dropped. Near the camera plane the
    // affine projection degenerates and would smear one splat over the frame.
    double guard_band = 0.3;
    int workers = 1;
    bool deterministic = true;
};

struct ProjectedSplat {
    int splat_id = 0;
    Vec3 p_cam = Vec3::Zero();
    Vec2 center = Vec2::Zero();
    Mat2 cov = Mat2::Identity();
    Vec3 conic = Vec3::Zero(); // (a, b, c): inverse covariance [[a, b], [b, c]]
    double depth = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double extent = 3.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; // inclusive pixel footprint, clipped to the image

    bool covers(int px, int py) const { return px >= x0 && px <= x1 && py >= y0 && py <= y1; }
};

struct RenderTarget {
    ImageF color;     // H x W x 3
    ImageF depth;     // H x W, alpha-normalized
    ImageF alpha_acc; // H x W
    Vec3 background = Vec3::Zero();
};

struct TileSchedule {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<int> order;              // projected indices, front to back
    std::vector<std::vector<int>> lists; // per tile, projected indices front to back

    int tile_count() const { return tiles_x * tiles_y; }
    const std::vector<int> &tile(int tx, int ty) const { return lists[ty * tiles_x + tx]; }
};

struct RenderCache {
    RasterSettings settings;
    Camera camera;
    Vec3 background = Vec3::Zero();
    std::size_t splat_count = 0;
    std::vector<ProjectedSplat> projected;
    TileSchedule schedule;
    std::vector<double> final_transmittance;
    std::vector<int> contrib_end; // one past the last list entry processed, per pixel
    std::vector<double> depth_numerator;
    std::vector<double> weight_sum;
    // Hash of every discrete decision (footprint tests, skips, clamps,
    // early termination); equal hashes mean identical branch structure.
    std::uint64_t decision_hash = 0;
};

struct Rendering {
    RenderTarget target;
    RenderCache cache;
};

// Upstream gradients; an empty image means zero gradient for that output.
struct TargetGrad {
    ImageF color;
    ImageF depth;
    ImageF alpha_acc;
};

namespace detail {

inline void hash_mix(std::uint64_t &h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
}

template <typename Fn>
void for_each_tile(int tile_count, int workers, bool deterministic, Fn &&fn) {
    workers = std::max(1, std::min(workers, tile_count));
    if (workers == 1) {
        for (int t = 0; t < tile_count; ++t)
            fn(t, 0);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            if (deterministic) {
                for (int t = w; t < tile_count; t += workers)
                    fn(t, w);
            } else {
                for (int t = next++; t < tile_count; t = next++)
                    fn(t, w);
            }
        });
    }
    for (auto &th : pool)
        th.join();
}

struct AlphaEval {
    double alpha = 0.0;
    double gauss = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    bool clamped = false;
};

inline AlphaEval eval_alpha(const ProjectedSplat &ps, int px, int py, const RasterSettings &rs) {
    AlphaEval e;
    e.dx = px + 0.5 - ps.center.x();
    e.dy = py + 0.5 - ps.center.y();
    const double q = ps.conic[0] * e.dx * e.dx + 2.0 * ps.conic[1] * e.dx * e.dy + ps.conic[2] * e.dy * e.dy;
    e.gauss = std::exp(-0.5 * q);
    const double a = ps.opacity * e.gauss;
    e.clamped = a > rs.alpha_max;
    e.alpha = e.clamped ? rs.alpha_max : a;
    return e;
}

struct ScreenGrad {
    Vec2 center = Vec2::Zero();
    Vec3 conic = Vec3::Zero();
    double depth = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
};

} // namespace detail

inline double footprint_extent(double opacity, const RasterSettings &rs) {
    double e = rs.extent_sigma;
    if (opacity > rs.alpha_min)
        e = std::max(e, std::sqrt(2.0 * std::log(opacity / rs.alpha_min)));
    return e;
}

// Drops splats at or behind the near plane, splats centered outside the
// guard band and splats whose footprint misses the image; survivors keep
// input order.
inline std::vector<ProjectedSplat> cull_and_project(std::span<const GaussianSplat> splats, const Camera &cam,
                                                    const RasterSettings &rs = {}) {
    std::vector<ProjectedSplat> out;
    out.reserve(splats.size());
    const auto &k = cam.intrinsics();
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const GaussianSplat &s = splats[i];
        const Vec3 p = cam.to_camera(s.mu);
        if (!(p.z() > rs.near_plane))
            continue;
        const Mat23 t = pinhole_jacobian(k, p) * cam.rotation();
        Mat2 cov = t * compose_covariance(s.rot, s.scale) * t.transpose();
        cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
        cov.diagonal().array() += rs.dilation;
        const double det = cov.determinant();
        if (!(det > 0.0) || !std::isfinite(det))
            continue;

        ProjectedSplat ps;
        ps.splat_id = static_cast<int>(i);
        ps.p_cam = p;
        ps.center = {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
        if (ps.center.x() < -rs.guard_band * k.width || ps.center.x() > (1.0 + rs.guard_band) * k.width ||
            ps.center.y() < -rs.guard_band * k.height || ps.center.y() > (1.0 + rs.guard_band) * k.height)
            continue;
        ps.cov = cov;
        ps.conic = {cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det};
        ps.depth = p.z();
        ps.opacity = s.opacity;
        ps.color = s.color;
        ps.extent = footprint_extent(s.opacity, rs);

        const double hx = ps.extent * std::sqrt(cov(0, 0));
        const double hy = ps.extent * std::sqrt(cov(1, 1));
        const double fx0 = std::ceil(ps.center.x() - hx - 0.5), fx1 = std::floor(ps.center.x() + hx - 0.5);
        const double fy0 = std::ceil(ps.center.y() - hy - 0.5), fy1 = std::floor(ps.center.y() + hy - 0.5);
        if (!(fx1 >= 0.0 && fy1 >= 0.0 && fx0 <= k.width - 1.0 && fy0 <= k.height - 1.0) || !(fx0 <= fx1) ||
            !(fy0 <= fy1))
            continue;
        ps.x0 = static_cast<int>(std::max(fx0, 0.0));
        ps.x1 = static_cast<int>(std::min(fx1, k.width - 1.0));
        ps.y0 = static_cast<int>(std::max(fy0, 0.0));
        ps.y1 = static_cast<int>(std::min(fy1, k.height - 1.0));
        out.push_back(ps);
    }
    return out;
}

// Global front-to-back sort (ties by splat id), then bins every splat into
// each tile its footprint box touches.
inline TileSchedule tile_schedule(std::span<const ProjectedSplat> projected, int tile_size, int width, int height) {
    if (tile_size < 1)
        throw InputError("tile size must be >= 1");
    TileSchedule sch;
    sch.tile_size = tile_size;
    sch.tiles_x = (width + tile_size - 1) / tile_size;
    sch.tiles_y = (height + tile_size - 1) / tile_size;
    sch.lists.assign(static_cast<std::size_t>(sch.tiles_x) * sch.tiles_y, {});
    sch.order.resize(projected.size());
    std::iota(sch.order.begin(), sch.order.end(), 0);
    std::sort(sch.order.begin(), sch.order.end(), [&](int a, int b) {
        const auto &pa = projected[a];
        const auto &pb = projected[b];
        if (pa.depth != pb.depth)
            return pa.depth < pb.depth;
        return pa.splat_id < pb.splat_id;
    });
    for (int idx : sch.order) {
        const auto &ps = projected[idx];
        for (int ty = ps.y0 / tile_size; ty <= ps.y1 / tile_size; ++ty)
            for (int tx = ps.x0 / tile_size; tx <= ps.x1 / tile_size; ++tx)
                sch.lists[ty * sch.tiles_x + tx].push_back(idx);
    }
    return sch;
}

inline Rendering render(std::span<const GaussianSplat> splats, const Camera &cam, const Vec3 &background,
                        const RasterSettings &rs = {}) {
    const int w = cam.width(), h = cam.height();
    Rendering out;
    RenderTarget &tg = out.target;
    RenderCache &cache = out.cache;
    tg.color = ImageF(w, h, 3);
    tg.depth = ImageF(w, h, 1);
    tg.alpha_acc = ImageF(w, h, 1);
    tg.background = background;

    cache.settings = rs;
    cache.camera = cam;
    cache.background = background;
    cache.splat_count = splats.size();
    cache.projected = cull_and_project(splats, cam, rs);
    cache.schedule = tile_schedule(cache.projected, rs.tile_size, w, h);
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    cache.final_transmittance.assign(npix, 1.0);
    cache.contrib_end.assign(npix, 0);
    cache.depth_numerator.assign(npix, 0.0);
    cache.weight_sum.assign(npix, 0.0);

    const auto &sch = cache.schedule;
    std::vector<std::uint64_t> tile_hash(sch.tile_count(), 0);

    detail::for_each_tile(sch.tile_count(), rs.workers, rs.deterministic, [&](int t, int) {
        const int tx = t % sch.tiles_x, ty = t / sch.tiles_x;
        const auto &list = sch.lists[t];
        std::uint64_t hsh = 0;
        for (int py = ty * sch.tile_size; py < std::min(h, (ty + 1) * sch.tile_size); ++py) {
            for (int px = tx * sch.tile_size; px < std::min(w, (tx + 1) * sch.tile_size); ++px) {
                double trans = 1.0, num = 0.0, wsum = 0.0;
                Vec3 c = Vec3::Zero();
                int end = 0;
                for (int li = 0; li < static_cast<int>(list.size()); ++li) {
                    const ProjectedSplat &ps = cache.projected[list[li]];
                    if (!ps.covers(px, py))
                        continue;
                    const auto e = detail::eval_alpha(ps, px, py, rs);
                    if (e.alpha < rs.alpha_min)
                        continue;
                    const double next = trans * (1.0 - e.alpha);
                    if (next < rs.transmittance_min) {
                        detail::hash_mix(hsh, 0xfeedull + li);
                        break;
                    }
                    const double wgt = e.alpha * trans;
                    c += ps.color * wgt;
                    num += ps.depth * wgt;
                    wsum += wgt;
                    trans = next;
                    end = li + 1;
                    detail::hash_mix(hsh, (static_cast<std::uint64_t>(ps.splat_id) << 1) | (e.clamped ? 1u : 0u));
                }
                const std::size_t pix = static_cast<std::size_t>(py) * w + px;
                cache.final_transmittance[pix] = trans;
                cache.contrib_end[pix] = end;
                cache.depth_numerator[pix] = num;
                cache.weight_sum[pix] = wsum;
                for (int ch = 0; ch < 3; ++ch)
                    tg.color(px, py, ch) = c[ch] + trans * background[ch];
                tg.alpha_acc(px, py) = wsum;
                tg.depth(px, py) = num / std::max(wsum, rs.depth_alpha_floor);
                detail::hash_mix(hsh, static_cast<std::uint64_t>(end));
            }
        }
        tile_hash[t] = hsh;
    });
    for (auto v : tile_hash)
        detail::hash_mix(cache.decision_hash, v);
    return out;
}

// Exact reverse pass under the forward pass's discrete decisions. Blending
// state is recomputed back to front from the cached final transmittance.
inline std::vector<SplatGrad> render_backward(const RenderCache &cache, std::span<const GaussianSplat> splats,
                                              const TargetGrad &grad) {
    const Camera &cam = cache.camera;
    const int w = cam.width(), h = cam.height();
    if (splats.size() != cache.splat_count)
        throw UsageError("render_backward: splat count differs from the cached forward pass");
    if (cache.final_transmittance.size() != static_cast<std::size_t>(w) * h)
        throw UsageError("render_backward: cache is not populated");
    const auto check = [&](const ImageF &img, int ch, const char *what) {
        if (!img.empty() && (img.width() != w || img.height() != h || img.channels() != ch))
            throw UsageError(std::string("render_backward: ") + what + " gradient has the wrong shape");
    };
    check(grad.color, 3, "color");
    check(grad.depth, 1, "depth");
    check(grad.alpha_acc, 1, "alpha");

    const RasterSettings &rs = cache.settings;
    const auto &sch = cache.schedule;
    const std::size_t np = cache.projected.size();
    const int workers = std::max(1, std::min(rs.workers, sch.tile_count()));
    std::vector<std::vector<detail::ScreenGrad>> partial(workers, std::vector<detail::ScreenGrad>(np));

    detail::for_each_tile(sch.tile_count(), workers, rs.deterministic, [&](int t, int wk) {
        auto &sg = partial[wk];
        const int tx = t % sch.tiles_x, ty = t / sch.tiles_x;
        const auto &list = sch.lists[t];
        for (int py = ty * sch.tile_size; py < std::min(h, (ty + 1) * sch.tile_size); ++py) {
            for (int px = tx * sch.tile_size; px < std::min(w, (tx + 1) * sch.tile_size); ++px) {
                const std::size_t pix = static_cast<std::size_t>(py) * w + px;
                const Vec3 gc = grad.color.empty()
                                    ? Vec3::Zero()
                                    : Vec3(grad.color(px, py, 0), grad.color(px, py, 1), grad.color(px, py, 2));
                const double gd = grad.depth.empty() ? 0.0 : grad.depth(px, py);
                const double ga = grad.alpha_acc.empty() ? 0.0 : grad.alpha_acc(px, py);
                const double wsum = cache.weight_sum[pix];
                const double num = cache.depth_numerator[pix];
                const double denom = std::max(wsum, rs.depth_alpha_floor);
                const double g_num = gd / denom;
                const double g_wsum = ga + (wsum > rs.depth_alpha_floor ? -gd * num / (wsum * wsum) : 0.0);
                if (gc.isZero(0.0) && g_num == 0.0 && g_wsum == 0.0)
                    continue;

                double trans = cache.final_transmittance[pix];
                Vec3 acc_c = trans * cache.background;
                double acc_z = 0.0, acc_w = 0.0;
                for (int li = cache.contrib_end[pix] - 1; li >= 0; --li) {
                    const int idx = list[li];
                    const ProjectedSplat &ps = cache.projected[idx];
                    if (!ps.covers(px, py))
                        continue;
                    const auto e = detail::eval_alpha(ps, px, py, rs);
                    if (e.alpha < rs.alpha_min)
                        continue;
                    const double one_minus = 1.0 - e.alpha;
                    const double t_before = trans / one_minus;
                    const double wgt = e.alpha * t_before;
                    detail::ScreenGrad &g = sg[idx];
                    g.color += gc * wgt;
                    g.depth += g_num * wgt;
                    const double d_alpha = gc.dot(ps.color * t_before - acc_c / one_minus) +
                                           g_num * (ps.depth * t_before - acc_z / one_minus) +
                                           g_wsum * (t_before - acc_w / one_minus);
                    acc_c += ps.color * wgt;
                    acc_z += ps.depth * wgt;
                    acc_w += wgt;
                    trans = t_before;
                    if (e.clamped)
                        continue;
                    g.opacity += d_alpha * e.gauss;
                    const double d_q = -0.5 * e.gauss * ps.opacity * d_alpha;
                    g.conic += d_q * Vec3(e.dx * e.dx, 2.0 * e.dx * e.dy, e.dy * e.dy);
                    g.center.x() -= d_q * (2.0 * ps.conic[0] * e.dx + 2.0 * ps.conic[1] * e.dy);
                    g.center.y() -= d_q * (2.0 * ps.conic[1] * e.dx + 2.0 * ps.conic[2] * e.dy);
                }
            }
        }
    });

    std::vector<SplatGrad> out(splats.size());
    const auto &k = cam.intrinsics();
    const Mat3 &wr = cam.rotation();
    for (std::size_t pi = 0; pi < np; ++pi) {
        detail::ScreenGrad g = partial[0][pi];
        for (int wk = 1; wk < workers; ++wk) {
            const auto &o = partial[wk][pi];
            g.center += o.center;
            g.conic += o.conic;
            g.depth += o.depth;
            g.opacity += o.opacity;
            g.color += o.color;
        }
        const ProjectedSplat &ps = cache.projected[pi];
        const GaussianSplat &s = splats[ps.splat_id];
        SplatGrad &sgd = out[ps.splat_id];
        sgd.color += g.color;
        sgd.opacity += g.opacity;

        // conic = inverse(cov) with cov = [[A, B], [B, C]]
        const double ca = ps.cov(0, 0), cb = ps.cov(0, 1), cc = ps.cov(1, 1);
        const double det = ca * cc - cb * cb;
        const double id2 = 1.0 / (det * det);
        const double ga_ = g.conic[0], gb_ = g.conic[1], gc_ = g.conic[2];
        const double g_ca = id2 * (-cc * cc * ga_ + cb * cc * gb_ - cb * cb * gc_);
        const double g_cb = id2 * (2.0 * cb * cc * ga_ + (-det - 2.0 * cb * cb) * gb_ + 2.0 * ca * cb * gc_);
        const double g_cc = id2 * (-cb * cb * ga_ + cb * ca * gb_ - ca * ca * gc_);
        Mat2 g_cov;
        g_cov << g_ca, 0.5 * g_cb, 0.5 * g_cb, g_cc;

        const Vec3 &p = ps.p_cam;
        const Mat23 jac = pinhole_jacobian(k, p);
        const Mat23 t = jac * wr;
        const Mat3 m = quat_to_rotmat(s.rot) * s.scale.asDiagonal();
        const Mat3 sigma = m * m.transpose();
        const Mat3 g_sigma = t.transpose() * g_cov * t;
        const Mat23 g_t = 2.0 * g_cov * t * sigma;
        const Mat23 g_j = g_t * wr.transpose();

        const double iz = 1.0 / p.z(), iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 g_p = Vec3::Zero();
        // J00 = fx/z, J02 = -fx x/z², J11 = fy/z, J12 = -fy y/z²
        g_p.z() += g_j(0, 0) * (-k.fx * iz2);
        g_p.x() += g_j(0, 2) * (-k.fx * iz2);
        g_p.z() += g_j(0, 2) * (2.0 * k.fx * p.x() * iz3);
        g_p.z() += g_j(1, 1) * (-k.fy * iz2);
        g_p.y() += g_j(1, 2) * (-k.fy * iz2);
        g_p.z() += g_j(1, 2) * (2.0 * k.fy * p.y() * iz3);
        // u = fx x/z + cx, v = fy y/z + cy
        g_p.x() += g.center.x() * k.fx * iz;
        g_p.z() -= g.center.x() * k.fx * p.x() * iz2;
        g_p.y() += g.center.y() * k.fy * iz;
        g_p.z() -= g.center.y() * k.fy * p.y() * iz2;
        g_p.z() += g.depth;
        sgd.mu += wr.transpose() * g_p;

        const Mat3 g_m = 2.0 * g_sigma * m;
        const Mat3 r = quat_to_rotmat(s.rot);
        for (int c = 0; c < 3; ++c)
            sgd.scale[c] += g_m.col(c).dot(r.col(c));
        const Mat3 g_r = g_m * s.scale.asDiagonal();
        sgd.rot += quat_to_rotmat_backward(s.rot, g_r);
    }
    return out;
}

} // namespace anchorsplat
