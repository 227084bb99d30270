#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/gaussian_decoder.hpp"
#include "anchorsplat/losses.hpp"
#include "anchorsplat/model.hpp"
#include "anchorsplat/rasterizer.hpp"
#include "anchorsplat/synth.hpp"
#include "anchorsplat/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

// Central-difference checks of every analytic gradient in the pipeline.
// A probe is skipped when a perturbation changes a discrete decision
// (culling, alpha clamps, early termination, attribute clamps, loss kinks),
// since the function is not differentiable there.
namespace anchorsplat::gradcheck {

struct Options {
    std::uint64_t seed = 7;
    double h = 1e-4;
    double tol = 1e-3;
    // Gradients smaller than this are compared in absolute terms.
    double floor = 1e-5;
};

struct Result {
    std::string name;
    long checked = 0;
    long skipped = 0;
    double max_rel_err = 0.0;
    std::string worst;
    double tol = 1e-3;

    bool pass() const { return checked > 0 && max_rel_err < tol; }
};

inline double rel_err(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Evaluates f(x ± h) through `perturb`, which must return the loss and the
// discrete-decision signature with the parameter offset applied.
class Probe {
  public:
    Probe(std::string name, const Options &opt) : opt_(opt) {
        res_.name = std::move(name);
        res_.tol = opt.tol;
    }

    void check(const std::string &label, double analytic, std::uint64_t base_sig,
               const std::function<std::pair<double, std::uint64_t>(double)> &perturb) {
        const auto [fp, sp] = perturb(opt_.h);
        const auto [fm, sm] = perturb(-opt_.h);
        if (sp != base_sig || sm != base_sig) {
            ++res_.skipped;
            return;
        }
        const double numeric = (fp - fm) / (2 * opt_.h);
        const double e = rel_err(analytic, numeric, opt_.floor);
        ++res_.checked;
        if (e > res_.max_rel_err) {
            res_.max_rel_err = e;
            res_.worst = label + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
        }
    }

    const Result &result() const { return res_; }

  private:
    Options opt_;
    Result res_;
};

inline void mix(std::uint64_t &h, std::uint64_t v) { detail::hash_mix(h, v); }

// ---- (a) rasterizer ------------------------------------------------------------

inline std::vector<GaussianSplat> random_splats(std::mt19937_64 &rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<GaussianSplat> out;
    for (int i = 0; i < n; ++i) {
        GaussianSplat g;
        g.mu = Vec3(u(rng) - 0.5, u(rng) - 0.5, 2.0 + u(rng));
        g.rot = Quat{nd(rng), nd(rng), nd(rng), nd(rng)}.normalized();
        g.scale = Vec3(0.05 + 0.15 * u(rng), 0.05 + 0.15 * u(rng), 0.05 + 0.15 * u(rng));
        g.opacity = 0.3 + 0.6 * u(rng);
        g.color = Vec3(u(rng), u(rng), u(rng));
        out.push_back(g);
    }
    return out;
}

inline Camera probe_camera(int size = 32) {
    return Camera(Intrinsics{double(size), double(size), size / 2.0, size / 2.0, size, size}, Pose{});
}

inline Result check_rasterizer(const Options &opt) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Camera cam = probe_camera();
    auto splats = random_splats(rng, 12);
    const Vec3 bg(0.2, 0.3, 0.4);
    RasterSettings rs;

    // L = <Wc, color> + <Wd, depth> + <Wa, alpha>
    ImageF wc(32, 32, 3), wd(32, 32, 1), wa(32, 32, 1);
    for (double &v : wc.storage())
        v = u(rng);
    for (double &v : wd.storage())
        v = u(rng);
    for (double &v : wa.storage())
        v = u(rng);
    auto eval = [&](const std::vector<GaussianSplat> &s) {
        const auto r = render(s, cam, bg, rs);
        double l = 0.0;
        for (std::size_t i = 0; i < wc.storage().size(); ++i)
            l += wc.storage()[i] * r.target.color.storage()[i];
        for (std::size_t i = 0; i < wd.storage().size(); ++i)
            l += wd.storage()[i] * r.target.depth.storage()[i] + wa.storage()[i] * r.target.alpha_acc.storage()[i];
        return std::pair{l, r.cache.decision_hash};
    };
    const auto base = render(splats, cam, bg, rs);
    const auto grads = render_backward(base.cache, splats, TargetGrad{wc, wd, wa});
    const auto sig = base.cache.decision_hash;

    Probe p("rasterizer", opt);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        auto field = [&](const std::string &what, double analytic, auto &&apply) {
            p.check("splat " + std::to_string(i) + " " + what, analytic, sig, [&](double h) {
                auto s = splats;
                apply(s[i], h);
                return eval(s);
            });
        };
        for (int d = 0; d < 3; ++d) {
            field("mu" + std::to_string(d), grads[i].mu[d], [d](GaussianSplat &g, double h) { g.mu[d] += h; });
            field("scale" + std::to_string(d), grads[i].scale[d], [d](GaussianSplat &g, double h) { g.scale[d] += h; });
            field("color" + std::to_string(d), grads[i].color[d], [d](GaussianSplat &g, double h) { g.color[d] += h; });
        }
        for (int d = 0; d < 4; ++d)
            field("rot" + std::to_string(d), grads[i].rot[d], [d](GaussianSplat &g, double h) {
                Vec4 v = g.rot.vec();
                v[d] += h;
                g.rot = Quat::from_vec(v);
            });
        field("opacity", grads[i].opacity, [](GaussianSplat &g, double h) { g.opacity += h; });
    }
    return p.result();
}

// ---- (b) decoder weights and features through spawn -------------------------------

// Clamp regions hit while spawning; gradients are only checked where none flips.
inline std::uint64_t spawn_signature(const DecoderBank &bank, const DecodeCache &cache,
                                     std::span<const Anchor> anchors) {
    std::uint64_t h = 0;
    for (const auto &hid : cache.hidden)
        for (Eigen::Index i = 0; i < hid.size(); ++i)
            mix(h, hid.data()[i] > 0.0);
    for (int j = 0; j < cache.count; ++j)
        for (int c = 0; c < bank.k(); ++c) {
            const auto r = bank.residual(cache, j, c);
            const auto &raw_s = cache.raw[static_cast<int>(Attribute::Scale)];
            for (int d = 0; d < 3; ++d) {
                const double cc = anchors[j].nominal_color[d] + r.color[d];
                mix(h, cc < 0.0 ? 1 : (cc > 1.0 ? 2 : 3));
                const double ys = raw_s(c * 3 + d, j);
                mix(h, ys < -kScaleLogClamp ? 4 : (ys > kScaleLogClamp ? 5 : 6));
            }
            const double oc = anchors[j].nominal_opacity + r.opacity;
            mix(h, oc < 0.0 ? 7 : (oc > 1.0 ? 8 : 9));
        }
    return h;
}

inline Result check_decoder(const Options &opt) {
    std::mt19937_64 rng(opt.seed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    DecoderOptions dopt;
    dopt.k = 3;
    dopt.offset_bound = 0.1;
    DecoderBank bank(dopt);
    for (auto &m : bank.mlps())
        m.initialize(rng, false);

    const int n = 3;
    std::vector<Anchor> anchors(n);
    for (auto &a : anchors) {
        a.nominal_color = Vec3(0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng));
        a.nominal_opacity = 0.3 + 0.4 * u(rng);
        a.nominal_scale = Vec3(0.05, 0.07, 0.09);
    }
    MatrixX feats(dopt.feature_dim, n);
    for (Eigen::Index i = 0; i < feats.size(); ++i)
        feats.data()[i] = nd(rng);
    std::vector<Vec3> world(n);
    for (auto &w : world)
        w = Vec3(nd(rng), nd(rng), nd(rng));

    // L = Σ <W, spawned attributes>
    std::vector<SplatGrad> weights(n * dopt.k);
    for (auto &w : weights) {
        w.mu = Vec3(nd(rng), nd(rng), nd(rng));
        w.rot = Vec4(nd(rng), nd(rng), nd(rng), nd(rng));
        w.scale = Vec3(nd(rng), nd(rng), nd(rng));
        w.opacity = nd(rng);
        w.color = Vec3(nd(rng), nd(rng), nd(rng));
    }
    auto eval = [&](const DecoderBank &b, const MatrixX &f) {
        const auto cache = b.decode(f);
        double l = 0.0;
        for (int j = 0; j < n; ++j)
            for (int c = 0; c < b.k(); ++c) {
                const auto s = spawn_splat(anchors[j], world[j], b.residual(cache, j, c), false);
                const auto &w = weights[j * b.k() + c];
                l += w.mu.dot(s.mu) + w.rot.dot(s.rot.vec()) + w.scale.dot(s.scale) + w.opacity * s.opacity +
                     w.color.dot(s.color);
            }
        return std::pair{l, spawn_signature(b, cache, anchors)};
    };

    const auto cache = bank.decode(feats);
    const auto sig = spawn_signature(bank, cache, anchors);
    auto grad_raw = zero_raw_grads(cache);
    for (int j = 0; j < n; ++j)
        for (int c = 0; c < dopt.k; ++c)
            spawn_backward(bank, cache, anchors[j], j, c, weights[j * dopt.k + c], grad_raw);
    auto wgrad = bank.zero_grads();
    MatrixX fgrad = MatrixX::Zero(feats.rows(), feats.cols());
    bank.backward(feats, cache, grad_raw, wgrad, &fgrad);

    Probe p("decoder", opt);
    for (int a = 0; a < kNumAttributes; ++a)
        for (std::size_t i = 0; i < bank.mlps()[a].params().size(); ++i)
            p.check("mlp " + std::to_string(a) + " param " + std::to_string(i), wgrad[a][i], sig, [&](double h) {
                DecoderBank b = bank;
                b.mlps()[a].params()[i] += h;
                return eval(b, feats);
            });
    for (Eigen::Index i = 0; i < feats.size(); ++i)
        p.check("feature " + std::to_string(i), fgrad.data()[i], sig, [&](double h) {
            MatrixX f = feats;
            f.data()[i] += h;
            return eval(bank, f);
        });
    return p.result();
}

// ---- (c) full objective: ŝᵢ, λ̂ᵢ, features and weights through render + losses -------

struct TinyProblem {
    SceneModel model;
    std::vector<TrainingView> views;
    TrainConfig cfg;
};

inline TinyProblem tiny_problem(const Options &opt) {
    SynthSceneSpec s;
    s.seed = opt.seed;
    s.n_splats = 20;
    s.width = s.height = 32;
    s.focal = 32;
    s.n_train_views = 2;
    s.orbit_radius = 2.5;
    s.splat_scale_min = 0.1;
    s.splat_scale_max = 0.25;
    s.environment = false;
    s.edge_filter = 0.0;
    const auto ds = generate_synthetic(s);
    TinyProblem tp;
    tp.views = ds.train_views();
    tp.cfg.k = 2;
    tp.cfg.stride = 16;
    tp.cfg.voxel_resolution = 0.15;
    tp.cfg.init_opacity = 0.6;
    tp.cfg.seed = opt.seed;
    tp.cfg.weights.r = 1.5; // keep the anisotropy term active
    tp.model = initialize_model(tp.cfg, tp.views, s.background);
    std::mt19937_64 rng(opt.seed + 2);
    for (auto &m : tp.model.decoder.mlps())
        m.initialize(rng, false);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto &g : tp.model.anchors.groups) {
        g.log_depth_scale_s = nd(rng);
        g.log_depth_scale_lambda = nd(rng);
    }
    return tp;
}

// Loss value plus every discrete decision it depends on.
inline std::pair<double, std::uint64_t> objective(const SceneModel &m, const TrainingView &v, int vi,
                                                  const TrainConfig &cfg) {
    const auto fwd = model_forward(m);
    const auto r = render(fwd.splats, v.camera, m.background, cfg.raster);
    const auto &w = cfg.weights;
    const auto photo = photometric_loss(v.image, r.target.color, w.w);
    const auto depth = depth_loss(v.depth, r.target.depth, r.target.alpha_acc,
                                  m.anchors.groups[vi].depth_scale_lambda(), cfg.depth_min_alpha);
    const auto vol = volumetric_loss(fwd.splats);
    const auto an = aniso_loss(fwd.splats, w.r);
    std::uint64_t h = r.cache.decision_hash;
    mix(h, spawn_signature(m.decoder, fwd.decode, m.anchors.anchors));
    for (std::size_t i = 0; i < v.image.storage().size(); ++i)
        mix(h, r.target.color.storage()[i] > v.image.storage()[i]);
    for (std::size_t i = 0; i < v.depth.storage().size(); ++i) {
        const bool sup = valid_depth(v.depth.storage()[i]) && r.target.alpha_acc.storage()[i] >= cfg.depth_min_alpha;
        mix(h, sup ? 1 + (m.anchors.groups[vi].depth_scale_lambda() * v.depth.storage()[i] >
                          r.target.depth.storage()[i])
                   : 0);
    }
    for (const auto &s : fwd.splats) {
        int imax = 0, imin = 0;
        for (int c = 1; c < 3; ++c) {
            imax = s.scale[c] > s.scale[imax] ? c : imax;
            imin = s.scale[c] < s.scale[imin] ? c : imin;
        }
        mix(h, imax * 4 + imin + 16 * (s.scale[imax] / s.scale[imin] > w.r));
    }
    const double total = total_loss({photo.value, vol.value, depth.value, an.value}, w).total;
    return {total, h};
}

inline Result check_full_objective(const Options &opt, long weight_stride = 5) {
    auto tp = tiny_problem(opt);
    const int vi = 0;
    const auto &view = tp.views[vi];
    const auto ev = evaluate_step(tp.model, view, vi, tp.cfg);
    const auto sig = objective(tp.model, view, vi, tp.cfg).second;

    Probe p("full objective", opt);
    for (std::size_t g = 0; g < tp.model.anchors.groups.size(); ++g) {
        p.check("log s_" + std::to_string(g), ev.grads.log_s[g], sig, [&](double h) {
            SceneModel m = tp.model;
            m.anchors.groups[g].log_depth_scale_s += h;
            return objective(m, view, vi, tp.cfg);
        });
        p.check("log lambda_" + std::to_string(g), ev.grads.log_lambda[g], sig, [&](double h) {
            SceneModel m = tp.model;
            m.anchors.groups[g].log_depth_scale_lambda += h;
            return objective(m, view, vi, tp.cfg);
        });
    }
    for (std::size_t i = 0; i < tp.model.anchors.features.size(); ++i)
        p.check("feature " + std::to_string(i), ev.grads.features.data()[i], sig, [&](double h) {
            SceneModel m = tp.model;
            m.anchors.features[i] += h;
            return objective(m, view, vi, tp.cfg);
        });
    for (int a = 0; a < kNumAttributes; ++a)
        for (std::size_t i = 0; i < tp.model.decoder.mlps()[a].params().size(); i += weight_stride)
            p.check("mlp " + std::to_string(a) + " param " + std::to_string(i), ev.grads.decoder[a][i], sig,
                    [&](double h) {
                        SceneModel m = tp.model;
                        m.decoder.mlps()[a].params()[i] += h;
                        return objective(m, view, vi, tp.cfg);
                    });
    return p.result();
}

// ---- (d) depth loss ------------------------------------------------------------------

inline Result check_depth_loss(const Options &opt) {
    std::mt19937_64 rng(opt.seed + 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int w = 8, hgt = 8;
    DepthMap mono(w, hgt, 1);
    ImageF dh(w, hgt, 1), alpha(w, hgt, 1);
    for (std::size_t i = 0; i < mono.storage().size(); ++i) {
        mono.storage()[i] = u(rng) < 0.1 ? std::numeric_limits<double>::quiet_NaN() : 1.0 + 2.0 * u(rng);
        dh.storage()[i] = 1.0 + 3.0 * u(rng);
        alpha.storage()[i] = u(rng);
    }
    const double log_lambda = 0.3;
    auto eval = [&](const ImageF &d, double ll) {
        const auto r = depth_loss(mono, d, alpha, std::exp(ll));
        std::uint64_t h = 0;
        for (std::size_t i = 0; i < d.storage().size(); ++i)
            mix(h, std::exp(ll) * mono.storage()[i] > d.storage()[i]);
        return std::pair{r.value, h};
    };
    const auto base = depth_loss(mono, dh, alpha, std::exp(log_lambda));
    const auto sig = eval(dh, log_lambda).second;
    Probe p("depth loss", opt);
    for (std::size_t i = 0; i < dh.storage().size(); ++i)
        p.check("D_hat " + std::to_string(i), base.grad_depth.storage()[i], sig, [&](double h) {
            ImageF d = dh;
            d.storage()[i] += h;
            return eval(d, log_lambda);
        });
    p.check("log lambda", base.grad_log_lambda, sig, [&](double h) { return eval(dh, log_lambda + h); });
    p.check("lambda", base.grad_lambda, sig, [&](double h) {
        return eval(dh, std::log(std::exp(log_lambda) + h));
    });
    return p.result();
}

// ---- (e) photometric, volumetric and anisotropy losses --------------------------------

inline Result check_image_losses(const Options &opt) {
    std::mt19937_64 rng(opt.seed + 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageF target(8, 8, 3), rendered(8, 8, 3);
    for (double &v : target.storage())
        v = u(rng);
    for (double &v : rendered.storage())
        v = u(rng);
    Probe p("photometric/volumetric/anisotropy", opt);
    for (double w : {0.0, 0.2, 1.0}) {
        const auto base = photometric_loss(target, rendered, w);
        auto eval = [&](const ImageF &r) {
            std::uint64_t h = 0;
            for (std::size_t i = 0; i < r.storage().size(); ++i)
                mix(h, r.storage()[i] > target.storage()[i]);
            return std::pair{photometric_loss(target, r, w).value, h};
        };
        const auto sig = eval(rendered).second;
        for (std::size_t i = 0; i < rendered.storage().size(); ++i)
            p.check("photo w=" + std::to_string(w) + " px " + std::to_string(i), base.grad.storage()[i], sig,
                    [&](double h) {
                        ImageF r = rendered;
                        r.storage()[i] += h;
                        return eval(r);
                    });
    }

    std::vector<GaussianSplat> splats(30);
    for (auto &s : splats)
        s.scale = Vec3(0.01 + u(rng), 0.01 + u(rng), 0.01 + u(rng));
    const double r = 3.0;
    const auto vol = volumetric_loss(splats);
    const auto an = aniso_loss(splats, r);
    auto aniso_sig = [&](const std::vector<GaussianSplat> &ss) {
        std::uint64_t h = 0;
        for (const auto &s : ss) {
            int imax = 0, imin = 0;
            for (int c = 1; c < 3; ++c) {
                imax = s.scale[c] > s.scale[imax] ? c : imax;
                imin = s.scale[c] < s.scale[imin] ? c : imin;
            }
            mix(h, imax * 4 + imin + 16 * (s.scale[imax] / s.scale[imin] > r));
        }
        return h;
    };
    const auto sig = aniso_sig(splats);
    for (std::size_t i = 0; i < splats.size(); ++i)
        for (int d = 0; d < 3; ++d) {
            auto perturbed = [&, i, d](double h) {
                auto ss = splats;
                ss[i].scale[d] += h;
                return ss;
            };
            p.check("volumetric splat " + std::to_string(i), vol.grad[i][d], sig, [&](double h) {
                auto ss = perturbed(h);
                return std::pair{volumetric_loss(ss).value, aniso_sig(ss)};
            });
            p.check("aniso splat " + std::to_string(i), an.grad[i][d], sig, [&](double h) {
                auto ss = perturbed(h);
                return std::pair{aniso_loss(ss, r).value, aniso_sig(ss)};
            });
        }
    return p.result();
}

inline std::vector<Result> run_all(const Options &opt = {}) {
    return {check_rasterizer(opt), check_decoder(opt), check_full_objective(opt), check_depth_loss(opt),
            check_image_losses(opt)};
}

} // namespace anchorsplat::gradcheck
