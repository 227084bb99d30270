#pragma once

#include "anchorsplat/anchor_init.hpp"
#include "anchorsplat/errors.hpp"
#include "anchorsplat/scene_model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace anchorsplat {

enum class Attribute : int { Position = 0, Opacity = 1, Color = 2, Scale = 3, Rotation = 4 };

inline constexpr int kNumAttributes = 5;
inline constexpr std::array<int, kNumAttributes> kAttributeDims{3, 1, 3, 3, 4};
inline constexpr double kScaleLogClamp = 4.0;

constexpr int attribute_dim(Attribute a) { return kAttributeDims[static_cast<int>(a)]; }

using MatrixX = Eigen::MatrixXd;
using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;

// Two affine layers with a rectifier in between. All parameters live in one
// contiguous buffer: W1 (hidden x in), b1, W2 (out x hidden), b2, each
// column-major.
class Mlp2 {
  public:
    Mlp2() = default;
    Mlp2(int in_dim, int hidden_dim, int out_dim)
        : in_(in_dim), hidden_(hidden_dim), out_(out_dim),
          params_(static_cast<std::size_t>(hidden_dim) * in_dim + hidden_dim + out_dim * hidden_dim + out_dim, 0.0) {}

    int in_dim() const { return in_; }
    int hidden_dim() const { return hidden_; }
    int out_dim() const { return out_; }

    std::vector<double> &params() { return params_; }
    const std::vector<double> &params() const { return params_; }

    Eigen::Map<Eigen::MatrixXd> w1() { return {params_.data(), hidden_, in_}; }
    Eigen::Map<Eigen::VectorXd> b1() { return {params_.data() + off_b1(), hidden_}; }
    Eigen::Map<Eigen::MatrixXd> w2() { return {params_.data() + off_w2(), out_, hidden_}; }
    Eigen::Map<Eigen::VectorXd> b2() { return {params_.data() + off_b2(), out_}; }
    Eigen::Map<const Eigen::MatrixXd> w1() const { return {params_.data(), hidden_, in_}; }
    Eigen::Map<const Eigen::VectorXd> b1() const { return {params_.data() + off_b1(), hidden_}; }
    Eigen::Map<const Eigen::MatrixXd> w2() const { return {params_.data() + off_w2(), out_, hidden_}; }
    Eigen::Map<const Eigen::VectorXd> b2() const { return {params_.data() + off_b2(), out_}; }

    // Hidden layer: uniform fan-in scaling. Output layer: zeros, or uniform
    // 1/sqrt(fan-in) when `zero_output` is false.
    template <typename Rng>
    void initialize(Rng &rng, bool zero_output) {
        std::uniform_real_distribution<double> u1(-std::sqrt(6.0 / in_), std::sqrt(6.0 / in_));
        for (double &w : w1().reshaped())
            w = u1(rng);
        b1().setZero();
        if (zero_output) {
            w2().setZero();
            b2().setZero();
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
            std::uniform_real_distribution<double> u2(-bound, bound);
            for (double &w : w2().reshaped())
                w = u2(rng);
            for (double &b : b2())
                b = u2(rng);
        }
    }

    // x: in x N. Writes hidden activations (post-rectifier) and outputs.
    void forward(const Eigen::Ref<const MatrixX> &x, MatrixX &hidden, MatrixX &out) const {
        hidden.noalias() = w1() * x;
        hidden.colwise() += b1();
        hidden = hidden.cwiseMax(0.0);
        out.noalias() = w2() * hidden;
        out.colwise() += b2();
    }

    // Accumulates parameter gradients into `grad` (same layout as params) and,
    // if given, input gradients into `grad_x`.
    void backward(const Eigen::Ref<const MatrixX> &x, const MatrixX &hidden, const MatrixX &grad_out,
                  std::span<double> grad, MatrixX *grad_x) const {
        if (grad.size() != params_.size())
            throw UsageError("gradient buffer does not match parameter layout");
        Eigen::Map<Eigen::MatrixXd> gw1(grad.data(), hidden_, in_);
        Eigen::Map<Eigen::VectorXd> gb1(grad.data() + off_b1(), hidden_);
        Eigen::Map<Eigen::MatrixXd> gw2(grad.data() + off_w2(), out_, hidden_);
        Eigen::Map<Eigen::VectorXd> gb2(grad.data() + off_b2(), out_);

        gw2.noalias() += grad_out * hidden.transpose();
        gb2 += grad_out.rowwise().sum();
        MatrixX grad_h = w2().transpose() * grad_out;
        grad_h = (hidden.array() > 0.0).select(grad_h, 0.0);
        gw1.noalias() += grad_h * x.transpose();
        gb1 += grad_h.rowwise().sum();
        if (grad_x)
            grad_x->noalias() += w1().transpose() * grad_h;
    }

  private:
    std::size_t off_b1() const { return static_cast<std::size_t>(hidden_) * in_; }
    std::size_t off_w2() const { return off_b1() + hidden_; }
    std::size_t off_b2() const { return off_w2() + static_cast<std::size_t>(out_) * hidden_; }

    int in_ = 0;
    int hidden_ = 0;
    int out_ = 0;
    std::vector<double> params_;
};

struct DecoderOptions {
    int feature_dim = kFeatureDim;
    int hidden = 32;
    int k = 5;
    double offset_bound = 0.1;
    // Predict color directly from the feature (sigmoid), ignoring the
    // anchor's nominal color. Used for the decoder-form ablation.
    bool direct_color = false;
};

// Activated residuals for one child splat.
struct ChildResidual {
    Vec3 offset = Vec3::Zero();
    Vec3 color = Vec3::Zero(); // Δc, or the absolute color in direct mode
    double opacity = 0.0;
    Vec3 scale = Vec3::Ones();
    Vec4 rot = Vec4::Zero();
};

// Per-attribute raw decoder state for a batch of anchors.
struct DecodeCache {
    int count = 0;
    std::array<MatrixX, kNumAttributes> hidden;
    std::array<MatrixX, kNumAttributes> raw; // (k * dim) x count
};

using DecoderGrads = std::array<std::vector<double>, kNumAttributes>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

class DecoderBank {
  public:
    DecoderBank() = default;
    explicit DecoderBank(const DecoderOptions &opt) : opt_(opt) {
        if (opt.k < 1)
            throw ConfigError("children per anchor must be >= 1");
        if (!(opt.offset_bound > 0.0))
            throw ConfigError("offset bound must be positive");
        for (int a = 0; a < kNumAttributes; ++a)
            mlps_[a] = Mlp2(opt.feature_dim, opt.hidden, opt.k * kAttributeDims[a]);
    }

    const DecoderOptions &options() const { return opt_; }
    int k() const { return opt_.k; }
    Mlp2 &mlp(Attribute a) { return mlps_[static_cast<int>(a)]; }
    const Mlp2 &mlp(Attribute a) const { return mlps_[static_cast<int>(a)]; }
    std::array<Mlp2, kNumAttributes> &mlps() { return mlps_; }
    const std::array<Mlp2, kNumAttributes> &mlps() const { return mlps_; }

    // Output layers start at zero so every residual is exactly neutral; the
    // direct-form color decoder instead starts from a random output layer.
    template <typename Rng>
    void initialize(Rng &rng) {
        for (int a = 0; a < kNumAttributes; ++a) {
            const bool direct = opt_.direct_color && a == static_cast<int>(Attribute::Color);
            mlps_[a].initialize(rng, !direct);
        }
    }

    DecoderGrads zero_grads() const {
        DecoderGrads g;
        for (int a = 0; a < kNumAttributes; ++a)
            g[a].assign(mlps_[a].params().size(), 0.0);
        return g;
    }

    // features: feature_dim x N.
    DecodeCache decode(const Eigen::Ref<const MatrixX> &features) const {
        if (features.rows() != opt_.feature_dim)
            throw InputError("feature dimension mismatch");
        if (!features.allFinite())
            throw NumericError("non-finite anchor feature");
        DecodeCache cache;
        cache.count = static_cast<int>(features.cols());
        for (int a = 0; a < kNumAttributes; ++a)
            mlps_[a].forward(features, cache.hidden[a], cache.raw[a]);
        return cache;
    }

    ChildResidual residual(const DecodeCache &cache, int anchor, int child) const {
        ChildResidual r;
        const auto raw = [&](Attribute a, int d) {
            return cache.raw[static_cast<int>(a)](child * attribute_dim(a) + d, anchor);
        };
        for (int d = 0; d < 3; ++d) {
            r.offset[d] = opt_.offset_bound * std::tanh(raw(Attribute::Position, d));
            r.color[d] = opt_.direct_color ? sigmoid(raw(Attribute::Color, d)) : std::tanh(raw(Attribute::Color, d));
            r.scale[d] = std::exp(std::clamp(raw(Attribute::Scale, d), -kScaleLogClamp, kScaleLogClamp));
        }
        r.opacity = std::tanh(raw(Attribute::Opacity, 0));
        for (int d = 0; d < 4; ++d)
            r.rot[d] = raw(Attribute::Rotation, d);
        return r;
    }

    // Accumulates into `grads`; adds feature gradients into `grad_features`
    // when given (feature_dim x N).
    void backward(const Eigen::Ref<const MatrixX> &features, const DecodeCache &cache,
                  const std::array<MatrixX, kNumAttributes> &grad_raw, DecoderGrads &grads,
                  MatrixX *grad_features) const {
        if (cache.count != features.cols() || cache.raw[0].cols() != features.cols())
            throw UsageError("decoder backward called without a matching forward cache");
        for (int a = 0; a < kNumAttributes; ++a) {
            if (grad_raw[a].rows() != cache.raw[a].rows() || grad_raw[a].cols() != cache.raw[a].cols())
                throw UsageError("upstream gradient shape does not match decoder output");
            mlps_[a].backward(features, cache.hidden[a], grad_raw[a], grads[a], grad_features);
        }
    }

  private:
    DecoderOptions opt_;
    std::array<Mlp2, kNumAttributes> mlps_;
};

inline ConstMatrixMap feature_matrix(const AnchorSet &set) {
    return {set.features.data(), set.feature_dim, static_cast<Eigen::Index>(set.size())};
}

inline std::vector<ChildResidual> decode_residuals(const DecoderBank &bank, std::span<const double> feature) {
    Eigen::Map<const Eigen::VectorXd> f(feature.data(), static_cast<Eigen::Index>(feature.size()));
    const DecodeCache cache = bank.decode(f);
    std::vector<ChildResidual> out;
    for (int c = 0; c < bank.k(); ++c)
        out.push_back(bank.residual(cache, 0, c));
    return out;
}

// μ = pᵂ + Δμ, c = clamp(c̄ + Δc), s = s̄ ⊙ Δs, o = clamp(ō + Δo),
// q = normalize(identity + Δq).
inline GaussianSplat spawn_splat(const Anchor &anchor, const Vec3 &world_mu, const ChildResidual &r,
                                 bool direct_color) {
    GaussianSplat s;
    s.mu = world_mu + r.offset;
    for (int d = 0; d < 3; ++d)
        s.color[d] = direct_color ? r.color[d] : clamp01(anchor.nominal_color[d] + r.color[d]);
    s.opacity = clamp01(anchor.nominal_opacity + r.opacity);
    s.scale = anchor.nominal_scale.cwiseProduct(r.scale);
    s.rot = Quat::from_vec(anchor.nominal_rot.vec() + r.rot).normalized();
    return s;
}

inline std::vector<GaussianSplat> spawn_splats(const Anchor &anchor, const Vec3 &world_mu,
                                               std::span<const ChildResidual> residuals, bool direct_color = false) {
    std::vector<GaussianSplat> out;
    out.reserve(residuals.size());
    for (const auto &r : residuals)
        out.push_back(spawn_splat(anchor, world_mu, r, direct_color));
    return out;
}

// Maps a splat gradient back to the raw decoder outputs of one child and
// returns the gradient with respect to the anchor's world position.
inline Vec3 spawn_backward(const DecoderBank &bank, const DecodeCache &cache, const Anchor &anchor, int anchor_idx,
                           int child, const SplatGrad &g, std::array<MatrixX, kNumAttributes> &grad_raw) {
    const auto &opt = bank.options();
    const auto raw = [&](Attribute a, int d) {
        return cache.raw[static_cast<int>(a)](child * attribute_dim(a) + d, anchor_idx);
    };
    const auto graw = [&](Attribute a, int d) -> double & {
        return grad_raw[static_cast<int>(a)](child * attribute_dim(a) + d, anchor_idx);
    };

    for (int d = 0; d < 3; ++d) {
        const double t = std::tanh(raw(Attribute::Position, d));
        graw(Attribute::Position, d) += g.mu[d] * opt.offset_bound * (1.0 - t * t);

        const double yc = raw(Attribute::Color, d);
        if (opt.direct_color) {
            const double sg = sigmoid(yc);
            graw(Attribute::Color, d) += g.color[d] * sg * (1.0 - sg);
        } else {
            const double tc = std::tanh(yc);
            const double combined = anchor.nominal_color[d] + tc;
            if (combined >= 0.0 && combined <= 1.0)
                graw(Attribute::Color, d) += g.color[d] * (1.0 - tc * tc);
        }

        const double ys = raw(Attribute::Scale, d);
        if (ys >= -kScaleLogClamp && ys <= kScaleLogClamp)
            graw(Attribute::Scale, d) += g.scale[d] * anchor.nominal_scale[d] * std::exp(ys);
    }

    const double to = std::tanh(raw(Attribute::Opacity, 0));
    const double combined_o = anchor.nominal_opacity + to;
    if (combined_o >= 0.0 && combined_o <= 1.0)
        graw(Attribute::Opacity, 0) += g.opacity * (1.0 - to * to);

    Vec4 v = anchor.nominal_rot.vec();
    for (int d = 0; d < 4; ++d)
        v[d] += raw(Attribute::Rotation, d);
    const double n = v.norm();
    const Vec4 q = v / n;
    const Vec4 gv = (g.rot - q * q.dot(g.rot)) / n;
    for (int d = 0; d < 4; ++d)
        graw(Attribute::Rotation, d) += gv[d];

    return g.mu;
}

inline std::array<MatrixX, kNumAttributes> zero_raw_grads(const DecodeCache &cache) {
    std::array<MatrixX, kNumAttributes> g;
    for (int a = 0; a < kNumAttributes; ++a)
        g[a] = MatrixX::Zero(cache.raw[a].rows(), cache.raw[a].cols());
    return g;
}

struct DecoderBackwardResult {
    std::vector<double> feature_grad;
    DecoderGrads weight_grads;
    Vec3 world_mu_grad = Vec3::Zero();
};

// Reverse pass of spawn ∘ decode for one anchor given upstream gradients of
// its k child splats.
inline DecoderBackwardResult backward_decoder(const DecoderBank &bank, const Anchor &anchor,
                                              std::span<const double> feature, const DecodeCache &cache,
                                              std::span<const SplatGrad> upstream) {
    if (cache.count != 1)
        throw UsageError("backward_decoder expects the single-anchor forward cache");
    if (static_cast<int>(upstream.size()) != bank.k())
        throw UsageError("expected one upstream gradient per child splat");
    Eigen::Map<const Eigen::VectorXd> f(feature.data(), static_cast<Eigen::Index>(feature.size()));
    auto grad_raw = zero_raw_grads(cache);
    DecoderBackwardResult res;
    for (int c = 0; c < bank.k(); ++c)
        res.world_mu_grad += spawn_backward(bank, cache, anchor, 0, c, upstream[c], grad_raw);
    res.weight_grads = bank.zero_grads();
    MatrixX gf = MatrixX::Zero(f.rows(), 1);
    bank.backward(f, cache, grad_raw, res.weight_grads, &gf);
    res.feature_grad.assign(gf.data(), gf.data() + gf.size());
    return res;
}

template <typename Rng>
void initialize_features(AnchorSet &set, Rng &rng, double stddev = 1.0) {
    std::normal_distribution<double> n(0.0, stddev);
    for (double &f : set.features)
        f = n(rng);
}

} // namespace anchorsplat
