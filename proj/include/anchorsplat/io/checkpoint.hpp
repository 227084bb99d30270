#pragma once

#include "anchorsplat/errors.hpp"
#include "anchorsplat/io/formats.hpp"
#include "anchorsplat/model.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

// Checkpoint container, all values little-endian:
//
//   char[8]  magic "ASPLATCK"
//   u32      version (1)
//   u32      feature_dim, hidden, k
//   f64      offset_bound
//   u8       direct_color
//   f64      voxel_resolution
//   f64[3]   background
//   u32      view count V, then per view:
//              f64 fx fy cx cy, u32 width height,
//              f64 qw qx qy qz tx ty tz   (world-to-camera),
//              f64 log ŝ, f64 log λ̂
//   u64      anchor count N, then per anchor:
//              f64[3] position_cam, u32 view_id, f64[3] nominal_mu,
//              f64[3] nominal_color, f64 nominal_opacity, f64[3] nominal_scale
//   f64[N * feature_dim]  features, anchor-major
//   5 x { u32 in, hidden, out; f64[...] params }   decoders in order
//            position, opacity, color, scale, rotation
namespace anchorsplat::io {

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'P', 'L', 'A', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t bswap64(std::uint64_t v) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i)
        r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
}

class LeWriter {
  public:
    explicit LeWriter(std::ostream &os) : os_(os) {}
    void bytes(const void *p, std::size_t n) { os_.write(static_cast<const char *>(p), static_cast<std::streamsize>(n)); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        if constexpr (std::endian::native == std::endian::big)
            v = bswap32(v);
        bytes(&v, 4);
    }
    void u64(std::uint64_t v) {
        if constexpr (std::endian::native == std::endian::big)
            v = bswap64(v);
        bytes(&v, 8);
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void vec3(const Vec3 &v) {
        for (int i = 0; i < 3; ++i)
            f64(v[i]);
    }

  private:
    std::ostream &os_;
};

class LeReader {
  public:
    LeReader(std::istream &is, std::string source) : is_(is), source_(std::move(source)) {}
    void bytes(void *p, std::size_t n) {
        is_.read(static_cast<char *>(p), static_cast<std::streamsize>(n));
        if (is_.gcount() != static_cast<std::streamsize>(n))
            throw FormatError(source_ + ": truncated checkpoint");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        if constexpr (std::endian::native == std::endian::big)
            v = bswap32(v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        if constexpr (std::endian::native == std::endian::big)
            v = bswap64(v);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Vec3 vec3() {
        Vec3 v;
        for (int i = 0; i < 3; ++i)
            v[i] = f64();
        return v;
    }

  private:
    std::istream &is_;
    std::string source_;
};

} // namespace detail

inline void write_checkpoint(std::ostream &os, const SceneModel &m) {
    detail::LeWriter w(os);
    const auto &dopt = m.decoder.options();
    const auto &set = m.anchors;
    w.bytes(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(dopt.feature_dim));
    w.u32(static_cast<std::uint32_t>(dopt.hidden));
    w.u32(static_cast<std::uint32_t>(dopt.k));
    w.f64(dopt.offset_bound);
    w.u8(dopt.direct_color ? 1 : 0);
    w.f64(set.voxel_resolution);
    w.vec3(m.background);
    w.u32(static_cast<std::uint32_t>(m.source_cameras.size()));
    for (std::size_t v = 0; v < m.source_cameras.size(); ++v) {
        const auto &cam = m.source_cameras[v];
        const auto &k = cam.intrinsics();
        w.f64(k.fx);
        w.f64(k.fy);
        w.f64(k.cx);
        w.f64(k.cy);
        w.u32(static_cast<std::uint32_t>(k.width));
        w.u32(static_cast<std::uint32_t>(k.height));
        const auto &p = cam.pose();
        w.f64(p.rot.w);
        w.f64(p.rot.x);
        w.f64(p.rot.y);
        w.f64(p.rot.z);
        w.vec3(p.t);
        w.f64(set.groups.at(v).log_depth_scale_s);
        w.f64(set.groups.at(v).log_depth_scale_lambda);
    }
    w.u64(set.anchors.size());
    for (const auto &a : set.anchors) {
        w.vec3(a.position_cam);
        w.u32(static_cast<std::uint32_t>(a.view_id));
        w.vec3(a.nominal_mu);
        w.vec3(a.nominal_color);
        w.f64(a.nominal_opacity);
        w.vec3(a.nominal_scale);
    }
    for (double f : set.features)
        w.f64(f);
    for (const auto &mlp : m.decoder.mlps()) {
        w.u32(static_cast<std::uint32_t>(mlp.in_dim()));
        w.u32(static_cast<std::uint32_t>(mlp.hidden_dim()));
        w.u32(static_cast<std::uint32_t>(mlp.out_dim()));
        for (double p : mlp.params())
            w.f64(p);
    }
}

inline SceneModel read_checkpoint(std::istream &is, const std::string &source = "checkpoint") {
    detail::LeReader r(is, source);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw FormatError(source + ": not a checkpoint (bad magic)");
    if (const auto v = r.u32(); v != kCheckpointVersion)
        throw FormatError(source + ": unsupported checkpoint version " + std::to_string(v));
    DecoderOptions dopt;
    dopt.feature_dim = static_cast<int>(r.u32());
    dopt.hidden = static_cast<int>(r.u32());
    dopt.k = static_cast<int>(r.u32());
    dopt.offset_bound = r.f64();
    dopt.direct_color = r.u8() != 0;

    SceneModel m;
    m.anchors.voxel_resolution = r.f64();
    m.anchors.feature_dim = dopt.feature_dim;
    m.background = r.vec3();
    const std::uint32_t nviews = r.u32();
    for (std::uint32_t v = 0; v < nviews; ++v) {
        Intrinsics k;
        k.fx = r.f64();
        k.fy = r.f64();
        k.cx = r.f64();
        k.cy = r.f64();
        k.width = static_cast<int>(r.u32());
        k.height = static_cast<int>(r.u32());
        Pose p;
        p.rot.w = r.f64();
        p.rot.x = r.f64();
        p.rot.y = r.f64();
        p.rot.z = r.f64();
        p.t = r.vec3();
        m.source_cameras.emplace_back(k, p);
        PerViewGroup g;
        g.view_id = static_cast<int>(v);
        g.log_depth_scale_s = r.f64();
        g.log_depth_scale_lambda = r.f64();
        m.anchors.groups.push_back(g);
    }
    const std::uint64_t n = r.u64();
    m.anchors.anchors.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Anchor &a = m.anchors.anchors[i];
        a.position_cam = r.vec3();
        a.view_id = static_cast<int>(r.u32());
        if (a.view_id < 0 || static_cast<std::uint32_t>(a.view_id) >= nviews)
            throw FormatError(source + ": anchor references unknown view " + std::to_string(a.view_id));
        a.nominal_mu = r.vec3();
        a.nominal_color = r.vec3();
        a.nominal_opacity = r.f64();
        a.nominal_scale = r.vec3();
        m.anchors.groups[a.view_id].anchor_ids.push_back(static_cast<int>(i));
    }
    m.anchors.features.resize(n * dopt.feature_dim);
    for (double &f : m.anchors.features)
        f = r.f64();
    m.decoder = DecoderBank(dopt);
    for (auto &mlp : m.decoder.mlps()) {
        const auto in = r.u32(), hid = r.u32(), out = r.u32();
        if (static_cast<int>(in) != mlp.in_dim() || static_cast<int>(hid) != mlp.hidden_dim() ||
            static_cast<int>(out) != mlp.out_dim())
            throw FormatError(source + ": decoder shape does not match header");
        for (double &p : mlp.params())
            p = r.f64();
    }
    return m;
}

inline void save_checkpoint(const fs::path &p, const SceneModel &m) {
    auto f = open_out(p, std::ios::binary);
    write_checkpoint(f, m);
    check_written(f, p);
}

inline SceneModel load_checkpoint(const fs::path &p) {
    auto f = open_in(p, std::ios::binary);
    return read_checkpoint(f, p.string());
}

} // namespace anchorsplat::io
