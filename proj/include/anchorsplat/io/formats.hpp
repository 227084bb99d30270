#pragma once

#include "anchorsplat/errors.hpp"
#include "anchorsplat/image.hpp"
#include "anchorsplat/scene_model.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace anchorsplat::io {

namespace fs = std::filesystem;

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_ws(const std::string &line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok)
        out.push_back(tok);
    return out;
}

inline bool parse_double(const std::string &s, double &out) {
    const char *b = s.data();
    const char *e = b + s.size();
    if (b != e && *b == '+')
        ++b;
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

template <typename Int>
bool parse_int(const std::string &s, Int &out) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::ifstream open_in(const fs::path &p, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(p, mode);
    if (!f)
        throw IoError("cannot open '" + p.string() + "' for reading");
    return f;
}

inline std::ofstream open_out(const fs::path &p, std::ios::openmode mode = std::ios::out) {
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream f(p, mode);
    if (!f)
        throw IoError("cannot open '" + p.string() + "' for writing");
    return f;
}

inline void check_written(std::ofstream &f, const fs::path &p) {
    f.flush();
    if (!f)
        throw IoError("failed writing '" + p.string() + "'");
}

// ---- 8-bit RGB images ------------------------------------------------------

inline std::uint8_t quantize_u8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_ppm(const fs::path &p, const ImageF &img) {
    if (img.channels() != 3)
        throw InputError("write_ppm expects a 3-channel image");
    auto f = open_out(p, std::ios::binary);
    f << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<char> row(static_cast<std::size_t>(img.width()) * 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[x * 3 + c] = static_cast<char>(quantize_u8(img(x, y, c)));
        f.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    check_written(f, p);
}

inline ImageF read_ppm(const fs::path &p) {
    auto f = open_in(p, std::ios::binary);
    const auto next_token = [&]() {
        std::string tok;
        char ch;
        while (f.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(f, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty())
                    break;
                continue;
            }
            tok.push_back(ch);
        }
        return tok;
    };
    if (next_token() != "P6")
        throw FormatError("'" + p.string() + "' is not a binary PPM (P6)");
    int w = 0, h = 0, maxv = 0;
    if (!parse_int(next_token(), w) || !parse_int(next_token(), h) || !parse_int(next_token(), maxv) || w < 1 ||
        h < 1 || maxv != 255)
        throw FormatError("'" + p.string() + "': unsupported PPM header (8-bit only)");
    ImageF img(w, h, 3);
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size()))
        throw FormatError("'" + p.string() + "': truncated pixel data");
    for (std::size_t i = 0; i < buf.size(); ++i)
        img.storage()[i] = buf[i] / 255.0;
    return img;
}

inline ImageF read_png(const fs::path &p) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, p.string().c_str()))
        throw FormatError("'" + p.string() + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError("'" + p.string() + "': " + image.message);
    }
    ImageF img(static_cast<int>(image.width), static_cast<int>(image.height), 3);
    for (std::size_t i = 0; i < buf.size(); ++i)
        img.storage()[i] = buf[i] / 255.0;
    return img;
}

inline void write_png(const fs::path &p, const ImageF &img) {
    if (img.channels() != 3)
        throw InputError("write_png expects a 3-channel image");
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::vector<unsigned char> buf(img.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = quantize_u8(img.storage()[i]);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, p.string().c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("'" + p.string() + "': " + image.message);
}

inline ImageF read_image(const fs::path &p) {
    const auto ext = p.extension().string();
    if (ext == ".png" || ext == ".PNG")
        return read_png(p);
    return read_ppm(p);
}

// ---- PFM depth (single channel, little-endian, bottom-to-top rows) ----------

namespace detail {
inline std::uint32_t bswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}
} // namespace detail

inline void write_pfm(const fs::path &p, const ImageF &img) {
    if (img.channels() != 1)
        throw InputError("write_pfm expects a single-channel image");
    auto f = open_out(p, std::ios::binary);
    f << "Pf\n" << img.width() << " " << img.height() << "\n-1.0\n";
    std::vector<std::uint32_t> row(img.width());
    for (int y = img.height() - 1; y >= 0; --y) {
        for (int x = 0; x < img.width(); ++x) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(img(x, y)));
            if constexpr (std::endian::native == std::endian::big)
                bits = detail::bswap32(bits);
            row[x] = bits;
        }
        f.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    check_written(f, p);
}

inline ImageF read_pfm(const fs::path &p) {
    auto f = open_in(p, std::ios::binary);
    std::string magic, line;
    std::getline(f, magic);
    if (magic != "Pf")
        throw FormatError("'" + p.string() + "' is not a single-channel PFM");
    std::getline(f, line);
    const auto dims = split_ws(line);
    int w = 0, h = 0;
    if (dims.size() != 2 || !parse_int(dims[0], w) || !parse_int(dims[1], h) || w < 1 || h < 1)
        throw FormatError("'" + p.string() + "': bad PFM dimensions");
    std::getline(f, line);
    double scale = 0.0;
    if (!parse_double(split_ws(line).empty() ? "" : split_ws(line)[0], scale) || scale == 0.0)
        throw FormatError("'" + p.string() + "': bad PFM scale line");
    const bool little = scale < 0.0;
    ImageF img(w, h, 1);
    std::vector<std::uint32_t> row(w);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char *>(row.data()), static_cast<std::streamsize>(row.size() * 4));
        if (f.gcount() != static_cast<std::streamsize>(row.size() * 4))
            throw FormatError("'" + p.string() + "': truncated PFM data");
        for (int x = 0; x < w; ++x) {
            std::uint32_t bits = row[x];
            if ((std::endian::native == std::endian::little) != little)
                bits = detail::bswap32(bits);
            img(x, y) = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    return img;
}

// ---- Poses -------------------------------------------------------------------

struct PoseFile {
    std::vector<Pose> world_to_cam;
    std::vector<std::string> warnings;
};

inline constexpr double kQuatWarnTolerance = 1e-3;

// `idx tx ty tz qw qx qy qz` per line, camera-to-world; '#' starts a comment.
inline PoseFile parse_poses(std::istream &in, const std::string &source = "poses") {
    PoseFile out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        const auto tok = split_ws(line);
        if (tok.empty())
            continue;
        if (tok.size() != 8)
            throw ParseError(source + ": expected 8 fields 'idx tx ty tz qw qx qy qz', got " +
                                 std::to_string(tok.size()),
                             lineno);
        long idx = -1;
        if (!parse_int(tok[0], idx))
            throw ParseError(source + ": bad index '" + tok[0] + "'", lineno);
        double v[7];
        for (int i = 0; i < 7; ++i)
            if (!parse_double(tok[i + 1], v[i]) || !std::isfinite(v[i]))
                throw ParseError(source + ": bad number '" + tok[i + 1] + "'", lineno);
        if (idx != static_cast<long>(out.world_to_cam.size()))
            throw FormatError(source + ": pose indices must be contiguous from 0 (line " + std::to_string(lineno) +
                              " has index " + std::to_string(idx) + ", expected " +
                              std::to_string(out.world_to_cam.size()) + ")");
        Quat q{v[3], v[4], v[5], v[6]};
        const double n = q.norm();
        if (!(n > 0.0))
            throw ParseError(source + ": zero-norm quaternion", lineno);
        if (std::abs(n - 1.0) > kQuatWarnTolerance)
            out.warnings.push_back(source + " line " + std::to_string(lineno) + ": quaternion norm " +
                                   format_double(n) + " renormalized");
        const Pose c2w{q.normalized(), Vec3(v[0], v[1], v[2])};
        out.world_to_cam.push_back(c2w.inverse());
    }
    return out;
}

inline PoseFile read_poses(const fs::path &p) {
    auto f = open_in(p);
    return parse_poses(f, p.string());
}

inline void write_poses(const fs::path &p, const std::vector<Pose> &world_to_cam) {
    auto f = open_out(p);
    for (std::size_t i = 0; i < world_to_cam.size(); ++i) {
        const Pose c2w = world_to_cam[i].inverse();
        f << i << ' ' << format_double(c2w.t.x()) << ' ' << format_double(c2w.t.y()) << ' '
          << format_double(c2w.t.z()) << ' ' << format_double(c2w.rot.w) << ' ' << format_double(c2w.rot.x) << ' '
          << format_double(c2w.rot.y) << ' ' << format_double(c2w.rot.z) << '\n';
    }
    check_written(f, p);
}

// ---- Intrinsics ----------------------------------------------------------------

inline Intrinsics read_intrinsics(const fs::path &p) {
    auto f = open_in(p);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto tok = split_ws(line);
        if (tok.empty() || tok[0][0] == '#')
            continue;
        if (tok.size() != 6)
            throw ParseError(p.string() + ": expected 'fx fy cx cy width height'", lineno);
        Intrinsics k;
        if (!parse_double(tok[0], k.fx) || !parse_double(tok[1], k.fy) || !parse_double(tok[2], k.cx) ||
            !parse_double(tok[3], k.cy) || !parse_int(tok[4], k.width) || !parse_int(tok[5], k.height))
            throw ParseError(p.string() + ": malformed intrinsics", lineno);
        k.validate();
        return k;
    }
    throw FormatError(p.string() + ": no intrinsics line found");
}

inline void write_intrinsics(const fs::path &p, const Intrinsics &k) {
    auto f = open_out(p);
    f << format_double(k.fx) << ' ' << format_double(k.fy) << ' ' << format_double(k.cx) << ' '
      << format_double(k.cy) << ' ' << k.width << ' ' << k.height << '\n';
    check_written(f, p);
}

// ---- Flat key=value config ----------------------------------------------------

using Config = std::map<std::string, std::string>;

inline std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline Config parse_config(std::istream &in, const std::string &source = "config") {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(source + ": expected key=value", lineno);
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ParseError(source + ": empty key", lineno);
        cfg[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

inline Config read_config(const fs::path &p) {
    auto f = open_in(p);
    return parse_config(f, p.string());
}

inline void write_config(const fs::path &p, const Config &cfg) {
    auto f = open_out(p);
    for (const auto &[k, v] : cfg)
        f << k << '=' << v << '\n';
    check_written(f, p);
}

// ---- ASCII PLY ------------------------------------------------------------------

struct PlyProperty {
    std::string name;
    std::string type; // "float" or "uchar"
};

struct PlyTable {
    std::vector<PlyProperty> properties;
    std::vector<std::vector<double>> rows;
};

inline void write_ply(const fs::path &p, const PlyTable &t) {
    auto f = open_out(p);
    f << "ply\nformat ascii 1.0\nelement vertex " << t.rows.size() << '\n';
    for (const auto &prop : t.properties)
        f << "property " << prop.type << ' ' << prop.name << '\n';
    f << "end_header\n";
    for (const auto &row : t.rows) {
        if (row.size() != t.properties.size())
            throw UsageError("PLY row width does not match the property list");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i)
                f << ' ';
            if (t.properties[i].type == "uchar")
                f << static_cast<int>(std::lround(std::clamp(row[i], 0.0, 255.0)));
            else
                f << format_double(row[i]);
        }
        f << '\n';
    }
    check_written(f, p);
}

inline PlyTable read_ply(const fs::path &p) {
    auto f = open_in(p);
    std::string line;
    std::size_t lineno = 0;
    const auto next = [&]() {
        if (!std::getline(f, line))
            throw FormatError(p.string() + ": unexpected end of PLY file");
        ++lineno;
        return split_ws(line);
    };
    if (auto t = next(); t.size() != 1 || t[0] != "ply")
        throw FormatError(p.string() + ": missing 'ply' magic");
    if (auto t = next(); t.size() != 3 || t[0] != "format" || t[1] != "ascii")
        throw FormatError(p.string() + ": only ASCII PLY is supported");
    PlyTable table;
    std::size_t count = 0;
    for (;;) {
        auto t = next();
        if (t.empty() || t[0] == "comment")
            continue;
        if (t[0] == "end_header")
            break;
        if (t[0] == "element") {
            if (t.size() != 3 || t[1] != "vertex" || !parse_int(t[2], count))
                throw ParseError(p.string() + ": unsupported element line", lineno);
        } else if (t[0] == "property" && t.size() == 3) {
            table.properties.push_back({t[2], t[1]});
        } else {
            throw ParseError(p.string() + ": unsupported header line", lineno);
        }
    }
    for (std::size_t i = 0; i < count; ++i) {
        auto t = next();
        if (t.size() != table.properties.size())
            throw ParseError(p.string() + ": vertex has wrong number of values", lineno);
        std::vector<double> row(t.size());
        for (std::size_t c = 0; c < t.size(); ++c)
            if (!parse_double(t[c], row[c]))
                throw ParseError(p.string() + ": bad number '" + t[c] + "'", lineno);
        table.rows.push_back(std::move(row));
    }
    return table;
}

} // namespace anchorsplat::io
