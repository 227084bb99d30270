#pragma once

#include "anchorsplat/errors.hpp"

#include <span>
#include <string>
#include <vector>

namespace anchorsplat {

// Dense row-major image with interleaved channels.
template <typename T>
class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T{})
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {
        if (width < 0 || height < 0 || channels < 1)
            throw InputError("invalid image shape");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T &operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    const T &operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T> &storage() { return data_; }
    const std::vector<T> &storage() const { return data_; }

    bool same_shape(const Image &o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    friend bool operator==(const Image &, const Image &) = default;

  private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<T> data_;
};

using ImageF = Image<double>;

inline void require_same_shape(const ImageF &a, const ImageF &b, const std::string &what) {
    if (!a.same_shape(b))
        throw InputError(what + ": image dimensions differ (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                         std::to_string(b.channels()) + ")");
}

} // namespace anchorsplat
