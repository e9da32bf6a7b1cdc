#pragma once

#include <mref/core/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mref {

/// 8-bit RGB raster, row-major interleaved triples.
struct Image
{
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Image() = default;

    Image(int w, int h) : width(w), height(h), data(checked_size(w, h), 0) {}

    Image(int w, int h, std::vector<std::uint8_t> pixels) : width(w), height(h), data(std::move(pixels))
    {
        if (data.size() != checked_size(w, h))
            throw ShapeError("image data length does not match " + std::to_string(w) + "x" +
                             std::to_string(h) + "x3");
    }

    static Image filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    {
        Image img(w, h);
        for (std::size_t i = 0; i < img.data.size(); i += 3) {
            img.data[i] = r;
            img.data[i + 1] = g;
            img.data[i + 2] = b;
        }
        return img;
    }

    std::uint8_t& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
    std::uint8_t at(int y, int x, int ch) const
    {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
    }

    bool operator==(const Image&) const = default;

private:
    static std::size_t checked_size(int w, int h)
    {
        if (w < 1 || h < 1)
            throw SizeError("image dimensions must be at least 1x1");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    }
};

/// Dense C x H x W feature tensor, channel-major.
template <class T>
class BasicFeatureMap
{
public:
    using value_type = T;

    BasicFeatureMap() = default;

    BasicFeatureMap(int channels, int height, int width, T fill = T(0))
        : channels_(channels), height_(height), width_(width),
          data_(checked_size(channels, height, width), fill)
    {
    }

    BasicFeatureMap(int channels, int height, int width, std::vector<T> values)
        : channels_(channels), height_(height), width_(width), data_(std::move(values))
    {
        if (data_.size() != checked_size(channels, height, width))
            throw ShapeError("feature data length does not match C*H*W");
    }

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t bytes() const noexcept { return data_.size() * sizeof(T); }
    bool empty() const noexcept { return data_.empty(); }

    T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
    const T& at(int c, int y, int x) const
    {
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    std::span<T> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const T> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const BasicFeatureMap& o) const noexcept
    {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    /// Copy of the window [y0, y0+h) x [x0, x0+w); positions outside the map read as zero.
    BasicFeatureMap crop(int y0, int x0, int h, int w) const
    {
        BasicFeatureMap out(channels_, h, w);
        for (int c = 0; c < channels_; ++c)
            for (int y = 0; y < h; ++y) {
                const int sy = y0 + y;
                if (sy < 0 || sy >= height_)
                    continue;
                for (int x = 0; x < w; ++x) {
                    const int sx = x0 + x;
                    if (sx >= 0 && sx < width_)
                        out.at(c, y, x) = at(c, sy, sx);
                }
            }
        return out;
    }

    template <class U>
    BasicFeatureMap<U> cast() const
    {
        std::vector<U> v(data_.begin(), data_.end());
        return BasicFeatureMap<U>(channels_, height_, width_, std::move(v));
    }

    bool operator==(const BasicFeatureMap&) const = default;

private:
    static std::size_t checked_size(int c, int h, int w)
    {
        if (c < 1 || h < 1 || w < 1)
            throw ShapeError("feature map dimensions must be positive");
        return static_cast<std::size_t>(c) * h * w;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using FeatureMap = BasicFeatureMap<float>;

/// Channel-wise concatenation; all maps share spatial dims.
template <class T>
BasicFeatureMap<T> concat_channels(std::span<const BasicFeatureMap<T>> maps)
{
    if (maps.empty())
        throw ShapeError("concat_channels: no maps");
    int total = 0;
    for (const auto& m : maps) {
        if (m.height() != maps[0].height() || m.width() != maps[0].width())
            throw ShapeError("concat_channels: spatial dims differ");
        total += m.channels();
    }
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(total) * maps[0].plane_size());
    for (const auto& m : maps)
        out.insert(out.end(), m.storage().begin(), m.storage().end());
    return BasicFeatureMap<T>(total, maps[0].height(), maps[0].width(), std::move(out));
}

} // namespace mref
