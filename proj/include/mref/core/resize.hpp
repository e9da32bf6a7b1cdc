#pragma once

#include <mref/core/image.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace mref {

/// Catmull-Rom cubic convolution kernel (a = -0.5).
inline double cubic_kernel(double x)
{
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace detail {

struct CubicTaps
{
    std::array<int, 4> index;
    std::array<double, 4> weight;
};

// Half-pixel-centre mapping, edge-clamped source indices.
inline std::vector<CubicTaps> cubic_taps(int src, int dst)
{
    std::vector<CubicTaps> taps(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        const double pos = (i + 0.5) * scale - 0.5;
        const int base = static_cast<int>(std::floor(pos));
        for (int k = 0; k < 4; ++k) {
            const int s = base - 1 + k;
            taps[i].index[k] = std::clamp(s, 0, src - 1);
            taps[i].weight[k] = cubic_kernel(pos - s);
        }
    }
    return taps;
}

} // namespace detail

/// Separable bicubic resample: horizontal pass then vertical, rounded to 8 bits.
inline Image resize_bicubic(const Image& img, int new_w, int new_h)
{
    if (new_w < 1 || new_h < 1)
        throw SizeError("resize target must be at least 1x1");
    const auto tx = detail::cubic_taps(img.width, new_w);
    const auto ty = detail::cubic_taps(img.height, new_h);

    std::vector<double> rows(static_cast<std::size_t>(img.height) * new_w * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += tx[x].weight[k] * img.at(y, tx[x].index[k], c);
                rows[(static_cast<std::size_t>(y) * new_w + x) * 3 + c] = acc;
            }

    Image out(new_w, new_h);
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += ty[y].weight[k] * rows[(static_cast<std::size_t>(ty[y].index[k]) * new_w + x) * 3 + c];
                out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
            }
    return out;
}

} // namespace mref
