#pragma once

#include <mref/core/image.hpp>

namespace mref {

/// BT.601 studio-range luma, Y in [16, 235].
inline FeatureMap rgb_to_y(const Image& img)
{
    FeatureMap y(1, img.height, img.width);
    auto out = y.plane(0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = img.data[3 * i];
        const double g = img.data[3 * i + 1];
        const double b = img.data[3 * i + 2];
        out[i] = static_cast<float>(16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0);
    }
    return y;
}

/// Pixels scaled to [0, 1] as a 3-channel map.
inline FeatureMap image_to_features(const Image& img)
{
    FeatureMap fm(3, img.height, img.width);
    for (int c = 0; c < 3; ++c) {
        auto p = fm.plane(c);
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = static_cast<float>(img.data[3 * i + c]) / 255.0f;
    }
    return fm;
}

} // namespace mref
