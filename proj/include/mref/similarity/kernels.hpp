#pragma once

#include <mref/core/image.hpp>
#include <mref/similarity/match_field.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace mref::kernels {

/// H x W x C copy of a feature map so that the channels of one position are contiguous.
struct PixelMajor
{
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> v;

    PixelMajor() = default;

    explicit PixelMajor(const FeatureMap& fm)
        : height(fm.height()), width(fm.width()), channels(fm.channels()), v(fm.size())
    {
        for (int c = 0; c < channels; ++c) {
            auto p = fm.plane(c);
            for (std::size_t i = 0; i < p.size(); ++i)
                v[i * channels + c] = p[i];
        }
    }

    const float* px(int y, int x) const { return v.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
    std::size_t bytes() const { return v.size() * sizeof(float); }
};

/// Dot product with eight fixed partial sums; the summation order depends only on n.
inline float dot(const float* a, const float* b, int n)
{
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j)
            acc[j] += a[i + j] * b[i + j];
    float tail = 0.0f;
    for (; i < n; ++i)
        tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

/// Channel range [offset, offset + count) of one input subvector.
struct Subvector
{
    int offset = 0;
    int count = 0;
};

inline std::vector<Subvector> subvectors(int channels, int n_c)
{
    std::vector<Subvector> out;
    const int per = channels / n_c;
    for (int c = 0; c < n_c; ++c)
        out.push_back({c * per, per});
    return out;
}

/// Raw correlation between the input window centred at (y, x) and the candidate patch centred at
/// (py, px), over one subvector. Offsets where the input window leaves the map contribute nothing.
inline float window_dot(const PixelMajor& input, int y, int x, const PixelMajor& cand, int py, int px, int radius,
                        Subvector sv)
{
    float s = 0.0f;
    for (int dy = -radius; dy <= radius; ++dy) {
        const int iy = y + dy, cy = py + dy;
        if (iy < 0 || iy >= input.height || cy < 0 || cy >= cand.height)
            continue;
        for (int dx = -radius; dx <= radius; ++dx) {
            const int ix = x + dx, cx = px + dx;
            if (ix < 0 || ix >= input.width || cx < 0 || cx >= cand.width)
                continue;
            s += dot(input.px(iy, ix) + sv.offset, cand.px(cy, cx) + sv.offset, sv.count);
        }
    }
    return s;
}

/// Euclidean norm of the patch centred at (py, px) over one subvector, restricted to the offsets
/// where a window centred at (y, x) of an (ih x iw) input stays inside the input.
inline float window_norm(const PixelMajor& cand, int py, int px, int radius, Subvector sv, int y, int x, int ih,
                         int iw)
{
    float s = 0.0f;
    for (int dy = -radius; dy <= radius; ++dy) {
        const int iy = y + dy, cy = py + dy;
        if (iy < 0 || iy >= ih || cy < 0 || cy >= cand.height)
            continue;
        for (int dx = -radius; dx <= radius; ++dx) {
            const int ix = x + dx, cx = px + dx;
            if (ix < 0 || ix >= iw || cx < 0 || cx >= cand.width)
                continue;
            const float* p = cand.px(cy, cx) + sv.offset;
            s += dot(p, p, sv.count);
        }
    }
    return std::sqrt(s);
}

/// Norm of a full patch (all offsets inside the candidate map).
inline float patch_norm(const PixelMajor& cand, int py, int px, int radius, Subvector sv)
{
    float s = 0.0f;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const float* p = cand.px(py + dy, px + dx) + sv.offset;
            s += dot(p, p, sv.count);
        }
    return std::sqrt(s);
}

/// Input window norm over one subvector (zero padding outside the map).
inline float input_norm(const PixelMajor& input, int y, int x, int radius, Subvector sv)
{
    float s = 0.0f;
    for (int dy = -radius; dy <= radius; ++dy) {
        const int iy = y + dy;
        if (iy < 0 || iy >= input.height)
            continue;
        for (int dx = -radius; dx <= radius; ++dx) {
            const int ix = x + dx;
            if (ix < 0 || ix >= input.width)
                continue;
            const float* p = input.px(iy, ix) + sv.offset;
            s += dot(p, p, sv.count);
        }
    }
    return std::sqrt(s);
}

/// Normalised score from a raw correlation; kExcluded when the patch norm is below epsilon.
inline float normalised(float raw, float patch_norm, float window_norm, const MatchParams& p)
{
    if (patch_norm < p.norm_epsilon)
        return kExcluded;
    float s = raw / std::max(patch_norm, p.norm_epsilon);
    if (p.normalize_input)
        s /= std::max(window_norm, p.norm_epsilon);
    return s;
}

} // namespace mref::kernels
