#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/core/resize.hpp>
#include <mref/features/extractor.hpp>
#include <mref/similarity/match_field.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace mref {

/// Swapped features and weights at every pyramid scale (index 0 = finest).
struct MultiScaleSwap
{
    std::array<FeatureMap, kPyramidLevels> swapped;
    std::array<FeatureMap, kPyramidLevels> weights;
};

struct SynthesisConfig
{
    int upscale = 4;
    /// Paste extent in low-resolution pixels; 0 selects 4 * patch_size.
    int paste_patch = 0;
    /// Blend exponent: alpha = normalised_weight^(1 / temperature).
    double temperature = 1.0;
    /// Fixed blend factor overriding the weight-derived one.
    std::optional<double> alpha;

    void validate() const
    {
        if (upscale != 4)
            throw ConfigError("synth.upscale", "only 4x upscaling is supported");
        if (paste_patch < 0)
            throw ConfigError("synth.paste_patch", "must be >= 0");
        if (!(temperature > 0.0))
            throw ConfigError("synth.temperature", "must be > 0");
        if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0))
            throw ConfigError("synth.alpha", "must lie in [0, 1]");
    }
};

/// Field at pyramid scale q (1 = finest, 3 = matching). Each matching position becomes a
/// 2^(3-q) block; patch coordinates are scaled and offset within the block, so every cell
/// still points at the exact reference pixel it was copied from.
inline MatchField propagate_field(const MatchField& field, int q)
{
    if (q < 1 || q > kPyramidLevels)
        throw SizeError("scale index must be 1..3");
    const int s = kPyramidLevels - q, b = 1 << s;
    MatchField out(field.height() * b, field.width() * b);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
            Winner w = field.at(y >> s, x >> s);
            w.row = w.row * b + (y & (b - 1));
            w.col = w.col * b + (x & (b - 1));
            out.at(y, x) = w;
        }
    return out;
}

/// Half-pixel-centre bilinear resample of a single-channel map, edge-clamped.
inline FeatureMap resize_bilinear(const FeatureMap& in, int out_h, int out_w)
{
    FeatureMap out(in.channels(), out_h, out_w);
    const double sy = static_cast<double>(in.height()) / out_h, sx = static_cast<double>(in.width()) / out_w;
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < out_h; ++y) {
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in.height() - 1.0);
            const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, in.height() - 1);
            const double ty = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in.width() - 1.0);
                const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, in.width() - 1);
                const double tx = fx - x0;
                const double top = (1 - tx) * in.at(c, y0, x0) + tx * in.at(c, y0, x1);
                const double bot = (1 - tx) * in.at(c, y1, x0) + tx * in.at(c, y1, x1);
                out.at(c, y, x) = static_cast<float>((1 - ty) * top + ty * bot);
            }
        }
    return out;
}

/// Builds O_q at every scale by pasting each winner's whole patch (scaled to that level) with
/// uniform overlap averaging, and resamples W to each scale.
inline MultiScaleSwap assemble_swaps(const MatchField& field, const FeaturePyramid& input,
                                     std::span<const FeaturePyramid> refs, const FeatureMap& weights,
                                     int patch_size)
{
    const FeatureMap& base = input.matching();
    if (field.height() != base.height() || field.width() != base.width())
        throw ShapeError("field dims differ from the input matching scale");
    if (weights.height() != field.height() || weights.width() != field.width() || weights.channels() != 1)
        throw ShapeError("weight map dims differ from the field");
    const int r = patch_size / 2;
    MultiScaleSwap out;
    for (int qi = 0; qi < kPyramidLevels; ++qi) {
        const FeatureMap& target = input.scales[qi];
        const int b = 1 << (kPyramidLevels - 1 - qi);
        const int C = target.channels(), H = target.height(), W = target.width();
        std::vector<double> sum(static_cast<std::size_t>(C) * H * W, 0.0);
        std::vector<int> count(static_cast<std::size_t>(H) * W, 0);
        for (int y = 0; y < field.height(); ++y)
            for (int x = 0; x < field.width(); ++x) {
                const Winner& w = field.at(y, x);
                if (w.m < 0 || w.m >= static_cast<int>(refs.size()))
                    throw ShapeError("field references an unknown image");
                const FeatureMap& src = refs[w.m].scales[qi];
                if (src.channels() != C)
                    throw ShapeError("reference and input channel counts differ");
                for (int dy = 0; dy < b * patch_size; ++dy) {
                    const int ty = b * (y - r) + dy, sy = b * (w.row - r) + dy;
                    if (ty < 0 || ty >= H || sy < 0 || sy >= src.height())
                        continue;
                    for (int dx = 0; dx < b * patch_size; ++dx) {
                        const int tx = b * (x - r) + dx, sx = b * (w.col - r) + dx;
                        if (tx < 0 || tx >= W || sx < 0 || sx >= src.width())
                            continue;
                        const std::size_t t = static_cast<std::size_t>(ty) * W + tx;
                        ++count[t];
                        for (int c = 0; c < C; ++c)
                            sum[c * static_cast<std::size_t>(H) * W + t] += src.at(c, sy, sx);
                    }
                }
            }
        FeatureMap o(C, H, W);
        for (int c = 0; c < C; ++c) {
            auto p = o.plane(c);
            for (std::size_t t = 0; t < p.size(); ++t)
                p[t] = count[t] ? static_cast<float>(sum[c * p.size() + t] / count[t]) : 0.0f;
        }
        out.swapped[qi] = std::move(o);
        out.weights[qi] = b == 1 ? weights : resize_bilinear(weights, H, W);
    }
    return out;
}

/// Per-pixel blend factor at output resolution from the matching-scale weight map.
inline std::vector<double> blend_alpha(const FeatureMap& weights, int out_w, int out_h, int cell,
                                       const SynthesisConfig& cfg)
{
    std::vector<double> alpha(static_cast<std::size_t>(out_w) * out_h, 0.5);
    if (cfg.alpha) {
        std::fill(alpha.begin(), alpha.end(), *cfg.alpha);
        return alpha;
    }
    const auto [lo_it, hi_it] = std::minmax_element(weights.storage().begin(), weights.storage().end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo))
        return alpha;
    const int H = weights.height(), W = weights.width();
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) / cell - 0.5, 0.0, H - 1.0);
        const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, H - 1);
        const double ty = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) / cell - 0.5, 0.0, W - 1.0);
            const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, W - 1);
            const double tx = fx - x0;
            const double v = (1 - ty) * ((1 - tx) * weights.at(0, y0, x0) + tx * weights.at(0, y0, x1)) +
                             ty * ((1 - tx) * weights.at(0, y1, x0) + tx * weights.at(0, y1, x1));
            const double n = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
            alpha[static_cast<std::size_t>(y) * out_w + x] = std::pow(n, 1.0 / cfg.temperature);
        }
    }
    return alpha;
}

/// Deterministic texture transfer: bicubic x4 base, a texture layer of high-resolution reference
/// patches pasted at the matched positions (overlaps averaged), blended per pixel by alpha.
inline Image synthesize(const Image& lr, std::span<const Image> refs, const MatchField& field,
                        const FeatureMap& weights, const SynthesisConfig& cfg, int patch_size)
{
    cfg.validate();
    const int up = cfg.upscale;
    const int cell = up * (1 << (kPyramidLevels - 1));
    const int extent = up * (cfg.paste_patch > 0 ? cfg.paste_patch : 4 * patch_size);
    for (const auto& ref : refs)
        if (ref.width < extent || ref.height < extent)
            throw ShapeError("reference image " + std::to_string(ref.width) + "x" + std::to_string(ref.height) +
                             " smaller than the paste extent " + std::to_string(extent));
    if (weights.height() != field.height() || weights.width() != field.width())
        throw ShapeError("weight map dims differ from the field");

    Image base = resize_bicubic(lr, lr.width * up, lr.height * up);
    const int OW = base.width, OH = base.height;
    std::vector<double> sum(static_cast<std::size_t>(OW) * OH * 3, 0.0);
    std::vector<int> count(static_cast<std::size_t>(OW) * OH, 0);
    const int offset = cell / 2 - extent / 2;
    for (int y = 0; y < field.height(); ++y)
        for (int x = 0; x < field.width(); ++x) {
            const Winner& w = field.at(y, x);
            if (w.m < 0 || w.m >= static_cast<int>(refs.size()))
                throw ShapeError("field references an unknown image");
            const Image& ref = refs[w.m];
            for (int i = 0; i < extent; ++i) {
                const int ty = cell * y + offset + i, sy = cell * w.row + offset + i;
                if (ty < 0 || ty >= OH || sy < 0 || sy >= ref.height)
                    continue;
                for (int j = 0; j < extent; ++j) {
                    const int tx = cell * x + offset + j, sx = cell * w.col + offset + j;
                    if (tx < 0 || tx >= OW || sx < 0 || sx >= ref.width)
                        continue;
                    const std::size_t t = static_cast<std::size_t>(ty) * OW + tx;
                    ++count[t];
                    for (int c = 0; c < 3; ++c)
                        sum[t * 3 + c] += ref.at(sy, sx, c);
                }
            }
        }

    const auto alpha = blend_alpha(weights, OW, OH, cell, cfg);
    Image out = base;
    for (std::size_t t = 0; t < count.size(); ++t) {
        if (count[t] == 0)
            continue;
        const double a = alpha[t];
        if (a == 0.0)
            continue;
        for (int c = 0; c < 3; ++c) {
            const double tex = sum[t * 3 + c] / count[t];
            const double v = a * tex + (1.0 - a) * base.data[t * 3 + c];
            out.data[t * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

} // namespace mref
