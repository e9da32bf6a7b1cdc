#pragma once

#include <mref/core/color.hpp>
#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/features/extractor.hpp>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

namespace mref {

inline constexpr double kPsnrPeak = 255.0;

/// 20 log10(255) - 10 log10(MSE) between single-channel maps; +inf when identical.
inline double psnr(const FeatureMap& a, const FeatureMap& b)
{
    if (!a.same_shape(b))
        throw ShapeError("psnr: shapes differ");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.storage()[i]) - b.storage()[i];
        se += d * d;
    }
    if (se == 0.0)
        return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(kPsnrPeak) - 10.0 * std::log10(se / static_cast<double>(a.size()));
}

inline double psnr_y(const Image& a, const Image& b)
{
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("psnr_y: image dims differ");
    return psnr(rgb_to_y(a), rgb_to_y(b));
}

/// Mean SSIM over all positions where the 11x11 Gaussian window (sigma 1.5) fits.
inline double ssim(const FeatureMap& a, const FeatureMap& b)
{
    if (!a.same_shape(b) || a.channels() != 1)
        throw ShapeError("ssim: expects two single-channel maps of equal dims");
    constexpr int kWin = 11;
    if (a.height() < kWin || a.width() < kWin)
        throw SizeError("ssim: dims must be at least 11x11");
    constexpr double C1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double C2 = (0.03 * 255.0) * (0.03 * 255.0);

    std::vector<double> g(kWin);
    double gs = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        gs += g[i];
    }
    for (auto& v : g)
        v /= gs;

    const int H = a.height() - kWin + 1, W = a.width() - kWin + 1;
    double total = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double w = g[i] * g[j];
                    const double va = a.at(0, y + i, x + j), vb = b.at(0, y + i, x + j);
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (var_a + var_b + C2));
        }
    return total / (static_cast<double>(H) * W);
}

inline double ssim_y(const Image& a, const Image& b)
{
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("ssim_y: image dims differ");
    return ssim(rgb_to_y(a), rgb_to_y(b));
}

/// Mean absolute difference over all pixels and channels.
inline double l1_loss(const Image& a, const Image& b)
{
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("l1_loss: image dims differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        s += std::abs(static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]));
    return s / static_cast<double>(a.data.size());
}

/// Sum over scales of the mean squared feature difference.
inline double perceptual_loss(const FeaturePyramid& pa, const FeaturePyramid& pb)
{
    double total = 0.0;
    for (int q = 0; q < kPyramidLevels; ++q) {
        const auto& a = pa.scales[q];
        const auto& b = pb.scales[q];
        if (!a.same_shape(b))
            throw ShapeError("perceptual_loss: scale " + std::to_string(q + 1) + " shapes differ");
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a.storage()[i]) - b.storage()[i];
            s += d * d;
        }
        total += s / static_cast<double>(a.size());
    }
    return total;
}

} // namespace mref
