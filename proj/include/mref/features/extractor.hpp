#pragma once

#include <mref/core/color.hpp>
#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/core/ledger.hpp>
#include <mref/core/parallel.hpp>
#include <mref/core/tensor_io.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace mref {

inline constexpr int kPyramidLevels = 3;

/// Bit-exact uniform [-1, 1) weights from mt19937.
struct SeededRandomWeights
{
    std::uint32_t seed = 0;
};

/// Oriented zero-mean Gabor filters on stage 1; stages 2 and 3 use seeded random weights.
struct GaborBankWeights
{
    std::uint32_t seed = 0;
};

/// stage1.tens .. stage3.tens (rank 4: out, in, k, k), optional stage{q}.bias.tens (rank 1).
struct ExternalWeights
{
    std::filesystem::path directory;
};

using WeightSource = std::variant<SeededRandomWeights, GaborBankWeights, ExternalWeights>;

struct ExtractorConfig
{
    std::array<int, kPyramidLevels> stage_channels{64, 128, 256};
    int kernel_size = 3;
    WeightSource weights = SeededRandomWeights{};

    void validate() const
    {
        for (int c : stage_channels)
            if (c < 1)
                throw ConfigError("extractor.stage_channels", "channel counts must be positive");
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw ConfigError("extractor.kernel_size", "must be odd and >= 1");
    }
};

/// One convolution stage: weights laid out (out, in, k, k).
struct ConvLayer
{
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 0;
    std::vector<float> weights;
    std::vector<float> bias; // empty = no bias

    float w(int o, int i, int ky, int kx) const
    {
        return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
    }
};

/// Zero-padded, stride-1 convolution. Each output sums over (in, ky, kx) in that order.
inline FeatureMap conv2d(const FeatureMap& in, const ConvLayer& layer, Exec exec = {})
{
    if (in.channels() != layer.in_channels)
        throw ShapeError("conv2d: input has " + std::to_string(in.channels()) + " channels, layer expects " +
                         std::to_string(layer.in_channels));
    const int H = in.height(), W = in.width(), k = layer.kernel, r = k / 2;
    FeatureMap out(layer.out_channels, H, W);
    parallel_for(0, layer.out_channels, exec, [&](int o) {
        auto dst = out.plane(o);
        for (int i = 0; i < layer.in_channels; ++i) {
            auto src = in.plane(i);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const float wv = layer.w(o, i, ky, kx);
                    const int dy = ky - r, dx = kx - r;
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    for (int y = std::max(0, -dy); y < std::min(H, H - dy); ++y) {
                        float* d = dst.data() + static_cast<std::size_t>(y) * W;
                        const float* s = src.data() + static_cast<std::size_t>(y + dy) * W + dx;
                        for (int x = x0; x < x1; ++x)
                            d[x] += wv * s[x];
                    }
                }
        }
        if (!layer.bias.empty()) {
            const float b = layer.bias[o];
            for (auto& v : dst)
                v += b;
        }
    });
    return out;
}

inline void relu_inplace(FeatureMap& fm)
{
    for (auto& v : fm.values())
        v = v > 0.0f ? v : 0.0f;
}

/// 2x2 average pooling, stride 2; odd trailing rows/cols are dropped.
inline FeatureMap avg_pool2(const FeatureMap& in)
{
    const int H = in.height() / 2, W = in.width() / 2;
    if (H < 1 || W < 1)
        throw SizeError("avg_pool2: map too small");
    FeatureMap out(in.channels(), H, W);
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                out.at(c, y, x) = 0.25f * ((in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1)) +
                                           (in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1)));
    return out;
}

/// Three feature scales; scale q (0-based) is 2^q times coarser than the input.
struct FeaturePyramid
{
    std::array<FeatureMap, kPyramidLevels> scales;

    const FeatureMap& matching() const { return scales[kPyramidLevels - 1]; }
    std::size_t bytes() const
    {
        std::size_t b = 0;
        for (const auto& s : scales)
            b += s.bytes();
        return b;
    }
    bool operator==(const FeaturePyramid&) const = default;
};

namespace detail {

inline float unit_uniform(std::mt19937& gen)
{
    // 24 random bits -> [-1, 1), identical on every platform.
    return static_cast<float>(static_cast<double>(gen() >> 8) * (1.0 / 8388608.0) - 1.0);
}

inline ConvLayer random_layer(int out, int in, int k, std::uint32_t seed)
{
    ConvLayer layer{out, in, k, std::vector<float>(static_cast<std::size_t>(out) * in * k * k), {}};
    std::mt19937 gen(seed);
    const float bound = std::sqrt(6.0f / static_cast<float>(in * k * k));
    for (auto& v : layer.weights)
        v = bound * unit_uniform(gen);
    return layer;
}

inline ConvLayer gabor_layer(int out, int in, int k)
{
    ConvLayer layer{out, in, k, std::vector<float>(static_cast<std::size_t>(out) * in * k * k), {}};
    const double r = k / 2;
    static constexpr std::array<std::array<double, 3>, 3> colour{{{1.0, 1.0, 1.0}, {1.0, -1.0, 0.0}, {-0.5, -0.5, 1.0}}};
    std::vector<double> kern(static_cast<std::size_t>(k) * k);
    for (int o = 0; o < out; ++o) {
        const auto& mix = colour[o % 3];
        const double theta = std::numbers::pi * ((o / 3) % 8) / 8.0;
        const double lambda = 2.0 + (o / 24) % 4;
        const double psi = ((o / 96) % 2) ? std::numbers::pi / 2.0 : 0.0;
        const double sigma = 0.56 * lambda;
        for (int i = 0; i < in; ++i) {
            double mean = 0.0;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double y = ky - r, x = kx - r;
                    const double xr = x * std::cos(theta) + y * std::sin(theta);
                    const double yr = -x * std::sin(theta) + y * std::cos(theta);
                    const double g = std::exp(-(xr * xr + yr * yr) / (2.0 * sigma * sigma)) *
                                     std::cos(2.0 * std::numbers::pi * xr / lambda + psi);
                    kern[ky * k + kx] = mix[i % 3] * g;
                    mean += kern[ky * k + kx];
                }
            mean /= static_cast<double>(k * k);
            for (int j = 0; j < k * k; ++j)
                layer.weights[(static_cast<std::size_t>(o) * in + i) * k * k + j] = static_cast<float>(kern[j] - mean);
        }
    }
    return layer;
}

inline ConvLayer load_layer(const std::filesystem::path& dir, int stage, int out, int in, int k)
{
    const auto name = "stage" + std::to_string(stage);
    Tensor t = read_tensor(dir / (name + ".tens"));
    const std::vector<std::uint32_t> want{std::uint32_t(out), std::uint32_t(in), std::uint32_t(k), std::uint32_t(k)};
    if (t.dims != want)
        throw FormatError(name + ".tens: expected dims (" + std::to_string(out) + ", " + std::to_string(in) + ", " +
                          std::to_string(k) + ", " + std::to_string(k) + ")");
    ConvLayer layer{out, in, k, std::move(t.values), {}};
    const auto bias_path = dir / (name + ".bias.tens");
    if (std::filesystem::exists(bias_path)) {
        Tensor b = read_tensor(bias_path);
        if (b.dims != std::vector<std::uint32_t>{std::uint32_t(out)})
            throw FormatError(name + ".bias.tens: expected rank-1 tensor of length " + std::to_string(out));
        layer.bias = std::move(b.values);
    }
    return layer;
}

} // namespace detail

/// Immutable three-stage convolutional feature extractor.
class Extractor
{
public:
    explicit Extractor(const ExtractorConfig& cfg) : cfg_(cfg)
    {
        cfg.validate();
        const int k = cfg.kernel_size;
        std::array<int, kPyramidLevels> in{3, cfg.stage_channels[0], cfg.stage_channels[1]};
        for (int q = 0; q < kPyramidLevels; ++q) {
            const int out = cfg.stage_channels[q];
            layers_[q] = std::visit(
                [&](const auto& src) -> ConvLayer {
                    using S = std::decay_t<decltype(src)>;
                    if constexpr (std::is_same_v<S, SeededRandomWeights>)
                        return detail::random_layer(out, in[q], k, src.seed + static_cast<std::uint32_t>(q));
                    else if constexpr (std::is_same_v<S, GaborBankWeights>) {
                        if (q == 0) {
                            if (k < 3)
                                throw ConfigError("extractor.kernel_size", "gabor bank needs kernel_size >= 3");
                            return detail::gabor_layer(out, in[q], k);
                        }
                        return detail::random_layer(out, in[q], k, src.seed + static_cast<std::uint32_t>(q));
                    } else
                        return detail::load_layer(src.directory, q + 1, out, in[q], k);
                },
                cfg.weights);
        }
    }

    const ExtractorConfig& config() const noexcept { return cfg_; }
    const ConvLayer& layer(int q) const { return layers_.at(q); }

    /// Receptive-field reach of one matching-scale position, in matching-scale pixels.
    int matching_halo() const { return (7 * (cfg_.kernel_size / 2) + 3) / 4; }

    /// Runs the three stages on a 3-channel map whose dims are multiples of 4.
    FeaturePyramid run(const FeatureMap& rgb, Exec exec = {}, MemoryLedger* ledger = nullptr,
                       MemoryCategory cat = MemoryCategory::Input) const
    {
        if (rgb.height() % 4 != 0 || rgb.width() % 4 != 0)
            throw SizeError("extractor input dims must be multiples of 4");
        FeaturePyramid pyr;
        std::vector<MemoryLedger::Hold> holds;
        pyr.scales[0] = conv2d(rgb, layers_[0], exec);
        relu_inplace(pyr.scales[0]);
        holds.push_back(track(ledger, cat, pyr.scales[0].bytes()));
        for (int q = 1; q < kPyramidLevels; ++q) {
            FeatureMap pooled = avg_pool2(pyr.scales[q - 1]);
            auto hold_pool = track(ledger, cat, pooled.bytes());
            pyr.scales[q] = conv2d(pooled, layers_[q], exec);
            relu_inplace(pyr.scales[q]);
            holds.push_back(track(ledger, cat, pyr.scales[q].bytes()));
        }
        // Holds cover the pass only; callers register whatever they keep.
        return pyr;
    }

private:
    ExtractorConfig cfg_;
    std::array<ConvLayer, kPyramidLevels> layers_;
};

/// Pads by edge replication to multiples of 4 and converts to [0, 1] floats.
inline FeatureMap padded_input(const Image& img)
{
    const int H = (img.height + 3) / 4 * 4, W = (img.width + 3) / 4 * 4;
    FeatureMap fm(3, H, W);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                fm.at(c, y, x) =
                    static_cast<float>(img.at(std::min(y, img.height - 1), std::min(x, img.width - 1), c)) / 255.0f;
    return fm;
}

/// Pyramid of an image; scale q has dims ceil4(H, W) / 2^q.
inline FeaturePyramid extract(const Extractor& ex, const Image& img, Exec exec = {}, MemoryLedger* ledger = nullptr,
                              MemoryCategory cat = MemoryCategory::Input)
{
    if (img.width < 4 || img.height < 4)
        throw SizeError("extract: image must be at least 4x4");
    return ex.run(padded_input(img), exec, ledger, cat);
}

} // namespace mref
