#include "support.hpp"

#include <mref/core/tensor_io.hpp>
#include <mref/features/extractor.hpp>

#include <gtest/gtest.h>

using namespace mref;

namespace {

ExtractorConfig small_config(WeightSource w = SeededRandomWeights{7})
{
    ExtractorConfig cfg;
    cfg.stage_channels = {8, 12, 16};
    cfg.weights = std::move(w);
    return cfg;
}

// Direct zero-padded convolution, written independently of conv2d.
FeatureMap naive_conv(const FeatureMap& in, const ConvLayer& l)
{
    const int r = l.kernel / 2;
    FeatureMap out(l.out_channels, in.height(), in.width());
    for (int o = 0; o < l.out_channels; ++o)
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x) {
                double s = 0.0;
                for (int i = 0; i < l.in_channels; ++i)
                    for (int ky = 0; ky < l.kernel; ++ky)
                        for (int kx = 0; kx < l.kernel; ++kx) {
                            const int sy = y + ky - r, sx = x + kx - r;
                            if (sy >= 0 && sy < in.height() && sx >= 0 && sx < in.width())
                                s += static_cast<double>(l.w(o, i, ky, kx)) * in.at(i, sy, sx);
                        }
                out.at(o, y, x) = static_cast<float>(s);
            }
    return out;
}

} // namespace

TEST(Extractor, SeededWeightsAreReproducible)
{
    const Extractor a(small_config()), b(small_config());
    for (int q = 0; q < kPyramidLevels; ++q)
        EXPECT_TRUE(test::bit_equal(a.layer(q).weights, b.layer(q).weights)) << "stage " << q + 1;
    const Extractor c(small_config(SeededRandomWeights{8}));
    EXPECT_NE(a.layer(0).weights, c.layer(0).weights);
}

TEST(Extractor, GaborKernelsHaveZeroMean)
{
    ExtractorConfig cfg;
    cfg.weights = GaborBankWeights{1};
    const Extractor ex(cfg);
    const ConvLayer& l = ex.layer(0);
    for (int o = 0; o < l.out_channels; ++o)
        for (int i = 0; i < l.in_channels; ++i) {
            double mean = 0.0;
            for (int ky = 0; ky < l.kernel; ++ky)
                for (int kx = 0; kx < l.kernel; ++kx)
                    mean += l.w(o, i, ky, kx);
            EXPECT_NEAR(mean / (l.kernel * l.kernel), 0.0, 1e-6) << "kernel " << o << "," << i;
        }
}

TEST(Extractor, ExternalWeightsLoadAndValidate)
{
    test::TempDir dir;
    const Extractor seeded(small_config());
    const std::array<int, 3> in{3, 8, 12};
    for (int q = 0; q < 3; ++q) {
        const ConvLayer& l = seeded.layer(q);
        write_tensor({{std::uint32_t(l.out_channels), std::uint32_t(in[q]), 3u, 3u}, l.weights},
                     dir / ("stage" + std::to_string(q + 1) + ".tens"));
    }
    const Extractor loaded(small_config(ExternalWeights{dir.path()}));
    std::mt19937 gen(2);
    const Image img = test::random_image(gen, 16, 16);
    EXPECT_EQ(extract(loaded, img), extract(seeded, img));

    write_tensor({{8u}, std::vector<float>(8, 0.5f)}, dir / "stage1.bias.tens");
    const Extractor biased(small_config(ExternalWeights{dir.path()}));
    EXPECT_EQ(biased.layer(0).bias.size(), 8u);

    write_tensor({{8u, 4u, 3u, 3u}, std::vector<float>(8 * 4 * 9, 0.1f)}, dir / "stage1.tens");
    EXPECT_THROW(Extractor{small_config(ExternalWeights{dir.path()})}, FormatError);
}

TEST(Extractor, ZeroImageGivesZeroPyramid)
{
    const Extractor ex(small_config());
    const FeaturePyramid p = extract(ex, Image(12, 8));
    for (const auto& s : p.scales)
        for (float v : s.storage())
            ASSERT_EQ(v, 0.0f);
}

TEST(Extractor, ShapeLaw)
{
    const Extractor ex(small_config());
    const FeaturePyramid p = extract(ex, Image(8, 8));
    EXPECT_EQ(p.scales[0].height(), 8);
    EXPECT_EQ(p.scales[1].height(), 4);
    EXPECT_EQ(p.scales[2].height(), 2);
    EXPECT_EQ(p.scales[2].width(), 2);

    const FeaturePyramid odd = extract(ex, Image(10, 5));
    const std::array<std::array<int, 3>, 3> want{{{8, 8, 12}, {12, 4, 6}, {16, 2, 3}}};
    for (int q = 0; q < 3; ++q) {
        EXPECT_EQ(odd.scales[q].channels(), want[q][0]);
        EXPECT_EQ(odd.scales[q].height(), want[q][1]);
        EXPECT_EQ(odd.scales[q].width(), want[q][2]);
    }
    EXPECT_THROW(extract(ex, Image(3, 8)), SizeError);
}

TEST(Extractor, OutputsAreFiniteAndNonNegative)
{
    std::mt19937 gen(9);
    for (auto w : {WeightSource{SeededRandomWeights{3}}, WeightSource{GaborBankWeights{3}}}) {
        const Extractor ex(small_config(w));
        const FeaturePyramid p = extract(ex, test::random_image(gen, 20, 12));
        for (const auto& s : p.scales) {
            EXPECT_TRUE(s.all_finite());
            for (float v : s.storage())
                ASSERT_GE(v, 0.0f);
        }
    }
}

TEST(Extractor, StageOneConvMatchesDirectOracleAndIsHomogeneous)
{
    const Extractor ex(small_config());
    std::mt19937 gen(4);
    for (int trial = 0; trial < 5; ++trial) {
        const FeatureMap rgb = test::random_map(gen, 3, 5, 5);
        const FeatureMap got = conv2d(rgb, ex.layer(0));
        const FeatureMap want = naive_conv(rgb, ex.layer(0));
        for (std::size_t i = 0; i < got.size(); ++i)
            ASSERT_NEAR(got.storage()[i], want.storage()[i], 1e-5f);

        FeatureMap doubled = rgb;
        for (auto& v : doubled.storage())
            v *= 2.0f;
        const FeatureMap got2 = conv2d(doubled, ex.layer(0));
        for (std::size_t i = 0; i < got.size(); ++i)
            ASSERT_EQ(got2.storage()[i], 2.0f * got.storage()[i]);
    }
}

TEST(Extractor, DeterministicAcrossThreadCounts)
{
    const Extractor ex(small_config(GaborBankWeights{5}));
    std::mt19937 gen(12);
    const Image img = test::random_image(gen, 24, 20);
    const FeaturePyramid one = extract(ex, img, Exec{1});
    for (unsigned t : {2u, 3u, 8u}) {
        const FeaturePyramid many = extract(ex, img, Exec{t});
        for (int q = 0; q < 3; ++q)
            EXPECT_TRUE(test::bit_equal(one.scales[q].storage(), many.scales[q].storage())) << t << " threads";
    }
}

TEST(Extractor, ConfigValidation)
{
    ExtractorConfig cfg = small_config();
    cfg.kernel_size = 4;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.kernel_size = 1;
    cfg.weights = GaborBankWeights{};
    EXPECT_THROW(Extractor{cfg}, ConfigError);
    cfg = small_config();
    cfg.stage_channels[1] = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Extractor, PoolingAveragesBlocks)
{
    FeatureMap fm(1, 2, 4, std::vector<float>{1, 3, 5, 7, 2, 2, 0, 4});
    const FeatureMap p = avg_pool2(fm);
    EXPECT_EQ(p.storage(), (std::vector<float>{2.0f, 4.0f}));
}
