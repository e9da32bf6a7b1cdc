#include "support.hpp"

#include <mref/app/pipeline.hpp>
#include <mref/similarity/hierarchy.hpp>
#include <mref/similarity/levels.hpp>
#include <mref/similarity/oracle.hpp>
#include <mref/similarity/reference_source.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace mref;
using kernels::PixelMajor;

namespace {

MatchParams unit_patch()
{
    MatchParams p;
    p.patch_size = 1;
    return p;
}

PartitionSpec spec_of(int n_m, int n_r, int n_i = 1)
{
    PartitionSpec s;
    s.n_m = n_m;
    s.n_r = n_r;
    s.n_i = n_i;
    return s;
}

SwapOutput hierarchical(const FeatureMap& input, const std::vector<FeatureMap>& refs, const PartitionSpec& spec,
                        int n_c, const MatchParams& p, Exec exec = {}, MemoryLedger* ledger = nullptr)
{
    const auto source = MapReferences::of(std::span<const FeatureMap>(refs));
    return match_hierarchical(input, source, spec, n_c, p, exec, ledger);
}

bool same_swap(const SwapOutput& a, const SwapOutput& b)
{
    return a.field == b.field && test::bit_equal(a.swapped.storage(), b.swapped.storage()) &&
           test::bit_equal(a.weights.storage(), b.weights.storage());
}

Part whole_part(const FeatureMap& fm, int m = 0)
{
    return {{0, 0, fm.height(), fm.width()}, fm, {m, 0}};
}

} // namespace

TEST(Score, SelfMatchEqualsPatchNorm)
{
    std::mt19937 gen(1);
    const FeatureMap fm = test::random_map(gen, 4, 3, 3, 0.1f, 1.0f);
    MatchParams p;
    const auto vol = similarity_map(fm, fm, p);
    ASSERT_EQ(vol.patches.size(), 1u);
    double norm = 0.0;
    for (float v : fm.storage())
        norm += static_cast<double>(v) * v;
    EXPECT_NEAR(vol.at(1, 1, 0), std::sqrt(norm), 1e-5);
}

TEST(Score, OrthogonalWindowScoresZero)
{
    FeatureMap a(2, 1, 1, std::vector<float>{1.0f, 0.0f});
    FeatureMap b(2, 1, 1, std::vector<float>{0.0f, 3.0f});
    EXPECT_EQ(similarity_map(a, b, unit_patch()).at(0, 0, 0), 0.0f);
}

TEST(Score, UnitPatchScalarCase)
{
    for (float w : {-2.0f, 0.5f, 3.0f})
        for (float v : {0.25f, 1.0f, 7.0f}) {
            const FeatureMap a(1, 1, 1, w), b(1, 1, 1, v);
            EXPECT_FLOAT_EQ(similarity_map(a, b, unit_patch()).at(0, 0, 0), w);
        }
}

TEST(Score, ZeroNormPatchIsExcluded)
{
    const FeatureMap a(1, 1, 1, 1.0f), b(1, 1, 2, std::vector<float>{0.0f, 2.0f});
    const auto vol = similarity_map(a, b, unit_patch());
    EXPECT_EQ(vol.at(0, 0, 0), kExcluded);
    EXPECT_EQ(vol.at(0, 0, 1), 1.0f);
}

TEST(Level1, TwoByTwoWorkedExample)
{
    const FeatureMap input(1, 2, 2, std::vector<float>{1, 2, 3, 4});
    const FeatureMap ref(1, 2, 2, std::vector<float>{4, 0, 0, 0});
    const std::vector<FeatureMap> subs{input};
    const auto res = level1_input_attention(subs, whole_part(ref), unit_patch());
    EXPECT_EQ(res.swapped.storage(), (std::vector<float>{4, 4, 4, 4}));
    for (const auto& w : res.field.cells()) {
        EXPECT_EQ(w.row, 0);
        EXPECT_EQ(w.col, 0);
    }
}

TEST(Level1, SingleSubvectorIsPlainPatchMatch)
{
    std::mt19937 gen(2);
    MatchParams p;
    for (int trial = 0; trial < 10; ++trial) {
        const FeatureMap input = test::random_map(gen, 3, 6, 5);
        const FeatureMap ref = test::random_map(gen, 3, 7, 6);
        const std::vector<FeatureMap> subs{input};
        const auto res = level1_input_attention(subs, whole_part(ref), p);
        const auto vol = similarity_map(input, ref, p);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 5; ++x) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < vol.patches.size(); ++k)
                    if (vol.at(y, x, k) > vol.at(y, x, best))
                        best = k;
                const auto [py, px] = vol.patches[best];
                ASSERT_EQ(res.field.at(y, x).row, py);
                ASSERT_EQ(res.field.at(y, x).col, px);
                for (int c = 0; c < 3; ++c)
                    ASSERT_EQ(res.swapped.at(c, y, x), ref.at(c, py, px));
            }
    }
}

TEST(Level1, AllZeroPartIsNoCandidate)
{
    const FeatureMap input(2, 3, 3, 1.0f);
    const std::vector<FeatureMap> subs{input};
    EXPECT_THROW(level1_input_attention(subs, whole_part(FeatureMap(2, 4, 4)), MatchParams{}), NoCandidate);
}

TEST(Merge, SingleCandidatePassesThrough)
{
    std::mt19937 gen(3);
    const FeatureMap input = test::random_map(gen, 2, 4, 4);
    const FeatureMap cand = test::random_map(gen, 2, 4, 4);
    const std::vector<FeatureMap> subs{input}, cands{cand};
    const auto res = level_merge(subs, cands, MatchParams{});
    EXPECT_EQ(res.swapped, cand);
    EXPECT_EQ(res.winners, std::vector<int>(16, 0));
}

TEST(Merge, CandidateEqualToInputBeatsOrthogonalNoise)
{
    std::mt19937 gen(4);
    const FeatureMap input = test::random_map(gen, 4, 5, 5, 0.5f, 1.0f);
    FeatureMap noise(4, 5, 5);
    // Noise lives only in channels the input leaves empty, so it is orthogonal everywhere.
    FeatureMap in2 = input;
    for (int c = 2; c < 4; ++c)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) {
                in2.at(c, y, x) = 0.0f;
                noise.at(c, y, x) = 0.3f + 0.1f * static_cast<float>((x + y) % 3);
            }
    const std::vector<FeatureMap> subs{in2};
    for (const auto& cands : {std::vector<FeatureMap>{in2, noise}, std::vector<FeatureMap>{noise, in2}}) {
        const auto res = level_merge(subs, cands, MatchParams{});
        const int want = cands[0] == in2 ? 0 : 1;
        for (int w : res.winners)
            ASSERT_EQ(w, want);
        EXPECT_EQ(res.swapped, in2);
    }
}

TEST(Merge, IdenticalCandidatesKeepLowestIndex)
{
    std::mt19937 gen(5);
    const FeatureMap input = test::random_map(gen, 2, 4, 4);
    const FeatureMap cand = test::random_map(gen, 2, 4, 4);
    const std::vector<FeatureMap> subs{input}, cands{cand, cand, cand};
    EXPECT_EQ(level_merge(subs, cands, MatchParams{}).winners, std::vector<int>(16, 0));
}

TEST(Merge, AllExcludedAtAPositionIsNoCandidate)
{
    const FeatureMap input(1, 3, 3, 1.0f);
    const std::vector<FeatureMap> subs{input}, cands{FeatureMap(1, 3, 3), FeatureMap(1, 3, 3)};
    EXPECT_THROW(level_merge(subs, cands, MatchParams{}), NoCandidate);
}

TEST(Weights, SelfCandidateGivesSquaredNorm)
{
    std::mt19937 gen(6);
    const FeatureMap input = test::random_map(gen, 3, 4, 4);
    const std::vector<FeatureMap> subs{input}, cands{input};
    const std::vector<int> winners(16, 0);
    const FeatureMap w = weight_map(subs, cands, winners, unit_patch());
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c)
                s += static_cast<double>(input.at(c, y, x)) * input.at(c, y, x);
            EXPECT_NEAR(w.at(0, y, x), s, 1e-6);
        }
}

TEST(Weights, ZeroCandidateGivesZero)
{
    std::mt19937 gen(7);
    const FeatureMap input = test::random_map(gen, 2, 3, 3);
    const std::vector<FeatureMap> subs{input}, cands{FeatureMap(2, 3, 3)};
    const FeatureMap w = weight_map(subs, cands, std::vector<int>(9, 0), MatchParams{});
    for (float v : w.storage())
        EXPECT_EQ(v, 0.0f);
}

TEST(Weights, MatchDirectWindowDotProducts)
{
    std::mt19937 gen(8);
    for (int trial = 0; trial < 10; ++trial) {
        const FeatureMap input = test::random_map(gen, 1, 3, 3, -1.0f, 1.0f);
        const FeatureMap cand = test::random_map(gen, 1, 3, 3, -1.0f, 1.0f);
        const std::vector<FeatureMap> subs{input}, cands{cand};
        const FeatureMap w = weight_map(subs, cands, std::vector<int>(9, 0), MatchParams{});
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) {
                double s = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy >= 0 && yy < 3 && xx >= 0 && xx < 3)
                            s += static_cast<double>(input.at(0, yy, xx)) * cand.at(0, yy, xx);
                    }
                EXPECT_NEAR(w.at(0, y, x), s, 1e-6);
            }
    }
}

TEST(Hierarchy, DegenerateCaseIsBitIdenticalToOracle)
{
    std::mt19937 gen(9);
    for (int trial = 0; trial < 10; ++trial) {
        const FeatureMap input = test::random_map(gen, 4, 7, 6);
        const std::vector<FeatureMap> refs{test::random_map(gen, 4, 8, 9)};
        const MatchParams p;
        const auto h = hierarchical(input, refs, spec_of(1, 1), 1, p);
        const auto o = match_oracle(input, refs, 1, 1, p);
        ASSERT_TRUE(same_swap(h, o)) << "trial " << trial;
    }
}

TEST(Hierarchy, UnitPatchesMatchBruteForce)
{
    std::mt19937 gen(10);
    for (int n_m : {1, 2, 4})
        for (int n_r : {1, 4})
            for (int n_c : {1, 2}) {
                const FeatureMap input = app::random_features(gen, 4, 8, 8, 4);
                std::vector<FeatureMap> refs;
                for (int m = 0; m < n_m; ++m)
                    refs.push_back(app::random_features(gen, 4, 8, 8, 4));
                const auto h = hierarchical(input, refs, spec_of(n_m, n_r), n_c, unit_patch());
                const auto o = match_oracle(input, refs, n_c, n_r, unit_patch());
                EXPECT_TRUE(same_swap(h, o)) << n_m << " refs, " << n_r << " parts, " << n_c << " subvectors";
            }
}

TEST(Hierarchy, ScoreNeverExceedsOracle)
{
    std::mt19937 gen(11);
    for (int trial = 0; trial < 8; ++trial) {
        const FeatureMap input = test::random_map(gen, 4, 8, 8);
        const std::vector<FeatureMap> refs{test::random_map(gen, 4, 10, 10), test::random_map(gen, 4, 9, 11)};
        const MatchParams p;
        const auto h = hierarchical(input, refs, spec_of(2, 4), 2, p);
        const auto o = match_oracle(input, refs, 2, 4, p);
        for (std::size_t i = 0; i < h.field.size(); ++i)
            ASSERT_LE(h.field.cells()[i].score, o.field.cells()[i].score + 1e-5f);
    }
}

TEST(Hierarchy, ProvenanceReproducesSwappedFeatures)
{
    std::mt19937 gen(12);
    const FeatureMap input = test::random_map(gen, 4, 8, 8);
    const std::vector<FeatureMap> refs{test::random_map(gen, 4, 10, 10), test::random_map(gen, 4, 12, 9)};
    const MatchParams p;
    const auto h = hierarchical(input, refs, spec_of(2, 4), 2, p);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            ASSERT_TRUE(app::detail::provenance_holds(h, refs, 4, p, y, x)) << y << "," << x;
}

TEST(Hierarchy, IdenticalReferenceCopiesPickFirst)
{
    std::mt19937 gen(13);
    const FeatureMap input = test::random_map(gen, 4, 6, 6);
    const FeatureMap ref = test::random_map(gen, 4, 8, 8);
    const MatchParams p;
    const auto single = hierarchical(input, {ref}, spec_of(1, 1), 2, p);
    const auto triple = hierarchical(input, {ref, ref, ref}, spec_of(3, 1), 2, p);
    EXPECT_TRUE(test::bit_equal(single.swapped.storage(), triple.swapped.storage()));
    for (const auto& w : triple.field.cells())
        EXPECT_EQ(w.m, 0);
}

TEST(Hierarchy, ScalingReferencesKeepsWinners)
{
    std::mt19937 gen(14);
    const FeatureMap input = test::random_map(gen, 4, 6, 6);
    const std::vector<FeatureMap> refs{test::random_map(gen, 4, 8, 8), test::random_map(gen, 4, 7, 9)};
    const MatchParams p;
    const auto base = hierarchical(input, refs, spec_of(2, 4), 2, p);
    for (float alpha : {2.0f, 0.25f}) {
        std::vector<FeatureMap> scaled = refs;
        for (auto& r : scaled)
            for (auto& v : r.storage())
                v *= alpha;
        const auto s = hierarchical(input, scaled, spec_of(2, 4), 2, p);
        for (std::size_t i = 0; i < base.field.size(); ++i) {
            const Winner &a = base.field.cells()[i], &b = s.field.cells()[i];
            ASSERT_EQ(std::tie(a.m, a.r, a.row, a.col, a.c), std::tie(b.m, b.r, b.row, b.col, b.c));
        }
        for (std::size_t i = 0; i < base.swapped.size(); ++i)
            ASSERT_EQ(s.swapped.storage()[i], alpha * base.swapped.storage()[i]);
    }
}

TEST(Hierarchy, DeterministicAcrossThreadCounts)
{
    std::mt19937 gen(15);
    const FeatureMap input = test::random_map(gen, 8, 9, 7);
    const std::vector<FeatureMap> refs{test::random_map(gen, 8, 11, 10), test::random_map(gen, 8, 9, 9)};
    const MatchParams p;
    MemoryLedger l1;
    const auto one = hierarchical(input, refs, spec_of(2, 4), 2, p, Exec{1}, &l1);
    for (unsigned t : {2u, 8u}) {
        MemoryLedger lt;
        const auto many = hierarchical(input, refs, spec_of(2, 4), 2, p, Exec{t}, &lt);
        EXPECT_TRUE(same_swap(one, many)) << t << " threads";
        EXPECT_EQ(l1.peak_bytes(), lt.peak_bytes());
        EXPECT_EQ(l1.peak_bytes(MemoryCategory::Reference), lt.peak_bytes(MemoryCategory::Reference));
    }
}

TEST(Hierarchy, InputPartsAreExactForUnitPatches)
{
    std::mt19937 gen(16);
    const FeatureMap input = app::random_features(gen, 4, 9, 10, 3);
    const std::vector<FeatureMap> refs{app::random_features(gen, 4, 8, 8, 3), app::random_features(gen, 4, 8, 8, 3)};
    const auto whole = hierarchical(input, refs, spec_of(2, 4, 1), 2, unit_patch());
    for (int n_i : {4, 9}) {
        const auto split = hierarchical(input, refs, spec_of(2, 4, n_i), 2, unit_patch());
        EXPECT_TRUE(same_swap(whole, split)) << n_i << " input parts";
    }
    const auto coarse = hierarchical(input, refs, spec_of(2, 4, 4), 2, MatchParams{});
    EXPECT_TRUE(coarse.swapped.all_finite());
}

TEST(Hierarchy, OnePartResidentAtATime)
{
    std::mt19937 gen(17);
    const FeatureMap input = test::random_map(gen, 4, 8, 8);
    const std::vector<FeatureMap> refs{test::random_map(gen, 4, 16, 16), test::random_map(gen, 4, 16, 16)};
    const MatchParams p;
    const std::size_t total = refs[0].bytes() + refs[1].bytes();
    for (int n_r : {1, 4, 16}) {
        MemoryLedger ledger;
        hierarchical(input, refs, spec_of(2, n_r), 2, p, {}, &ledger);
        std::size_t largest = 0;
        for (const auto& rc : part_grid(16, 16, n_r, 3))
            largest = std::max(largest, static_cast<std::size_t>(rc.height) * rc.width * 4 * sizeof(float));
        EXPECT_EQ(ledger.peak_bytes(MemoryCategory::Reference), largest);
        const std::size_t overlap = static_cast<std::size_t>(4 * sizeof(float)) * (3 - 1) * (16 + 16 + 2);
        EXPECT_LE(ledger.peak_bytes(MemoryCategory::Reference), total / (2 * n_r) + overlap);
        EXPECT_EQ(ledger.current_bytes(), 0u);
    }
}

TEST(Hierarchy, ShapeAndCandidateErrors)
{
    std::mt19937 gen(18);
    const FeatureMap input = test::random_map(gen, 4, 4, 4);
    const std::vector<FeatureMap> refs{test::random_map(gen, 4, 6, 6)};
    EXPECT_THROW(hierarchical(input, refs, spec_of(2, 1), 1, MatchParams{}), ShapeError);
    EXPECT_THROW(hierarchical(input, refs, spec_of(1, 1), 3, MatchParams{}), DivisibilityError);
    EXPECT_THROW(hierarchical(input, {FeatureMap(4, 6, 6)}, spec_of(1, 1), 1, MatchParams{}), NoCandidate);
}

TEST(Oracle, SelfReferenceIsIdentityOnInterior)
{
    std::mt19937 gen(19);
    for (int trial = 0; trial < 5; ++trial) {
        const FeatureMap fm = test::random_map(gen, 8, 6, 6, -1.0f, 1.0f);
        for (bool cosine : {false, true}) {
            MatchParams p;
            p.normalize_input = cosine;
            const auto o = match_oracle(fm, std::vector<FeatureMap>{fm}, 1, 1, p);
            for (int y = 1; y < 5; ++y)
                for (int x = 1; x < 5; ++x) {
                    EXPECT_EQ(o.field.at(y, x).row, y);
                    EXPECT_EQ(o.field.at(y, x).col, x);
                }
        }
    }
}

TEST(Oracle, EmptyReferencesAndCap)
{
    const FeatureMap input(2, 4, 4, 1.0f);
    EXPECT_THROW(match_oracle(input, std::vector<FeatureMap>{}, 1, 1, MatchParams{}), NoCandidate);
    MatchParams p;
    p.oracle_cap = 10;
    EXPECT_THROW(match_oracle(input, std::vector<FeatureMap>{FeatureMap(2, 5, 5, 1.0f)}, 1, 1, p), CapExceeded);
}

TEST(Streaming, PartsAreBitIdenticalToWholeImageExtraction)
{
    ExtractorConfig cfg;
    cfg.stage_channels = {6, 8, 8};
    cfg.weights = GaborBankWeights{3};
    const Extractor ex(cfg);
    std::mt19937 gen(20);
    for (auto [w, h] : {std::pair{48, 40}, std::pair{37, 30}, std::pair{64, 64}}) {
        const std::vector<Image> imgs{test::random_image(gen, w, h)};
        const FeaturePyramid whole = extract(ex, imgs[0]);
        const StreamingReferences streaming(ex, imgs);
        const auto [mh, mw] = streaming.matching_dims(0);
        ASSERT_EQ(mh, whole.matching().height());
        ASSERT_EQ(mw, whole.matching().width());
        for (int n_r : {1, 4, 9})
            for (const auto& rect : part_grid(mh, mw, n_r, 3)) {
                const auto part = streaming.part(0, rect, nullptr, {});
                const auto want = detail::pixel_major_region(whole.matching(), rect);
                ASSERT_TRUE(test::bit_equal(part.features.v, want.v))
                    << w << "x" << h << " part at " << rect.row << "," << rect.col;
            }
    }
}

TEST(MatchFieldTensor, RoundTrip)
{
    MatchField f(2, 3);
    for (std::size_t i = 0; i < f.size(); ++i)
        f.cells()[i] = {static_cast<int>(i % 2), static_cast<int>(i), 5, 7, 1, 0.25f * static_cast<float>(i)};
    EXPECT_EQ(field_from_tensor(field_to_tensor(f)), f);
}
