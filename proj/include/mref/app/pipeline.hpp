#pragma once

#include <mref/app/config.hpp>
#include <mref/core/color.hpp>
#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/core/ledger.hpp>
#include <mref/core/png_io.hpp>
#include <mref/core/resize.hpp>
#include <mref/features/extractor.hpp>
#include <mref/metrics/quality.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/hierarchy.hpp>
#include <mref/similarity/oracle.hpp>
#include <mref/similarity/reference_source.hpp>
#include <mref/transfer/synthesis.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mref::app {

/// Bicubic x4 reduction of a high-resolution reference into the low-resolution domain.
inline Image to_lr_domain(const Image& hr, int upscale = 4)
{
    const int w = hr.width / upscale, h = hr.height / upscale;
    if (w < 4 || h < 4)
        throw SizeError("reference " + std::to_string(hr.width) + "x" + std::to_string(hr.height) +
                        " is too small for x" + std::to_string(upscale));
    return resize_bicubic(hr, w, h);
}

inline std::vector<Image> read_images(const std::vector<std::string>& paths)
{
    std::vector<Image> out;
    for (const auto& p : paths)
        out.push_back(read_png(p));
    return out;
}

struct SuperresResult
{
    Image sr;
    SwapOutput swap;
    std::size_t peak_bytes = 0;
    std::size_t peak_reference_bytes = 0;
    double wall_ms = 0.0;
};

/// Extracts the input, streams reference parts through the hierarchy and synthesizes the output.
inline SuperresResult run_superres(const RunConfig& cfg, const Image& lr, std::span<const Image> refs_hr)
{
    if (refs_hr.empty())
        throw NoCandidate("no reference images");
    const auto t0 = std::chrono::steady_clock::now();
    MemoryLedger ledger;
    const Extractor ex(cfg.extractor);

    const FeaturePyramid input = extract(ex, lr, cfg.exec, &ledger, MemoryCategory::Input);
    auto input_hold = track(&ledger, MemoryCategory::Input, input.bytes());

    std::vector<Image> refs_lr;
    for (const auto& r : refs_hr)
        refs_lr.push_back(to_lr_domain(r, cfg.synth.upscale));
    const StreamingReferences source(ex, refs_lr);
    PartitionSpec spec = cfg.spec;
    spec.n_m = static_cast<int>(refs_hr.size());
    const int n_c = cfg.subvector_count(cfg.extractor.stage_channels);

    SuperresResult res;
    res.swap = match_hierarchical(input.matching(), source, spec, n_c, cfg.match, cfg.exec, &ledger);
    res.sr = synthesize(lr, refs_hr, res.swap.field, res.swap.weights, cfg.synth, cfg.match.patch_size);
    res.peak_bytes = ledger.peak_bytes();
    res.peak_reference_bytes = ledger.peak_bytes(MemoryCategory::Reference);
    res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Random non-negative features for the oracle comparison. With `levels > 0` values are
/// quantized to that many steps so that exact score ties are frequent.
inline FeatureMap random_features(std::mt19937& gen, int channels, int height, int width, int levels = 0)
{
    FeatureMap fm(channels, height, width);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    std::uniform_int_distribution<int> step(0, std::max(levels, 1));
    for (auto& v : fm.storage())
        v = levels > 0 ? static_cast<float>(step(gen)) / static_cast<float>(levels) : uni(gen);
    return fm;
}

struct OracleComparison
{
    bool exact = false;
    std::size_t positions = 0;
    std::size_t mismatches = 0;
    std::size_t provenance_errors = 0;
    double max_gap = 0.0;
    double tolerance = 0.0;
    SwapOutput hierarchical;
    SwapOutput oracle;

    bool pass() const { return mismatches == 0 && provenance_errors == 0; }
};

namespace detail {

inline bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof(float)) == 0; }

/// O at (y, x) equals the recorded patch centre of reference m, and part r contains the patch.
inline bool provenance_holds(const SwapOutput& s, std::span<const FeatureMap> refs, int n_r, const MatchParams& p,
                             int y, int x)
{
    const Winner& w = s.field.at(y, x);
    if (w.m < 0 || w.m >= static_cast<int>(refs.size()))
        return false;
    const FeatureMap& ref = refs[w.m];
    const int rad = p.radius();
    const int i = w.row - rad, j = w.col - rad;
    if (i < 0 || j < 0 || i + p.patch_size > ref.height() || j + p.patch_size > ref.width())
        return false;
    const auto rects = part_grid(ref.height(), ref.width(), n_r, p.patch_size);
    if (w.r < 0 || w.r >= static_cast<int>(rects.size()))
        return false;
    const PartRect& rc = rects[w.r];
    if (i < rc.row || j < rc.col || i + p.patch_size > rc.row + rc.height || j + p.patch_size > rc.col + rc.width)
        return false;
    for (int c = 0; c < ref.channels(); ++c)
        if (!same_bits(s.swapped.at(c, y, x), ref.at(c, w.row, w.col)))
            return false;
    return true;
}

} // namespace detail

/// Runs the hierarchical matcher and the brute-force oracle on the same features. The exact
/// class (patch_size 1, or a single reference, part and subvector) demands identical fields,
/// swapped features and weights; otherwise the hierarchical score may not exceed the oracle's.
inline OracleComparison compare_with_oracle(const FeatureMap& input, std::span<const FeatureMap> refs,
                                            const PartitionSpec& spec, int n_c, const MatchParams& params,
                                            Exec exec = {})
{
    OracleComparison cmp;
    cmp.exact = params.patch_size == 1 || (refs.size() == 1 && spec.n_r == 1 && n_c == 1);
    const auto source = MapReferences::of(refs);
    cmp.hierarchical = match_hierarchical(input, source, spec, n_c, params, exec);
    cmp.oracle = match_oracle(input, refs, n_c, spec.n_r, params, exec);
    const auto& h = cmp.hierarchical;
    const auto& o = cmp.oracle;
    const int H = input.height(), W = input.width();
    cmp.positions = static_cast<std::size_t>(H) * W;

    double scale = 1.0;
    for (const auto& w : o.field.cells())
        scale = std::max(scale, std::abs(static_cast<double>(w.score)));
    cmp.tolerance = 1e-5 * scale;

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!detail::provenance_holds(h, refs, spec.n_r, params, y, x) ||
                !detail::provenance_holds(o, refs, spec.n_r, params, y, x))
                ++cmp.provenance_errors;
            const Winner& hw = h.field.at(y, x);
            const Winner& ow = o.field.at(y, x);
            const double gap = static_cast<double>(hw.score) - static_cast<double>(ow.score);
            cmp.max_gap = std::max(cmp.max_gap, gap);
            bool bad;
            if (cmp.exact) {
                bad = !(hw.m == ow.m && hw.r == ow.r && hw.row == ow.row && hw.col == ow.col && hw.c == ow.c &&
                        detail::same_bits(hw.score, ow.score) &&
                        detail::same_bits(h.weights.at(0, y, x), o.weights.at(0, y, x)));
                for (int c = 0; c < input.channels() && !bad; ++c)
                    bad = !detail::same_bits(h.swapped.at(c, y, x), o.swapped.at(c, y, x));
            } else
                bad = gap > cmp.tolerance;
            if (bad)
                ++cmp.mismatches;
        }
    return cmp;
}

struct BenchRow
{
    int n_r = 1;
    std::size_t peak_bytes = 0;
    double wall_ms = 0.0;
    double psnr_y = 0.0;
};

/// One sweep entry: the ground truth is reduced x4 to form the input and super-resolved with
/// the references split into n_r parts; peak_bytes is the reference-feature peak.
inline BenchRow bench_once(const RunConfig& cfg, const Image& gt, std::span<const Image> refs_hr, int n_r)
{
    RunConfig run = cfg;
    run.spec.n_r = n_r;
    const Image lr = to_lr_domain(gt, cfg.synth.upscale);
    const auto res = run_superres(run, lr, refs_hr);
    const Image& sr = res.sr;
    if (sr.width != gt.width || sr.height != gt.height)
        throw ShapeError("bench ground truth dims must be multiples of the upscale factor");
    return {n_r, res.peak_reference_bytes, res.wall_ms, psnr_y(sr, gt)};
}

} // namespace mref::app
