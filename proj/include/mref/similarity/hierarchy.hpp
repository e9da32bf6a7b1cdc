#pragma once

#include <mref/core/error.hpp>
#include <mref/core/ledger.hpp>
#include <mref/core/parallel.hpp>
#include <mref/features/extractor.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/levels.hpp>
#include <mref/similarity/match_field.hpp>
#include <mref/similarity/reference_source.hpp>

#include <span>
#include <vector>

namespace mref {

/// Subvector count actually used: spec.n_c, or auto_nc of the pyramid's channel widths when 0.
inline int resolve_nc(const PartitionSpec& spec, const std::array<int, 3>& stage_channels)
{
    const int n_c = spec.n_c > 0 ? spec.n_c : auto_nc(stage_channels);
    if (stage_channels[2] % n_c != 0)
        throw DivisibilityError("spec.n_c = " + std::to_string(n_c) + " does not divide " +
                                std::to_string(stage_channels[2]) + " matching channels");
    return n_c;
}

namespace detail {

// Levels 1-3 for one block of input positions. Parts are pulled from `refs` one at a time;
// level 2 folds the parts of a reference as they arrive and level 3 folds whole references.
inline MergeAccumulator::Result run_levels(const PixelMajor& input, const std::vector<Subvector>& svs,
                                           const ReferenceSource& refs, int n_r, const MatchParams& params,
                                           Exec exec, MemoryLedger* ledger)
{
    MergeAccumulator top(input, svs, params, exec, ledger);
    for (int m = 0; m < refs.count(); ++m) {
        const auto [mh, mw] = refs.matching_dims(m);
        const auto rects = part_grid(mh, mw, n_r, params.patch_size);
        MergeAccumulator per_ref(input, svs, params, exec, ledger);
        for (int r = 0; r < static_cast<int>(rects.size()); ++r) {
            std::optional<Level1Pixels> lvl1;
            {
                const ReferencePart part = refs.part(m, rects[r], ledger, exec);
                lvl1 = level1_pixels(input, svs, part.features, rects[r], {m, r}, params, exec);
            }
            if (!lvl1)
                continue;
            auto hold = track(ledger, MemoryCategory::Merged,
                              lvl1->swapped.bytes() + lvl1->field.size() * sizeof(Winner));
            per_ref.add(lvl1->swapped, &lvl1->field);
        }
        if (per_ref.count() == 0)
            continue;
        auto o2 = per_ref.finish();
        top.add(o2.swapped, &o2.field);
    }
    if (top.count() == 0)
        throw NoCandidate("no reference part has a patch above the norm threshold");
    return top.finish();
}

} // namespace detail

/// Three-level hierarchical attention matching at the matching scale.
///   level 1: input attention against every part of every reference
///   level 2: reference attention over the parts of each reference
///   level 3: reference attention over the references, plus the weight map
/// With n_i > 1 the input positions are cut into a grid and each block is matched on its own
/// (its windows still read the neighbouring input features); results are stitched together.
inline SwapOutput match_hierarchical(const FeatureMap& input_matching, const ReferenceSource& refs,
                                     const PartitionSpec& spec, int n_c, const MatchParams& params, Exec exec = {},
                                     MemoryLedger* ledger = nullptr)
{
    spec.validate();
    params.validate();
    if (refs.count() == 0)
        throw NoCandidate("no reference images");
    if (spec.n_m != refs.count())
        throw ShapeError("spec.n_m = " + std::to_string(spec.n_m) + " but " + std::to_string(refs.count()) +
                         " references were supplied");
    if (refs.channels() != input_matching.channels())
        throw ShapeError("reference and input channel counts differ");
    if (n_c < 1 || input_matching.channels() % n_c != 0)
        throw DivisibilityError("n_c = " + std::to_string(n_c) + " does not divide " +
                                std::to_string(input_matching.channels()) + " channels");

    const int H = input_matching.height(), W = input_matching.width(), C = input_matching.channels();
    const int g = exact_sqrt(spec.n_i);
    if (H < g || W < g)
        throw SizeError("input map too small for " + std::to_string(spec.n_i) + " input parts");
    const auto svs = kernels::subvectors(C, n_c);
    const int halo = params.radius();

    SwapOutput out{FeatureMap(C, H, W), FeatureMap(1, H, W), MatchField(H, W)};
    for (int bi = 0; bi < g; ++bi)
        for (int bj = 0; bj < g; ++bj) {
            const int by0 = bi * H / g, by1 = (bi + 1) * H / g;
            const int bx0 = bj * W / g, bx1 = (bj + 1) * W / g;
            const int cy0 = std::max(0, by0 - halo), cy1 = std::min(H, by1 + halo);
            const int cx0 = std::max(0, bx0 - halo), cx1 = std::min(W, bx1 + halo);
            const PixelMajor block =
                g == 1 ? PixelMajor(input_matching)
                       : detail::pixel_major_region(input_matching, {cy0, cx0, cy1 - cy0, cx1 - cx0});
            auto res = detail::run_levels(block, svs, refs, spec.n_r, params, exec, ledger);
            for (int y = by0; y < by1; ++y)
                for (int x = bx0; x < bx1; ++x) {
                    const int ly = y - cy0, lx = x - cx0;
                    const float* px = res.swapped.px(ly, lx);
                    for (int c = 0; c < C; ++c)
                        out.swapped.at(c, y, x) = px[c];
                    out.weights.at(0, y, x) = res.weights.at(0, ly, lx);
                    out.field.at(y, x) = res.field.at(ly, lx);
                }
        }
    return out;
}

/// Convenience form over in-memory pyramids; matching uses the coarsest scale.
inline SwapOutput match_hierarchical(const FeaturePyramid& input, std::span<const FeaturePyramid> refs,
                                     const PartitionSpec& spec, const MatchParams& params, Exec exec = {},
                                     MemoryLedger* ledger = nullptr)
{
    std::array<int, 3> widths{input.scales[0].channels(), input.scales[1].channels(), input.scales[2].channels()};
    const auto source = MapReferences::of(refs);
    return match_hierarchical(input.matching(), source, spec, resolve_nc(spec, widths), params, exec, ledger);
}

} // namespace mref
