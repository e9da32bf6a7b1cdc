#pragma once

#include <mref/core/error.hpp>
#include <mref/core/parallel.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/kernels.hpp>
#include <mref/similarity/levels.hpp>
#include <mref/similarity/match_field.hpp>

#include <span>
#include <tuple>
#include <vector>

namespace mref {

/// Exhaustive reference matcher: every (reference, patch, subvector) candidate is scored at every
/// input position and the global maximum wins. No parts, no hierarchy. The reported part index
/// is the lowest part of an n_r grid that contains the patch, and ties follow the same
/// lexicographic order (m, r, patch_row, patch_col, c) as the hierarchical matcher.
inline SwapOutput match_oracle(const FeatureMap& input_matching, std::span<const FeatureMap> ref_matching, int n_c,
                               int n_r, const MatchParams& params, Exec exec = {})
{
    params.validate();
    if (ref_matching.empty())
        throw NoCandidate("no reference images");
    const int H = input_matching.height(), W = input_matching.width(), C = input_matching.channels();
    if (n_c < 1 || C % n_c != 0)
        throw DivisibilityError("n_c does not divide the channel count");
    const auto svs = kernels::subvectors(C, n_c);
    const int r = params.radius();

    struct Candidate
    {
        int m, part, cy, cx;
        std::vector<float> norms;
    };
    std::vector<Candidate> cands;
    std::vector<kernels::PixelMajor> refs;
    for (int m = 0; m < static_cast<int>(ref_matching.size()); ++m) {
        const auto& fm = ref_matching[m];
        if (fm.channels() != C)
            throw ShapeError("reference and input channel counts differ");
        refs.emplace_back(fm);
        const auto rects = part_grid(fm.height(), fm.width(), n_r, params.patch_size);
        for (int i = 0; i + params.patch_size <= fm.height(); i += params.stride)
            for (int j = 0; j + params.patch_size <= fm.width(); j += params.stride) {
                int part = -1;
                for (int k = 0; k < static_cast<int>(rects.size()) && part < 0; ++k) {
                    const auto& rc = rects[k];
                    if (i >= rc.row && j >= rc.col && i + params.patch_size <= rc.row + rc.height &&
                        j + params.patch_size <= rc.col + rc.width)
                        part = k;
                }
                Candidate cand{m, part, i + r, j + r, {}};
                for (const auto& sv : svs)
                    cand.norms.push_back(kernels::patch_norm(refs.back(), i + r, j + r, r, sv));
                cands.push_back(std::move(cand));
            }
    }
    const std::size_t evaluations = static_cast<std::size_t>(H) * W * cands.size() * svs.size();
    if (evaluations > params.oracle_cap)
        throw CapExceeded("oracle would evaluate " + std::to_string(evaluations) + " scores, cap is " +
                          std::to_string(params.oracle_cap));

    const kernels::PixelMajor input(input_matching);
    const auto wnorms = detail::input_norms(input, svs, params);
    SwapOutput out{FeatureMap(C, H, W), FeatureMap(1, H, W), MatchField(H, W)};
    parallel_for(0, H, exec, [&](int y) {
        for (int x = 0; x < W; ++x) {
            float best = kExcluded;
            const Candidate* win = nullptr;
            int win_c = -1;
            for (const auto& cand : cands)
                for (std::size_t c = 0; c < svs.size(); ++c) {
                    if (cand.norms[c] < params.norm_epsilon)
                        continue;
                    const float raw = kernels::window_dot(input, y, x, refs[cand.m], cand.cy, cand.cx, r, svs[c]);
                    const float s = kernels::normalised(
                        raw, cand.norms[c], detail::input_norm_at(wnorms, y, x, W, svs.size(), c), params);
                    const bool better =
                        s > best || (s == best && win != nullptr &&
                                     std::tuple(cand.m, cand.part, cand.cy, cand.cx, static_cast<int>(c)) <
                                         std::tuple(win->m, win->part, win->cy, win->cx, win_c));
                    if (better) {
                        best = s;
                        win = &cand;
                        win_c = static_cast<int>(c);
                    }
                }
            if (win == nullptr)
                throw NoCandidate("every reference patch is below the norm threshold");
            const float* src = refs[win->m].px(win->cy, win->cx);
            for (int c = 0; c < C; ++c)
                out.swapped.at(c, y, x) = src[c];
            out.field.at(y, x) = {win->m, win->part, win->cy, win->cx, win_c, best};
        }
    });
    const int zero = 0;
    std::vector<int> winners(static_cast<std::size_t>(H) * W, zero);
    const auto subs = split_channels(input_matching, n_c);
    out.weights = weight_map(subs, std::span<const FeatureMap>(&out.swapped, 1), winners, params, exec);
    return out;
}

} // namespace mref
