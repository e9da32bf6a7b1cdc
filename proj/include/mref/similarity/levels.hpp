#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/core/ledger.hpp>
#include <mref/core/parallel.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/kernels.hpp>
#include <mref/similarity/match_field.hpp>

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mref {

using kernels::PixelMajor;
using kernels::Subvector;

namespace detail {

inline PixelMajor pixel_major_of(std::span<const FeatureMap> subs, std::vector<Subvector>& svs)
{
    if (subs.empty())
        throw ShapeError("no input subvectors");
    svs.clear();
    int offset = 0;
    for (const auto& s : subs) {
        if (s.height() != subs[0].height() || s.width() != subs[0].width())
            throw ShapeError("input subvectors differ in spatial dims");
        svs.push_back({offset, s.channels()});
        offset += s.channels();
    }
    return PixelMajor(subs.size() == 1 ? subs[0] : concat_channels(subs));
}

inline FeatureMap planar_of(const PixelMajor& pm)
{
    FeatureMap fm(pm.channels, pm.height, pm.width);
    for (int c = 0; c < pm.channels; ++c) {
        auto p = fm.plane(c);
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = pm.v[i * pm.channels + c];
    }
    return fm;
}

// Per-position, per-subvector input window norms; only needed for cosine scoring.
inline std::vector<float> input_norms(const PixelMajor& input, std::span<const Subvector> svs, const MatchParams& p)
{
    std::vector<float> out;
    if (!p.normalize_input)
        return out;
    out.resize(static_cast<std::size_t>(input.height) * input.width * svs.size());
    for (int y = 0; y < input.height; ++y)
        for (int x = 0; x < input.width; ++x)
            for (std::size_t c = 0; c < svs.size(); ++c)
                out[(static_cast<std::size_t>(y) * input.width + x) * svs.size() + c] =
                    kernels::input_norm(input, y, x, p.radius(), svs[c]);
    return out;
}

inline float input_norm_at(const std::vector<float>& norms, int y, int x, int width, std::size_t n_c, std::size_t c)
{
    return norms.empty() ? 0.0f : norms[(static_cast<std::size_t>(y) * width + x) * n_c + c];
}

} // namespace detail

/// Level-1 result in pixel-major layout, as consumed by the merge levels.
struct Level1Pixels
{
    PixelMajor swapped;
    MatchField field;
};

/// Input attention over one reference part. For every input position the best patch is found
/// per subvector, then the best subvector wins; scan order (patch row, patch col, subvector)
/// with strict improvement realises the lexicographic tie-break. Returns nullopt when no patch
/// of the part clears the norm threshold.
inline std::optional<Level1Pixels> level1_pixels(const PixelMajor& input, std::span<const Subvector> svs,
                                                 const PixelMajor& part, PartRect rect, PartSource source,
                                                 const MatchParams& p, Exec exec = {})
{
    if (part.channels != input.channels)
        throw ShapeError("reference part has " + std::to_string(part.channels) + " channels, input has " +
                         std::to_string(input.channels));
    const int r = p.radius();
    struct Candidate
    {
        int cy, cx;
    };
    std::vector<Candidate> cands;
    for (int i = 0; i + p.patch_size <= part.height; ++i) {
        if ((rect.row + i) % p.stride != 0)
            continue;
        for (int j = 0; j + p.patch_size <= part.width; ++j)
            if ((rect.col + j) % p.stride == 0)
                cands.push_back({i + r, j + r});
    }
    const std::size_t n_c = svs.size();
    std::vector<float> norms(cands.size() * n_c);
    bool any = false;
    for (std::size_t k = 0; k < cands.size(); ++k)
        for (std::size_t c = 0; c < n_c; ++c) {
            norms[k * n_c + c] = kernels::patch_norm(part, cands[k].cy, cands[k].cx, r, svs[c]);
            any = any || norms[k * n_c + c] >= p.norm_epsilon;
        }
    if (!any)
        return std::nullopt;

    const auto wnorms = detail::input_norms(input, svs, p);
    Level1Pixels out{PixelMajor{}, MatchField(input.height, input.width)};
    out.swapped.height = input.height;
    out.swapped.width = input.width;
    out.swapped.channels = input.channels;
    out.swapped.v.resize(static_cast<std::size_t>(input.height) * input.width * input.channels);

    parallel_for(0, input.height, exec, [&](int y) {
        for (int x = 0; x < input.width; ++x) {
            float best = kExcluded;
            std::size_t best_k = 0, best_c = 0;
            for (std::size_t k = 0; k < cands.size(); ++k)
                for (std::size_t c = 0; c < n_c; ++c) {
                    const float norm = norms[k * n_c + c];
                    if (norm < p.norm_epsilon)
                        continue;
                    const float raw = kernels::window_dot(input, y, x, part, cands[k].cy, cands[k].cx, r, svs[c]);
                    const float s = kernels::normalised(
                        raw, norm, detail::input_norm_at(wnorms, y, x, input.width, n_c, c), p);
                    if (s > best) {
                        best = s;
                        best_k = k;
                        best_c = c;
                    }
                }
            const auto& win = cands[best_k];
            const float* src = part.px(win.cy, win.cx);
            std::copy(src, src + input.channels,
                      out.swapped.v.begin() + (static_cast<std::ptrdiff_t>(y) * input.width + x) * input.channels);
            out.field.at(y, x) = {source.reference, source.part, rect.row + win.cy, rect.col + win.cx,
                                  static_cast<int>(best_c), best};
        }
    });
    return out;
}

/// Swapped map O^1 and provenance of one reference part.
struct Level1Result
{
    FeatureMap swapped;
    MatchField field;
};

inline Level1Result level1_input_attention(std::span<const FeatureMap> input_subs, const Part& ref_part,
                                           const MatchParams& params, Exec exec = {})
{
    params.validate();
    std::vector<Subvector> svs;
    const PixelMajor input = detail::pixel_major_of(input_subs, svs);
    if (ref_part.feature.height() < params.patch_size || ref_part.feature.width() < params.patch_size)
        throw SizeError("reference part smaller than the patch");
    auto res = level1_pixels(input, svs, PixelMajor(ref_part.feature), ref_part.rect, ref_part.source, params, exec);
    if (!res)
        throw NoCandidate("every patch of reference part " + std::to_string(ref_part.source.part) +
                          " is below the norm threshold");
    return {detail::planar_of(res->swapped), std::move(res->field)};
}

/// Raw (un-normalised) per-candidate weight and normalised aligned score at one position.
struct AlignedScore
{
    float score = kExcluded;
    float weight = 0.0f;
};

/// Aligned comparison of the input window with the candidate's own patch at the same position:
/// score is the best normalised correlation over subvectors, weight the best raw one.
inline AlignedScore aligned_score(const PixelMajor& input, std::span<const Subvector> svs, const PixelMajor& cand,
                                  int y, int x, const MatchParams& p, const std::vector<float>& wnorms)
{
    const int r = p.radius();
    AlignedScore out{kExcluded, 0.0f};
    for (std::size_t c = 0; c < svs.size(); ++c) {
        const float raw = kernels::window_dot(input, y, x, cand, y, x, r, svs[c]);
        const float norm = kernels::window_norm(cand, y, x, r, svs[c], y, x, input.height, input.width);
        const float s =
            kernels::normalised(raw, norm, detail::input_norm_at(wnorms, y, x, input.width, svs.size(), c), p);
        if (c == 0 || raw > out.weight)
            out.weight = raw;
        if (s > out.score)
            out.score = s;
    }
    return out;
}

/// Streaming form of the reference attention merge: candidates are folded in index order and a
/// later candidate replaces the current one only on a strictly higher aligned score, so ties
/// keep the lowest index. A single candidate passes through unchanged.
class MergeAccumulator
{
public:
    MergeAccumulator(const PixelMajor& input, std::vector<Subvector> svs, const MatchParams& params, Exec exec = {},
                     MemoryLedger* ledger = nullptr)
        : input_(&input), svs_(std::move(svs)), params_(params), exec_(exec),
          wnorms_(detail::input_norms(input, svs_, params)), field_(input.height, input.width),
          best_(static_cast<std::size_t>(input.height) * input.width, kExcluded),
          weights_(best_.size(), 0.0f), winners_(best_.size(), -1)
    {
        swapped_.height = input.height;
        swapped_.width = input.width;
        swapped_.channels = input.channels;
        swapped_.v.assign(static_cast<std::size_t>(input.height) * input.width * input.channels, 0.0f);
        hold_ = track(ledger, MemoryCategory::Merged,
                      swapped_.bytes() + best_.size() * (2 * sizeof(float) + sizeof(int) + sizeof(Winner)));
    }

    /// Folds in candidate map `cand` (input dims); `field` carries its provenance, if any.
    void add(const PixelMajor& cand, const MatchField* field = nullptr)
    {
        if (cand.height != input_->height || cand.width != input_->width || cand.channels != input_->channels)
            throw ShapeError("merge candidate dims differ from the input map");
        const int k = count_++;
        const bool first = k == 0;
        const int W = input_->width, C = input_->channels;
        parallel_for(0, input_->height, exec_, [&](int y) {
            for (int x = 0; x < W; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                const AlignedScore a = aligned_score(*input_, svs_, cand, y, x, params_, wnorms_);
                if (first || a.score > best_[i]) {
                    best_[i] = a.score;
                    weights_[i] = a.weight;
                    winners_[i] = k;
                    std::copy(cand.px(y, x), cand.px(y, x) + C, swapped_.v.begin() + static_cast<std::ptrdiff_t>(i) * C);
                    if (field)
                        field_.cells()[i] = field->cells()[i];
                }
            }
        });
    }

    int count() const noexcept { return count_; }

    struct Result
    {
        PixelMajor swapped;
        MatchField field;
        std::vector<int> winners;
        FeatureMap weights;
    };

    /// Throws NoCandidate when nothing was added, or when several candidates were folded and all
    /// of them were excluded at some position.
    Result finish()
    {
        if (count_ == 0)
            throw NoCandidate("merge received no candidates");
        if (count_ > 1)
            for (std::size_t i = 0; i < best_.size(); ++i)
                if (best_[i] == kExcluded)
                    throw NoCandidate("every merge candidate is below the norm threshold at position (" +
                                      std::to_string(i / input_->width) + ", " + std::to_string(i % input_->width) +
                                      ")");
        FeatureMap w(1, input_->height, input_->width, std::move(weights_));
        return {std::move(swapped_), std::move(field_), std::move(winners_), std::move(w)};
    }

private:
    const PixelMajor* input_;
    std::vector<Subvector> svs_;
    MatchParams params_;
    Exec exec_;
    std::vector<float> wnorms_;
    PixelMajor swapped_;
    MatchField field_;
    std::vector<float> best_;
    std::vector<float> weights_;
    std::vector<int> winners_;
    int count_ = 0;
    MemoryLedger::Hold hold_;
};

/// Batch reference attention: O^l and the per-position winning candidate index.
struct MergeResult
{
    FeatureMap swapped;
    std::vector<int> winners;
};

inline MergeResult level_merge(std::span<const FeatureMap> input_subs, std::span<const FeatureMap> candidates,
                               const MatchParams& params, Exec exec = {})
{
    params.validate();
    std::vector<Subvector> svs;
    const PixelMajor input = detail::pixel_major_of(input_subs, svs);
    MergeAccumulator acc(input, svs, params, exec);
    for (const auto& cand : candidates)
        acc.add(PixelMajor(cand));
    auto res = acc.finish();
    return {detail::planar_of(res.swapped), std::move(res.winners)};
}

/// W(x, y) = max over subvectors of the raw correlation between the input window and the
/// aligned patch of the winning previous-level candidate.
inline FeatureMap weight_map(std::span<const FeatureMap> input_subs, std::span<const FeatureMap> prev_candidates,
                             std::span<const int> winners, const MatchParams& params = {}, Exec exec = {})
{
    std::vector<Subvector> svs;
    const PixelMajor input = detail::pixel_major_of(input_subs, svs);
    if (winners.size() != static_cast<std::size_t>(input.height) * input.width)
        throw ShapeError("winner map size differs from the input map");
    std::vector<PixelMajor> cands;
    for (const auto& c : prev_candidates) {
        if (c.height() != input.height || c.width() != input.width || c.channels() != input.channels)
            throw ShapeError("weight candidate dims differ from the input map");
        cands.emplace_back(c);
    }
    FeatureMap w(1, input.height, input.width);
    const int r = params.radius();
    parallel_for(0, input.height, exec, [&](int y) {
        for (int x = 0; x < input.width; ++x) {
            const int k = winners[static_cast<std::size_t>(y) * input.width + x];
            if (k < 0 || static_cast<std::size_t>(k) >= cands.size())
                throw ShapeError("winner index out of range");
            float best = 0.0f;
            for (std::size_t c = 0; c < svs.size(); ++c) {
                const float raw = kernels::window_dot(input, y, x, cands[k], y, x, r, svs[c]);
                if (c == 0 || raw > best)
                    best = raw;
            }
            w.at(0, y, x) = best;
        }
    });
    return w;
}

/// Normalized correlation scores of every input position against every candidate patch.
struct ScoreVolume
{
    int height = 0;
    int width = 0;
    std::vector<std::pair<int, int>> patches; ///< patch centres in candidate coordinates
    std::vector<float> scores;                ///< [position][patch], kExcluded for zero-norm patches

    float at(int y, int x, std::size_t patch) const
    {
        return scores[(static_cast<std::size_t>(y) * width + x) * patches.size() + patch];
    }
};

inline ScoreVolume similarity_map(const FeatureMap& input_sub, const FeatureMap& candidate, const MatchParams& params)
{
    params.validate();
    if (input_sub.channels() != candidate.channels())
        throw ShapeError("similarity_map: channel counts differ");
    if (candidate.height() < params.patch_size || candidate.width() < params.patch_size)
        throw SizeError("similarity_map: candidate smaller than the patch");
    const PixelMajor in(input_sub), cand(candidate);
    const Subvector all{0, in.channels};
    const int r = params.radius();
    ScoreVolume vol{in.height, in.width, {}, {}};
    for (int i = 0; i + params.patch_size <= cand.height; i += params.stride)
        for (int j = 0; j + params.patch_size <= cand.width; j += params.stride)
            vol.patches.emplace_back(i + r, j + r);
    std::vector<float> norms;
    for (auto [py, px] : vol.patches)
        norms.push_back(kernels::patch_norm(cand, py, px, r, all));
    vol.scores.resize(static_cast<std::size_t>(in.height) * in.width * vol.patches.size());
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            const float wn = params.normalize_input ? kernels::input_norm(in, y, x, r, all) : 0.0f;
            for (std::size_t k = 0; k < vol.patches.size(); ++k) {
                const float raw = kernels::window_dot(in, y, x, cand, vol.patches[k].first, vol.patches[k].second, r, all);
                vol.scores[(static_cast<std::size_t>(y) * in.width + x) * vol.patches.size() + k] =
                    kernels::normalised(raw, norms[k], wn, params);
            }
        }
    return vol;
}

} // namespace mref
