#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/core/tensor_io.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace mref {

struct MatchParams
{
    int patch_size = 3;
    int stride = 1;
    float norm_epsilon = 1e-8f;
    /// Also divide by the input window norm (cosine similarity). Off by default.
    bool normalize_input = false;
    /// Upper bound on score evaluations the brute-force oracle will perform.
    std::size_t oracle_cap = 10'000'000;

    int radius() const { return patch_size / 2; }

    void validate() const
    {
        if (patch_size < 1 || patch_size % 2 == 0)
            throw ConfigError("match.patch_size", "must be odd and >= 1");
        if (stride < 1)
            throw ConfigError("match.stride", "must be >= 1");
        if (!(norm_epsilon > 0.0f))
            throw ConfigError("match.norm_epsilon", "must be > 0");
    }
};

inline constexpr float kExcluded = -std::numeric_limits<float>::infinity();

/// Winning candidate at one input position. (row, col) is the patch centre in the
/// reference's full matching-scale map.
struct Winner
{
    int m = -1;
    int r = -1;
    int row = -1;
    int col = -1;
    int c = -1;
    float score = kExcluded;

    bool operator==(const Winner&) const = default;
};

/// Nearest-neighbour field: one winner per input position.
class MatchField
{
public:
    MatchField() = default;
    MatchField(int height, int width) : height_(height), width_(width), cells_(static_cast<std::size_t>(height) * width) {}

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return cells_.size(); }

    Winner& at(int y, int x) { return cells_[static_cast<std::size_t>(y) * width_ + x]; }
    const Winner& at(int y, int x) const { return cells_[static_cast<std::size_t>(y) * width_ + x]; }
    std::vector<Winner>& cells() noexcept { return cells_; }
    const std::vector<Winner>& cells() const noexcept { return cells_; }

    bool operator==(const MatchField&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<Winner> cells_;
};

/// Rank-3 (6, H, W) tensor: m, r, patch_row, patch_col, c, score. Indices are exact in float.
inline Tensor field_to_tensor(const MatchField& f)
{
    const std::size_t plane = f.size();
    Tensor t{{6u, static_cast<std::uint32_t>(f.height()), static_cast<std::uint32_t>(f.width())},
             std::vector<float>(6 * plane)};
    for (std::size_t i = 0; i < plane; ++i) {
        const Winner& w = f.cells()[i];
        t.values[i] = static_cast<float>(w.m);
        t.values[plane + i] = static_cast<float>(w.r);
        t.values[2 * plane + i] = static_cast<float>(w.row);
        t.values[3 * plane + i] = static_cast<float>(w.col);
        t.values[4 * plane + i] = static_cast<float>(w.c);
        t.values[5 * plane + i] = w.score;
    }
    return t;
}

inline MatchField field_from_tensor(const Tensor& t)
{
    if (t.dims.size() != 3 || t.dims[0] != 6)
        throw FormatError("match field tensor must have dims (6, H, W)");
    MatchField f(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
    const std::size_t plane = f.size();
    for (std::size_t i = 0; i < plane; ++i) {
        Winner& w = f.cells()[i];
        w.m = static_cast<int>(t.values[i]);
        w.r = static_cast<int>(t.values[plane + i]);
        w.row = static_cast<int>(t.values[2 * plane + i]);
        w.col = static_cast<int>(t.values[3 * plane + i]);
        w.c = static_cast<int>(t.values[4 * plane + i]);
        w.score = t.values[5 * plane + i];
    }
    return f;
}

/// Swapped features O, weight map W and the field that produced them.
struct SwapOutput
{
    FeatureMap swapped;
    FeatureMap weights;
    MatchField field;

    bool operator==(const SwapOutput&) const = default;
};

} // namespace mref
