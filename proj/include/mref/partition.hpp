#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace mref {

/// Counts driving the part-based decomposition.
struct PartitionSpec
{
    int n_m = 1; ///< reference images
    int n_i = 1; ///< spatial parts of the input
    int n_r = 1; ///< spatial parts of each reference
    int n_c = 0; ///< channel subvectors of the input; 0 selects auto_nc
    int n_l = 3; ///< hierarchy depth, fixed

    void validate() const;
};

/// Integer square root when n is a perfect square, otherwise -1.
inline int exact_sqrt(int n)
{
    if (n < 1)
        return -1;
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : -1;
}

inline void PartitionSpec::validate() const
{
    if (n_m < 1)
        throw ConfigError("spec.n_m", "must be >= 1");
    if (n_i < 1 || exact_sqrt(n_i) < 0)
        throw ConfigError("spec.n_i", "must be a perfect square >= 1");
    if (n_r < 1 || exact_sqrt(n_r) < 0)
        throw ConfigError("spec.n_r", "must be a perfect square >= 1");
    if (n_c < 0)
        throw ConfigError("spec.n_c", "must be >= 0");
    if (n_l != 3)
        throw ConfigError("spec.n_l", "hierarchy depth is fixed at 3");
}

/// Subvector count from the per-stage channel widths: c3 / ((c1 + c2 + c3) / 4), snapped to the
/// nearest divisor of c3 (ties go to the smaller divisor).
inline int auto_nc(const std::array<int, 3>& channels)
{
    const double c3 = channels[2];
    const double raw = c3 / ((channels[0] + channels[1] + channels[2]) / 4.0);
    int best = 1;
    double best_dist = std::abs(raw - 1.0);
    for (int d = 2; d <= channels[2]; ++d) {
        if (channels[2] % d != 0)
            continue;
        const double dist = std::abs(raw - d);
        if (dist < best_dist) {
            best = d;
            best_dist = dist;
        }
    }
    return best;
}

/// Rectangle of a part in source coordinates.
struct PartRect
{
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;

    bool operator==(const PartRect&) const = default;
};

/// Where a part came from; reference == -1 marks the input image.
struct PartSource
{
    int reference = -1;
    int part = 0;
};

struct Part
{
    PartRect rect;
    FeatureMap feature;
    PartSource source;
};

namespace detail {

// Splits patch top-left positions [0, P) into g balanced runs; each part spans its run plus patch - 1.
inline std::vector<std::pair<int, int>> grid_axis(int extent, int g, int patch_size)
{
    const int positions = extent - patch_size + 1;
    if (positions < g)
        throw SizeError("map extent " + std::to_string(extent) + " too small for " + std::to_string(g) +
                        " parts of patch size " + std::to_string(patch_size));
    std::vector<std::pair<int, int>> spans;
    for (int i = 0; i < g; ++i) {
        const int lo = static_cast<int>(static_cast<long long>(i) * positions / g);
        const int hi = static_cast<int>(static_cast<long long>(i + 1) * positions / g);
        spans.emplace_back(lo, hi - lo + patch_size - 1);
    }
    return spans;
}

} // namespace detail

/// Row-major grid of sqrt(n) x sqrt(n) part rectangles. Neighbouring parts overlap by
/// patch_size - 1, so every patch of the map lies wholly inside at least one part.
inline std::vector<PartRect> part_grid(int height, int width, int n_parts, int patch_size)
{
    const int g = exact_sqrt(n_parts);
    if (g < 0)
        throw DivisibilityError("part count " + std::to_string(n_parts) + " is not a perfect square");
    const auto rows = detail::grid_axis(height, g, patch_size);
    const auto cols = detail::grid_axis(width, g, patch_size);
    std::vector<PartRect> rects;
    for (const auto& [r0, h] : rows)
        for (const auto& [c0, w] : cols)
            rects.push_back({r0, c0, h, w});
    return rects;
}

inline std::vector<Part> split_spatial(const FeatureMap& fm, int n_parts, int patch_size)
{
    std::vector<Part> parts;
    int index = 0;
    for (const auto& rect : part_grid(fm.height(), fm.width(), n_parts, patch_size))
        parts.push_back({rect, fm.crop(rect.row, rect.col, rect.height, rect.width), {-1, index++}});
    return parts;
}

/// n_c order-preserving blocks of contiguous channels.
template <class T>
std::vector<BasicFeatureMap<T>> split_channels(const BasicFeatureMap<T>& fm, int n_c)
{
    if (n_c < 1 || fm.channels() % n_c != 0)
        throw DivisibilityError("subvector count " + std::to_string(n_c) + " does not divide " +
                                std::to_string(fm.channels()) + " channels");
    const int per = fm.channels() / n_c;
    const std::size_t block = static_cast<std::size_t>(per) * fm.plane_size();
    std::vector<BasicFeatureMap<T>> out;
    for (int c = 0; c < n_c; ++c) {
        std::vector<T> v(fm.storage().begin() + c * block, fm.storage().begin() + (c + 1) * block);
        out.emplace_back(per, fm.height(), fm.width(), std::move(v));
    }
    return out;
}

} // namespace mref
