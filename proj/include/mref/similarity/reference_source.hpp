#pragma once

#include <mref/core/image.hpp>
#include <mref/core/ledger.hpp>
#include <mref/core/parallel.hpp>
#include <mref/features/extractor.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/kernels.hpp>

#include <span>
#include <utility>
#include <vector>

namespace mref {

/// Matching-scale features of one reference part, alive only while it is being searched.
struct ReferencePart
{
    kernels::PixelMajor features;
    MemoryLedger::Hold hold;
};

/// Supplies reference features one part at a time.
class ReferenceSource
{
public:
    virtual ~ReferenceSource() = default;

    virtual int count() const = 0;
    virtual int channels() const = 0;
    /// (height, width) of reference m at the matching scale.
    virtual std::pair<int, int> matching_dims(int m) const = 0;
    virtual ReferencePart part(int m, const PartRect& rect, MemoryLedger* ledger, Exec exec) const = 0;
};

namespace detail {

inline kernels::PixelMajor pixel_major_region(const FeatureMap& fm, const PartRect& rect)
{
    kernels::PixelMajor pm;
    pm.height = rect.height;
    pm.width = rect.width;
    pm.channels = fm.channels();
    pm.v.resize(static_cast<std::size_t>(rect.height) * rect.width * fm.channels());
    for (int c = 0; c < fm.channels(); ++c)
        for (int y = 0; y < rect.height; ++y)
            for (int x = 0; x < rect.width; ++x)
                pm.v[(static_cast<std::size_t>(y) * rect.width + x) * fm.channels() + c] =
                    fm.at(c, rect.row + y, rect.col + x);
    return pm;
}

} // namespace detail

/// Parts cut from matching-scale maps that are already in memory.
class MapReferences final : public ReferenceSource
{
public:
    explicit MapReferences(std::vector<const FeatureMap*> maps) : maps_(std::move(maps)) {}

    static MapReferences of(std::span<const FeaturePyramid> pyramids)
    {
        std::vector<const FeatureMap*> maps;
        for (const auto& p : pyramids)
            maps.push_back(&p.matching());
        return MapReferences(std::move(maps));
    }

    static MapReferences of(std::span<const FeatureMap> matching)
    {
        std::vector<const FeatureMap*> maps;
        for (const auto& m : matching)
            maps.push_back(&m);
        return MapReferences(std::move(maps));
    }

    int count() const override { return static_cast<int>(maps_.size()); }
    int channels() const override { return maps_.empty() ? 0 : maps_[0]->channels(); }
    std::pair<int, int> matching_dims(int m) const override { return {maps_[m]->height(), maps_[m]->width()}; }

    ReferencePart part(int m, const PartRect& rect, MemoryLedger* ledger, Exec) const override
    {
        ReferencePart p{detail::pixel_major_region(*maps_[m], rect), {}};
        p.hold = track(ledger, MemoryCategory::Reference, p.features.bytes());
        return p;
    }

private:
    std::vector<const FeatureMap*> maps_;
};

/// Extracts each part's features on demand from the reference image, so only one part's
/// features exist at a time. The image region is widened by the extractor's receptive-field
/// halo and aligned to the pooling grid, which makes the part bit-identical to the same
/// window of a whole-image extraction.
class StreamingReferences final : public ReferenceSource
{
public:
    StreamingReferences(const Extractor& extractor, std::span<const Image> images)
        : extractor_(&extractor), images_(images.begin(), images.end())
    {
        for (const auto& img : images_)
            if (img.width < 4 || img.height < 4)
                throw SizeError("reference image must be at least 4x4");
    }

    int count() const override { return static_cast<int>(images_.size()); }
    int channels() const override { return extractor_->config().stage_channels[kPyramidLevels - 1]; }
    std::pair<int, int> matching_dims(int m) const override
    {
        return {(images_[m].height + 3) / 4, (images_[m].width + 3) / 4};
    }

    ReferencePart part(int m, const PartRect& rect, MemoryLedger* ledger, Exec exec) const override
    {
        const auto [mh, mw] = matching_dims(m);
        const int halo = extractor_->matching_halo();
        const int y0 = std::max(0, rect.row - halo), x0 = std::max(0, rect.col - halo);
        const int y1 = std::min(mh, rect.row + rect.height + halo);
        const int x1 = std::min(mw, rect.col + rect.width + halo);

        const Image& img = images_[m];
        FeatureMap rgb(3, 4 * (y1 - y0), 4 * (x1 - x0));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < rgb.height(); ++y)
                for (int x = 0; x < rgb.width(); ++x)
                    rgb.at(c, y, x) = static_cast<float>(img.at(std::min(4 * y0 + y, img.height - 1),
                                                                std::min(4 * x0 + x, img.width - 1), c)) /
                                      255.0f;
        auto rgb_hold = track(ledger, MemoryCategory::Reference, rgb.bytes());
        const FeaturePyramid pyr = extractor_->run(rgb, exec, ledger, MemoryCategory::Reference);
        auto pyr_hold = track(ledger, MemoryCategory::Reference, pyr.bytes());
        ReferencePart p{detail::pixel_major_region(pyr.matching(),
                                                   {rect.row - y0, rect.col - x0, rect.height, rect.width}),
                        {}};
        p.hold = track(ledger, MemoryCategory::Reference, p.features.bytes());
        return p;
    }

private:
    const Extractor* extractor_;
    std::vector<Image> images_;
};

} // namespace mref
