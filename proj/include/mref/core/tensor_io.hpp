#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace mref {

// On-disk layout: "RSWTENS1" | rank:u32 | dims:u32[rank] | payload:f32[prod(dims)], all little-endian.
inline constexpr std::string_view kTensorMagic = "RSWTENS1";

/// Rank 1..4 float tensor as stored in a tensor file.
struct Tensor
{
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t element_count() const
    {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t d) { return a * d; });
    }
};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

} // namespace detail

inline std::vector<char> encode_tensor(const Tensor& t)
{
    if (t.dims.empty() || t.dims.size() > 4)
        throw FormatError("tensor rank must be 1..4");
    if (t.values.size() != t.element_count())
        throw ShapeError("tensor payload length does not match dims");
    std::vector<char> out(kTensorMagic.begin(), kTensorMagic.end());
    out.reserve(8 + 4 + 4 * t.dims.size() + 4 * t.values.size());
    detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims)
        detail::put_u32(out, d);
    for (float v : t.values)
        detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline Tensor decode_tensor(std::span<const char> bytes)
{
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 12 || std::memcmp(p, kTensorMagic.data(), kTensorMagic.size()) != 0)
        throw FormatError("bad tensor magic");
    const std::uint32_t rank = detail::get_u32(p + 8);
    if (rank < 1 || rank > 4)
        throw FormatError("tensor rank " + std::to_string(rank) + " outside 1..4");
    if (n < 12 + 4 * std::size_t{rank})
        throw FormatError("truncated tensor header");
    Tensor t;
    for (std::uint32_t i = 0; i < rank; ++i)
        t.dims.push_back(detail::get_u32(p + 12 + 4 * i));
    const std::size_t count = t.element_count();
    const std::size_t offset = 12 + 4 * std::size_t{rank};
    if (n - offset != 4 * count)
        throw FormatError("tensor payload is " + std::to_string(n - offset) + " bytes, expected " +
                          std::to_string(4 * count));
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        t.values[i] = std::bit_cast<float>(detail::get_u32(p + offset + 4 * i));
    return t;
}

inline void write_tensor(const Tensor& t, const std::filesystem::path& path)
{
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed: " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failed: " + path.string());
    return decode_tensor(bytes);
}

/// Feature maps are stored as rank-3 (C, H, W) tensors.
inline void save_tensor(const FeatureMap& fm, const std::filesystem::path& path)
{
    Tensor t{{static_cast<std::uint32_t>(fm.channels()), static_cast<std::uint32_t>(fm.height()),
              static_cast<std::uint32_t>(fm.width())},
             fm.storage()};
    write_tensor(t, path);
}

/// Ranks 1 and 2 load as single-channel maps; rank 4 is rejected.
inline FeatureMap load_tensor(const std::filesystem::path& path)
{
    Tensor t = read_tensor(path);
    std::array<std::uint32_t, 3> chw{1, 1, 1};
    switch (t.dims.size()) {
    case 1: chw = {1, 1, t.dims[0]}; break;
    case 2: chw = {1, t.dims[0], t.dims[1]}; break;
    case 3: chw = {t.dims[0], t.dims[1], t.dims[2]}; break;
    default: throw FormatError("rank-4 tensor cannot be loaded as a feature map");
    }
    if (chw[0] == 0 || chw[1] == 0 || chw[2] == 0)
        throw FormatError("tensor has a zero dimension");
    return FeatureMap(static_cast<int>(chw[0]), static_cast<int>(chw[1]), static_cast<int>(chw[2]),
                      std::move(t.values));
}

} // namespace mref
