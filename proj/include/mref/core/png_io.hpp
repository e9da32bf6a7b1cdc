#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>

#include <png.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace mref {

namespace detail {

struct PngImageGuard
{
    png_image* img;
    ~PngImageGuard() { png_image_free(img); }
};

} // namespace detail

/// Decodes an 8-bit PNG; alpha, when present, is dropped.
inline Image read_png(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failed: " + path.string());

    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    detail::PngImageGuard guard{&png};
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw FormatError(path.string() + ": " + png.message);
    if (png.format & PNG_FORMAT_FLAG_LINEAR)
        throw FormatError(path.string() + ": 16-bit PNG not supported");

    png.format = PNG_FORMAT_RGBA;
    const int w = static_cast<int>(png.width);
    const int h = static_cast<int>(png.height);
    std::vector<png_byte> rgba(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, rgba.data(), 0, nullptr))
        throw FormatError(path.string() + ": " + png.message);

    Image img(w, h);
    for (std::size_t i = 0, n = static_cast<std::size_t>(w) * h; i < n; ++i) {
        img.data[3 * i] = rgba[4 * i];
        img.data[3 * i + 1] = rgba[4 * i + 1];
        img.data[3 * i + 2] = rgba[4 * i + 2];
    }
    return img;
}

inline void write_png(const Image& img, const std::filesystem::path& path)
{
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_RGB;
    detail::PngImageGuard guard{&png};
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.data.data(), 0, nullptr))
        throw IoError("cannot write " + path.string() + ": " + png.message);
}

} // namespace mref
