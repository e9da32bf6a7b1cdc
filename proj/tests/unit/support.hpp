#pragma once

#include <mref/core/image.hpp>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace mref::test {

inline std::filesystem::path data_path(const std::string& name)
{
    return std::filesystem::path(MREF_TEST_DATA) / name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mref_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline Image random_image(std::mt19937& gen, int w, int h)
{
    Image img(w, h);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : img.data)
        v = static_cast<std::uint8_t>(d(gen));
    return img;
}

inline FeatureMap random_map(std::mt19937& gen, int c, int h, int w, float lo = 0.0f, float hi = 1.0f)
{
    FeatureMap fm(c, h, w);
    std::uniform_real_distribution<float> d(lo, hi);
    for (auto& v : fm.storage())
        v = d(gen);
    return fm;
}

template <class T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b)
{
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

} // namespace mref::test
