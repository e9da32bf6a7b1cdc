#pragma once

#include <stdexcept>
#include <string>

namespace mref {

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class SizeError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class DivisibilityError : public Error { public: using Error::Error; };

/// Every candidate patch at some position was excluded by the norm threshold.
class NoCandidate : public Error { public: using Error::Error; };

/// The brute-force oracle was asked to scan more candidates than its cap.
class CapExceeded : public Error { public: using Error::Error; };

/// Invalid run configuration; `key()` names the offending setting.
class ConfigError : public Error
{
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key.empty() ? what : key + ": " + what), key_(std::move(key))
    {
    }
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace mref
