#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <string_view>

namespace mref {

/// Buckets of feature memory tracked by the ledger.
enum class MemoryCategory : int {
    Input = 0,     ///< input image features
    Reference = 1, ///< reference features, including extraction scratch
    Merged = 2,    ///< per-level assembled maps, score and weight buffers
};

inline constexpr std::array<std::string_view, 3> kMemoryCategoryNames{"input", "reference", "merged"};

/// Logical accounting of feature buffers. Counts registered bytes, not OS pages, so
/// the numbers depend only on which buffers are alive, never on thread scheduling.
class MemoryLedger
{
public:
    /// RAII registration of one buffer; releases its bytes on destruction.
    class Hold
    {
    public:
        Hold() = default;
        Hold(MemoryLedger* ledger, MemoryCategory cat, std::size_t bytes) : ledger_(ledger), cat_(cat), bytes_(bytes)
        {
            if (ledger_)
                ledger_->acquire(cat_, bytes_);
        }
        Hold(Hold&& o) noexcept : ledger_(o.ledger_), cat_(o.cat_), bytes_(o.bytes_) { o.ledger_ = nullptr; }
        Hold& operator=(Hold&& o) noexcept
        {
            if (this != &o) {
                reset();
                ledger_ = o.ledger_;
                cat_ = o.cat_;
                bytes_ = o.bytes_;
                o.ledger_ = nullptr;
            }
            return *this;
        }
        Hold(const Hold&) = delete;
        Hold& operator=(const Hold&) = delete;
        ~Hold() { reset(); }

        void reset()
        {
            if (ledger_)
                ledger_->release(cat_, bytes_);
            ledger_ = nullptr;
        }

    private:
        MemoryLedger* ledger_ = nullptr;
        MemoryCategory cat_ = MemoryCategory::Input;
        std::size_t bytes_ = 0;
    };

    Hold hold(MemoryCategory cat, std::size_t bytes) { return Hold(this, cat, bytes); }

    std::size_t current_bytes() const { return total_.current.load(); }
    std::size_t peak_bytes() const { return total_.peak.load(); }
    std::size_t current_bytes(MemoryCategory c) const { return cats_[index(c)].current.load(); }
    std::size_t peak_bytes(MemoryCategory c) const { return cats_[index(c)].peak.load(); }

private:
    struct Counter
    {
        std::atomic<std::size_t> current{0};
        std::atomic<std::size_t> peak{0};

        void add(std::size_t n)
        {
            const std::size_t now = current.fetch_add(n) + n;
            std::size_t prev = peak.load();
            while (prev < now && !peak.compare_exchange_weak(prev, now)) {
            }
        }
        void sub(std::size_t n) { current.fetch_sub(n); }
    };

    static std::size_t index(MemoryCategory c) { return static_cast<std::size_t>(c); }

    void acquire(MemoryCategory c, std::size_t n)
    {
        cats_[index(c)].add(n);
        total_.add(n);
    }
    void release(MemoryCategory c, std::size_t n)
    {
        cats_[index(c)].sub(n);
        total_.sub(n);
    }

    std::array<Counter, 3> cats_;
    Counter total_;
};

/// Registers `bytes` when a ledger is attached, otherwise a no-op hold.
inline MemoryLedger::Hold track(MemoryLedger* ledger, MemoryCategory cat, std::size_t bytes)
{
    return MemoryLedger::Hold(ledger, cat, bytes);
}

} // namespace mref
