#pragma once

#include <array>
#include <cstdint>

namespace pgdpo {

/// Purpose tags that separate the independent random streams of a run.
enum class StreamTag : std::uint32_t {
    Market = 1,
    InitialNodes = 2,
    Brownian = 3,
    PolicyInit = 4,
    Surrogate = 5,
    Eval = 6,
};

/// Philox4x32-10 block function (Salmon et al. counter-based generator).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Counter-based stream keyed by (seed, tag, a, b). Draw i of a stream is a pure
/// function of the key and i, so streams can be created in any order and on any
/// thread without changing their output.
class Stream {
public:
    Stream(std::uint64_t seed, StreamTag tag, std::uint32_t a = 0, std::uint32_t b = 0);

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller; platform-independent given libm.
    double normal();

    std::uint64_t blocks_used() const noexcept { return block_; }

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint32_t tag_;
    std::uint32_t a_;
    std::uint32_t b_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pgdpo
