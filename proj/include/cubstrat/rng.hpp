#pragma once

// Counter-based random substreams.
//
// Every random quantity is a pure function of (seed, replicate, stream id,
// draw counter), so results do not depend on evaluation order or on how work
// is split across threads.

#include <cstdint>
#include <span>

namespace cubstrat {

/// SplitMix64 finalizer (Steele, Lea & Flood).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Identifies one independent run of an estimator.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;

    friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Hash an arbitrary list of signed integers into a 64-bit stream id.
inline std::uint64_t hash_ints(std::span<const int> values, std::uint64_t salt = 0) noexcept {
    std::uint64_t h = mix64(salt ^ 0x6a09e667f3bcc908ULL);
    for (int v : values) {
        h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
    }
    return h;
}

/// A deterministic stream of uniforms keyed by (StreamKey, stream id).
class Substream {
public:
    Substream(const StreamKey& key, std::uint64_t stream_id) noexcept
        : key_(mix64(mix64(mix64(key.seed) ^ key.replicate) ^ stream_id)) {}

    std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace cubstrat
