#pragma once

// Counter-based randomness for the Monte Carlo layer.
//
// Everything is keyed, never stateful: the i-th output of a stream is a pure
// function of (stream key, i), so trials can be sharded across any number of
// threads and replayed bit for bit in any order. Streams themselves derive
// from (seed, id) pairs; codebook nodes, trials, and per-block noise each get
// their own id so no two consumers share outputs.
//
// splitmix64_at(seed, i) equals the (i+1)-th output of the standard splitmix64
// sequence seeded with `seed`, because that generator's state after k steps is
// seed + k*gamma and its output is a pure finalizer of the state.

#include <cstdint>

namespace blockfade {

inline constexpr std::uint64_t splitmix_gamma = 0x9E3779B97F4A7C15ULL;

// Finalizer of splitmix64: a bijection on 64-bit words with good avalanche.
inline constexpr std::uint64_t splitmix_mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// index-th word of the stream with the given key, in O(1).
inline constexpr std::uint64_t splitmix64_at(std::uint64_t key, std::uint64_t index) {
    return splitmix_mix(key + (index + 1) * splitmix_gamma);
}

// Key of an independent substream. Hashing the parent's first output (rather
// than the raw seed) decorrelates substream keys from arithmetic patterns in
// (seed, id); the multiply spreads small ids across the word.
inline constexpr std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t id) {
    return splitmix_mix(splitmix64_at(seed, 0) ^ (id * splitmix_gamma));
}

// Uniform double in [0, 1) from the index-th word of a stream: top 53 bits,
// so every representable value is an exact multiple of 2^-53.
inline double uniform01_at(std::uint64_t key, std::uint64_t index) {
    return static_cast<double>(splitmix64_at(key, index) >> 11) * 0x1.0p-53;
}

// Uniform integer in [1, n] via the 128-bit multiply trick. Bias is at most
// n * 2^-64, far below Monte Carlo resolution at the permitted trial counts.
inline int uniform_int_at(std::uint64_t key, std::uint64_t index, int n) {
    const unsigned __int128 prod =
        static_cast<unsigned __int128>(splitmix64_at(key, index)) *
        static_cast<unsigned __int128>(static_cast<std::uint64_t>(n));
    return static_cast<int>(prod >> 64) + 1;
}

}  // namespace blockfade
