#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "on-disk and wire formats assume a little-endian host");

namespace fleeg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Violated operation precondition (bad window, label outside {0,1}, ...).
struct ContractError : Error {
    using Error::Error;
};

// WeightSet name/shape mismatch between modules or messages.
struct CompatError : Error {
    using Error::Error;
};

// Malformed serialized bytes (truncation, checksum, non-finite values).
struct CodecError : Error {
    using Error::Error;
};

// Wire protocol violations and network failures.
struct ProtocolError : Error {
    using Error::Error;
};

// Bad or inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Combines a seed and a list of stream labels into one RNG key. Used so every
// random draw in the system is addressed by (seed, fold, client, ...) instead
// of by position in a shared sequential stream.
inline std::uint64_t mix_key(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = splitmix64(seed ^ 0x6c62272e07bb0142ull);
    for (std::uint64_t p : parts) h = splitmix64(h ^ p);
    return h;
}

// Deterministic, platform-stable PRNG stream. Avoids <random> distributions
// on purpose: their output is not pinned across standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t key) : state_(key) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller (one value per call, second discarded;
    // simplicity beats the 2x draw cost everywhere this is used).
    double normal();

    // Uniform integer in [0, n), Lemire's bounded reduction.
    std::uint64_t bounded(std::uint64_t n) {
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::uint64_t state_;
};

// FNV-1a over raw bytes; stable across platforms. Used for config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string to_hex(std::uint64_t v);

}  // namespace fleeg
