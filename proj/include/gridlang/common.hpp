#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gridlang {

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Language
struct UnknownTokenError : Error { using Error::Error; };
struct MalformedClauseError : Error { using Error::Error; };
struct EmptyTrainError : Error { using Error::Error; };

// Environment
struct InvalidLayoutError : Error { using Error::Error; };
struct SteppedAfterDoneError : Error { using Error::Error; };

// Replay
struct EmptyBufferError : Error { using Error::Error; };
struct IndexOutOfRangeError : Error { using Error::Error; };

// Network
struct ShapeMismatchError : Error { using Error::Error; };
struct TokenOutOfRangeError : Error { using Error::Error; };
struct EmptyBatchError : Error { using Error::Error; };
struct ChecksumMismatchError : Error { using Error::Error; };

// Harness / IO
struct EmptyInstructionSetError : Error { using Error::Error; };
struct SchemaMismatchError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Grid cell

struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell& a, const Cell& b) { return a.x == b.x && a.y == b.y; }
    friend bool operator!=(const Cell& a, const Cell& b) { return !(a == b); }
};

inline int manhattan(const Cell& a, const Cell& b) {
    return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// Wraps a fixed xoshiro-style generator so that draws are identical across
// platforms and standard-library versions. std::uniform_*_distribution is
// implementation-defined and must not appear anywhere in the library.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    // xoshiro256**
    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw Error("uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller; pinned libm calls keep it reproducible.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for file checksums.

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace gridlang
