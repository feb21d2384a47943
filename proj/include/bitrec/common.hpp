#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bitrec {

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t line_number)
        : std::runtime_error(msg + " (line " + std::to_string(line_number) + ")"),
          line(line_number) {}
    std::size_t line;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LookupError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Deterministic randomness
//
// std::mt19937_64 is fully specified by the standard; the distribution
// helpers below are hand-rolled so every artifact is byte-identical across
// standard-library implementations.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent stream seeds derived from one master seed.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    uint64_t s = master ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
    splitmix64(s);
    return splitmix64(s);
}

// Uniform double in [0, 1), 53 bits of randomness.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline uint64_t uniform_below(Rng& rng, uint64_t n) {
    return rng() % n;
}

// Standard normal via Box-Muller.
inline double normal01(Rng& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

template <typename T>
void shuffle_indices(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Little-endian binary I/O
// ---------------------------------------------------------------------------

inline void write_u8(std::ostream& os, uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void write_u16_le(std::ostream& os, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

inline void write_u32_le(std::ostream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void write_u64_le(std::ostream& os, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline void write_f32_le(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32_le(os, u);
}

inline uint8_t read_u8(std::istream& is) {
    int c = is.get();
    if (c == EOF) throw IoError("unexpected end of file");
    return static_cast<uint8_t>(c);
}

inline uint16_t read_u16_le(std::istream& is) {
    uint16_t v = read_u8(is);
    v |= static_cast<uint16_t>(read_u8(is)) << 8;
    return v;
}

inline uint32_t read_u32_le(std::istream& is) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(read_u8(is)) << (8 * i);
    return v;
}

inline uint64_t read_u64_le(std::istream& is) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(read_u8(is)) << (8 * i);
    return v;
}

inline float read_f32_le(std::istream& is) {
    uint32_t u = read_u32_le(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a 64) for manifests and config hashes
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::span<const char> bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& s) {
    uint64_t h = fnv1a64(std::span<const char>(s.data(), s.size()));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::string hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open file for hashing: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    uint64_t h = fnv1a64(bytes);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Shortest round-trip decimal formatting, used by all CSV/JSON writers so
// identical inputs produce byte-identical artifacts.
inline std::string format_double(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return std::string(buf);
}

}  // namespace bitrec
