#pragma once

// Binary code file (BHCF), bit-exact round-trip:
//
//   offset 0   magic "BHCF"
//   offset 4   u8  format version (1)
//   offset 5   u16 m (bit length), little-endian
//   offset 7   u64 entity count, little-endian
//   offset 15  u8  flags (bit 0: codes stored negated)
//   offset 16  count x ceil(m/64) little-endian 64-bit words
//
// Bit convention matches bitcode.hpp: bit j = 1 encodes code entry +1.

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/common.hpp"

namespace bitrec {

inline constexpr char kCodeFileMagic[4] = {'B', 'H', 'C', 'F'};
inline constexpr uint8_t kCodeFileVersion = 1;
inline constexpr uint8_t kCodeFileFlagNegated = 0x01;

struct CodeFile {
    std::vector<HashCode> codes;
    uint32_t bits = 0;
    bool negated = false;
};

inline void write_codes(std::ostream& os, std::span<const HashCode> codes, uint32_t bits,
                        bool negated) {
    os.write(kCodeFileMagic, 4);
    write_u8(os, kCodeFileVersion);
    if (bits < 1 || bits > 0xffff) throw InvalidInput("bit length out of range for code file");
    write_u16_le(os, static_cast<uint16_t>(bits));
    write_u64_le(os, codes.size());
    write_u8(os, negated ? kCodeFileFlagNegated : 0);
    for (const HashCode& c : codes) {
        if (c.bit_length() != bits) throw DimensionError("code bit length does not match header");
        for (uint64_t w : c.words()) write_u64_le(os, w);
    }
    if (!os) throw IoError("short write while writing code file");
}

inline void write_codes(const std::string& path, std::span<const HashCode> codes, uint32_t bits,
                        bool negated) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open code file for writing: " + path);
    write_codes(os, codes, bits, negated);
}

inline CodeFile read_codes(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCodeFileMagic, 4) != 0)
        throw IoError("not a code file (bad magic)");
    uint8_t version = read_u8(is);
    if (version != kCodeFileVersion)
        throw IoError("unsupported code file version " + std::to_string(version));
    CodeFile f;
    f.bits = read_u16_le(is);
    if (f.bits < 1) throw IoError("code file declares zero bit length");
    uint64_t count = read_u64_le(is);
    uint8_t flags = read_u8(is);
    f.negated = (flags & kCodeFileFlagNegated) != 0;
    const std::size_t words = (f.bits + 63) / 64;
    f.codes.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        std::vector<uint64_t> w(words);
        for (std::size_t j = 0; j < words; ++j) w[j] = read_u64_le(is);
        f.codes.emplace_back(f.bits, std::move(w));
    }
    return f;
}

inline CodeFile read_codes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open code file: " + path);
    return read_codes(is);
}

}  // namespace bitrec
