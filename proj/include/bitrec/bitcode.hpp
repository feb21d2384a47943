#pragma once

// Packed binary hash codes and the bit-level dissimilarity kernels.
//
// Bit convention: bit j = 1 encodes code entry +1, bit j = 0 encodes -1.
// Under this mapping the Boolean identities used below hold verbatim:
//
//   hamming(u, i)  = popcount(u XOR i)
//   phd(u, i)      = popcount(u XOR (u AND i)) = popcount(u AND NOT i)
//
// The projected Hamming dissimilarity (phd) masks the item code by the user
// code before taking the Hamming norm, which disables every bit dimension
// where the user code is -1. It is asymmetric: phd(u, i) != phd(i, u) in
// general, whereas the Hamming distance is symmetric.
//
// All operations here are pure functions over immutable inputs and safe to
// call concurrently. NegatedItemStore is read-only after construction.

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bitrec/common.hpp"

namespace bitrec {

// ---------------------------------------------------------------------------
// HashCode: an m-bit code packed into 64-bit words, little-endian word order.
// Bits at positions >= m are always zero.
// ---------------------------------------------------------------------------
class HashCode {
public:
    HashCode() = default;

    explicit HashCode(uint32_t bit_length)
        : bits_(bit_length), words_((bit_length + 63) / 64, 0) {
        if (bit_length < 1) throw InvalidInput("hash code bit length must be >= 1");
    }

    HashCode(uint32_t bit_length, std::vector<uint64_t> words)
        : bits_(bit_length), words_(std::move(words)) {
        if (bit_length < 1) throw InvalidInput("hash code bit length must be >= 1");
        if (words_.size() != (bits_ + 63) / 64)
            throw InvalidInput("word count does not match bit length");
        mask_tail();
    }

    // Convenience for tests and tools: "1010" lists bit 0 first.
    static HashCode from_string(std::string_view bits01) {
        if (bits01.empty()) throw InvalidInput("empty bit string");
        HashCode c(static_cast<uint32_t>(bits01.size()));
        for (std::size_t j = 0; j < bits01.size(); ++j) {
            if (bits01[j] == '1')
                c.set_bit(static_cast<uint32_t>(j), true);
            else if (bits01[j] != '0')
                throw InvalidInput("bit string may contain only 0 and 1");
        }
        return c;
    }

    uint32_t bit_length() const { return bits_; }
    std::size_t word_count() const { return words_.size(); }
    std::span<const uint64_t> words() const { return words_; }
    uint64_t* word_data() { return words_.data(); }

    bool get_bit(uint32_t j) const {
        return (words_[j >> 6] >> (j & 63)) & 1u;
    }

    void set_bit(uint32_t j, bool value) {
        if (j >= bits_) throw InvalidInput("bit index out of range");
        if (value)
            words_[j >> 6] |= uint64_t{1} << (j & 63);
        else
            words_[j >> 6] &= ~(uint64_t{1} << (j & 63));
    }

    uint32_t popcount() const {
        uint32_t n = 0;
        for (uint64_t w : words_) n += static_cast<uint32_t>(std::popcount(w));
        return n;
    }

    // All-ones over the valid bit positions of the final word.
    uint64_t tail_mask() const {
        uint32_t rem = bits_ & 63;
        return rem == 0 ? ~uint64_t{0} : (uint64_t{1} << rem) - 1;
    }

    std::string to_string() const {
        std::string s(bits_, '0');
        for (uint32_t j = 0; j < bits_; ++j)
            if (get_bit(j)) s[j] = '1';
        return s;
    }

    bool operator==(const HashCode&) const = default;

private:
    void mask_tail() {
        if (!words_.empty()) words_.back() &= tail_mask();
    }

    uint32_t bits_ = 0;
    std::vector<uint64_t> words_;
};

// ---------------------------------------------------------------------------
// Word-level kernels. Callers guarantee equal word counts and zeroed high
// bits; these are the inner loops shared by the code-level operations, the
// item store and the benchmarks.
// ---------------------------------------------------------------------------

inline uint32_t hamming_words(const uint64_t* a, const uint64_t* b, std::size_t n) {
    uint32_t d = 0;
    for (std::size_t w = 0; w < n; ++w) d += static_cast<uint32_t>(std::popcount(a[w] ^ b[w]));
    return d;
}

inline uint32_t and_popcount_words(const uint64_t* a, const uint64_t* b, std::size_t n) {
    uint32_t d = 0;
    for (std::size_t w = 0; w < n; ++w) d += static_cast<uint32_t>(std::popcount(a[w] & b[w]));
    return d;
}

namespace detail {
inline void require_same_length(const HashCode& a, const HashCode& b) {
    if (a.bit_length() != b.bit_length())
        throw DimensionError("hash codes have different bit lengths: " +
                             std::to_string(a.bit_length()) + " vs " +
                             std::to_string(b.bit_length()));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Pack a +-1 sequence; bit j is set iff values[j] == +1.
inline HashCode pack_bits(std::span<const int> values) {
    if (values.empty()) throw InvalidInput("cannot pack an empty sequence");
    HashCode c(static_cast<uint32_t>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (values[j] == 1)
            c.set_bit(static_cast<uint32_t>(j), true);
        else if (values[j] != -1)
            throw InvalidInput("pack_bits entries must be -1 or +1");
    }
    return c;
}

// Hamming distance: number of differing bit positions.
inline uint32_t hamming(const HashCode& a, const HashCode& b) {
    detail::require_same_length(a, b);
    return hamming_words(a.words().data(), b.words().data(), a.word_count());
}

// Projection of the item code onto the user code: wordwise AND.
inline HashCode project(const HashCode& u, const HashCode& i) {
    detail::require_same_length(u, i);
    HashCode out(u.bit_length());
    for (std::size_t w = 0; w < u.word_count(); ++w)
        out.word_data()[w] = u.words()[w] & i.words()[w];
    return out;
}

// Projected Hamming dissimilarity: SUM(u XOR (u AND i)).
inline uint32_t phd(const HashCode& u, const HashCode& i) {
    detail::require_same_length(u, i);
    uint32_t d = 0;
    for (std::size_t w = 0; w < u.word_count(); ++w) {
        uint64_t uw = u.words()[w];
        d += static_cast<uint32_t>(std::popcount(uw ^ (uw & i.words()[w])));
    }
    return d;
}

// Flip the first m bits; high bits stay zero.
inline HashCode negate(const HashCode& c) {
    HashCode out(c.bit_length());
    for (std::size_t w = 0; w < c.word_count(); ++w) out.word_data()[w] = ~c.words()[w];
    out.word_data()[c.word_count() - 1] &= c.tail_mask();
    return out;
}

// PHD against a precomputed negated item code: SUM(u AND (NOT i)).
// Same number of Boolean operations as the Hamming distance.
inline uint32_t phd_fast(const HashCode& u, const HashCode& i_neg) {
    detail::require_same_length(u, i_neg);
    return and_popcount_words(u.words().data(), i_neg.words().data(), u.word_count());
}

// ---------------------------------------------------------------------------
// NegatedItemStore: item codes stored negated (NOT z_i), contiguous words.
// For every stored code c and the original z: c XOR z = all-ones over the
// first m bits.
// ---------------------------------------------------------------------------
class NegatedItemStore {
public:
    NegatedItemStore() = default;

    static NegatedItemStore from_item_codes(std::span<const HashCode> item_codes) {
        NegatedItemStore s;
        if (item_codes.empty()) return s;
        s.bits_ = item_codes.front().bit_length();
        s.stride_ = (s.bits_ + 63) / 64;
        s.words_.reserve(item_codes.size() * s.stride_);
        for (const HashCode& code : item_codes) {
            if (code.bit_length() != s.bits_)
                throw DimensionError("item codes have mixed bit lengths");
            HashCode neg = negate(code);
            s.words_.insert(s.words_.end(), neg.words().begin(), neg.words().end());
        }
        s.count_ = item_codes.size();
        return s;
    }

    // Codes already negated (e.g. loaded from a code file with the negated flag).
    static NegatedItemStore from_negated_codes(std::span<const HashCode> negated) {
        NegatedItemStore s;
        if (negated.empty()) return s;
        s.bits_ = negated.front().bit_length();
        s.stride_ = (s.bits_ + 63) / 64;
        s.words_.reserve(negated.size() * s.stride_);
        for (const HashCode& code : negated) {
            if (code.bit_length() != s.bits_)
                throw DimensionError("item codes have mixed bit lengths");
            s.words_.insert(s.words_.end(), code.words().begin(), code.words().end());
        }
        s.count_ = negated.size();
        return s;
    }

    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    uint32_t bit_length() const { return bits_; }
    std::size_t word_stride() const { return stride_; }

    const uint64_t* code_words(std::size_t idx) const { return words_.data() + idx * stride_; }

    HashCode negated_code(std::size_t idx) const {
        if (idx >= count_) throw LookupError("item index out of range");
        return HashCode(bits_, std::vector<uint64_t>(code_words(idx), code_words(idx) + stride_));
    }

    HashCode original_code(std::size_t idx) const { return negate(negated_code(idx)); }

    uint32_t phd_to(const HashCode& user, std::size_t idx) const {
        if (user.bit_length() != bits_)
            throw DimensionError("user code bit length does not match store");
        return and_popcount_words(user.words().data(), code_words(idx), stride_);
    }

private:
    std::vector<uint64_t> words_;
    std::size_t count_ = 0;
    std::size_t stride_ = 0;
    uint32_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Linear-time top-k ranking by ascending PHD.
//
// A counting sort over the bounded buckets [0, m] (dissimilarities are small
// integers); ties broken by ascending item index. Placement scans items in
// index order per bucket, so the tie-break falls out of stability.
// ---------------------------------------------------------------------------
inline std::vector<std::pair<uint32_t, uint32_t>> rank_items(const HashCode& user,
                                                             const NegatedItemStore& store,
                                                             std::int64_t k) {
    if (k < 1) throw InvalidInput("k must be >= 1");
    if (store.empty()) return {};
    const uint32_t m = store.bit_length();
    const std::size_t n = store.size();

    std::vector<uint32_t> dist(n);
    std::vector<std::size_t> bucket_count(m + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = store.phd_to(user, i);
        ++bucket_count[dist[i]];
    }

    std::vector<std::size_t> offset(m + 1, 0);
    for (uint32_t d = 1; d <= m; ++d) offset[d] = offset[d - 1] + bucket_count[d - 1];

    std::vector<uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[offset[dist[i]]++] = static_cast<uint32_t>(i);

    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(k));
    std::vector<std::pair<uint32_t, uint32_t>> out;
    out.reserve(take);
    for (std::size_t r = 0; r < take; ++r) out.emplace_back(order[r], dist[order[r]]);
    return out;
}

}  // namespace bitrec
