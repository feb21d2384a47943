#pragma once

// Distance-kernel throughput benchmarks (one fixed query against n random
// codes, repeated) and the training convergence comparison between the two
// dissimilarities. Timing loops are strictly single-threaded; the measured
// region covers only the distance loop, never generation or allocation.
//
// Every kernel accumulates a checksum so the compiler cannot eliminate the
// work, and the word-level kernels are verified once against scalar bit-loop
// references before timing; a mismatch is an error.

#include <chrono>
#include <cstdint>
#include <new>
#include <string>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/common.hpp"
#include "bitrec/data.hpp"
#include "bitrec/vhmodel.hpp"

namespace bitrec {

struct BenchResult {
    std::string kernel;
    std::size_t code_count = 0;
    uint32_t bits = 0;
    uint32_t repetitions = 0;
    double mean_seconds = 0.0;
    double overhead_pct = 0.0;  // vs the Hamming kernel; Hamming vs itself = 0
    uint64_t checksum = 0;      // for inner product: canonical bits of the double sum
};

namespace detail {

inline uint32_t popcount_bitloop(uint64_t w) {
    uint32_t n = 0;
    while (w) {
        n += static_cast<uint32_t>(w & 1);
        w >>= 1;
    }
    return n;
}

}  // namespace detail

// Hamming, fast PHD (negated codes) and float inner-product throughput.
// Word layout: n codes x words_per_code contiguous u64; the inner-product
// table holds n x m floats for parity with real-valued baselines.
inline std::vector<BenchResult> bench_distance(std::size_t n, uint32_t m, uint32_t reps,
                                               uint64_t seed) {
    if (n < 1) throw InvalidInput("need at least one code");
    if (m < 1 || m % 64 != 0) throw InvalidInput("bench supports multiples of 64 bits");
    if (reps < 1) throw InvalidInput("need at least one repetition");
    const std::size_t words = m / 64;

    std::vector<uint64_t> codes, query_words(words);
    std::vector<float> vectors, query_vec(m);
    try {
        codes.resize(n * words);
        vectors.resize(n * static_cast<std::size_t>(m));
    } catch (const std::bad_alloc&) {
        throw ResourceError("cannot allocate benchmark data for n=" + std::to_string(n) +
                            "; lower --n");
    }

    Rng rng(derive_seed(seed, 20));
    for (uint64_t& w : codes) w = rng();
    for (uint64_t& w : query_words) w = rng();
    for (float& v : vectors) v = static_cast<float>(uniform01(rng)) - 0.5f;
    for (float& v : query_vec) v = static_cast<float>(uniform01(rng)) - 0.5f;

    // Correctness: word-level kernels vs scalar bit-loop references, one pass.
    uint64_t ham_ref = 0, phd_ref = 0, ham_word = 0, phd_word = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const uint64_t* c = codes.data() + i * words;
        for (std::size_t w = 0; w < words; ++w) {
            ham_ref += detail::popcount_bitloop(query_words[w] ^ c[w]);
            phd_ref += detail::popcount_bitloop(query_words[w] & c[w]);
        }
        ham_word += hamming_words(query_words.data(), c, words);
        phd_word += and_popcount_words(query_words.data(), c, words);
    }
    if (ham_ref != ham_word || phd_ref != phd_word)
        throw EvalError("benchmark checksum mismatch between scalar and word-level kernels");

    using clock = std::chrono::steady_clock;
    auto time_pass = [](auto&& body) {
        const auto t0 = clock::now();
        body();
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    double ham_total = 0.0, phd_total = 0.0, ip_total = 0.0;
    uint64_t ham_sum = 0, phd_sum = 0;
    double ip_sum = 0.0;

    // Alternate kernels each repetition so frequency drift spreads evenly.
    for (uint32_t rep = 0; rep < reps; ++rep) {
        ham_total += time_pass([&] {
            uint64_t acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                acc += hamming_words(query_words.data(), codes.data() + i * words, words);
            ham_sum += acc;
        });
        phd_total += time_pass([&] {
            uint64_t acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                acc += and_popcount_words(query_words.data(), codes.data() + i * words, words);
            phd_sum += acc;
        });
        ip_total += time_pass([&] {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const float* v = vectors.data() + i * m;
                float dot = 0.0f;
                for (uint32_t j = 0; j < m; ++j) dot += query_vec[j] * v[j];
                acc += dot;
            }
            ip_sum += acc;
        });
    }

    if (ham_sum != ham_ref * reps || phd_sum != phd_ref * reps)
        throw EvalError("benchmark checksum drifted across repetitions");

    const double ham_mean = ham_total / reps;
    const double phd_mean = phd_total / reps;
    const double ip_mean = ip_total / reps;
    auto overhead = [&](double mean) { return (mean - ham_mean) / ham_mean * 100.0; };

    uint64_t ip_bits;
    std::memcpy(&ip_bits, &ip_sum, 8);
    return {
        {"hamming", n, m, reps, ham_mean, 0.0, ham_sum},
        {"phd_fast", n, m, reps, phd_mean, overhead(phd_mean), phd_sum},
        {"inner-product", n, m, reps, ip_mean, overhead(ip_mean), ip_bits},
    };
}

// ---------------------------------------------------------------------------
// Convergence comparison: train the same configuration with the projected
// Hamming dissimilarity and with the Hamming distance, returning both logs
// and per-batch wall times.
// ---------------------------------------------------------------------------

struct ConvergenceRun {
    Dissimilarity kind = Dissimilarity::phd;
    uint64_t seed = 0;
    std::vector<EpochStats> log;
    double mean_batch_seconds = 0.0;
    uint32_t best_epoch = 0;
};

inline std::vector<ConvergenceRun> bench_convergence(const RatingsDataset& ds, TrainConfig base,
                                                     const std::vector<uint64_t>& seeds) {
    std::vector<ConvergenceRun> runs;
    for (uint64_t seed : seeds) {
        for (Dissimilarity kind : {Dissimilarity::phd, Dissimilarity::hamming}) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.kind = kind;
            TrainResult tr = train(ds, cfg);
            runs.push_back({kind, seed, std::move(tr.log), tr.mean_batch_seconds, tr.best_epoch});
        }
    }
    return runs;
}

// Epochs until the curve first reaches (<=) the target validation loss;
// returns the curve length when it never does.
inline std::size_t epochs_to_reach(const std::vector<EpochStats>& log, double target) {
    for (std::size_t e = 0; e < log.size(); ++e)
        if (log[e].val_loss <= target) return e + 1;
    return log.size();
}

}  // namespace bitrec
