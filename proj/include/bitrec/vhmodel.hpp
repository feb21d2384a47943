#pragma once

// Variational hashing model: Bernoulli encoders over learned embedding
// tables, stochastic/deterministic code sampling, rating reconstruction
// through a fixed decreasing affine map of the dissimilarity, and the
// ELBO-style loss (MSE + KL to the uniform code prior).
//
// Gradient semantics: the reported loss uses the discretely sampled codes;
// the returned gradients are the exact gradients of the surrogate-relaxed
// loss in which every code bit is replaced by 2*sigmoid(E)-1 and the
// dissimilarity by its bit-algebra surrogate
//
//   phd:     sum_j (1 + u_j)(1 - i_j) / 4
//   hamming: sum_j (1 - u_j * i_j) / 2
//
// which agree with popcount(u AND NOT i) and popcount(u XOR i) at the +-1
// corners. Training is single-writer; batch gradient accumulation runs in a
// fixed order, so runs are bit-reproducible per seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/common.hpp"
#include "bitrec/data.hpp"
#include "bitrec/eval.hpp"
#include "bitrec/optim.hpp"

namespace bitrec {

// ---------------------------------------------------------------------------
// Small dense matrix (row per entity, column per bit).
// ---------------------------------------------------------------------------
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t r) {
        if (r >= rows) throw LookupError("row " + std::to_string(r) + " out of range");
        return {data.data() + r * cols, cols};
    }
    std::span<const double> row(std::size_t r) const {
        if (r >= rows) throw LookupError("row " + std::to_string(r) + " out of range");
        return {data.data() + r * cols, cols};
    }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// The variational posteriors' parameters: one real-valued embedding row per
// user and per item, m columns.
struct EncoderParams {
    Matrix user_table;
    Matrix item_table;
    uint32_t bits = 0;
};

enum class Dissimilarity { phd, hamming };

inline std::string dissimilarity_name(Dissimilarity d) {
    return d == Dissimilarity::phd ? "phd" : "hamming";
}

enum class SamplingMode { stochastic, deterministic };

inline std::string sampling_name(SamplingMode m) {
    return m == SamplingMode::stochastic ? "stochastic" : "deterministic";
}

struct SamplingPolicy {
    SamplingMode mode = SamplingMode::deterministic;
};

// Fixed decreasing affine map from the dissimilarity interval [0, m] to the
// rating interval: g(d) = r_max - d * (r_max - r_min) / m.
struct AffineRatingMap {
    double r_min = 1.0;
    double r_max = 5.0;
    uint32_t bits = 0;

    AffineRatingMap(double lo, double hi, uint32_t m) : r_min(lo), r_max(hi), bits(m) {
        if (!(r_min < r_max)) throw InvalidInput("rating map requires r_min < r_max");
        if (m < 1) throw InvalidInput("rating map requires m >= 1");
    }

    double slope() const { return (r_max - r_min) / static_cast<double>(bits); }
    double operator()(double dissimilarity) const { return r_max - dissimilarity * slope(); }
};

// Gaussian rating-noise schedule: variance (1 - decay)^t, starting at
// initial_variance, advanced once per training iteration.
struct NoiseSchedule {
    double initial_variance = 1.0;
    double decay = 1e-4;
    uint64_t step = 0;

    double variance() const {
        return initial_variance * std::pow(1.0 - decay, static_cast<double>(step));
    }
    void advance() { ++step; }
};

struct TrainConfig {
    uint32_t bits = 32;
    double learning_rate = 0.001;
    uint32_t batch_size = 400;
    uint32_t epochs = 100;
    double kl_weight = 0.1;
    double kl_warmup_frac = 0.2;  // fraction of total iterations to ramp beta from 0
    Dissimilarity kind = Dissimilarity::phd;
    SamplingPolicy train_sampling{SamplingMode::stochastic};
    SamplingPolicy eval_sampling{SamplingMode::deterministic};
    double noise_initial_variance = 1.0;
    double noise_decay = 1e-4;
    uint64_t seed = 42;
    uint32_t patience = 10;    // early stop after this many non-improving validations
    double init_scale = 1.0;   // stddev of the embedding init
    double clamp = 10.0;       // embeddings clamped to [-clamp, clamp] after each step

    void validate() const {
        if (bits < 8 || bits > 512) throw ConfigError("bits must be in [8, 512]");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (kl_weight < 0) throw ConfigError("kl weight must be >= 0");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Encoders and sampling
// ---------------------------------------------------------------------------

// Bernoulli posterior probabilities for one entity: p_j = sigmoid(E[id][j]).
inline std::vector<double> encode_probs(const Matrix& table, std::size_t id) {
    std::span<const double> e = table.row(id);
    std::vector<double> p(e.size());
    for (std::size_t j = 0; j < e.size(); ++j) p[j] = sigmoid(e[j]);
    return p;
}

inline std::vector<double> encode_user_probs(const EncoderParams& params, std::size_t user) {
    return encode_probs(params.user_table, user);
}

inline std::vector<double> encode_item_probs(const EncoderParams& params, std::size_t item) {
    return encode_probs(params.item_table, item);
}

// Draw a code: bit j = 1 iff p_j > mu_j, with mu_j ~ Uniform[0,1) per bit in
// stochastic mode and mu_j = 0.5 in deterministic mode.
inline HashCode sample_code(std::span<const double> probs, SamplingPolicy policy, Rng& rng) {
    HashCode c(static_cast<uint32_t>(probs.size()));
    if (policy.mode == SamplingMode::deterministic) {
        for (std::size_t j = 0; j < probs.size(); ++j)
            if (probs[j] > 0.5) c.set_bit(static_cast<uint32_t>(j), true);
    } else {
        for (std::size_t j = 0; j < probs.size(); ++j)
            if (probs[j] > uniform01(rng)) c.set_bit(static_cast<uint32_t>(j), true);
    }
    return c;
}

// Rating reconstruction f(z_u, z_i) = g(d(z_u, z_i)).
inline double reconstruct_rating(const HashCode& z_u, const HashCode& z_i,
                                 const AffineRatingMap& map, Dissimilarity kind) {
    const uint32_t d = kind == Dissimilarity::phd ? phd(z_u, z_i) : hamming(z_u, z_i);
    return map(static_cast<double>(d));
}

// KL divergence of Bernoulli(p_j) bits from the uniform prior:
// sum_j p ln(2p) + (1-p) ln(2(1-p)). Non-negative, zero iff all p = 0.5.
inline double kl_term(std::span<const double> probs) {
    double kl = 0.0;
    for (double p : probs) {
        const double q = std::clamp(p, 1e-7, 1.0 - 1e-7);
        kl += q * std::log(2.0 * q) + (1.0 - q) * std::log(2.0 * (1.0 - q));
    }
    return kl;
}

namespace detail {

// Surrogate dissimilarity over +-1 relaxed bits u_t[j] = 2*sigmoid(Eu[j])-1.
inline double surrogate_dissimilarity(std::span<const double> u_t, std::span<const double> i_t,
                                      Dissimilarity kind) {
    double d = 0.0;
    if (kind == Dissimilarity::phd) {
        for (std::size_t j = 0; j < u_t.size(); ++j) d += (1.0 + u_t[j]) * (1.0 - i_t[j]) * 0.25;
    } else {
        for (std::size_t j = 0; j < u_t.size(); ++j) d += (1.0 - u_t[j] * i_t[j]) * 0.5;
    }
    return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batch loss and gradients
// ---------------------------------------------------------------------------

struct BatchResult {
    double loss = 0.0;             // discrete-code loss: mean (R_noisy - f)^2 + beta*(KLu + KLi)
    double mse = 0.0;              // discrete reconstruction term only
    Matrix user_grads;             // dense, same shape as the tables
    Matrix item_grads;
    std::vector<uint32_t> touched_users;  // ascending, unique
    std::vector<uint32_t> touched_items;
};

// One batch: reported loss from discretely sampled codes, gradients from the
// surrogate-relaxed loss. `noise_rng` supplies the Gaussian rating noise
// (skipped when variance is 0), `sample_rng` the stochastic thresholds.
// The _into variant reuses the caller's gradient buffers, zeroing only the
// rows touched by the previous batch.
inline void batch_loss_and_grads_into(std::span<const Interaction> batch,
                                      const EncoderParams& params, const AffineRatingMap& map,
                                      Dissimilarity kind, SamplingPolicy train_sampling,
                                      double beta, double noise_variance, Rng& noise_rng,
                                      Rng& sample_rng, BatchResult& out) {
    if (batch.empty()) throw InvalidInput("empty batch");
    const std::size_t m = params.bits;
    if (out.user_grads.rows != params.user_table.rows || out.user_grads.cols != m)
        out.user_grads = Matrix(params.user_table.rows, m);
    else
        for (uint32_t u : out.touched_users)
            std::fill_n(out.user_grads.data.begin() + static_cast<std::size_t>(u) * m, m, 0.0);
    if (out.item_grads.rows != params.item_table.rows || out.item_grads.cols != m)
        out.item_grads = Matrix(params.item_table.rows, m);
    else
        for (uint32_t i : out.touched_items)
            std::fill_n(out.item_grads.data.begin() + static_cast<std::size_t>(i) * m, m, 0.0);
    out.touched_users.clear();
    out.touched_items.clear();
    out.loss = 0.0;
    out.mse = 0.0;

    const double slope = map.slope();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double noise_std = noise_variance > 0 ? std::sqrt(noise_variance) : 0.0;

    std::vector<double> pu(m), pi(m), ut(m), it(m);
    for (const Interaction& r : batch) {
        std::span<const double> eu = params.user_table.row(r.user);
        std::span<const double> ei = params.item_table.row(r.item);
        for (std::size_t j = 0; j < m; ++j) {
            pu[j] = sigmoid(eu[j]);
            pi[j] = sigmoid(ei[j]);
            ut[j] = 2.0 * pu[j] - 1.0;
            it[j] = 2.0 * pi[j] - 1.0;
        }

        double rating = r.rating;
        if (noise_std > 0.0) rating += noise_std * normal01(noise_rng);

        // Discrete forward pass for the reported loss.
        const HashCode z_u = sample_code(pu, train_sampling, sample_rng);
        const HashCode z_i = sample_code(pi, train_sampling, sample_rng);
        const double resid = rating - reconstruct_rating(z_u, z_i, map, kind);
        out.mse += resid * resid * inv_b;
        out.loss += (resid * resid + beta * (kl_term(pu) + kl_term(pi))) * inv_b;

        // Surrogate backward pass.
        const double d_t = detail::surrogate_dissimilarity(ut, it, kind);
        const double resid_t = rating - map(d_t);
        const double dl_dd = 2.0 * slope * resid_t;  // dL/dd = -2 resid * g'(d), g' = -slope

        std::span<double> gu = out.user_grads.row(r.user);
        std::span<double> gi = out.item_grads.row(r.item);
        for (std::size_t j = 0; j < m; ++j) {
            double dd_du, dd_di;
            if (kind == Dissimilarity::phd) {
                dd_du = (1.0 - it[j]) * 0.25;
                dd_di = -(1.0 + ut[j]) * 0.25;
            } else {
                dd_du = -it[j] * 0.5;
                dd_di = -ut[j] * 0.5;
            }
            const double su = 2.0 * pu[j] * (1.0 - pu[j]);  // d(2*sigmoid-1)/dE
            const double si = 2.0 * pi[j] * (1.0 - pi[j]);
            // KL gradient: d/dE [p ln 2p + (1-p) ln 2(1-p)] = E * p(1-p).
            gu[j] += (dl_dd * dd_du * su + beta * eu[j] * pu[j] * (1.0 - pu[j])) * inv_b;
            gi[j] += (dl_dd * dd_di * si + beta * ei[j] * pi[j] * (1.0 - pi[j])) * inv_b;
        }
        out.touched_users.push_back(r.user);
        out.touched_items.push_back(r.item);
    }

    auto dedupe = [](std::vector<uint32_t>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    dedupe(out.touched_users);
    dedupe(out.touched_items);
}

inline BatchResult batch_loss_and_grads(std::span<const Interaction> batch,
                                        const EncoderParams& params, const AffineRatingMap& map,
                                        Dissimilarity kind, SamplingPolicy train_sampling,
                                        double beta, double noise_variance, Rng& noise_rng,
                                        Rng& sample_rng) {
    BatchResult out;
    batch_loss_and_grads_into(batch, params, map, kind, train_sampling, beta, noise_variance,
                              noise_rng, sample_rng, out);
    return out;
}

// ---------------------------------------------------------------------------
// Code export (always deterministic thresholding)
// ---------------------------------------------------------------------------

struct CodesBundle {
    std::vector<HashCode> user_codes;
    std::vector<HashCode> item_codes;
    std::vector<HashCode> item_codes_negated;
    uint32_t bits = 0;
};

inline std::vector<HashCode> threshold_codes(const Matrix& table) {
    std::vector<HashCode> codes;
    codes.reserve(table.rows);
    for (std::size_t r = 0; r < table.rows; ++r) {
        HashCode c(static_cast<uint32_t>(table.cols));
        std::span<const double> row = table.row(r);
        for (std::size_t j = 0; j < table.cols; ++j)
            if (row[j] > 0.0) c.set_bit(static_cast<uint32_t>(j), true);  // sigmoid(E) > 0.5
        codes.push_back(std::move(c));
    }
    return codes;
}

inline CodesBundle export_codes(const EncoderParams& params) {
    CodesBundle b;
    b.bits = params.bits;
    b.user_codes = threshold_codes(params.user_table);
    b.item_codes = threshold_codes(params.item_table);
    b.item_codes_negated.reserve(b.item_codes.size());
    for (const HashCode& c : b.item_codes) b.item_codes_negated.push_back(negate(c));
    return b;
}

// Codes sampled from the posteriors with an explicit policy (stochastic
// evaluation draws fresh thresholds per call).
inline std::vector<HashCode> sample_codes(const Matrix& table, SamplingPolicy policy, Rng& rng) {
    std::vector<HashCode> codes;
    codes.reserve(table.rows);
    for (std::size_t r = 0; r < table.rows; ++r)
        codes.push_back(sample_code(encode_probs(table, r), policy, rng));
    return codes;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    uint32_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_ndcg10 = std::numeric_limits<double>::quiet_NaN();
    double noise_variance = 0.0;
};

struct TrainResult {
    EncoderParams params;  // best-validation checkpoint
    std::vector<EpochStats> log;
    uint32_t best_epoch = 0;
    double best_val_ndcg10 = -1.0;
    double mean_batch_seconds = 0.0;
    uint64_t iterations = 0;
};

namespace detail {

// Validation MSE with deterministic codes and clean ratings.
inline double validation_mse(const EncoderParams& params, const AffineRatingMap& map,
                             Dissimilarity kind, const std::vector<Interaction>& rows,
                             const std::vector<HashCode>& user_codes,
                             const std::vector<HashCode>& item_codes) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    double mse = 0.0;
    for (const Interaction& r : rows) {
        const double f = reconstruct_rating(user_codes[r.user], item_codes[r.item], map, kind);
        mse += (r.rating - f) * (r.rating - f);
    }
    return mse / static_cast<double>(rows.size());
}

}  // namespace detail

// Adam over shuffled mini-batches; Gaussian rating noise decays by
// (1 - noise_decay) per iteration; checkpoint selection by validation
// NDCG@10 with deterministic codes; early stop after `patience`
// non-improving validations. Deterministic per seed.
inline TrainResult train(const RatingsDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.train.empty()) throw ConfigError("training split is empty");

    const uint32_t m = cfg.bits;
    TrainResult result;
    EncoderParams params;
    params.bits = m;
    params.user_table = Matrix(ds.user_count, m);
    params.item_table = Matrix(ds.item_count, m);

    Rng init_rng(derive_seed(cfg.seed, 0));
    for (double& e : params.user_table.data) e = cfg.init_scale * normal01(init_rng);
    for (double& e : params.item_table.data) e = cfg.init_scale * normal01(init_rng);

    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    Rng noise_rng(derive_seed(cfg.seed, 2));
    Rng sample_rng(derive_seed(cfg.seed, 3));

    Adam user_opt(params.user_table.data.size(), {cfg.learning_rate});
    Adam item_opt(params.item_table.data.size(), {cfg.learning_rate});

    NoiseSchedule noise{cfg.noise_initial_variance, cfg.noise_decay, 0};
    const AffineRatingMap map(ds.bounds.min, ds.bounds.max, m);

    const std::size_t batches_per_epoch =
        (ds.train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const double total_iterations =
        static_cast<double>(batches_per_epoch) * static_cast<double>(cfg.epochs);
    const double warmup_iters = cfg.kl_warmup_frac * total_iterations;

    std::vector<uint32_t> order(ds.train.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<Interaction> batch;
    batch.reserve(cfg.batch_size);
    BatchResult br;

    EncoderParams best = params;
    uint32_t best_epoch = 0;
    double best_ndcg = -1.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    uint32_t stale = 0;
    uint64_t iteration = 0;
    double batch_seconds_total = 0.0;
    const bool has_validation = !ds.validation.empty();

    for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double epoch_loss = 0.0;

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            batch.clear();
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, ds.train.size());
            for (std::size_t r = lo; r < hi; ++r) batch.push_back(ds.train[order[r]]);

            const double beta =
                warmup_iters > 0
                    ? cfg.kl_weight * std::min(1.0, static_cast<double>(iteration) / warmup_iters)
                    : cfg.kl_weight;

            const auto t0 = std::chrono::steady_clock::now();
            batch_loss_and_grads_into(batch, params, map, cfg.kind, cfg.train_sampling, beta,
                                      noise.variance(), noise_rng, sample_rng, br);

            user_opt.begin_step();
            item_opt.begin_step();
            for (uint32_t u : br.touched_users)
                user_opt.update_range(params.user_table.data, br.user_grads.data,
                                      static_cast<std::size_t>(u) * m, m);
            for (uint32_t i : br.touched_items)
                item_opt.update_range(params.item_table.data, br.item_grads.data,
                                      static_cast<std::size_t>(i) * m, m);
            for (uint32_t u : br.touched_users)
                for (double& e : params.user_table.row(u))
                    e = std::clamp(e, -cfg.clamp, cfg.clamp);
            for (uint32_t i : br.touched_items)
                for (double& e : params.item_table.row(i))
                    e = std::clamp(e, -cfg.clamp, cfg.clamp);
            const auto t1 = std::chrono::steady_clock::now();
            batch_seconds_total += std::chrono::duration<double>(t1 - t0).count();

            epoch_loss += br.loss;
            noise.advance();
            ++iteration;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(batches_per_epoch);
        stats.noise_variance = noise.variance();

        const std::vector<HashCode> user_codes = threshold_codes(params.user_table);
        const std::vector<HashCode> item_codes = threshold_codes(params.item_table);
        if (has_validation) {
            stats.val_loss = detail::validation_mse(params, map, cfg.kind, ds.validation,
                                                    user_codes, item_codes);
            const ScorerKind scorer =
                cfg.kind == Dissimilarity::phd ? ScorerKind::phd : ScorerKind::hamming;
            stats.val_ndcg10 =
                evaluate_codes(user_codes, item_codes, ds, scorer, Split::validation).ndcg10;
            // Best validation NDCG@10; exact ties resolved toward lower
            // validation loss (matters when tiny validation lists make the
            // NDCG degenerate).
            if (stats.val_ndcg10 > best_ndcg ||
                (stats.val_ndcg10 == best_ndcg && stats.val_loss < best_val_loss)) {
                best_ndcg = stats.val_ndcg10;
                best_val_loss = stats.val_loss;
                best = params;
                best_epoch = epoch;
                stale = 0;
            } else {
                ++stale;
            }
        }
        result.log.push_back(stats);
        if (has_validation && cfg.patience > 0 && stale >= cfg.patience) break;
    }

    if (!has_validation) {
        best = params;
        best_epoch = result.log.empty() ? 0 : result.log.back().epoch;
    }
    result.params = std::move(best);
    result.best_epoch = best_epoch;
    result.best_val_ndcg10 = best_ndcg;
    result.iterations = iteration;
    result.mean_batch_seconds = iteration > 0 ? batch_seconds_total / static_cast<double>(iteration)
                                              : 0.0;
    return result;
}

}  // namespace bitrec
