#pragma once

// Real-valued matrix factorization baseline (inner-product scoring) and its
// mean/median binary quantizations. Latent dimension d equals the hash code
// bit count so the comparison stays storage-matched; no bias terms by
// default for the same reason (enable_biases turns them on).

#include <algorithm>
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
#include "bitrec/vhmodel.hpp"

namespace bitrec {

struct MFParams {
    Matrix user_vecs;  // |U| x d
    Matrix item_vecs;  // |I| x d
    std::vector<double> user_bias, item_bias;  // empty unless biases enabled
    double global_bias = 0.0;
    uint32_t dim = 0;
};

struct MFConfig {
    uint32_t dim = 32;
    double learning_rate = 0.001;
    double l2_weight = 0.001;
    uint32_t batch_size = 400;
    uint32_t epochs = 100;
    uint64_t seed = 42;
    uint32_t patience = 10;
    double init_scale = 0.1;
    bool enable_biases = false;

    void validate() const {
        if (dim < 1) throw ConfigError("latent dimension must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (l2_weight < 0) throw ConfigError("l2 weight must be >= 0");
    }
};

inline double mf_predict(const MFParams& p, std::size_t user, std::size_t item) {
    std::span<const double> pu = p.user_vecs.row(user);
    std::span<const double> qi = p.item_vecs.row(item);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.dim; ++j) dot += pu[j] * qi[j];
    if (!p.user_bias.empty()) dot += p.global_bias + p.user_bias[user] + p.item_bias[item];
    return dot;
}

struct MFTrainResult {
    MFParams params;
    std::vector<EpochStats> log;  // val_loss column holds validation RMSE
    uint32_t best_epoch = 0;
    double best_val_ndcg10 = -1.0;
};

namespace detail {

inline double mf_validation_rmse(const MFParams& p, const std::vector<Interaction>& rows) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sse = 0.0;
    for (const Interaction& r : rows) {
        const double e = r.rating - mf_predict(p, r.user, r.item);
        sse += e * e;
    }
    return std::sqrt(sse / static_cast<double>(rows.size()));
}

}  // namespace detail

// Minimizes sum (R - <p_u, q_i>)^2 + lambda (|p_u|^2 + |q_i|^2) by Adam over
// shuffled mini-batches; best-validation-NDCG@10 checkpoint; deterministic
// per seed.
inline MFTrainResult mf_train(const RatingsDataset& ds, const MFConfig& cfg) {
    cfg.validate();
    if (ds.train.empty()) throw ConfigError("training split is empty");

    const uint32_t d = cfg.dim;
    MFParams params;
    params.dim = d;
    params.user_vecs = Matrix(ds.user_count, d);
    params.item_vecs = Matrix(ds.item_count, d);
    if (cfg.enable_biases) {
        params.user_bias.assign(ds.user_count, 0.0);
        params.item_bias.assign(ds.item_count, 0.0);
        double sum = 0.0;
        for (const Interaction& r : ds.train) sum += r.rating;
        params.global_bias = sum / static_cast<double>(ds.train.size());
    }

    // Warm init around sqrt(mean_rating / d): initial predictions sit near
    // the global mean instead of zero, so early epochs descend instead of
    // spending time resolving factor signs.
    double mean_rating = 0.0;
    for (const Interaction& r : ds.train) mean_rating += r.rating;
    mean_rating /= static_cast<double>(ds.train.size());
    const double base = mean_rating > 0.0 ? std::sqrt(mean_rating / static_cast<double>(d)) : 0.0;

    Rng init_rng(derive_seed(cfg.seed, 0));
    for (double& v : params.user_vecs.data) v = base + cfg.init_scale * normal01(init_rng);
    for (double& v : params.item_vecs.data) v = base + cfg.init_scale * normal01(init_rng);
    Rng shuffle_rng(derive_seed(cfg.seed, 1));

    Adam user_opt(params.user_vecs.data.size(), {cfg.learning_rate});
    Adam item_opt(params.item_vecs.data.size(), {cfg.learning_rate});
    Adam user_bias_opt(params.user_bias.size(), {cfg.learning_rate});
    Adam item_bias_opt(params.item_bias.size(), {cfg.learning_rate});

    const std::size_t batches_per_epoch =
        (ds.train.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<uint32_t> order(ds.train.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;

    Matrix user_grads(ds.user_count, d), item_grads(ds.item_count, d);
    std::vector<double> user_bias_grads(params.user_bias.size(), 0.0);
    std::vector<double> item_bias_grads(params.item_bias.size(), 0.0);
    std::vector<uint32_t> touched_users, touched_items;

    MFParams best = params;
    uint32_t best_epoch = 0;
    double best_ndcg = -1.0;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    uint32_t stale = 0;
    const bool has_validation = !ds.validation.empty();
    MFTrainResult result;

    for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double epoch_loss = 0.0;

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, ds.train.size());
            const double inv_b = 1.0 / static_cast<double>(hi - lo);

            for (uint32_t u : touched_users)
                std::fill_n(user_grads.data.begin() + static_cast<std::size_t>(u) * d, d, 0.0);
            for (uint32_t i : touched_items)
                std::fill_n(item_grads.data.begin() + static_cast<std::size_t>(i) * d, d, 0.0);
            if (cfg.enable_biases) {
                for (uint32_t u : touched_users) user_bias_grads[u] = 0.0;
                for (uint32_t i : touched_items) item_bias_grads[i] = 0.0;
            }
            touched_users.clear();
            touched_items.clear();

            double batch_loss = 0.0;
            for (std::size_t r = lo; r < hi; ++r) {
                const Interaction& row = ds.train[order[r]];
                std::span<const double> pu = params.user_vecs.row(row.user);
                std::span<const double> qi = params.item_vecs.row(row.item);
                const double e = row.rating - mf_predict(params, row.user, row.item);
                double reg = 0.0;
                for (std::size_t j = 0; j < d; ++j) reg += pu[j] * pu[j] + qi[j] * qi[j];
                batch_loss += (e * e + cfg.l2_weight * reg) * inv_b;

                std::span<double> gu = user_grads.row(row.user);
                std::span<double> gi = item_grads.row(row.item);
                for (std::size_t j = 0; j < d; ++j) {
                    gu[j] += (-2.0 * e * qi[j] + 2.0 * cfg.l2_weight * pu[j]) * inv_b;
                    gi[j] += (-2.0 * e * pu[j] + 2.0 * cfg.l2_weight * qi[j]) * inv_b;
                }
                if (cfg.enable_biases) {
                    user_bias_grads[row.user] += -2.0 * e * inv_b;
                    item_bias_grads[row.item] += -2.0 * e * inv_b;
                }
                touched_users.push_back(row.user);
                touched_items.push_back(row.item);
            }
            epoch_loss += batch_loss;

            auto dedupe = [](std::vector<uint32_t>& v) {
                std::sort(v.begin(), v.end());
                v.erase(std::unique(v.begin(), v.end()), v.end());
            };
            dedupe(touched_users);
            dedupe(touched_items);

            user_opt.begin_step();
            item_opt.begin_step();
            for (uint32_t u : touched_users)
                user_opt.update_range(params.user_vecs.data, user_grads.data,
                                      static_cast<std::size_t>(u) * d, d);
            for (uint32_t i : touched_items)
                item_opt.update_range(params.item_vecs.data, item_grads.data,
                                      static_cast<std::size_t>(i) * d, d);
            if (cfg.enable_biases) {
                user_bias_opt.begin_step();
                item_bias_opt.begin_step();
                for (uint32_t u : touched_users)
                    user_bias_opt.update_range(params.user_bias, user_bias_grads, u, 1);
                for (uint32_t i : touched_items)
                    item_bias_opt.update_range(params.item_bias, item_bias_grads, i, 1);
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(batches_per_epoch);
        if (has_validation) {
            stats.val_loss = detail::mf_validation_rmse(params, ds.validation);
            stats.val_ndcg10 = evaluate_inner_product(params.user_vecs.data,
                                                      params.item_vecs.data, d, ds,
                                                      Split::validation)
                                   .ndcg10;
            // Ties on NDCG resolve toward lower validation RMSE.
            if (stats.val_ndcg10 > best_ndcg ||
                (stats.val_ndcg10 == best_ndcg && stats.val_loss < best_val_rmse)) {
                best_ndcg = stats.val_ndcg10;
                best_val_rmse = stats.val_loss;
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
    return result;
}

// ---------------------------------------------------------------------------
// Binary quantization: per dimension j, threshold at the mean or median of
// that dimension's values; bit = 1 iff value > threshold (strict). Thresholds
// are computed separately over the user and item tables by default; pooled
// mode uses both tables together.
// ---------------------------------------------------------------------------

enum class QuantizeStatistic { mean, median };

namespace detail {

inline std::vector<double> column_thresholds(const Matrix& t, QuantizeStatistic stat) {
    std::vector<double> tau(t.cols, 0.0);
    std::vector<double> col(t.rows);
    for (std::size_t j = 0; j < t.cols; ++j) {
        for (std::size_t r = 0; r < t.rows; ++r) col[r] = t.data[r * t.cols + j];
        if (stat == QuantizeStatistic::mean) {
            double sum = 0.0;
            for (double v : col) sum += v;
            tau[j] = sum / static_cast<double>(col.size());
        } else {
            std::sort(col.begin(), col.end());
            const std::size_t n = col.size();
            tau[j] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
        }
    }
    return tau;
}

inline std::vector<HashCode> threshold_table(const Matrix& t, const std::vector<double>& tau) {
    std::vector<HashCode> codes;
    codes.reserve(t.rows);
    for (std::size_t r = 0; r < t.rows; ++r) {
        HashCode c(static_cast<uint32_t>(t.cols));
        for (std::size_t j = 0; j < t.cols; ++j)
            if (t.data[r * t.cols + j] > tau[j]) c.set_bit(static_cast<uint32_t>(j), true);
        codes.push_back(std::move(c));
    }
    return codes;
}

}  // namespace detail

struct QuantizedCodes {
    std::vector<HashCode> user_codes;
    std::vector<HashCode> item_codes;
};

inline QuantizedCodes quantize(const MFParams& params, QuantizeStatistic stat,
                               bool pool_tables = false) {
    QuantizedCodes q;
    if (!pool_tables) {
        q.user_codes = detail::threshold_table(params.user_vecs,
                                               detail::column_thresholds(params.user_vecs, stat));
        q.item_codes = detail::threshold_table(params.item_vecs,
                                               detail::column_thresholds(params.item_vecs, stat));
    } else {
        Matrix pooled(params.user_vecs.rows + params.item_vecs.rows, params.dim);
        std::copy(params.user_vecs.data.begin(), params.user_vecs.data.end(),
                  pooled.data.begin());
        std::copy(params.item_vecs.data.begin(), params.item_vecs.data.end(),
                  pooled.data.begin() + static_cast<std::ptrdiff_t>(params.user_vecs.data.size()));
        const std::vector<double> tau = detail::column_thresholds(pooled, stat);
        q.user_codes = detail::threshold_table(params.user_vecs, tau);
        q.item_codes = detail::threshold_table(params.item_vecs, tau);
    }
    return q;
}

}  // namespace bitrec
