#pragma once

// Rating-data ingestion: parsing, first-rating dedup, minimum-count
// filtering with dense re-indexing, and the per-user train/validation/test
// split. All transformations are pure; splitting is deterministic per seed.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bitrec/common.hpp"

namespace bitrec {

inline constexpr int64_t kNoTimestamp = std::numeric_limits<int64_t>::min();

struct Interaction {
    uint32_t user = 0;
    uint32_t item = 0;
    double rating = 0.0;
    int64_t timestamp = kNoTimestamp;
};

struct RatingBounds {
    double min = 1.0;
    double max = 5.0;
};

enum class RatingsFormat { movielens_dat, csv };

inline RatingsFormat ratings_format_from_string(const std::string& s) {
    if (s == "movielens-dat") return RatingsFormat::movielens_dat;
    if (s == "csv") return RatingsFormat::csv;
    throw ConfigError("unknown ratings format: " + s);
}

// Interactions with dense ids plus the dense -> original id maps.
struct InteractionTable {
    std::vector<Interaction> interactions;
    std::vector<int64_t> user_original_ids;
    std::vector<int64_t> item_original_ids;

    uint32_t user_count() const { return static_cast<uint32_t>(user_original_ids.size()); }
    uint32_t item_count() const { return static_cast<uint32_t>(item_original_ids.size()); }
};

namespace detail {

inline bool parse_int64(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    out = v;
    return true;
}

inline bool parse_f64(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    out = v;
    return true;
}

inline std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return fields;
}

}  // namespace detail

// Parse a ratings file. movielens-dat lines are `user::item::rating::timestamp`;
// csv is `user,item,rating[,timestamp]` with a header line. Dense ids are
// assigned in order of first appearance; original ids are kept in the table's
// side maps. A rating outside the declared bounds is a parse error.
inline InteractionTable parse_ratings(std::istream& is, RatingsFormat format,
                                      RatingBounds bounds = {}) {
    InteractionTable table;
    std::unordered_map<int64_t, uint32_t> user_ids, item_ids;
    std::string line;
    std::size_t line_number = 0;
    bool header_skipped = false;

    const std::string sep = format == RatingsFormat::movielens_dat ? "::" : ",";
    while (std::getline(is, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (format == RatingsFormat::csv && !header_skipped) {
            header_skipped = true;
            continue;
        }
        std::vector<std::string> fields = detail::split_on(line, sep);
        if (fields.size() < 3 || fields.size() > 4)
            throw ParseError("expected 3 or 4 fields, got " + std::to_string(fields.size()),
                             line_number);
        int64_t user_orig, item_orig;
        double rating;
        if (!detail::parse_int64(fields[0], user_orig))
            throw ParseError("bad user id '" + fields[0] + "'", line_number);
        if (!detail::parse_int64(fields[1], item_orig))
            throw ParseError("bad item id '" + fields[1] + "'", line_number);
        if (!detail::parse_f64(fields[2], rating))
            throw ParseError("bad rating '" + fields[2] + "'", line_number);
        if (rating < bounds.min || rating > bounds.max)
            throw ParseError("rating " + format_double(rating) + " outside declared bounds [" +
                                 format_double(bounds.min) + ", " + format_double(bounds.max) + "]",
                             line_number);
        int64_t ts = kNoTimestamp;
        if (fields.size() == 4 && !fields[3].empty()) {
            if (!detail::parse_int64(fields[3], ts))
                throw ParseError("bad timestamp '" + fields[3] + "'", line_number);
        }

        auto [uit, u_new] = user_ids.try_emplace(user_orig, table.user_count());
        if (u_new) table.user_original_ids.push_back(user_orig);
        auto [iit, i_new] = item_ids.try_emplace(item_orig, table.item_count());
        if (i_new) table.item_original_ids.push_back(item_orig);

        table.interactions.push_back({uit->second, iit->second, rating, ts});
    }
    return table;
}

inline InteractionTable parse_ratings(const std::string& path, RatingsFormat format,
                                      RatingBounds bounds = {}) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open ratings file: " + path);
    return parse_ratings(is, format, bounds);
}

// For each (user, item) pair keep only the earliest rating by timestamp;
// ties and missing timestamps keep the first occurrence in file order. The
// kept record stays at the position of the pair's first occurrence.
inline InteractionTable dedup_first(InteractionTable table) {
    std::unordered_map<uint64_t, std::size_t> first_pos;
    std::vector<Interaction> kept;
    kept.reserve(table.interactions.size());
    for (const Interaction& r : table.interactions) {
        uint64_t key = (static_cast<uint64_t>(r.user) << 32) | r.item;
        auto [it, inserted] = first_pos.try_emplace(key, kept.size());
        if (inserted) {
            kept.push_back(r);
        } else {
            Interaction& cur = kept[it->second];
            const bool both_stamped = cur.timestamp != kNoTimestamp && r.timestamp != kNoTimestamp;
            if (both_stamped && r.timestamp < cur.timestamp) cur = r;
        }
    }
    table.interactions = std::move(kept);
    return table;
}

namespace detail {

// Drop entities below min_count and compact ids (ascending original dense id
// order), updating the side maps.
inline void reindex(InteractionTable& table) {
    std::vector<uint32_t> user_map(table.user_count(), UINT32_MAX);
    std::vector<uint32_t> item_map(table.item_count(), UINT32_MAX);
    std::vector<int64_t> new_users, new_items;
    for (const Interaction& r : table.interactions) {
        if (user_map[r.user] == UINT32_MAX) {
            user_map[r.user] = 0;  // mark
        }
        if (item_map[r.item] == UINT32_MAX) {
            item_map[r.item] = 0;
        }
    }
    uint32_t next = 0;
    for (uint32_t u = 0; u < user_map.size(); ++u) {
        if (user_map[u] != UINT32_MAX) {
            user_map[u] = next++;
            new_users.push_back(table.user_original_ids[u]);
        }
    }
    next = 0;
    for (uint32_t i = 0; i < item_map.size(); ++i) {
        if (item_map[i] != UINT32_MAX) {
            item_map[i] = next++;
            new_items.push_back(table.item_original_ids[i]);
        }
    }
    for (Interaction& r : table.interactions) {
        r.user = user_map[r.user];
        r.item = item_map[r.item];
    }
    table.user_original_ids = std::move(new_users);
    table.item_original_ids = std::move(new_items);
}

}  // namespace detail

struct FilterLog {
    std::size_t items_dropped = 0;
    std::size_t users_dropped = 0;
    std::size_t interactions_dropped = 0;
    std::size_t passes = 1;
};

// Single pass by default: drop items with < min_count ratings, then users
// with < min_count remaining ratings, then re-index densely. An item that
// falls below min_count only because of the user removal is retained.
// fixpoint=true repeats until stable.
inline InteractionTable filter_min_ratings(InteractionTable table, std::size_t min_count = 10,
                                           FilterLog* log = nullptr, bool fixpoint = false) {
    if (min_count < 1) throw InvalidInput("min_count must be >= 1");
    FilterLog local;
    const std::size_t before = table.interactions.size();
    while (true) {
        std::vector<std::size_t> item_counts(table.item_count(), 0);
        for (const Interaction& r : table.interactions) ++item_counts[r.item];
        std::size_t items_low = 0;
        for (std::size_t c : item_counts)
            if (c > 0 && c < min_count) ++items_low;

        std::vector<Interaction> kept;
        kept.reserve(table.interactions.size());
        for (const Interaction& r : table.interactions)
            if (item_counts[r.item] >= min_count) kept.push_back(r);

        std::vector<std::size_t> user_counts(table.user_count(), 0);
        for (const Interaction& r : kept) ++user_counts[r.user];
        std::size_t users_low = 0;
        for (std::size_t c : user_counts)
            if (c > 0 && c < min_count) ++users_low;

        std::vector<Interaction> kept2;
        kept2.reserve(kept.size());
        for (const Interaction& r : kept)
            if (user_counts[r.user] >= min_count) kept2.push_back(r);

        const bool changed = kept2.size() != table.interactions.size();
        table.interactions = std::move(kept2);
        local.items_dropped += items_low;
        local.users_dropped += users_low;
        if (!fixpoint || !changed) break;
        ++local.passes;
    }
    local.interactions_dropped = before - table.interactions.size();
    detail::reindex(table);
    if (log) *log = local;
    return table;
}

// ---------------------------------------------------------------------------
// RatingsDataset: the filtered interactions partitioned per user into
// train / validation / test.
// ---------------------------------------------------------------------------

enum class Split { train, validation, test };

struct SplitProportions {
    double train = 0.425;
    double validation = 0.075;
    double test = 0.50;
};

enum class SplitOrder { random, temporal };

struct RatingsDataset {
    std::vector<Interaction> train;
    std::vector<Interaction> validation;
    std::vector<Interaction> test;
    uint32_t user_count = 0;
    uint32_t item_count = 0;
    RatingBounds bounds;
    uint64_t seed = 0;
    SplitProportions proportions;

    const std::vector<Interaction>& split(Split s) const {
        switch (s) {
            case Split::train: return train;
            case Split::validation: return validation;
            default: return test;
        }
    }

    // Per-user interaction indices into the given split (I_u).
    std::vector<std::vector<uint32_t>> index_by_user(Split s) const {
        std::vector<std::vector<uint32_t>> by_user(user_count);
        const auto& rows = split(s);
        for (uint32_t idx = 0; idx < rows.size(); ++idx) by_user[rows[idx].user].push_back(idx);
        return by_user;
    }

    // Per-item interaction indices into the given split (U_i).
    std::vector<std::vector<uint32_t>> index_by_item(Split s) const {
        std::vector<std::vector<uint32_t>> by_item(item_count);
        const auto& rows = split(s);
        for (uint32_t idx = 0; idx < rows.size(); ++idx) by_item[rows[idx].item].push_back(idx);
        return by_item;
    }

    std::size_t total_interactions() const {
        return train.size() + validation.size() + test.size();
    }
};

struct SplitResult {
    RatingsDataset dataset;
    std::vector<int64_t> user_original_ids;
    std::vector<int64_t> item_original_ids;
    std::size_t dropped_users = 0;
};

// Per-user split: a seeded uniform shuffle (or timestamp order if temporal)
// of the user's interactions; train takes floor(p_train * n), validation
// floor(p_val * n), test the remainder. Users whose train share rounds to
// zero are dropped and counted; user ids are re-compacted afterwards.
inline SplitResult split(const InteractionTable& table, SplitProportions props = {},
                         uint64_t seed = 0, RatingBounds bounds = {},
                         SplitOrder order = SplitOrder::random) {
    if (props.train <= 0 || props.validation < 0 || props.test <= 0)
        throw InvalidInput("split proportions must be positive");
    if (std::abs(props.train + props.validation + props.test - 1.0) > 1e-9)
        throw InvalidInput("split proportions must sum to 1");

    std::vector<std::vector<uint32_t>> by_user(table.user_count());
    for (uint32_t idx = 0; idx < table.interactions.size(); ++idx)
        by_user[table.interactions[idx].user].push_back(idx);

    SplitResult result;
    RatingsDataset& ds = result.dataset;
    ds.bounds = bounds;
    ds.seed = seed;
    ds.proportions = props;

    std::vector<uint32_t> user_map(table.user_count(), UINT32_MAX);
    uint32_t next_user = 0;

    for (uint32_t u = 0; u < table.user_count(); ++u) {
        std::vector<uint32_t>& rows = by_user[u];
        if (rows.empty()) {
            ++result.dropped_users;
            continue;
        }
        if (order == SplitOrder::random) {
            Rng rng(derive_seed(seed, 0x5eed0000ULL + u));
            shuffle_indices(rows, rng);
        } else {
            std::stable_sort(rows.begin(), rows.end(), [&](uint32_t a, uint32_t b) {
                return table.interactions[a].timestamp < table.interactions[b].timestamp;
            });
        }
        const std::size_t n = rows.size();
        // floor(p * n), guarded against representation error in p (e.g. 0.425 * 40).
        const std::size_t n_train =
            static_cast<std::size_t>(std::floor(props.train * static_cast<double>(n) + 1e-9));
        const std::size_t n_val =
            static_cast<std::size_t>(std::floor(props.validation * static_cast<double>(n) + 1e-9));
        if (n_train == 0) {
            ++result.dropped_users;
            continue;
        }
        user_map[u] = next_user++;
        result.user_original_ids.push_back(table.user_original_ids[u]);
        for (std::size_t r = 0; r < n; ++r) {
            Interaction row = table.interactions[rows[r]];
            row.user = user_map[u];
            if (r < n_train)
                ds.train.push_back(row);
            else if (r < n_train + n_val)
                ds.validation.push_back(row);
            else
                ds.test.push_back(row);
        }
    }

    ds.user_count = next_user;
    ds.item_count = table.item_count();
    result.item_original_ids = table.item_original_ids;
    return result;
}

// ---------------------------------------------------------------------------
// Persistence: split CSVs (`user,item,rating`) and id maps.
// ---------------------------------------------------------------------------

inline void write_split_csv(const std::string& path, const std::vector<Interaction>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open split file for writing: " + path);
    os << "user,item,rating\n";
    for (const Interaction& r : rows)
        os << r.user << ',' << r.item << ',' << format_double(r.rating) << '\n';
    if (!os) throw IoError("short write: " + path);
}

// Reads a split CSV written by write_split_csv; ids are already dense and
// are taken literally.
inline std::vector<Interaction> read_split_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open split file: " + path);
    std::vector<Interaction> rows;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(is, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line_number == 1) continue;
        std::vector<std::string> f = detail::split_on(line, ",");
        if (f.size() != 3) throw ParseError("expected user,item,rating", line_number);
        int64_t user, item;
        double rating;
        if (!detail::parse_int64(f[0], user) || !detail::parse_int64(f[1], item) ||
            !detail::parse_f64(f[2], rating))
            throw ParseError("bad split row '" + line + "'", line_number);
        rows.push_back({static_cast<uint32_t>(user), static_cast<uint32_t>(item), rating,
                        kNoTimestamp});
    }
    return rows;
}

inline void write_id_map_csv(const std::string& path, const std::vector<int64_t>& dense_to_orig) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open id map for writing: " + path);
    os << "dense,original\n";
    for (std::size_t d = 0; d < dense_to_orig.size(); ++d)
        os << d << ',' << dense_to_orig[d] << '\n';
}

}  // namespace bitrec
