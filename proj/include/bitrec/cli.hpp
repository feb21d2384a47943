#pragma once

// Command-line entry point: prepare / train / eval / rank / bench-distance /
// bench-convergence / report, driven by an optional JSON config file with
// every setting overridable by flags (flags win). Artifacts embed the
// effective config hash and seed; identical inputs reproduce identical bytes.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bitrec/bench.hpp"
#include "bitrec/bitcode.hpp"
#include "bitrec/checkpoint.hpp"
#include "bitrec/code_file.hpp"
#include "bitrec/data.hpp"
#include "bitrec/eval.hpp"
#include "bitrec/mf.hpp"
#include "bitrec/synthetic.hpp"
#include "bitrec/vhmodel.hpp"

namespace bitrec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Effective config: defaults <- config file <- flags.
// ---------------------------------------------------------------------------

inline json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    return j;
}

// Location fields (output dirs, input paths) are stripped before hashing and
// embedding: the recorded config describes WHAT was computed, so identical
// runs into different directories still produce byte-identical artifacts.
inline json sanitized_config(json effective) {
    effective.erase("out");
    if (effective.contains("dataset") && effective["dataset"].is_object())
        effective["dataset"].erase("path");
    if (effective.contains("eval") && effective["eval"].is_object())
        effective["eval"].erase("run");
    effective.erase("data");
    return effective;
}

inline std::string config_hash(const json& effective) {
    return fnv1a64_hex(sanitized_config(effective).dump());
}

// Pulls `section.key` if present; otherwise leaves `value` untouched.
template <typename T>
void from_config(const json& cfg, const std::string& section, const std::string& key, T& value) {
    if (cfg.contains(section) && cfg[section].contains(key)) value = cfg[section][key].get<T>();
}

// ---------------------------------------------------------------------------
// Prepared-dataset directory
// ---------------------------------------------------------------------------

inline void save_dataset(const fs::path& dir, const RatingsDataset& ds,
                         const std::vector<int64_t>& user_ids,
                         const std::vector<int64_t>& item_ids, std::size_t dropped_users,
                         std::size_t min_ratings, const std::string& cfg_hash) {
    fs::create_directories(dir);
    write_split_csv((dir / "train.csv").string(), ds.train);
    write_split_csv((dir / "validation.csv").string(), ds.validation);
    write_split_csv((dir / "test.csv").string(), ds.test);
    write_id_map_csv((dir / "user_ids.csv").string(), user_ids);
    write_id_map_csv((dir / "item_ids.csv").string(), item_ids);

    json manifest;
    manifest["users"] = ds.user_count;
    manifest["items"] = ds.item_count;
    manifest["counts"] = {{"train", ds.train.size()},
                          {"validation", ds.validation.size()},
                          {"test", ds.test.size()}};
    manifest["bounds"] = {ds.bounds.min, ds.bounds.max};
    manifest["seed"] = ds.seed;
    manifest["proportions"] = {ds.proportions.train, ds.proportions.validation,
                               ds.proportions.test};
    manifest["min_ratings"] = min_ratings;
    manifest["dropped_users"] = dropped_users;
    manifest["files"] = {{"train.csv", hash_file((dir / "train.csv").string())},
                         {"validation.csv", hash_file((dir / "validation.csv").string())},
                         {"test.csv", hash_file((dir / "test.csv").string())}};
    manifest["config_hash"] = cfg_hash;
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << manifest.dump(2) << '\n';
    if (!os) throw IoError("cannot write manifest");
}

inline RatingsDataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("manifest not found: " + manifest_path.string() +
                           " (run `prepare` first)");
    json manifest;
    is >> manifest;

    RatingsDataset ds;
    ds.user_count = manifest.at("users").get<uint32_t>();
    ds.item_count = manifest.at("items").get<uint32_t>();
    ds.bounds.min = manifest.at("bounds")[0].get<double>();
    ds.bounds.max = manifest.at("bounds")[1].get<double>();
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.proportions.train = manifest.at("proportions")[0].get<double>();
    ds.proportions.validation = manifest.at("proportions")[1].get<double>();
    ds.proportions.test = manifest.at("proportions")[2].get<double>();
    ds.train = read_split_csv((dir / "train.csv").string());
    ds.validation = read_split_csv((dir / "validation.csv").string());
    ds.test = read_split_csv((dir / "test.csv").string());
    return ds;
}

// ---------------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------------

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
};

struct PrepareArgs {
    std::string dataset_path;
    std::string format = "movielens-dat";
    std::vector<double> proportions{0.425, 0.075, 0.50};
    std::vector<double> bounds{1.0, 5.0};
    uint64_t seed = 42;
    std::size_t min_ratings = 10;
    std::string split_order = "random";
    bool filter_fixpoint = false;
    bool synthetic = false;
    uint32_t synth_users = 100;
    uint32_t synth_items = 150;
    uint32_t synth_bits = 8;
    double synth_noise = 0.1;
    double synth_density = 1.0;
};

struct TrainArgs {
    std::string data_dir;
    std::string model = "vh-phd";
    uint32_t bits = 32;
    double learning_rate = 0.001;
    uint32_t batch_size = 400;
    uint32_t epochs = 100;
    double kl_weight = 0.1;
    double kl_warmup_frac = 0.2;
    double noise_initial_variance = 1.0;
    double noise_decay = 1e-4;
    std::string sampling_train = "stochastic";
    std::string sampling_eval = "deterministic";
    uint64_t seed = 42;
    uint32_t patience = 10;
    double init_scale = 1.0;
    double mf_l2_weight = 0.001;
    double mf_init_scale = 0.1;
    bool mf_biases = false;
    bool quantize_pooled = false;
};

inline SamplingMode sampling_from_string(const std::string& s) {
    if (s == "stochastic") return SamplingMode::stochastic;
    if (s == "deterministic") return SamplingMode::deterministic;
    throw ConfigError("unknown sampling mode: " + s);
}

inline const std::vector<std::string>& known_models() {
    static const std::vector<std::string> kinds{"vh-phd", "vh-hamming", "mf", "mf-mean",
                                                "mf-median"};
    return kinds;
}

// ---------------------------------------------------------------------------
// Training-log CSV (pinned header)
// ---------------------------------------------------------------------------

inline void write_training_log(const fs::path& path, const std::vector<EpochStats>& log) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write training log: " + path.string());
    os << "epoch,train_loss,val_loss,val_ndcg10,noise_var\n";
    for (const EpochStats& e : log)
        os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss)
           << ',' << format_double(e.val_ndcg10) << ',' << format_double(e.noise_variance)
           << '\n';
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

inline int cmd_prepare(const PrepareArgs& a, const json& effective, std::ostream& out) {
    const std::string cfg_hash = config_hash(effective);
    const fs::path dir = effective.at("out").get<std::string>();
    RatingBounds bounds{a.bounds.at(0), a.bounds.at(1)};

    InteractionTable table;
    SyntheticData synth;
    if (a.synthetic) {
        SyntheticSpec spec;
        spec.users = a.synth_users;
        spec.items = a.synth_items;
        spec.bits = a.synth_bits;
        spec.noise_sigma = a.synth_noise;
        spec.density = a.synth_density;
        spec.bounds = bounds;
        spec.seed = a.seed;
        synth = make_synthetic(spec);
        table = std::move(synth.table);
    } else {
        if (a.dataset_path.empty()) throw ConfigError("prepare needs --dataset or --synthetic");
        table = parse_ratings(a.dataset_path, ratings_format_from_string(a.format), bounds);
    }

    table = dedup_first(std::move(table));
    FilterLog flog;
    table = filter_min_ratings(std::move(table), a.min_ratings, &flog, a.filter_fixpoint);

    SplitProportions props{a.proportions.at(0), a.proportions.at(1), a.proportions.at(2)};
    const SplitOrder order =
        a.split_order == "temporal" ? SplitOrder::temporal : SplitOrder::random;
    SplitResult sr = split(table, props, a.seed, bounds, order);

    save_dataset(dir, sr.dataset, sr.user_original_ids, sr.item_original_ids, sr.dropped_users,
                 a.min_ratings, cfg_hash);

    if (a.synthetic) {
        // Planted ground-truth codes, directly consumable by `rank` and `eval`.
        write_codes((dir / "user_codes.bhcf").string(), synth.user_codes, a.synth_bits, false);
        write_codes((dir / "item_codes.bhcf").string(), synth.item_codes, a.synth_bits, false);
        std::vector<HashCode> neg;
        neg.reserve(synth.item_codes.size());
        for (const HashCode& c : synth.item_codes) neg.push_back(negate(c));
        write_codes((dir / "item_codes_neg.bhcf").string(), neg, a.synth_bits, true);
    }

    out << "prepared " << sr.dataset.user_count << " users, " << sr.dataset.item_count
        << " items (train/val/test = " << sr.dataset.train.size() << '/'
        << sr.dataset.validation.size() << '/' << sr.dataset.test.size() << ", dropped "
        << sr.dropped_users << " users, filtered " << flog.interactions_dropped
        << " interactions) -> " << dir.string() << '\n';
    return 0;
}

inline int cmd_train(const TrainArgs& a, const json& effective, std::ostream& out) {
    const std::string cfg_hash = config_hash(effective);
    const fs::path run_dir = effective.at("out").get<std::string>();
    if (std::find(known_models().begin(), known_models().end(), a.model) == known_models().end())
        throw ConfigError("unknown model kind: " + a.model);

    const RatingsDataset ds = load_dataset(a.data_dir);
    fs::create_directories(run_dir);

    json meta;
    meta["config"] = sanitized_config(effective);
    meta["config_hash"] = cfg_hash;
    meta["seed"] = a.seed;
    meta["m"] = a.bits;
    meta["users"] = ds.user_count;
    meta["items"] = ds.item_count;
    meta["model"] = a.model;

    if (a.model == "vh-phd" || a.model == "vh-hamming") {
        TrainConfig cfg;
        cfg.bits = a.bits;
        cfg.learning_rate = a.learning_rate;
        cfg.batch_size = a.batch_size;
        cfg.epochs = a.epochs;
        cfg.kl_weight = a.kl_weight;
        cfg.kl_warmup_frac = a.kl_warmup_frac;
        cfg.kind = a.model == "vh-phd" ? Dissimilarity::phd : Dissimilarity::hamming;
        cfg.train_sampling.mode = sampling_from_string(a.sampling_train);
        cfg.eval_sampling.mode = sampling_from_string(a.sampling_eval);
        cfg.noise_initial_variance = a.noise_initial_variance;
        cfg.noise_decay = a.noise_decay;
        cfg.seed = a.seed;
        cfg.patience = a.patience;
        cfg.init_scale = a.init_scale;

        TrainResult tr = train(ds, cfg);
        meta["kind"] = "vh";
        meta["epoch"] = tr.best_epoch;
        meta["metrics"] = {{"val_ndcg10", tr.best_val_ndcg10}};
        save_checkpoint((run_dir / "checkpoint.bhck").string(), meta, tr.params.user_table,
                        tr.params.item_table);
        write_training_log(run_dir / "training_log.csv", tr.log);

        CodesBundle codes = export_codes(tr.params);
        write_codes((run_dir / "user_codes.bhcf").string(), codes.user_codes, a.bits, false);
        write_codes((run_dir / "item_codes.bhcf").string(), codes.item_codes, a.bits, false);
        write_codes((run_dir / "item_codes_neg.bhcf").string(), codes.item_codes_negated, a.bits,
                    true);
        out << "trained " << a.model << " (best epoch " << tr.best_epoch << ", val NDCG@10 "
            << format_double(tr.best_val_ndcg10) << ") -> " << run_dir.string() << '\n';
    } else {
        MFConfig cfg;
        cfg.dim = a.bits;
        cfg.learning_rate = a.learning_rate;
        cfg.l2_weight = a.mf_l2_weight;
        cfg.batch_size = a.batch_size;
        cfg.epochs = a.epochs;
        cfg.seed = a.seed;
        cfg.patience = a.patience;
        cfg.init_scale = a.mf_init_scale;
        cfg.enable_biases = a.mf_biases;

        MFTrainResult tr = mf_train(ds, cfg);
        meta["kind"] = "mf";
        meta["epoch"] = tr.best_epoch;
        meta["metrics"] = {{"val_ndcg10", tr.best_val_ndcg10}};
        save_checkpoint((run_dir / "checkpoint.bhck").string(), meta, tr.params.user_vecs,
                        tr.params.item_vecs);
        write_training_log(run_dir / "training_log.csv", tr.log);

        if (a.model == "mf-mean" || a.model == "mf-median") {
            const QuantizeStatistic stat =
                a.model == "mf-mean" ? QuantizeStatistic::mean : QuantizeStatistic::median;
            QuantizedCodes q = quantize(tr.params, stat, a.quantize_pooled);
            write_codes((run_dir / "user_codes.bhcf").string(), q.user_codes, a.bits, false);
            write_codes((run_dir / "item_codes.bhcf").string(), q.item_codes, a.bits, false);
            std::vector<HashCode> neg;
            neg.reserve(q.item_codes.size());
            for (const HashCode& c : q.item_codes) neg.push_back(negate(c));
            write_codes((run_dir / "item_codes_neg.bhcf").string(), neg, a.bits, true);
        }
        out << "trained " << a.model << " (best epoch " << tr.best_epoch << ", val NDCG@10 "
            << format_double(tr.best_val_ndcg10) << ") -> " << run_dir.string() << '\n';
    }
    return 0;
}

struct EvalArgs {
    std::string run_dir;
    std::string data_dir;
    std::string out_dir;  // defaults to run_dir
    std::vector<uint32_t> ks{5, 10};
    std::string sampling = "deterministic";
    bool full_catalog = false;
    std::size_t window = 500;
    std::string mf_report_csv;  // per_user.csv of an MF run, for the mf-ndcg curve key
    uint64_t seed = 42;
};

// Mean NDCG@k for arbitrary extra cutoffs.
template <typename ScoreFn>
std::map<uint32_t, double> mean_ndcg_at(ScoreFn&& score, bool ascending,
                                        const RatingsDataset& ds,
                                        const std::vector<uint32_t>& ks) {
    const auto by_user = ds.index_by_user(Split::test);
    const auto& rows = ds.test;
    std::map<uint32_t, double> sums;
    std::size_t users = 0;
    std::vector<std::tuple<double, uint32_t, double>> ranked;
    for (uint32_t u = 0; u < ds.user_count; ++u) {
        if (by_user[u].empty()) continue;
        ranked.clear();
        for (uint32_t idx : by_user[u]) {
            const double s = score(u, rows[idx].item);
            ranked.emplace_back(ascending ? s : -s, rows[idx].item, rows[idx].rating);
        }
        std::sort(ranked.begin(), ranked.end());
        std::vector<double> rels;
        rels.reserve(ranked.size());
        for (const auto& [s, item, rating] : ranked) rels.push_back(rating);
        for (uint32_t k : ks) sums[k] += ndcg_at_k(rels, k);
        ++users;
    }
    for (auto& [k, v] : sums) v /= static_cast<double>(users ? users : 1);
    return sums;
}

inline std::map<uint32_t, double> read_mf_ndcg10(const std::string& per_user_csv) {
    std::ifstream is(per_user_csv);
    if (!is) throw IoError("cannot open MF per-user report: " + per_user_csv);
    std::map<uint32_t, double> ndcg;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(is, line)) {
        ++line_number;
        if (line_number == 1 || line.empty()) continue;
        const auto f = detail::split_on(line, ",");
        if (f.size() < 3) throw ParseError("bad per-user row", line_number);
        ndcg[static_cast<uint32_t>(std::stoul(f[0]))] = std::strtod(f[2].c_str(), nullptr);
    }
    return ndcg;
}

inline int cmd_eval(const EvalArgs& a, const json& effective, std::ostream& out) {
    const std::string cfg_hash = config_hash(effective);
    const fs::path run_dir = a.run_dir;
    const fs::path out_dir = a.out_dir.empty() ? run_dir : fs::path(a.out_dir);
    const fs::path ckpt_path = run_dir / "checkpoint.bhck";
    if (!fs::exists(ckpt_path)) throw IoError("checkpoint not found: " + ckpt_path.string());

    const RatingsDataset ds = load_dataset(a.data_dir);
    Checkpoint ck = load_checkpoint(ckpt_path.string());
    const std::string model = ck.meta.at("model").get<std::string>();
    const uint32_t bits = ck.meta.at("m").get<uint32_t>();
    fs::create_directories(out_dir);

    EvalReport report;
    std::map<uint32_t, double> extra_ndcg;
    const SamplingMode sampling = sampling_from_string(a.sampling);
    if (sampling == SamplingMode::stochastic && model != "vh-phd" && model != "vh-hamming")
        throw ConfigError("stochastic evaluation needs a variational checkpoint, got " + model);

    if (model == "mf") {
        if (a.full_catalog) {
            auto score = [&](uint32_t u, uint32_t i) {
                std::span<const double> p = ck.user_table.row(u);
                std::span<const double> q = ck.item_table.row(i);
                double dot = 0.0;
                for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * q[j];
                return dot;
            };
            report = evaluate_full_catalog(score, false, ds);
            report.scorer = scorer_name(ScorerKind::inner_product);
        } else {
            report = evaluate_inner_product(ck.user_table.data, ck.item_table.data, bits, ds);
        }
        auto score = [&](uint32_t u, uint32_t i) {
            std::span<const double> p = ck.user_table.row(u);
            std::span<const double> q = ck.item_table.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * q[j];
            return dot;
        };
        extra_ndcg = mean_ndcg_at(score, false, ds, a.ks);
    } else {
        std::vector<HashCode> user_codes, item_codes;
        if (sampling == SamplingMode::stochastic) {
            Rng rng(derive_seed(a.seed, 30));
            user_codes = sample_codes(ck.user_table, {SamplingMode::stochastic}, rng);
            item_codes = sample_codes(ck.item_table, {SamplingMode::stochastic}, rng);
        } else {
            user_codes = read_codes((run_dir / "user_codes.bhcf").string()).codes;
            item_codes = read_codes((run_dir / "item_codes.bhcf").string()).codes;
        }
        const ScorerKind kind = model == "vh-phd" ? ScorerKind::phd : ScorerKind::hamming;
        if (a.full_catalog) {
            auto score = [&](uint32_t u, uint32_t i) {
                return kind == ScorerKind::phd
                           ? static_cast<double>(phd(user_codes[u], item_codes[i]))
                           : static_cast<double>(hamming(user_codes[u], item_codes[i]));
            };
            report = evaluate_full_catalog(score, true, ds);
            report.scorer = scorer_name(kind);
            report.bits = bits;
            extra_ndcg = mean_ndcg_at(score, true, ds, a.ks);
        } else {
            report = evaluate_codes(user_codes, item_codes, ds, kind);
            auto score = [&](uint32_t u, uint32_t i) {
                return kind == ScorerKind::phd
                           ? static_cast<double>(phd(user_codes[u], item_codes[i]))
                           : static_cast<double>(hamming(user_codes[u], item_codes[i]));
            };
            extra_ndcg = mean_ndcg_at(score, true, ds, a.ks);
        }
    }
    report.model_id = model;
    report.seed = ck.meta.at("seed").get<uint64_t>();

    // Ordering keys for the bucket curves.
    const std::vector<double> key_nrated = user_rated_counts(ds);
    const std::vector<double> key_pop = user_mean_train_popularity(ds);
    std::map<uint32_t, double> key_mf;
    if (!a.mf_report_csv.empty()) key_mf = read_mf_ndcg10(a.mf_report_csv);

    // report.json
    json rj;
    rj["model_id"] = report.model_id;
    rj["scorer"] = report.scorer;
    rj["m"] = report.bits;
    rj["seed"] = report.seed;
    rj["users_evaluated"] = report.users_evaluated;
    rj["ndcg5"] = report.ndcg5;
    rj["ndcg10"] = report.ndcg10;
    rj["mrr"] = report.mrr;
    json extra = json::object();
    for (const auto& [k, v] : extra_ndcg) extra[std::to_string(k)] = v;
    rj["ndcg_at"] = extra;
    rj["full_catalog"] = a.full_catalog;
    rj["sampling"] = a.sampling;
    rj["config"] = sanitized_config(effective);
    rj["config_hash"] = cfg_hash;
    {
        std::ofstream os(out_dir / "report.json", std::ios::trunc);
        os << rj.dump(2) << '\n';
        if (!os) throw IoError("cannot write report.json");
    }

    // per_user.csv
    {
        std::ofstream os(out_dir / "per_user.csv", std::ios::trunc);
        os << "user,ndcg5,ndcg10,rr,key_mf,key_nrated,key_pop\n";
        for (const PerUserMetrics& mtr : report.per_user) {
            const double mf_key = key_mf.count(mtr.user)
                                      ? key_mf.at(mtr.user)
                                      : std::numeric_limits<double>::quiet_NaN();
            os << mtr.user << ',' << format_double(mtr.ndcg5) << ',' << format_double(mtr.ndcg10)
               << ',' << format_double(mtr.rr) << ',' << format_double(mf_key) << ','
               << format_double(key_nrated[mtr.user]) << ',' << format_double(key_pop[mtr.user])
               << '\n';
        }
    }

    // Bucket curves over NDCG@10.
    auto write_curve = [&](const std::string& name, const std::vector<double>& keys_all,
                           const std::map<uint32_t, double>* key_map) {
        std::vector<double> values, keys;
        for (const PerUserMetrics& mtr : report.per_user) {
            if (key_map) {
                auto it = key_map->find(mtr.user);
                if (it == key_map->end()) continue;
                keys.push_back(it->second);
            } else {
                keys.push_back(keys_all[mtr.user]);
            }
            values.push_back(mtr.ndcg10);
        }
        if (values.size() < 2) return;
        const auto curve = bucket_curve(values, keys, a.window);
        std::ofstream os(out_dir / name, std::ios::trunc);
        os << "x,y\n";
        for (const auto& [x, y] : curve)
            os << format_double(x) << ',' << format_double(y) << '\n';
    };
    write_curve("curve_nrated.csv", key_nrated, nullptr);
    write_curve("curve_pop.csv", key_pop, nullptr);
    if (!key_mf.empty()) write_curve("curve_mf.csv", {}, &key_mf);

    out << "eval " << report.model_id << ": NDCG@5 " << format_double(report.ndcg5)
        << ", NDCG@10 " << format_double(report.ndcg10) << ", MRR " << format_double(report.mrr)
        << " over " << report.users_evaluated << " users -> " << out_dir.string() << '\n';
    if (report.zero_relevance_users > 0)
        out << "note: " << report.zero_relevance_users
            << " users had all-zero relevance (NDCG 1 by convention)\n";
    return 0;
}

struct RankArgs {
    std::string run_dir;
    uint32_t user = 0;
    std::int64_t k = 10;
};

inline int cmd_rank(const RankArgs& a, std::ostream& out) {
    const fs::path run_dir = a.run_dir;
    const CodeFile users = read_codes((run_dir / "user_codes.bhcf").string());
    const CodeFile items_neg = read_codes((run_dir / "item_codes_neg.bhcf").string());
    if (!items_neg.negated)
        throw IoError("item_codes_neg.bhcf does not carry the negated flag");
    if (a.user >= users.codes.size())
        throw LookupError("user " + std::to_string(a.user) + " out of range (have " +
                          std::to_string(users.codes.size()) + ")");
    const NegatedItemStore store = NegatedItemStore::from_negated_codes(items_neg.codes);
    const auto top = rank_items(users.codes[a.user], store, a.k);
    out << "rank,item,phd\n";
    for (std::size_t r = 0; r < top.size(); ++r)
        out << r + 1 << ',' << top[r].first << ',' << top[r].second << '\n';
    return 0;
}

struct BenchDistanceArgs {
    std::size_t n = 10'000'000;
    uint32_t bits = 64;
    uint32_t reps = 100;
    uint64_t seed = 42;
};

inline int cmd_bench_distance(const BenchDistanceArgs& a, const json& effective,
                              std::ostream& out) {
    const std::string cfg_hash = config_hash(effective);
    const fs::path dir = effective.at("out").get<std::string>();
    fs::create_directories(dir);

    const std::vector<BenchResult> results = bench_distance(a.n, a.bits, a.reps, a.seed);

    std::ofstream csv(dir / "bench.csv", std::ios::trunc);
    csv << "kernel,n,m,reps,mean_seconds,overhead_pct\n";
    for (const BenchResult& r : results)
        csv << r.kernel << ',' << r.code_count << ',' << r.bits << ',' << r.repetitions << ','
            << format_double(r.mean_seconds) << ',' << format_double(r.overhead_pct) << '\n';

    json jb;
    jb["n"] = a.n;
    jb["m"] = a.bits;
    jb["reps"] = a.reps;
    jb["seed"] = a.seed;
    jb["config_hash"] = cfg_hash;
    jb["build"] = {{"compiler", __VERSION__},
#ifdef __OPTIMIZE__
                   {"optimized", true}
#else
                   {"optimized", false}
#endif
    };
    json arr = json::array();
    for (const BenchResult& r : results)
        arr.push_back({{"kernel", r.kernel},
                       {"mean_seconds", r.mean_seconds},
                       {"overhead_pct", r.overhead_pct},
                       {"checksum", r.checksum}});
    jb["results"] = arr;
    std::ofstream js(dir / "bench.json", std::ios::trunc);
    js << jb.dump(2) << '\n';

    for (const BenchResult& r : results)
        out << r.kernel << ": " << format_double(r.mean_seconds) << " s ("
            << (r.overhead_pct >= 0 ? "+" : "") << format_double(r.overhead_pct) << "%)\n";
    return 0;
}

struct BenchConvergenceArgs {
    std::string data_dir;
    uint32_t bits = 32;
    uint32_t epochs = 50;
    std::vector<uint64_t> seeds{1, 2, 3};
    double learning_rate = 0.001;
    uint32_t batch_size = 400;
};

inline int cmd_bench_convergence(const BenchConvergenceArgs& a, const json& effective,
                                 std::ostream& out) {
    const std::string cfg_hash = config_hash(effective);
    const fs::path dir = effective.at("out").get<std::string>();
    fs::create_directories(dir);

    const RatingsDataset ds = load_dataset(a.data_dir);
    TrainConfig base;
    base.bits = a.bits;
    base.epochs = a.epochs;
    base.learning_rate = a.learning_rate;
    base.batch_size = a.batch_size;
    base.patience = 0;  // run full curves for the comparison

    const std::vector<ConvergenceRun> runs = bench_convergence(ds, base, a.seeds);

    std::ofstream csv(dir / "convergence.csv", std::ios::trunc);
    csv << "kind,seed,epoch,train_loss,val_loss,val_ndcg10\n";
    for (const ConvergenceRun& run : runs)
        for (const EpochStats& e : run.log)
            csv << dissimilarity_name(run.kind) << ',' << run.seed << ',' << e.epoch << ','
                << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
                << format_double(e.val_ndcg10) << '\n';

    json jc;
    jc["config_hash"] = cfg_hash;
    jc["seeds"] = a.seeds;
    double phd_batch = 0.0, ham_batch = 0.0;
    std::size_t phd_n = 0, ham_n = 0;
    for (const ConvergenceRun& run : runs) {
        if (run.kind == Dissimilarity::phd) {
            phd_batch += run.mean_batch_seconds;
            ++phd_n;
        } else {
            ham_batch += run.mean_batch_seconds;
            ++ham_n;
        }
    }
    jc["mean_batch_seconds"] = {{"phd", phd_n ? phd_batch / phd_n : 0.0},
                                {"hamming", ham_n ? ham_batch / ham_n : 0.0}};
    std::ofstream js(dir / "convergence.json", std::ios::trunc);
    js << jc.dump(2) << '\n';

    out << "convergence curves for " << runs.size() << " runs -> " << dir.string() << '\n';
    return 0;
}

inline int cmd_report(const std::vector<std::string>& inputs, const std::string& out_file,
                      std::ostream& out) {
    if (inputs.empty()) throw ConfigError("report needs at least one report.json");
    std::ostringstream csv;
    csv << "model,scorer,m,seed,users,ndcg5,ndcg10,mrr\n";
    for (const std::string& path : inputs) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open report: " + path);
        json r;
        is >> r;
        csv << r.at("model_id").get<std::string>() << ',' << r.at("scorer").get<std::string>()
            << ',' << r.at("m").get<uint32_t>() << ',' << r.at("seed").get<uint64_t>() << ','
            << r.at("users_evaluated").get<std::size_t>() << ','
            << format_double(r.at("ndcg5").get<double>()) << ','
            << format_double(r.at("ndcg10").get<double>()) << ','
            << format_double(r.at("mrr").get<double>()) << '\n';
    }
    if (out_file.empty()) {
        out << csv.str();
    } else {
        std::ofstream os(out_file, std::ios::trunc);
        os << csv.str();
        if (!os) throw IoError("cannot write " + out_file);
        out << "wrote " << out_file << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// run(): parse flags, merge config, dispatch. Returns the process exit
// status: 0 ok, 1 pipeline failure, 2 usage error.
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"bitrec - hashing-based collaborative filtering toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global options (e.g. --config) after the subcommand

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override it)")
        ->expected(1);

    PrepareArgs prep;
    TrainArgs tr;
    EvalArgs ev;
    RankArgs rk;
    BenchDistanceArgs bd;
    BenchConvergenceArgs bc;
    std::vector<std::string> report_inputs;
    std::string report_out;
    std::string out_dir;

    CLI::App* c_prep = app.add_subcommand("prepare", "parse, dedup, filter and split a dataset");
    c_prep->add_option("--dataset", prep.dataset_path, "ratings file");
    c_prep->add_option("--format", prep.format, "movielens-dat or csv");
    c_prep->add_option("--out", out_dir, "output directory");
    c_prep->add_option("--seed", prep.seed, "split seed");
    c_prep->add_option("--proportions", prep.proportions, "train val test fractions")
        ->expected(3);
    c_prep->add_option("--bounds", prep.bounds, "rating bounds")->expected(2);
    c_prep->add_option("--min-ratings", prep.min_ratings, "minimum ratings per user/item");
    c_prep->add_option("--split-order", prep.split_order, "random or temporal");
    c_prep->add_flag("--filter-fixpoint", prep.filter_fixpoint, "iterate filtering to fixpoint");
    c_prep->add_flag("--synthetic", prep.synthetic, "generate planted-code synthetic data");
    c_prep->add_option("--synth-users", prep.synth_users);
    c_prep->add_option("--synth-items", prep.synth_items);
    c_prep->add_option("--synth-bits", prep.synth_bits);
    c_prep->add_option("--synth-noise", prep.synth_noise);
    c_prep->add_option("--synth-density", prep.synth_density);

    CLI::App* c_train = app.add_subcommand("train", "train a model on a prepared dataset");
    c_train->add_option("--data", tr.data_dir, "prepared dataset directory")->required();
    c_train->add_option("--out", out_dir, "run output directory");
    c_train->add_option("--model", tr.model, "vh-phd | vh-hamming | mf | mf-mean | mf-median");
    c_train->add_option("--bits", tr.bits, "code length / latent dimension");
    c_train->add_option("--seed", tr.seed);
    c_train->add_option("--lr", tr.learning_rate);
    c_train->add_option("--batch", tr.batch_size);
    c_train->add_option("--epochs", tr.epochs);
    c_train->add_option("--kl-weight", tr.kl_weight);
    c_train->add_option("--kl-warmup", tr.kl_warmup_frac);
    c_train->add_option("--noise-init", tr.noise_initial_variance);
    c_train->add_option("--noise-decay", tr.noise_decay);
    c_train->add_option("--sampling-train", tr.sampling_train);
    c_train->add_option("--sampling-eval", tr.sampling_eval);
    c_train->add_option("--patience", tr.patience);
    c_train->add_option("--init-scale", tr.init_scale);
    c_train->add_option("--mf-lambda", tr.mf_l2_weight);
    c_train->add_option("--mf-init-scale", tr.mf_init_scale);
    c_train->add_flag("--mf-biases", tr.mf_biases);
    c_train->add_flag("--quantize-pooled", tr.quantize_pooled);

    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a trained run");
    c_eval->add_option("--run", ev.run_dir, "run directory from train")->required();
    c_eval->add_option("--data", ev.data_dir, "prepared dataset directory")->required();
    c_eval->add_option("--out", ev.out_dir, "report directory (default: run dir)");
    c_eval->add_option("--k", ev.ks, "NDCG cutoffs")->delimiter(',');
    c_eval->add_option("--sampling", ev.sampling, "deterministic or stochastic code sampling");
    c_eval->add_flag("--full-catalog", ev.full_catalog, "rank the whole catalog per user");
    c_eval->add_option("--window", ev.window, "bucket-curve smoothing window");
    c_eval->add_option("--mf-report", ev.mf_report_csv, "per_user.csv of an MF run");
    c_eval->add_option("--seed", ev.seed, "seed for stochastic evaluation");

    CLI::App* c_rank = app.add_subcommand("rank", "top-k items for one user");
    c_rank->add_option("--run", rk.run_dir, "directory holding code files")->required();
    c_rank->add_option("--user", rk.user)->required();
    c_rank->add_option("--k", rk.k);

    CLI::App* c_bd = app.add_subcommand("bench-distance", "distance-kernel throughput");
    c_bd->add_option("--n", bd.n, "number of codes");
    c_bd->add_option("--bits", bd.bits);
    c_bd->add_option("--reps", bd.reps);
    c_bd->add_option("--seed", bd.seed);
    c_bd->add_option("--out", out_dir, "output directory");

    CLI::App* c_bc = app.add_subcommand("bench-convergence", "phd vs hamming training curves");
    c_bc->add_option("--data", bc.data_dir, "prepared dataset directory")->required();
    c_bc->add_option("--bits", bc.bits);
    c_bc->add_option("--epochs", bc.epochs);
    c_bc->add_option("--seeds", bc.seeds)->delimiter(',');
    c_bc->add_option("--lr", bc.learning_rate);
    c_bc->add_option("--batch", bc.batch_size);
    c_bc->add_option("--out", out_dir, "output directory");

    CLI::App* c_rep = app.add_subcommand("report", "join eval reports into one CSV table");
    c_rep->add_option("inputs", report_inputs, "report.json files");
    c_rep->add_option("--out", report_out, "output CSV (default: stdout)");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        const json file_cfg = load_config_file(config_path);

        // Config-file values apply where the flag was not given.
        auto absent = [&](CLI::App* sub, const std::string& name) {
            return sub->count(name) == 0;
        };
        json effective = file_cfg;

        if (c_prep->parsed()) {
            if (absent(c_prep, "--dataset")) from_config(file_cfg, "dataset", "path", prep.dataset_path);
            if (absent(c_prep, "--format")) from_config(file_cfg, "dataset", "format", prep.format);
            if (absent(c_prep, "--bounds")) from_config(file_cfg, "dataset", "bounds", prep.bounds);
            if (absent(c_prep, "--seed")) from_config(file_cfg, "prepare", "seed", prep.seed);
            if (absent(c_prep, "--proportions"))
                from_config(file_cfg, "prepare", "proportions", prep.proportions);
            if (absent(c_prep, "--min-ratings"))
                from_config(file_cfg, "prepare", "min_ratings", prep.min_ratings);
            if (absent(c_prep, "--split-order"))
                from_config(file_cfg, "prepare", "split_order", prep.split_order);
            if (prep.proportions.size() != 3) throw ConfigError("need 3 proportions");
            if (prep.bounds.size() != 2) throw ConfigError("need 2 rating bounds");
            if (out_dir.empty() && file_cfg.contains("out"))
                out_dir = file_cfg["out"].get<std::string>();
            if (out_dir.empty()) throw ConfigError("prepare needs --out");
            effective["subcommand"] = "prepare";
            effective["out"] = out_dir;
            effective["dataset"] = {{"path", prep.dataset_path},
                                    {"format", prep.format},
                                    {"bounds", prep.bounds}};
            effective["prepare"] = {{"seed", prep.seed},
                                    {"proportions", prep.proportions},
                                    {"min_ratings", prep.min_ratings},
                                    {"split_order", prep.split_order},
                                    {"filter_fixpoint", prep.filter_fixpoint},
                                    {"synthetic", prep.synthetic}};
            if (prep.synthetic)
                effective["synthetic"] = {{"users", prep.synth_users},
                                          {"items", prep.synth_items},
                                          {"bits", prep.synth_bits},
                                          {"noise_sigma", prep.synth_noise},
                                          {"density", prep.synth_density}};
            return cmd_prepare(prep, effective, out);
        }
        if (c_train->parsed()) {
            if (absent(c_train, "--model")) from_config(file_cfg, "train", "model", tr.model);
            if (absent(c_train, "--bits")) from_config(file_cfg, "train", "bits", tr.bits);
            if (absent(c_train, "--seed")) from_config(file_cfg, "train", "seed", tr.seed);
            if (absent(c_train, "--lr")) from_config(file_cfg, "train", "learning_rate", tr.learning_rate);
            if (absent(c_train, "--batch")) from_config(file_cfg, "train", "batch_size", tr.batch_size);
            if (absent(c_train, "--epochs")) from_config(file_cfg, "train", "epochs", tr.epochs);
            if (absent(c_train, "--kl-weight")) from_config(file_cfg, "train", "kl_weight", tr.kl_weight);
            if (absent(c_train, "--kl-warmup"))
                from_config(file_cfg, "train", "kl_warmup_frac", tr.kl_warmup_frac);
            if (absent(c_train, "--noise-init"))
                from_config(file_cfg, "train", "noise_initial_variance", tr.noise_initial_variance);
            if (absent(c_train, "--noise-decay"))
                from_config(file_cfg, "train", "noise_decay", tr.noise_decay);
            if (absent(c_train, "--sampling-train"))
                from_config(file_cfg, "train", "sampling_train", tr.sampling_train);
            if (absent(c_train, "--sampling-eval"))
                from_config(file_cfg, "train", "sampling_eval", tr.sampling_eval);
            if (absent(c_train, "--patience")) from_config(file_cfg, "train", "patience", tr.patience);
            if (absent(c_train, "--init-scale"))
                from_config(file_cfg, "train", "init_scale", tr.init_scale);
            if (absent(c_train, "--mf-lambda"))
                from_config(file_cfg, "train", "mf_l2_weight", tr.mf_l2_weight);
            if (out_dir.empty() && file_cfg.contains("out"))
                out_dir = file_cfg["out"].get<std::string>();
            if (out_dir.empty()) throw ConfigError("train needs --out");
            effective["subcommand"] = "train";
            effective["out"] = out_dir;
            effective["train"] = {{"model", tr.model},
                                  {"bits", tr.bits},
                                  {"seed", tr.seed},
                                  {"learning_rate", tr.learning_rate},
                                  {"batch_size", tr.batch_size},
                                  {"epochs", tr.epochs},
                                  {"kl_weight", tr.kl_weight},
                                  {"kl_warmup_frac", tr.kl_warmup_frac},
                                  {"noise_initial_variance", tr.noise_initial_variance},
                                  {"noise_decay", tr.noise_decay},
                                  {"sampling_train", tr.sampling_train},
                                  {"sampling_eval", tr.sampling_eval},
                                  {"patience", tr.patience},
                                  {"init_scale", tr.init_scale},
                                  {"mf_l2_weight", tr.mf_l2_weight}};
            return cmd_train(tr, effective, out);
        }
        if (c_eval->parsed()) {
            effective["subcommand"] = "eval";
            effective["eval"] = {{"run", ev.run_dir},
                                 {"ks", ev.ks},
                                 {"sampling", ev.sampling},
                                 {"full_catalog", ev.full_catalog},
                                 {"window", ev.window},
                                 {"seed", ev.seed}};
            return cmd_eval(ev, effective, out);
        }
        if (c_rank->parsed()) return cmd_rank(rk, out);
        if (c_bd->parsed()) {
            if (out_dir.empty() && file_cfg.contains("out"))
                out_dir = file_cfg["out"].get<std::string>();
            if (out_dir.empty()) throw ConfigError("bench-distance needs --out");
            effective["subcommand"] = "bench-distance";
            effective["out"] = out_dir;
            effective["bench"] = {{"n", bd.n}, {"bits", bd.bits}, {"reps", bd.reps}, {"seed", bd.seed}};
            return cmd_bench_distance(bd, effective, out);
        }
        if (c_bc->parsed()) {
            if (out_dir.empty() && file_cfg.contains("out"))
                out_dir = file_cfg["out"].get<std::string>();
            if (out_dir.empty()) throw ConfigError("bench-convergence needs --out");
            effective["subcommand"] = "bench-convergence";
            effective["out"] = out_dir;
            effective["bench_convergence"] = {{"bits", bc.bits},
                                              {"epochs", bc.epochs},
                                              {"seeds", bc.seeds},
                                              {"learning_rate", bc.learning_rate},
                                              {"batch_size", bc.batch_size}};
            return cmd_bench_convergence(bc, effective, out);
        }
        if (c_rep->parsed()) return cmd_report(report_inputs, report_out, out);

        err << "usage error: no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace bitrec::cli
