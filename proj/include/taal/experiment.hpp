#pragma once

// Active-learning experiment driver: multi-seed runs of train -> evaluate
// -> score -> acquire with retrain-from-scratch cycles, line-delimited JSON
// persistence (one file per strategy and seed, appended after every cycle,
// resumable from the last complete record), per-cycle score CSV export,
// checkpoints, and cross-strategy aggregation.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "taal/acquisition.hpp"
#include "taal/config.hpp"
#include "taal/data.hpp"
#include "taal/metrics.hpp"
#include "taal/net.hpp"
#include "taal/training.hpp"

namespace taal {

/// Table-style label of a (training mode, strategy) method combination.
inline std::string method_label(bool semi_supervised, double alpha, Strategy s) {
    if (!semi_supervised) {
        switch (s) {
            case Strategy::Random: return "RS";
            case Strategy::Coreset: return "Coreset";
            case Strategy::Entropy: return "Entropy";
            case Strategy::Dropout: return "Dropout";
            case Strategy::Tta: return "TTA";
        }
    }
    switch (s) {
        case Strategy::Random: return "Semi+RS";
        case Strategy::Tta: return alpha == 0.5 ? "unweighted TAAL" : "TAAL";
        case Strategy::Coreset: return "Semi+Coreset";
        case Strategy::Entropy: return "Semi+Entropy";
        case Strategy::Dropout: return "Semi+Dropout";
    }
    return "?";
}

struct CycleRecord {
    int cycle = 0;
    uint64_t seed = 0;
    std::string strategy;
    std::string label;
    int labeled_size = 0;
    std::vector<int> selected;                     // empty on the final cycle
    std::vector<std::pair<int, double>> scores;    // (sample index, score)
    double dice2d_mean = 0.0;                      // mean over images of per-image class means
    double dice2d_pooled_mean = 0.0;               // per-class pooled over images, then class mean
    std::map<int, double> dice2d_per_class;
    double dice3d_mean = 0.0;
    std::map<int, double> dice3d_per_class;
    std::vector<double> curve_supervised, curve_consistency, curve_total;
    std::vector<double> curve_lambda, curve_lr, curve_val_dice, curve_train_dice;
    int best_epoch = 0;
    double wall_seconds = 0.0;
    std::string config_hash;
    std::string cohort_hash;
};

inline nlohmann::json to_json(const CycleRecord& r) {
    nlohmann::json j;
    j["cycle"] = r.cycle;
    j["seed"] = r.seed;
    j["strategy"] = r.strategy;
    j["label"] = r.label;
    j["labeled_size"] = r.labeled_size;
    j["selected"] = r.selected;
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [idx, sc] : r.scores) scores.push_back({idx, sc});
    j["scores"] = scores;
    auto classmap = [](const std::map<int, double>& m) {
        nlohmann::json o = nlohmann::json::object();
        for (const auto& [c, v] : m) o[std::to_string(c)] = v;
        return o;
    };
    j["dice2d"] = {{"mean", r.dice2d_mean},
                   {"pooled_mean", r.dice2d_pooled_mean},
                   {"per_class", classmap(r.dice2d_per_class)}};
    j["dice3d"] = {{"mean", r.dice3d_mean}, {"per_class", classmap(r.dice3d_per_class)}};
    j["curves"] = {{"supervised", r.curve_supervised}, {"consistency", r.curve_consistency},
                   {"total", r.curve_total},           {"lambda", r.curve_lambda},
                   {"lr", r.curve_lr},                 {"val_dice", r.curve_val_dice},
                   {"train_dice", r.curve_train_dice}};
    j["best_epoch"] = r.best_epoch;
    j["wall_seconds"] = r.wall_seconds;
    j["config_hash"] = r.config_hash;
    j["cohort_hash"] = r.cohort_hash;
    return j;
}

inline CycleRecord record_from_json(const nlohmann::json& j) {
    CycleRecord r;
    r.cycle = j.at("cycle").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.strategy = j.at("strategy").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.labeled_size = j.at("labeled_size").get<int>();
    r.selected = j.at("selected").get<std::vector<int>>();
    for (const auto& e : j.at("scores")) r.scores.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
    auto classmap = [](const nlohmann::json& o) {
        std::map<int, double> m;
        for (auto it = o.begin(); it != o.end(); ++it) m[std::stoi(it.key())] = it.value().get<double>();
        return m;
    };
    r.dice2d_mean = j.at("dice2d").at("mean").get<double>();
    r.dice2d_pooled_mean = j.at("dice2d").at("pooled_mean").get<double>();
    r.dice2d_per_class = classmap(j.at("dice2d").at("per_class"));
    r.dice3d_mean = j.at("dice3d").at("mean").get<double>();
    r.dice3d_per_class = classmap(j.at("dice3d").at("per_class"));
    const auto& c = j.at("curves");
    r.curve_supervised = c.at("supervised").get<std::vector<double>>();
    r.curve_consistency = c.at("consistency").get<std::vector<double>>();
    r.curve_total = c.at("total").get<std::vector<double>>();
    r.curve_lambda = c.at("lambda").get<std::vector<double>>();
    r.curve_lr = c.at("lr").get<std::vector<double>>();
    r.curve_val_dice = c.at("val_dice").get<std::vector<double>>();
    r.curve_train_dice = c.at("train_dice").get<std::vector<double>>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.cohort_hash = j.at("cohort_hash").get<std::string>();
    return r;
}

/// Read a record-per-line file. A truncated trailing line (interrupted
/// writer) is dropped; malformed lines elsewhere are an error.
inline std::vector<CycleRecord> load_records(const std::filesystem::path& path) {
    std::vector<CycleRecord> out;
    std::ifstream is(path);
    if (!is) return out;
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line))
        if (!detail::trim(line).empty()) lines.push_back(line);
    for (size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(record_from_json(nlohmann::json::parse(lines[i])));
        } catch (const nlohmann::json::exception&) {
            if (i + 1 == lines.size()) break;  // partial tail from an interrupted run
            throw std::runtime_error("corrupt record in " + path.string() + " at line " +
                                     std::to_string(i + 1));
        }
    }
    return out;
}

struct RunOptions {
    bool resume = false;
    int stop_after_cycle = -1;  // early stop for testing; -1 runs to completion
    std::ostream* log = nullptr;
};

struct Dataset {
    std::vector<SegSample> samples;
    SplitSpec split;
};

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    Dataset d;
    if (cfg.dataset.kind == "synthetic") {
        d.samples = generate_synthetic(cfg.dataset.synth, cfg.dataset.seed);
    } else {
        PreprocessConfig pre;
        pre.target_size = cfg.dataset.target_size;
        d.samples = load_slices(cfg.dataset.path, pre);
    }
    d.split = make_split(d.samples, cfg.dataset.val_images, cfg.dataset.test_subject_fraction,
                         cfg.dataset.seed);
    return d;
}

namespace detail {

template <typename T>
void evaluate_test(UNet<T>& model, const Dataset& data, int classes, CycleRecord& rec) {
    std::vector<DiceResult> per_image;
    std::vector<SlicePrediction> slices;
    constexpr size_t kChunk = 8;
    const auto& test = data.split.test;
    for (size_t at = 0; at < test.size(); at += kChunk) {
        std::vector<const Image<float>*> chunk;
        for (size_t i = at; i < std::min(test.size(), at + kChunk); ++i)
            chunk.push_back(&data.samples[static_cast<size_t>(test[i])].image);
        auto preds = model.predict_batch(chunk);
        for (size_t i = 0; i < preds.size(); ++i) {
            const auto& sample = data.samples[static_cast<size_t>(test[at + i])];
            Mask hard = argmax_mask(preds[i]);
            per_image.push_back(dice_2d(hard, sample.mask, classes));
            slices.push_back(SlicePrediction{sample.subject_id, sample.slice_index, std::move(hard),
                                             sample.mask});
        }
    }
    rec.dice2d_mean = mean_of_image_means(per_image);
    DiceResult pooled = mean_dice_over_images(per_image);
    rec.dice2d_pooled_mean = pooled.mean;
    rec.dice2d_per_class = pooled.per_class;
    DiceResult d3 = dice_3d(slices, classes);
    rec.dice3d_mean = d3.mean;
    rec.dice3d_per_class = d3.per_class;
}

inline void append_record(const std::filesystem::path& path, const CycleRecord& rec) {
    std::ofstream os(path, std::ios::app);
    os << to_json(rec).dump() << "\n";
    os.flush();
}

inline void append_scores_csv(const std::filesystem::path& path, const CycleRecord& rec) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream os(path, std::ios::app);
    if (fresh) os << "cycle,strategy,sample_index,score\n";
    for (const auto& [idx, sc] : rec.scores)
        os << rec.cycle << "," << rec.strategy << "," << idx << "," << detail::fmt_double(sc) << "\n";
}

}  // namespace detail

inline std::filesystem::path records_path(const ExperimentConfig& cfg, uint64_t seed) {
    return std::filesystem::path(cfg.out_dir) /
           (cfg.run_name + "_seed" + std::to_string(seed) + ".jsonl");
}

inline void write_manifest(const ExperimentConfig& cfg, const Dataset& data) {
    nlohmann::json j;
    j["run_name"] = cfg.run_name;
    j["label"] = method_label(cfg.train.semi_supervised, cfg.train.alpha, cfg.strategy);
    j["config_hash"] = hash_hex(config_hash(cfg));
    j["cohort_hash"] = hash_hex(cohort_hash(cfg));
    j["dataset_hash"] = hash_hex(dataset_content_hash(data.samples));
    j["config"] = canonical_config_text(cfg);
    std::ofstream os(std::filesystem::path(cfg.out_dir) / (cfg.run_name + "_manifest.json"));
    os << j.dump(2) << "\n";
}

/// Run the full experiment (all seeds). Records stream to disk after every
/// cycle; with `resume`, completed cycles are replayed from disk and the
/// run continues at the first missing one.
inline std::vector<CycleRecord> run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    cfg.validate();
    namespace fs = std::filesystem;
    const std::string chash = hash_hex(config_hash(cfg));
    const std::string cohash = hash_hex(cohort_hash(cfg));
    const std::string label = method_label(cfg.train.semi_supervised, cfg.train.alpha, cfg.strategy);

    Dataset data = build_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    write_manifest(cfg, data);

    std::vector<CycleRecord> all;
    for (uint64_t seed : cfg.seeds) {
        const fs::path path = records_path(cfg, seed);
        std::vector<CycleRecord> done;
        if (opt.resume) {
            done = load_records(path);
            for (const auto& r : done)
                if (r.config_hash != chash)
                    throw std::runtime_error(
                        "resume refused: " + path.string() + " was produced with config hash " +
                        r.config_hash + " but the current config hashes to " + chash);
        } else if (fs::exists(path)) {
            fs::remove(path);
        }

        PoolPartition part = PoolPartition::initial(data.split.train, cfg.initial_labeled, seed);
        int start = 0;
        for (const auto& r : done) {
            if (!r.selected.empty()) part = part.acquire(r.selected, r.cycle);
            start = r.cycle + 1;
        }
        for (const auto& r : done) all.push_back(r);

        StrategyConfig strat = cfg.strategy_config();
        for (int cycle = start; cycle <= cfg.cycles; ++cycle) {
            if (opt.stop_after_cycle >= 0 && cycle > opt.stop_after_cycle) break;
            const auto t0 = std::chrono::steady_clock::now();
            if (opt.log)
                (*opt.log) << "[" << cfg.run_name << " seed " << seed << "] cycle " << cycle << "/"
                           << cfg.cycles << " labeled=" << part.labeled.size() << "\n";

            auto result = train_cycle<float>(data.samples, part, data.split.val, cfg.model, cfg.train,
                                             seed, static_cast<uint64_t>(cycle));

            CycleRecord rec;
            rec.cycle = cycle;
            rec.seed = seed;
            rec.strategy = strategy_name(cfg.strategy);
            rec.label = label;
            rec.labeled_size = static_cast<int>(part.labeled.size());
            rec.config_hash = chash;
            rec.cohort_hash = cohash;
            rec.best_epoch = result.curves.best_epoch;
            for (const auto& e : result.curves.epochs) {
                rec.curve_supervised.push_back(e.supervised);
                rec.curve_consistency.push_back(e.consistency);
                rec.curve_total.push_back(e.total);
                rec.curve_lambda.push_back(e.lambda);
                rec.curve_lr.push_back(e.lr);
                rec.curve_val_dice.push_back(e.val_dice);
                rec.curve_train_dice.push_back(e.train_dice);
            }
            detail::evaluate_test(result.model, data, cfg.model.classes, rec);

            if (cycle < cfg.cycles) {
                Selection sel = select(
                    strat, result.model, part.labeled, part.unlabeled,
                    [&](int idx) -> const Image<float>& { return data.samples[static_cast<size_t>(idx)].image; },
                    cycle, seed);
                rec.selected = sel.indices;
                for (const auto& s : sel.scores) rec.scores.emplace_back(s.sample_index, s.score);
                part = part.acquire(sel.indices, cycle);
            }

            result.model.save((fs::path(cfg.out_dir) /
                               (cfg.run_name + "_seed" + std::to_string(seed) + "_cycle" +
                                std::to_string(cycle) + ".ckpt"))
                                  .string(),
                              config_hash(cfg));

            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            detail::append_record(path, rec);
            detail::append_scores_csv(
                fs::path(cfg.out_dir) / (cfg.run_name + "_seed" + std::to_string(seed) + "_scores.csv"),
                rec);
            all.push_back(std::move(rec));
        }
    }
    return all;
}

// ---------------------------------------------------------------------------
// aggregation across strategies
// ---------------------------------------------------------------------------

struct StrategySummary {
    std::string label;
    int n_seeds = 0;
    std::vector<int> labeled_sizes;                      // per cycle
    std::vector<double> mean2d, std2d, mean3d, std3d;    // per cycle, across seeds
};

struct CompareTable {
    std::vector<StrategySummary> rows;
    int cycles = 0;
};

/// Aggregate records by method label. Refuses to mix cohort hashes.
inline CompareTable compare_strategies(const std::vector<CycleRecord>& records) {
    if (records.empty()) throw std::invalid_argument("compare_strategies: no records");
    std::set<std::string> cohorts;
    for (const auto& r : records) cohorts.insert(r.cohort_hash);
    if (cohorts.size() > 1)
        throw std::runtime_error("compare_strategies: refusing to aggregate mixed cohort hashes");

    std::map<std::string, std::map<int, std::vector<const CycleRecord*>>> grouped;
    int max_cycle = 0;
    for (const auto& r : records) {
        grouped[r.label][r.cycle].push_back(&r);
        max_cycle = std::max(max_cycle, r.cycle);
    }

    CompareTable table;
    table.cycles = max_cycle + 1;
    for (auto& [label, by_cycle] : grouped) {
        StrategySummary row;
        row.label = label;
        std::set<uint64_t> seeds;
        for (int c = 0; c <= max_cycle; ++c) {
            auto it = by_cycle.find(c);
            if (it == by_cycle.end()) {
                row.labeled_sizes.push_back(-1);
                row.mean2d.push_back(std::nan(""));
                row.std2d.push_back(std::nan(""));
                row.mean3d.push_back(std::nan(""));
                row.std3d.push_back(std::nan(""));
                continue;
            }
            const auto& recs = it->second;
            for (const auto* r : recs) seeds.insert(r->seed);
            auto stats = [&](auto proj) {
                double m = 0.0;
                for (const auto* r : recs) m += proj(*r);
                m /= static_cast<double>(recs.size());
                double v = 0.0;
                for (const auto* r : recs) {
                    const double d = proj(*r) - m;
                    v += d * d;
                }
                const double sd = recs.size() > 1 ? std::sqrt(v / static_cast<double>(recs.size() - 1)) : 0.0;
                return std::pair<double, double>(m, sd);
            };
            auto [m2, s2] = stats([](const CycleRecord& r) { return r.dice2d_mean; });
            auto [m3, s3] = stats([](const CycleRecord& r) { return r.dice3d_mean; });
            row.labeled_sizes.push_back(recs.front()->labeled_size);
            row.mean2d.push_back(m2);
            row.std2d.push_back(s2);
            row.mean3d.push_back(m3);
            row.std3d.push_back(s3);
        }
        row.n_seeds = static_cast<int>(seeds.size());
        table.rows.push_back(std::move(row));
    }
    return table;
}

/// Per-cycle CSV: one block of columns per strategy.
inline void write_compare_csv(const CompareTable& table, const std::filesystem::path& path) {
    std::ofstream os(path);
    os << "cycle,labeled_size";
    for (const auto& row : table.rows)
        os << ",\"" << row.label << " 2d mean\",\"" << row.label << " 2d std\",\"" << row.label
           << " 3d mean\",\"" << row.label << " 3d std\"";
    os << "\n";
    for (int c = 0; c < table.cycles; ++c) {
        int labeled = -1;
        for (const auto& row : table.rows)
            if (row.labeled_sizes[static_cast<size_t>(c)] >= 0) labeled = row.labeled_sizes[static_cast<size_t>(c)];
        os << c << "," << labeled;
        for (const auto& row : table.rows)
            os << "," << detail::fmt_double(row.mean2d[static_cast<size_t>(c)]) << ","
               << detail::fmt_double(row.std2d[static_cast<size_t>(c)]) << ","
               << detail::fmt_double(row.mean3d[static_cast<size_t>(c)]) << ","
               << detail::fmt_double(row.std3d[static_cast<size_t>(c)]);
        os << "\n";
    }
}

/// Final-cycle summary, strategies as columns in the canonical order.
inline void write_final_table_csv(const CompareTable& table, const std::filesystem::path& path) {
    const std::vector<std::string> canonical = {"RS",      "Coreset", "Entropy",        "Dropout",
                                                "TTA",     "Semi+RS", "unweighted TAAL", "TAAL"};
    std::vector<const StrategySummary*> cols;
    for (const auto& name : canonical)
        for (const auto& row : table.rows)
            if (row.label == name) cols.push_back(&row);
    for (const auto& row : table.rows) {
        bool listed = false;
        for (const auto* c : cols) listed |= (c == &row);
        if (!listed) cols.push_back(&row);
    }
    std::ofstream os(path);
    os << "Metric";
    for (const auto* c : cols) os << ",\"" << c->label << "\"";
    os << "\n";
    const size_t last = static_cast<size_t>(table.cycles - 1);
    os << "2D Dice";
    for (const auto* c : cols) os << "," << detail::fmt_double(c->mean2d[last]);
    os << "\n3D Dice";
    for (const auto* c : cols) os << "," << detail::fmt_double(c->mean3d[last]);
    os << "\n";
}

/// All records from every *.jsonl file directly under `dir`.
inline std::vector<CycleRecord> load_run_dir(const std::filesystem::path& dir) {
    std::vector<CycleRecord> all;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto recs = load_records(f);
        all.insert(all.end(), recs.begin(), recs.end());
    }
    return all;
}

}  // namespace taal
