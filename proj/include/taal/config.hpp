#pragma once

// Experiment configuration: a flat `key = value` text format with `#`
// comments. Parsing applies profile defaults, then explicit keys. The
// effective configuration serializes to a canonical sorted text whose
// FNV-1a hash stamps every output file. A second hash (the cohort hash)
// covers only the keys that must match for runs to be comparable: the
// dataset, model, schedule lengths, pool protocol and seed list - not the
// method under test (strategy, semi flag, alpha).

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/acquisition.hpp"
#include "taal/data.hpp"
#include "taal/net.hpp"
#include "taal/rng.hpp"
#include "taal/training.hpp"

namespace taal {

struct DatasetSpec {
    std::string kind = "synthetic";  // "synthetic" | "disk"
    uint64_t seed = 1;
    SyntheticConfig synth;
    std::string path;      // disk datasets
    int target_size = 128;  // disk preprocessing output size
    int val_images = 25;
    double test_subject_fraction = 0.2;

    int sample_size() const { return kind == "synthetic" ? synth.size : target_size; }
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::string model_profile = "desk";
    ModelConfig model;
    TrainConfig train;
    Strategy strategy = Strategy::Tta;
    int budget = 1;
    int ensemble_size = 8;
    int initial_labeled = 10;
    int cycles = 10;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string run_name = "run";
    std::string out_dir = "runs";

    StrategyConfig strategy_config() const {
        StrategyConfig s;
        s.strategy = strategy;
        s.budget = budget;
        s.ensemble_size = ensemble_size;
        s.alpha = train.alpha;          // one global alpha
        s.noise_sigma = train.noise_sigma;  // same noise parameters as training
        return s;
    }

    void validate() const {
        if (dataset.kind != "synthetic" && dataset.kind != "disk")
            throw std::invalid_argument("config: dataset.kind must be synthetic or disk");
        if (dataset.kind == "disk" && dataset.path.empty())
            throw std::invalid_argument("config: dataset.path required for disk datasets");
        model.validate();
        train.validate();
        strategy_config().validate();
        if (initial_labeled < 1) throw std::invalid_argument("config: al.initial_labeled must be >= 1");
        if (cycles < 0) throw std::invalid_argument("config: al.cycles must be >= 0");
        if (seeds.empty()) throw std::invalid_argument("config: al.seeds must not be empty");
        if (model.input_h != dataset.sample_size() || model.input_w != dataset.sample_size())
            throw std::invalid_argument("config: model input size must match the dataset sample size");
        if (model.classes != dataset.synth.classes && dataset.kind == "synthetic")
            throw std::invalid_argument("config: model.classes must match dataset classes");
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

}  // namespace detail

inline void apply_model_profile(ExperimentConfig& cfg, const std::string& profile) {
    cfg.model_profile = profile;
    if (profile == "paper") {
        cfg.model.depth = 4;
        cfg.model.base_channels = 64;
        cfg.model.input_h = cfg.model.input_w = 128;
    } else if (profile == "desk") {
        cfg.model.depth = 4;
        cfg.model.base_channels = 8;
        cfg.model.input_h = cfg.model.input_w = 64;
    } else if (profile == "tiny") {
        cfg.model.depth = 3;
        cfg.model.base_channels = 4;
        cfg.model.input_h = cfg.model.input_w = 64;
    } else if (profile != "custom") {
        throw std::invalid_argument("config: unknown model.profile " + profile);
    }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::vector<std::string> order;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = val;
        order.push_back(key);
    }

    ExperimentConfig cfg;
    // profile first so explicit keys can override it
    if (auto it = kv.find("model.profile"); it != kv.end()) apply_model_profile(cfg, it->second);
    else apply_model_profile(cfg, cfg.model_profile);

    auto geti = [&](const std::string& k, int& dst) { dst = std::stoi(kv.at(k)); };
    auto getd = [&](const std::string& k, double& dst) { dst = std::stod(kv.at(k)); };

    for (const auto& [key, val] : kv) {
        if (key == "model.profile") continue;
        else if (key == "dataset.kind") cfg.dataset.kind = val;
        else if (key == "dataset.seed") cfg.dataset.seed = std::stoull(val);
        else if (key == "dataset.size") { geti(key, cfg.dataset.synth.size); }
        else if (key == "dataset.classes") { geti(key, cfg.dataset.synth.classes); cfg.model.classes = cfg.dataset.synth.classes; }
        else if (key == "dataset.subjects") geti(key, cfg.dataset.synth.subjects);
        else if (key == "dataset.slices_per_subject") geti(key, cfg.dataset.synth.slices_per_subject);
        else if (key == "dataset.noise") getd(key, cfg.dataset.synth.noise);
        else if (key == "dataset.small_structure_prob") getd(key, cfg.dataset.synth.small_structure_prob);
        else if (key == "dataset.path") cfg.dataset.path = val;
        else if (key == "dataset.target_size") geti(key, cfg.dataset.target_size);
        else if (key == "dataset.val_images") geti(key, cfg.dataset.val_images);
        else if (key == "dataset.test_subject_fraction") getd(key, cfg.dataset.test_subject_fraction);
        else if (key == "model.depth") geti(key, cfg.model.depth);
        else if (key == "model.base_channels") geti(key, cfg.model.base_channels);
        else if (key == "model.classes") geti(key, cfg.model.classes);
        else if (key == "model.dropout") getd(key, cfg.model.dropout_p);
        else if (key == "model.input_size") { geti(key, cfg.model.input_h); cfg.model.input_w = cfg.model.input_h; }
        else if (key == "model.leaky_slope") getd(key, cfg.model.leaky_slope);
        else if (key == "train.epochs") geti(key, cfg.train.epochs);
        else if (key == "train.batches_per_epoch") geti(key, cfg.train.batches_per_epoch);
        else if (key == "train.batch_size") geti(key, cfg.train.batch_size);
        else if (key == "train.base_lr") getd(key, cfg.train.base_lr);
        else if (key == "train.weight_decay") getd(key, cfg.train.weight_decay);
        else if (key == "train.warmup_epochs") geti(key, cfg.train.warmup_epochs);
        else if (key == "train.warmup_factor") getd(key, cfg.train.warmup_factor);
        else if (key == "train.ramp_length") geti(key, cfg.train.ramp_length);
        else if (key == "train.consistency_k") geti(key, cfg.train.consistency_k);
        else if (key == "train.alpha") getd(key, cfg.train.alpha);
        else if (key == "train.semi") cfg.train.semi_supervised = detail::parse_bool(val, key);
        else if (key == "train.flip_prob") getd(key, cfg.train.flip_prob);
        else if (key == "train.noise_sigma") getd(key, cfg.train.noise_sigma);
        else if (key == "train.model_selection") {
            if (val == "best_val") cfg.train.model_selection = ModelSelection::BestValDice;
            else if (val == "last") cfg.train.model_selection = ModelSelection::LastEpoch;
            else throw std::invalid_argument("config: train.model_selection must be best_val or last");
        }
        else if (key == "strategy.name") cfg.strategy = parse_strategy(val);
        else if (key == "strategy.budget") geti(key, cfg.budget);
        else if (key == "strategy.ensemble_size") geti(key, cfg.ensemble_size);
        else if (key == "al.initial_labeled") geti(key, cfg.initial_labeled);
        else if (key == "al.cycles") geti(key, cfg.cycles);
        else if (key == "al.seeds") {
            cfg.seeds.clear();
            std::istringstream ss(val);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                tok = detail::trim(tok);
                if (!tok.empty()) cfg.seeds.push_back(std::stoull(tok));
            }
        }
        else if (key == "run.name") cfg.run_name = val;
        else if (key == "run.out") cfg.out_dir = val;
        else throw std::invalid_argument("config: unknown key " + key);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

/// Every effective key, sorted, normalized formatting. The hash of this
/// text stamps all outputs.
inline std::map<std::string, std::string> effective_keys(const ExperimentConfig& cfg) {
    using detail::fmt_double;
    std::map<std::string, std::string> kv;
    kv["dataset.kind"] = cfg.dataset.kind;
    kv["dataset.seed"] = std::to_string(cfg.dataset.seed);
    kv["dataset.size"] = std::to_string(cfg.dataset.synth.size);
    kv["dataset.classes"] = std::to_string(cfg.dataset.synth.classes);
    kv["dataset.subjects"] = std::to_string(cfg.dataset.synth.subjects);
    kv["dataset.slices_per_subject"] = std::to_string(cfg.dataset.synth.slices_per_subject);
    kv["dataset.noise"] = fmt_double(cfg.dataset.synth.noise);
    kv["dataset.small_structure_prob"] = fmt_double(cfg.dataset.synth.small_structure_prob);
    kv["dataset.path"] = cfg.dataset.path;
    kv["dataset.target_size"] = std::to_string(cfg.dataset.target_size);
    kv["dataset.val_images"] = std::to_string(cfg.dataset.val_images);
    kv["dataset.test_subject_fraction"] = fmt_double(cfg.dataset.test_subject_fraction);
    kv["model.profile"] = cfg.model_profile;
    kv["model.depth"] = std::to_string(cfg.model.depth);
    kv["model.base_channels"] = std::to_string(cfg.model.base_channels);
    kv["model.classes"] = std::to_string(cfg.model.classes);
    kv["model.dropout"] = fmt_double(cfg.model.dropout_p);
    kv["model.input_size"] = std::to_string(cfg.model.input_h);
    kv["model.leaky_slope"] = fmt_double(cfg.model.leaky_slope);
    kv["train.epochs"] = std::to_string(cfg.train.epochs);
    kv["train.batches_per_epoch"] = std::to_string(cfg.train.batches_per_epoch);
    kv["train.batch_size"] = std::to_string(cfg.train.batch_size);
    kv["train.base_lr"] = fmt_double(cfg.train.base_lr);
    kv["train.weight_decay"] = fmt_double(cfg.train.weight_decay);
    kv["train.warmup_epochs"] = std::to_string(cfg.train.warmup_epochs);
    kv["train.warmup_factor"] = fmt_double(cfg.train.warmup_factor);
    kv["train.ramp_length"] = std::to_string(cfg.train.ramp_length);
    kv["train.consistency_k"] = std::to_string(cfg.train.consistency_k);
    kv["train.alpha"] = fmt_double(cfg.train.alpha);
    kv["train.semi"] = cfg.train.semi_supervised ? "true" : "false";
    kv["train.flip_prob"] = fmt_double(cfg.train.flip_prob);
    kv["train.noise_sigma"] = fmt_double(cfg.train.noise_sigma);
    kv["train.model_selection"] =
        cfg.train.model_selection == ModelSelection::BestValDice ? "best_val" : "last";
    kv["strategy.name"] = strategy_name(cfg.strategy);
    kv["strategy.budget"] = std::to_string(cfg.budget);
    kv["strategy.ensemble_size"] = std::to_string(cfg.ensemble_size);
    kv["al.initial_labeled"] = std::to_string(cfg.initial_labeled);
    kv["al.cycles"] = std::to_string(cfg.cycles);
    std::string seeds;
    for (size_t i = 0; i < cfg.seeds.size(); ++i)
        seeds += (i ? "," : "") + std::to_string(cfg.seeds[i]);
    kv["al.seeds"] = seeds;
    return kv;
}

inline std::string canonical_config_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : effective_keys(cfg)) out += k + "=" + v + "\n";
    return out;
}

inline uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(canonical_config_text(cfg)); }

/// Keys that must agree for runs to be compared or aggregated together.
/// Excludes the method under test: strategy name/ensemble, train.semi,
/// train.alpha (and run identity).
inline uint64_t cohort_hash(const ExperimentConfig& cfg) {
    auto kv = effective_keys(cfg);
    kv.erase("strategy.name");
    kv.erase("strategy.ensemble_size");
    kv.erase("train.semi");
    kv.erase("train.alpha");
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return fnv1a64(out);
}

inline std::string hash_hex(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace taal
