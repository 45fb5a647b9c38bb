#pragma once

// Sample-selection strategies: random, entropy, core-set (k-center greedy
// on bottleneck features), dropout-ensemble JSD, and test-time-augmentation
// JSD over the eight flip/rotation combinations.
//
// Scoring works against any model exposing predict / predict_mc /
// bottleneck_features; scores are computed in double regardless of the
// model scalar. Ties break toward the lowest sample index.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/augment.hpp"
#include "taal/divergence.hpp"
#include "taal/rng.hpp"
#include "taal/tensor.hpp"

namespace taal {

enum class Strategy { Random, Entropy, Coreset, Dropout, Tta };

inline Strategy parse_strategy(const std::string& name) {
    if (name == "random") return Strategy::Random;
    if (name == "entropy") return Strategy::Entropy;
    if (name == "coreset") return Strategy::Coreset;
    if (name == "dropout") return Strategy::Dropout;
    if (name == "tta") return Strategy::Tta;
    throw std::invalid_argument("unknown strategy: " + name);
}

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Random: return "random";
        case Strategy::Entropy: return "entropy";
        case Strategy::Coreset: return "coreset";
        case Strategy::Dropout: return "dropout";
        case Strategy::Tta: return "tta";
    }
    return "?";
}

struct StrategyConfig {
    Strategy strategy = Strategy::Tta;
    int budget = 1;
    int ensemble_size = 8;     // K_s: spatial combos for TTA, passes for dropout
    double alpha = 0.75;       // shared with the consistency loss
    double noise_sigma = 0.1;  // TTA noise, same parameters as training
    Aggregate aggregate = Aggregate::Mean;

    void validate() const {
        if (budget < 1) throw std::invalid_argument("StrategyConfig: budget must be >= 1");
        if (ensemble_size < 2) throw std::invalid_argument("StrategyConfig: ensemble needs K >= 2");
        if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("StrategyConfig: alpha outside [0,1]");
        if (noise_sigma < 0.0) throw std::invalid_argument("StrategyConfig: negative noise_sigma");
    }
};

struct AcquisitionScore {
    int sample_index = -1;
    double score = 0.0;
    ScoreMap<double> map;  // per-pixel score, when the strategy produces one
    bool has_map = false;
    Strategy strategy = Strategy::Tta;
    int cycle = 0;
};

namespace detail {

template <typename S>
PlaneStack<double> to_double_map(const PlaneStack<S>& p) {
    return cast_planes<S, double>(p);
}

inline uint64_t tta_noise_seed(uint64_t cycle, uint64_t sample_index, uint64_t combo) {
    uint64_t s = fnv1a64("tta-noise");
    s = hash_combine(s, cycle);
    s = hash_combine(s, sample_index);
    return hash_combine(s, combo);
}

}  // namespace detail

/// TTA score with an explicit transformation set (noise seeds already
/// attached). The public score_tta builds the eight combinations.
template <typename M>
AcquisitionScore score_tta_with_transforms(M& model, const Image<float>& image,
                                           const std::vector<Transformation>& transforms, double alpha,
                                           int cycle, int sample_index,
                                           Aggregate agg = Aggregate::Mean) {
    std::vector<PlaneStack<double>> preds;
    preds.reserve(transforms.size());
    for (const auto& t : transforms) {
        Image<float> xt = apply(t, image);
        auto p = model.predict(xt);
        preds.push_back(invert_spatial(t, detail::to_double_map(p)));
    }
    AcquisitionScore out;
    out.sample_index = sample_index;
    out.cycle = cycle;
    out.strategy = Strategy::Tta;
    out.map = jsd_weighted(preds, alpha, agg);
    out.score = out.map.aggregate;
    out.has_map = true;
    return out;
}

/// Deterministic ensemble over all 8 flip/rotation combinations, each with
/// a noise realization seeded from (cycle, sample index, combo index).
template <typename M>
AcquisitionScore score_tta(M& model, const Image<float>& image, double alpha, double noise_sigma,
                           int cycle, int sample_index, Aggregate agg = Aggregate::Mean) {
    auto combos = spatial_combinations(noise_sigma);
    std::vector<Transformation> transforms(combos.begin(), combos.end());
    for (size_t i = 0; i < transforms.size(); ++i)
        transforms[i].noise_seed = detail::tta_noise_seed(static_cast<uint64_t>(cycle),
                                                          static_cast<uint64_t>(sample_index), i);
    return score_tta_with_transforms(model, image, transforms, alpha, cycle, sample_index, agg);
}

template <typename M>
AcquisitionScore score_dropout(M& model, const Image<float>& image, double alpha, int passes,
                               uint64_t seed, int cycle, int sample_index,
                               Aggregate agg = Aggregate::Mean) {
    auto mc = model.predict_mc(image, passes, derive_seed(seed, "dropout-score",
                                                          static_cast<uint64_t>(cycle),
                                                          static_cast<uint64_t>(sample_index)));
    std::vector<PlaneStack<double>> preds;
    preds.reserve(mc.size());
    for (const auto& p : mc) preds.push_back(detail::to_double_map(p));
    AcquisitionScore out;
    out.sample_index = sample_index;
    out.cycle = cycle;
    out.strategy = Strategy::Dropout;
    out.map = jsd_weighted(preds, alpha, agg);
    out.score = out.map.aggregate;
    out.has_map = true;
    return out;
}

template <typename M>
AcquisitionScore score_entropy(M& model, const Image<float>& image, int cycle, int sample_index,
                               Aggregate agg = Aggregate::Mean) {
    auto p = model.predict(image);
    AcquisitionScore out;
    out.sample_index = sample_index;
    out.cycle = cycle;
    out.strategy = Strategy::Entropy;
    out.map = pixel_entropy(detail::to_double_map(p), agg);
    out.score = out.map.aggregate;
    out.has_map = true;
    return out;
}

// ---------------------------------------------------------------------------
// core-set (k-center greedy)
// ---------------------------------------------------------------------------

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Greedy k-center: repeatedly pick the candidate maximizing its minimum
/// (squared) distance to labeled + already-selected points. Returns
/// positions into `unlabeled_features`. Ties break toward the lowest
/// position. An empty labeled set makes the first pick position 0.
inline std::vector<int> select_coreset(const std::vector<std::vector<double>>& labeled_features,
                                       const std::vector<std::vector<double>>& unlabeled_features,
                                       int budget,
                                       std::vector<double>* initial_min_dist = nullptr) {
    if (unlabeled_features.empty())
        throw std::invalid_argument("select_coreset: empty unlabeled pool");
    const size_t n = unlabeled_features.size();
    std::vector<double> mind(n, std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < n; ++i)
        for (const auto& f : labeled_features)
            mind[i] = std::min(mind[i], squared_distance(unlabeled_features[i], f));
    if (initial_min_dist) {
        initial_min_dist->assign(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            (*initial_min_dist)[i] = std::isinf(mind[i]) ? 0.0 : std::sqrt(mind[i]);
    }

    std::vector<int> picked;
    std::vector<uint8_t> taken(n, 0);
    const int k = std::min<int>(budget, static_cast<int>(n));
    for (int round = 0; round < k; ++round) {
        int best = -1;
        double best_d = -1.0;
        for (size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best < 0 || mind[i] > best_d) {
                best = static_cast<int>(i);
                best_d = mind[i];
            }
        }
        picked.push_back(best);
        taken[static_cast<size_t>(best)] = 1;
        for (size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            mind[i] = std::min(mind[i],
                               squared_distance(unlabeled_features[i], unlabeled_features[static_cast<size_t>(best)]));
        }
    }
    return picked;
}

// ---------------------------------------------------------------------------
// selection over a pool
// ---------------------------------------------------------------------------

struct Selection {
    std::vector<int> indices;              // acquired sample indices
    std::vector<AcquisitionScore> scores;  // per-sample scores (maps dropped)
};

/// Rank scored samples: highest score first, lowest index on ties.
inline std::vector<int> top_k_by_score(const std::vector<AcquisitionScore>& scores, int k) {
    std::vector<const AcquisitionScore*> order;
    order.reserve(scores.size());
    for (const auto& s : scores) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const AcquisitionScore* a, const AcquisitionScore* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->sample_index < b->sample_index;
    });
    std::vector<int> out;
    for (int i = 0; i < k && i < static_cast<int>(order.size()); ++i)
        out.push_back(order[static_cast<size_t>(i)]->sample_index);
    return out;
}

/// Run one selection round over the unlabeled pool. `images(idx)` must
/// return the image of global sample `idx`.
template <typename M, typename ImageFn>
Selection select(const StrategyConfig& cfg, M& model, const std::vector<int>& labeled,
                 const std::vector<int>& unlabeled, ImageFn&& images, int cycle, uint64_t seed) {
    cfg.validate();
    Selection sel;
    if (unlabeled.empty()) return sel;
    const int budget = std::min<int>(cfg.budget, static_cast<int>(unlabeled.size()));

    switch (cfg.strategy) {
        case Strategy::Random: {
            Rng rng = stream(seed, "select-random", static_cast<uint64_t>(cycle));
            auto pos = rng.sample_without_replacement(static_cast<int>(unlabeled.size()), budget);
            for (int p : pos) sel.indices.push_back(unlabeled[static_cast<size_t>(p)]);
            break;
        }
        case Strategy::Coreset: {
            std::vector<std::vector<double>> lf, uf;
            lf.reserve(labeled.size());
            uf.reserve(unlabeled.size());
            for (int idx : labeled) {
                auto f = model.bottleneck_features(images(idx));
                lf.emplace_back(f.begin(), f.end());
            }
            for (int idx : unlabeled) {
                auto f = model.bottleneck_features(images(idx));
                uf.emplace_back(f.begin(), f.end());
            }
            std::vector<double> mind;
            auto pos = select_coreset(lf, uf, budget, &mind);
            for (size_t i = 0; i < unlabeled.size(); ++i) {
                AcquisitionScore s;
                s.sample_index = unlabeled[i];
                s.score = mind[i];
                s.strategy = Strategy::Coreset;
                s.cycle = cycle;
                sel.scores.push_back(std::move(s));
            }
            for (int p : pos) sel.indices.push_back(unlabeled[static_cast<size_t>(p)]);
            break;
        }
        default: {
            sel.scores.reserve(unlabeled.size());
            for (int idx : unlabeled) {
                AcquisitionScore s;
                switch (cfg.strategy) {
                    case Strategy::Entropy:
                        s = score_entropy(model, images(idx), cycle, idx, cfg.aggregate);
                        break;
                    case Strategy::Dropout:
                        s = score_dropout(model, images(idx), cfg.alpha, cfg.ensemble_size, seed, cycle,
                                          idx, cfg.aggregate);
                        break;
                    default:
                        s = score_tta(model, images(idx), cfg.alpha, cfg.noise_sigma, cycle, idx,
                                      cfg.aggregate);
                        break;
                }
                s.map = ScoreMap<double>{};  // keep the scalar, drop the map
                s.has_map = false;
                sel.scores.push_back(std::move(s));
            }
            sel.indices = top_k_by_score(sel.scores, budget);
            break;
        }
    }
    return sel;
}

}  // namespace taal
