#pragma once

// Dice evaluation over hard label masks: per-image 2D Dice and per-subject
// 3D Dice on reassembled volumes, averaged over non-background classes.
// Empty-empty convention: a class absent from both prediction and target
// scores 1.0; absent from exactly one scores 0.0.

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/tensor.hpp"

namespace taal {

struct DiceResult {
    std::map<int, double> per_class;  // classes 1..C-1
    double mean = 0.0;                // arithmetic mean of per_class
    std::string granularity;          // "2D" or "3D"
};

template <typename T>
Mask argmax_mask(const PlaneStack<T>& p) {
    Mask m(p.h, p.w);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            int arg = 0;
            T best = p.at(0, y, x);
            for (int c = 1; c < p.c; ++c)
                if (p.at(c, y, x) > best) {
                    best = p.at(c, y, x);
                    arg = c;
                }
            m.at(y, x) = static_cast<uint8_t>(arg);
        }
    return m;
}

namespace detail {

inline double dice_from_counts(long long inter, long long pred, long long target) {
    if (pred == 0 && target == 0) return 1.0;
    if (pred == 0 || target == 0) return 0.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(pred + target);
}

}  // namespace detail

inline DiceResult dice_2d(const Mask& pred, const Mask& target, int classes) {
    if (pred.h != target.h || pred.w != target.w)
        throw std::invalid_argument("dice_2d: shape mismatch");
    DiceResult r;
    r.granularity = "2D";
    double sum = 0.0;
    for (int c = 1; c < classes; ++c) {
        long long inter = 0, np = 0, nt = 0;
        for (size_t i = 0; i < pred.v.size(); ++i) {
            const bool a = pred.v[i] == c, b = target.v[i] == c;
            inter += a && b;
            np += a;
            nt += b;
        }
        const double d = detail::dice_from_counts(inter, np, nt);
        r.per_class[c] = d;
        sum += d;
    }
    r.mean = classes > 1 ? sum / (classes - 1) : 0.0;
    return r;
}

struct SlicePrediction {
    std::string subject_id;
    int slice_index = 0;
    Mask pred;
    Mask target;
};

/// Stack slices per subject in slice_index order and compute volumetric Dice.
/// Reported per-class values are means over subjects; `mean` averages those
/// class means (subjects first, then classes).
inline DiceResult dice_3d(const std::vector<SlicePrediction>& slices, int classes) {
    std::map<std::string, std::vector<const SlicePrediction*>> by_subject;
    for (const auto& s : slices) by_subject[s.subject_id].push_back(&s);

    DiceResult r;
    r.granularity = "3D";
    std::map<int, double> class_sum;
    for (int c = 1; c < classes; ++c) class_sum[c] = 0.0;
    for (auto& [sid, group] : by_subject) {
        std::sort(group.begin(), group.end(), [](const SlicePrediction* a, const SlicePrediction* b) {
            return a->slice_index < b->slice_index;
        });
        for (size_t i = 0; i < group.size(); ++i)
            if (group[i]->slice_index != static_cast<int>(i))
                throw std::runtime_error("dice_3d: subject " + sid + " is missing slice " + std::to_string(i));
        for (int c = 1; c < classes; ++c) {
            long long inter = 0, np = 0, nt = 0;
            for (const auto* s : group)
                for (size_t i = 0; i < s->pred.v.size(); ++i) {
                    const bool a = s->pred.v[i] == c, b = s->target.v[i] == c;
                    inter += a && b;
                    np += a;
                    nt += b;
                }
            class_sum[c] += detail::dice_from_counts(inter, np, nt);
        }
    }
    const double n_subjects = static_cast<double>(by_subject.size());
    double sum = 0.0;
    for (int c = 1; c < classes; ++c) {
        r.per_class[c] = n_subjects > 0 ? class_sum[c] / n_subjects : 0.0;
        sum += r.per_class[c];
    }
    r.mean = classes > 1 ? sum / (classes - 1) : 0.0;
    return r;
}

/// Pool per-image results: mean per class across images, then across classes.
inline DiceResult mean_dice_over_images(const std::vector<DiceResult>& results) {
    DiceResult r;
    r.granularity = "2D";
    if (results.empty()) return r;
    for (const auto& [c, v] : results[0].per_class) r.per_class[c] = 0.0;
    for (const auto& one : results)
        for (const auto& [c, v] : one.per_class) r.per_class[c] += v;
    double sum = 0.0;
    for (auto& [c, v] : r.per_class) {
        v /= static_cast<double>(results.size());
        sum += v;
    }
    r.mean = r.per_class.empty() ? 0.0 : sum / static_cast<double>(r.per_class.size());
    return r;
}

/// Mean over images of each image's class-mean Dice.
inline double mean_of_image_means(const std::vector<DiceResult>& results) {
    if (results.empty()) return 0.0;
    double s = 0.0;
    for (const auto& one : results) s += one.mean;
    return s / static_cast<double>(results.size());
}

}  // namespace taal
