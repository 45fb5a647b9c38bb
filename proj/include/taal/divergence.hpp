#pragma once

// Entropy and Jensen-Shannon divergence over aligned probability maps.
//
// The weighted variant trades the entropy of the mean prediction (weight
// alpha) against the mean of individual prediction entropies (weight
// 1 - alpha); alpha = 0.5 gives exactly half of the standard JSD at every
// pixel. All logs are natural. Probabilities are clamped to [1e-12, 1]
// before the log, which keeps one-hot entropies below 1e-10 while avoiding
// -inf. Reductions are left folds in the given order.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/tensor.hpp"

namespace taal {

enum class Aggregate {
    Mean,                    // arithmetic mean over all pixels (default)
    Sum,                     // sum over all pixels
    MeanForegroundArgmax,    // mean over pixels whose (mean-)prediction argmax is non-background
};

template <typename T>
struct ScoreMap {
    Image<T> values;  // per-pixel score
    T aggregate = T(0);
};

namespace detail {

template <typename T>
inline T clamp_prob(T p) {
    if (p < T(1e-12)) return T(1e-12);
    if (p > T(1)) return T(1);
    return p;
}

template <typename T>
inline T entropy_term(T p) {
    T q = clamp_prob(p);
    return -q * std::log(q);
}

template <typename T>
void check_probability_map(const PlaneStack<T>& p, T tol = T(1e-6)) {
    if (p.c < 2) throw std::invalid_argument("ProbabilityMap: needs at least 2 classes");
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            T s = T(0);
            for (int j = 0; j < p.c; ++j) {
                T v = p.at(j, y, x);
                if (v < T(0) - tol || v > T(1) + tol)
                    throw std::invalid_argument("ProbabilityMap: value outside [0,1]");
                s += v;
            }
            if (std::abs(s - T(1)) > tol)
                throw std::invalid_argument("ProbabilityMap: channel sum departs from 1");
        }
}

template <typename T>
T reduce(const Image<T>& values, Aggregate agg, const std::vector<uint8_t>* foreground) {
    if (agg == Aggregate::Sum) {
        T s = T(0);
        for (T v : values.v) s += v;
        return s;
    }
    if (agg == Aggregate::MeanForegroundArgmax) {
        T s = T(0);
        size_t n = 0;
        for (size_t i = 0; i < values.v.size(); ++i)
            if (foreground && (*foreground)[i]) {
                s += values.v[i];
                ++n;
            }
        return n ? s / static_cast<T>(n) : T(0);
    }
    T s = T(0);
    for (T v : values.v) s += v;
    return values.v.empty() ? T(0) : s / static_cast<T>(values.v.size());
}

}  // namespace detail

template <typename T>
bool is_probability_map(const PlaneStack<T>& p, T tol = T(1e-6)) {
    try {
        detail::check_probability_map(p, tol);
    } catch (const std::invalid_argument&) {
        return false;
    }
    return true;
}

/// Per-pixel Shannon entropy H = -sum_c p_c ln p_c, with 0 ln 0 := 0.
template <typename T>
ScoreMap<T> pixel_entropy(const PlaneStack<T>& p, Aggregate agg = Aggregate::Mean) {
    ScoreMap<T> out;
    out.values = Image<T>(p.h, p.w);
    std::vector<uint8_t> fg(p.plane(), 0);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            T hsum = T(0);
            int arg = 0;
            T best = p.at(0, y, x);
            for (int j = 0; j < p.c; ++j) {
                T v = p.at(j, y, x);
                hsum += detail::entropy_term(v);
                if (v > best) {
                    best = v;
                    arg = j;
                }
            }
            out.values.at(y, x) = hsum;
            fg[static_cast<size_t>(y) * p.w + x] = arg != 0;
        }
    out.aggregate = detail::reduce(out.values, agg, &fg);
    return out;
}

/// Weighted JSD over K aligned maps:
///   alpha * H(mean_i P_i) - ((1 - alpha) / K) * sum_i H(P_i)   per pixel.
template <typename T>
ScoreMap<T> jsd_weighted(const std::vector<PlaneStack<T>>& preds, T alpha,
                         Aggregate agg = Aggregate::Mean) {
    const size_t k = preds.size();
    if (k < 2) throw std::invalid_argument("jsd_weighted: degenerate ensemble (K < 2)");
    for (size_t i = 1; i < k; ++i)
        if (!preds[i].same_shape(preds[0]))
            throw std::invalid_argument("jsd_weighted: ensemble shape mismatch");

    const int c = preds[0].c, h = preds[0].h, w = preds[0].w;
    ScoreMap<T> out;
    out.values = Image<T>(h, w);
    std::vector<uint8_t> fg(static_cast<size_t>(h) * w, 0);
    const T inv_k = T(1) / static_cast<T>(k);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            T h_mean = T(0);       // H of the mean distribution
            T mean_h = T(0);       // mean of individual entropies
            int arg = 0;
            T best = T(-1);
            for (int j = 0; j < c; ++j) {
                T m = T(0);
                for (size_t i = 0; i < k; ++i) m += preds[i].at(j, y, x);
                m *= inv_k;
                h_mean += detail::entropy_term(m);
                if (m > best) {
                    best = m;
                    arg = j;
                }
            }
            for (size_t i = 0; i < k; ++i) {
                T hi = T(0);
                for (int j = 0; j < c; ++j) hi += detail::entropy_term(preds[i].at(j, y, x));
                mean_h += hi;
            }
            mean_h *= inv_k;
            out.values.at(y, x) = alpha * h_mean - (T(1) - alpha) * mean_h;
            fg[static_cast<size_t>(y) * w + x] = arg != 0;
        }
    out.aggregate = detail::reduce(out.values, agg, &fg);
    return out;
}

/// Standard JSD: H(mean_i P_i) - (1/K) sum_i H(P_i).
template <typename T>
ScoreMap<T> jsd_standard(const std::vector<PlaneStack<T>>& preds, Aggregate agg = Aggregate::Mean) {
    const size_t k = preds.size();
    if (k < 2) throw std::invalid_argument("jsd_standard: degenerate ensemble (K < 2)");
    for (size_t i = 1; i < k; ++i)
        if (!preds[i].same_shape(preds[0]))
            throw std::invalid_argument("jsd_standard: ensemble shape mismatch");

    const int c = preds[0].c, h = preds[0].h, w = preds[0].w;
    ScoreMap<T> out;
    out.values = Image<T>(h, w);
    std::vector<uint8_t> fg(static_cast<size_t>(h) * w, 0);
    const T inv_k = T(1) / static_cast<T>(k);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            T h_mean = T(0), mean_h = T(0);
            int arg = 0;
            T best = T(-1);
            for (int j = 0; j < c; ++j) {
                T m = T(0);
                for (size_t i = 0; i < k; ++i) m += preds[i].at(j, y, x);
                m *= inv_k;
                h_mean += detail::entropy_term(m);
                if (m > best) {
                    best = m;
                    arg = j;
                }
            }
            for (size_t i = 0; i < k; ++i) {
                T hi = T(0);
                for (int j = 0; j < c; ++j) hi += detail::entropy_term(preds[i].at(j, y, x));
                mean_h += hi;
            }
            mean_h *= inv_k;
            out.values.at(y, x) = h_mean - mean_h;
            fg[static_cast<size_t>(y) * w + x] = arg != 0;
        }
    out.aggregate = detail::reduce(out.values, agg, &fg);
    return out;
}

/// Gradient of the Mean- or Sum-aggregated weighted JSD with respect to each
/// input probability. dH/dp = -(ln p + 1) evaluated at the clamped value.
template <typename T>
std::vector<PlaneStack<T>> jsd_weighted_grad(const std::vector<PlaneStack<T>>& preds, T alpha,
                                             Aggregate agg = Aggregate::Mean) {
    const size_t k = preds.size();
    if (k < 2) throw std::invalid_argument("jsd_weighted_grad: degenerate ensemble (K < 2)");
    if (agg == Aggregate::MeanForegroundArgmax)
        throw std::invalid_argument("jsd_weighted_grad: foreground aggregate is not differentiable here");

    const int c = preds[0].c, h = preds[0].h, w = preds[0].w;
    const T inv_k = T(1) / static_cast<T>(k);
    const T scale = (agg == Aggregate::Mean) ? T(1) / static_cast<T>(static_cast<size_t>(h) * w) : T(1);

    std::vector<PlaneStack<T>> grads(k, PlaneStack<T>(c, h, w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int j = 0; j < c; ++j) {
                T m = T(0);
                for (size_t i = 0; i < k; ++i) m += preds[i].at(j, y, x);
                m *= inv_k;
                const T d_hmean = -(std::log(detail::clamp_prob(m)) + T(1));
                for (size_t i = 0; i < k; ++i) {
                    const T pij = detail::clamp_prob(preds[i].at(j, y, x));
                    const T d_hi = -(std::log(pij) + T(1));
                    grads[i].at(j, y, x) =
                        scale * (alpha * d_hmean * inv_k - (T(1) - alpha) * inv_k * d_hi);
                }
            }
    return grads;
}

}  // namespace taal
