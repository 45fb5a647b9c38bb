#pragma once

// Stochastic transformation family: horizontal-axis flip, quarter-turn
// rotations, additive Gaussian intensity noise.
//
// Spatial parts are exact pixel permutations (no interpolation), so the
// eight flip/rotation combinations form a closed group and inversion is
// bit-exact. Composition order is fixed: flip, then rotate, then noise.
// Inversion undoes the spatial part only; additive input noise has no
// action on output geometry.

#include <array>
#include <stdexcept>
#include <vector>

#include "taal/rng.hpp"
#include "taal/tensor.hpp"

namespace taal {

struct Transformation {
    bool flip = false;       // mirror across the horizontal axis (row order reversed)
    int quarter_turns = 0;   // number of 90 degree counterclockwise rotations, in {0,1,2,3}
    double noise_sigma = 0.0;
    uint64_t noise_seed = 0;

    bool spatial_equal(const Transformation& o) const {
        return flip == o.flip && quarter_turns == o.quarter_turns;
    }
};

inline Transformation identity_transform() { return Transformation{}; }

struct TransformPolicy {
    double flip_prob = 0.5;
    std::vector<int> turns_support = {0, 1, 2, 3};
    double noise_sigma = 0.1;

    TransformPolicy() = default;
    TransformPolicy(double fp, std::vector<int> turns, double sigma)
        : flip_prob(fp), turns_support(std::move(turns)), noise_sigma(sigma) {
        validate();
    }

    void validate() const {
        if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
            throw std::invalid_argument("TransformPolicy: flip_prob outside [0,1]");
        if (noise_sigma < 0.0)
            throw std::invalid_argument("TransformPolicy: negative noise_sigma");
        if (turns_support.empty())
            throw std::invalid_argument("TransformPolicy: empty turns_support");
        for (int t : turns_support)
            if (t < 0 || t > 3) throw std::invalid_argument("TransformPolicy: turn outside {0..3}");
    }
};

inline Transformation sample_transform(const TransformPolicy& policy, Rng& rng) {
    Transformation t;
    t.flip = rng.bernoulli(policy.flip_prob);
    t.quarter_turns = policy.turns_support[static_cast<size_t>(rng.bits() % policy.turns_support.size())];
    t.noise_sigma = policy.noise_sigma;
    t.noise_seed = rng.bits();
    return t;
}

namespace detail {

template <typename T>
Image<T> flip_rows(const Image<T>& im) {
    Image<T> out(im.h, im.w);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) out.at(y, x) = im.at(im.h - 1 - y, x);
    return out;
}

// one counterclockwise quarter turn; H x W becomes W x H
template <typename T>
Image<T> rot90(const Image<T>& im) {
    Image<T> out(im.w, im.h);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(y, x) = im.at(x, im.w - 1 - y);
    return out;
}

template <typename T>
Image<T> rot_k(Image<T> im, int k) {
    for (int i = 0; i < (k & 3); ++i) im = rot90(im);
    return im;
}

}  // namespace detail

// spatial part only: flip, then rotate
template <typename T>
Image<T> apply_spatial(const Transformation& t, const Image<T>& image) {
    Image<T> out = t.flip ? detail::flip_rows(image) : image;
    return detail::rot_k(std::move(out), t.quarter_turns);
}

inline Mask apply_spatial(const Transformation& t, const Mask& mask) {
    Image<uint8_t> tmp;
    tmp.h = mask.h;
    tmp.w = mask.w;
    tmp.v = mask.v;
    tmp = apply_spatial(t, tmp);
    Mask out;
    out.h = tmp.h;
    out.w = tmp.w;
    out.v = std::move(tmp.v);
    return out;
}

template <typename T>
PlaneStack<T> apply_spatial(const Transformation& t, const PlaneStack<T>& p) {
    PlaneStack<T> out;
    for (int j = 0; j < p.c; ++j) {
        Image<T> plane(p.h, p.w);
        std::copy(p.v.begin() + j * p.plane(), p.v.begin() + (j + 1) * p.plane(), plane.v.begin());
        Image<T> tp = apply_spatial(t, plane);
        if (j == 0) out = PlaneStack<T>(p.c, tp.h, tp.w);
        std::copy(tp.v.begin(), tp.v.end(), out.v.begin() + j * out.plane());
    }
    return out;
}

// full transformation: flip, rotate, then additive Gaussian noise drawn
// row-major from noise_seed
template <typename T>
Image<T> apply(const Transformation& t, const Image<T>& image) {
    Image<T> out = apply_spatial(t, image);
    if (t.noise_sigma > 0.0) {
        Rng noise(t.noise_seed);
        for (auto& px : out.v) px += static_cast<T>(noise.normal(0.0, t.noise_sigma));
    }
    return out;
}

// undo the spatial part: rotate by (4 - k) mod 4, then unflip
template <typename T>
PlaneStack<T> invert_spatial(const Transformation& t, const PlaneStack<T>& pred) {
    Transformation unrot;
    unrot.quarter_turns = (4 - t.quarter_turns) & 3;
    PlaneStack<T> out = apply_spatial(unrot, pred);
    if (t.flip) {
        Transformation unflip;
        unflip.flip = true;
        out = apply_spatial(unflip, out);
    }
    return out;
}

template <typename T>
Image<T> invert_spatial(const Transformation& t, const Image<T>& pred) {
    PlaneStack<T> p(1, pred.h, pred.w);
    p.v = pred.v;
    p = invert_spatial(t, p);
    Image<T> out(p.h, p.w);
    out.v = std::move(p.v);
    return out;
}

// the eight flip x rotation combinations, enumeration order fixed
// (turns-major, unflipped first)
inline std::array<Transformation, 8> spatial_combinations(double noise_sigma = 0.0) {
    std::array<Transformation, 8> out;
    int i = 0;
    for (int f = 0; f < 2; ++f)
        for (int r = 0; r < 4; ++r) {
            out[i].flip = (f == 1);
            out[i].quarter_turns = r;
            out[i].noise_sigma = noise_sigma;
            out[i].noise_seed = 0;
            ++i;
        }
    return out;
}

}  // namespace taal
