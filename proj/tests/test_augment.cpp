#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <map>

#include "taal/augment.hpp"
#include "taal/rng.hpp"

using namespace taal;

namespace {

Image<double> random_image(int h, int w, uint64_t seed) {
    Rng r(seed);
    Image<double> im(h, w);
    for (auto& v : im.v) v = r.uniform();
    return im;
}

PlaneStack<double> random_simplex(int c, int h, int w, uint64_t seed) {
    Rng r(seed);
    PlaneStack<double> p(c, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int j = 0; j < c; ++j) {
                const double e = -std::log(1.0 - r.uniform());
                p.at(j, y, x) = e;
                sum += e;
            }
            for (int j = 0; j < c; ++j) p.at(j, y, x) /= sum;
        }
    return p;
}

}  // namespace

TEST_CASE("degenerate policy yields the identity transformation") {
    TransformPolicy policy(0.0, {0}, 0.0);
    Rng rng(1);
    Transformation t = sample_transform(policy, rng);
    REQUIRE_FALSE(t.flip);
    REQUIRE(t.quarter_turns == 0);
    REQUIRE(t.noise_sigma == 0.0);
    auto im = random_image(9, 9, 5);
    REQUIRE(apply(t, im) == im);
}

TEST_CASE("invalid policies are rejected at construction") {
    REQUIRE_THROWS_AS(TransformPolicy(1.5, {0}, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(TransformPolicy(0.5, {0, 4}, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(TransformPolicy(0.5, {}, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(TransformPolicy(0.5, {0}, -0.1), std::invalid_argument);
}

TEST_CASE("transform sampling replays identically for a fixed stream") {
    TransformPolicy policy;
    Rng a(99), b(99);
    for (int i = 0; i < 50; ++i) {
        Transformation ta = sample_transform(policy, a);
        Transformation tb = sample_transform(policy, b);
        REQUIRE(ta.flip == tb.flip);
        REQUIRE(ta.quarter_turns == tb.quarter_turns);
        REQUIRE(ta.noise_seed == tb.noise_seed);
    }
}

TEST_CASE("the eight spatial combinations are sampled uniformly") {
    TransformPolicy policy(0.5, {0, 1, 2, 3}, 0.0);
    Rng rng(2024);
    std::map<std::pair<bool, int>, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        Transformation t = sample_transform(policy, rng);
        ++counts[{t.flip, t.quarter_turns}];
    }
    REQUIRE(counts.size() == 8);
    for (const auto& [combo, count] : counts) {
        const double freq = static_cast<double>(count) / n;
        REQUIRE(std::abs(freq - 0.125) < 0.0025);  // within 2% of 12.5%
    }
}

TEST_CASE("spatial inversion undoes every combination bit-exactly") {
    auto p = random_simplex(3, 12, 12, 7);
    for (const auto& t : spatial_combinations()) {
        PlaneStack<double> round = invert_spatial(t, apply_spatial(t, p));
        REQUIRE(round == p);
    }
}

TEST_CASE("double flip-rotate composition returns the original exactly") {
    Transformation t;
    t.flip = true;
    t.quarter_turns = 2;
    auto im = random_image(10, 10, 3);
    Image<double> forward = apply_spatial(t, im);
    REQUIRE(invert_spatial(t, forward) == im);
}

TEST_CASE("the eight combinations are pairwise distinct on a generic input") {
    auto im = random_image(8, 8, 11);
    auto combos = spatial_combinations();
    for (size_t a = 0; a < combos.size(); ++a)
        for (size_t b = a + 1; b < combos.size(); ++b)
            REQUIRE_FALSE(apply_spatial(combos[a], im) == apply_spatial(combos[b], im));
}

TEST_CASE("spatial combinations are closed under composition") {
    auto im = random_image(8, 8, 13);
    auto combos = spatial_combinations();
    for (const auto& a : combos)
        for (const auto& b : combos) {
            Image<double> composed = apply_spatial(b, apply_spatial(a, im));
            bool found = false;
            for (const auto& c : combos) found |= apply_spatial(c, im) == composed;
            REQUIRE(found);
        }
}

TEST_CASE("noise-free application permutes pixel values") {
    auto im = random_image(16, 16, 17);
    Transformation t;
    t.flip = true;
    t.quarter_turns = 3;
    Image<double> out = apply(t, im);
    auto a = im.v, b = out.v;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    REQUIRE(a == b);
}

TEST_CASE("noise matches its nominal moments on a 128x128 grid") {
    Transformation t;
    t.flip = true;
    t.quarter_turns = 1;
    t.noise_sigma = 0.1;
    t.noise_seed = 4242;
    auto im = random_image(128, 128, 23);
    Image<double> noisy = apply(t, im);
    Image<double> clean = apply_spatial(t, im);
    double s = 0.0, s2 = 0.0;
    const double n = static_cast<double>(noisy.v.size());
    for (size_t i = 0; i < noisy.v.size(); ++i) {
        const double d = noisy.v[i] - clean.v[i];
        s += d;
        s2 += d * d;
    }
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    REQUIRE(std::abs(mean) < 0.005);
    REQUIRE(sd > 0.095);
    REQUIRE(sd < 0.105);
}

TEST_CASE("noise realizations are bit-identical per seed") {
    Transformation t;
    t.noise_sigma = 0.2;
    t.noise_seed = 77;
    auto im = random_image(32, 32, 29);
    REQUIRE(apply(t, im) == apply(t, im));
}

TEST_CASE("inversion preserves per-pixel channel sums") {
    auto p = random_simplex(4, 9, 9, 31);
    Transformation t;
    t.flip = true;
    t.quarter_turns = 3;
    PlaneStack<double> q = invert_spatial(t, apply_spatial(t, p));
    for (int y = 0; y < q.h; ++y)
        for (int x = 0; x < q.w; ++x) {
            double sum = 0.0;
            for (int j = 0; j < q.c; ++j) sum += q.at(j, y, x);
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
        }
}

TEST_CASE("rotation swaps dimensions on non-square grids") {
    Image<double> im(2, 3);
    for (size_t i = 0; i < im.v.size(); ++i) im.v[i] = static_cast<double>(i);
    Transformation t;
    t.quarter_turns = 1;
    Image<double> out = apply_spatial(t, im);
    REQUIRE(out.h == 3);
    REQUIRE(out.w == 2);
    // one counterclockwise turn: the last column becomes the first row
    REQUIRE(out.at(0, 0) == im.at(0, 2));
    REQUIRE(out.at(0, 1) == im.at(1, 2));
    REQUIRE(out.at(2, 0) == im.at(0, 0));
}

TEST_CASE("masks transform with the same spatial rule as images") {
    Mask m(4, 4);
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = static_cast<uint8_t>(i % 5);
    Transformation t;
    t.flip = true;
    t.quarter_turns = 2;
    Mask tm = apply_spatial(t, m);
    Image<double> asimg(4, 4);
    for (size_t i = 0; i < m.v.size(); ++i) asimg.v[i] = m.v[i];
    Image<double> timg = apply_spatial(t, asimg);
    for (size_t i = 0; i < tm.v.size(); ++i) REQUIRE(static_cast<double>(tm.v[i]) == timg.v[i]);
}
