#include <catch2/catch_amalgamated.hpp>

#include "taal/metrics.hpp"

using namespace taal;

namespace {

Mask square(int h, int w, int y0, int x0, int side, uint8_t cls) {
    Mask m(h, w, 0);
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.at(y, x) = cls;
    return m;
}

}  // namespace

TEST_CASE("perfect predictions score one on every present class") {
    Mask target = square(8, 8, 1, 1, 4, 2);
    auto r = dice_2d(target, target, 3);
    REQUIRE(r.per_class.at(2) == 1.0);
    REQUIRE(r.per_class.at(1) == 1.0);  // absent in both: convention
    REQUIRE(r.mean == 1.0);
}

TEST_CASE("one-sided empties score zero") {
    Mask target = square(8, 8, 0, 0, 2, 1);
    Mask empty(8, 8, 0);
    auto r = dice_2d(empty, target, 2);
    REQUIRE(r.per_class.at(1) == 0.0);
}

TEST_CASE("half-overlapping equal squares score one half") {
    // two 4x4 squares sharing an 8-pixel overlap: dice = 2*8/(16+16) = 0.5
    Mask a = square(8, 8, 0, 0, 4, 1);
    Mask b = square(8, 8, 0, 2, 4, 1);
    auto r = dice_2d(a, b, 2);
    REQUIRE(r.per_class.at(1) == Catch::Approx(0.5));
}

TEST_CASE("dice is symmetric, bounded, and label-permutation covariant") {
    Mask a = square(6, 6, 0, 0, 3, 1);
    Mask b = square(6, 6, 1, 1, 3, 1);
    REQUIRE(dice_2d(a, b, 2).per_class.at(1) == dice_2d(b, a, 2).per_class.at(1));
    const double d = dice_2d(a, b, 2).per_class.at(1);
    REQUIRE(d >= 0.0);
    REQUIRE(d <= 1.0);

    // relabel class 1 -> 2 in both masks: the score moves with the label
    Mask a2 = a, b2 = b;
    for (auto& v : a2.v) v = v == 1 ? 2 : v;
    for (auto& v : b2.v) v = v == 1 ? 2 : v;
    REQUIRE(dice_2d(a2, b2, 3).per_class.at(2) == d);
    REQUIRE(dice_2d(a2, b2, 3).per_class.at(1) == 1.0);
}

TEST_CASE("single-slice volumes reduce 3D dice to 2D dice") {
    Mask pred = square(8, 8, 0, 0, 4, 1);
    Mask target = square(8, 8, 0, 2, 4, 1);
    std::vector<SlicePrediction> sp;
    sp.push_back({"s1", 0, pred, target});
    auto r3 = dice_3d(sp, 2);
    auto r2 = dice_2d(pred, target, 2);
    REQUIRE(r3.per_class.at(1) == r2.per_class.at(1));
    REQUIRE(r3.granularity == "3D");
}

TEST_CASE("volumetric dice pools voxels across slices") {
    // slice 0: perfect overlap of a pixels; slice 1: prediction empty,
    // target has b pixels. volumetric dice = 2a / (2a + b).
    const int a = 16, b = 4;
    Mask s0 = square(8, 8, 0, 0, 4, 1);  // a = 16
    Mask s1_pred(8, 8, 0);
    Mask s1_target = square(8, 8, 2, 2, 2, 1);  // b = 4
    std::vector<SlicePrediction> sp;
    sp.push_back({"v", 0, s0, s0});
    sp.push_back({"v", 1, s1_pred, s1_target});
    auto r = dice_3d(sp, 2);
    REQUIRE(r.per_class.at(1) == Catch::Approx(2.0 * a / (2.0 * a + b)));
    // per-slice scores would have been 1.0 and 0.0
    REQUIRE(dice_2d(s0, s0, 2).per_class.at(1) == 1.0);
    REQUIRE(dice_2d(s1_pred, s1_target, 2).per_class.at(1) == 0.0);
}

TEST_CASE("missing slices are reported with subject and index") {
    Mask m(4, 4, 0);
    std::vector<SlicePrediction> sp;
    sp.push_back({"subj9", 0, m, m});
    sp.push_back({"subj9", 2, m, m});  // slice 1 missing
    try {
        dice_3d(sp, 2);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("subj9") != std::string::npos);
        REQUIRE(msg.find("1") != std::string::npos);
    }
}

TEST_CASE("3D mean averages subjects before classes") {
    Mask present = square(4, 4, 0, 0, 2, 1);
    Mask empty(4, 4, 0);
    std::vector<SlicePrediction> sp;
    sp.push_back({"p1", 0, present, present});  // dice 1.0
    sp.push_back({"p2", 0, empty, present});    // dice 0.0
    auto r = dice_3d(sp, 2);
    REQUIRE(r.per_class.at(1) == Catch::Approx(0.5));
    REQUIRE(r.mean == Catch::Approx(0.5));
}

TEST_CASE("argmax projection picks the strongest channel") {
    PlaneStack<float> p(3, 1, 2);
    p.at(0, 0, 0) = 0.2f;
    p.at(1, 0, 0) = 0.5f;
    p.at(2, 0, 0) = 0.3f;
    p.at(0, 0, 1) = 0.6f;
    p.at(1, 0, 1) = 0.2f;
    p.at(2, 0, 1) = 0.2f;
    Mask m = argmax_mask(p);
    REQUIRE(m.at(0, 0) == 1);
    REQUIRE(m.at(0, 1) == 0);
}

TEST_CASE("image pooling matches hand aggregation") {
    std::vector<DiceResult> rs(2);
    rs[0].per_class = {{1, 1.0}, {2, 0.0}};
    rs[0].mean = 0.5;
    rs[1].per_class = {{1, 0.5}, {2, 0.5}};
    rs[1].mean = 0.5;
    auto pooled = mean_dice_over_images(rs);
    REQUIRE(pooled.per_class.at(1) == Catch::Approx(0.75));
    REQUIRE(pooled.per_class.at(2) == Catch::Approx(0.25));
    REQUIRE(pooled.mean == Catch::Approx(0.5));
    REQUIRE(mean_of_image_means(rs) == Catch::Approx(0.5));
}
