#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "taal/augment.hpp"
#include "taal/divergence.hpp"
#include "taal/net.hpp"
#include "taal/training.hpp"

using namespace taal;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.base_channels = 2;
    cfg.classes = 3;
    cfg.input_h = cfg.input_w = 16;
    return cfg;
}

Image<float> random_input(int h, int w, uint64_t seed) {
    Rng r(seed);
    Image<float> im(h, w);
    for (auto& v : im.v) v = static_cast<float>(r.uniform());
    return im;
}

}  // namespace

TEST_CASE("forward emits per-pixel distributions") {
    auto model = UNet<float>::reinitialize(tiny_config(), 1);
    auto p = model.predict(random_input(16, 16, 2));
    REQUIRE(p.c == 3);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            float sum = 0.0f;
            for (int c = 0; c < p.c; ++c) {
                REQUIRE(p.at(c, y, x) >= 0.0f);
                REQUIRE(p.at(c, y, x) <= 1.0f);
                sum += p.at(c, y, x);
            }
            REQUIRE(std::abs(sum - 1.0f) < 1e-6f);
        }
}

TEST_CASE("inference is deterministic without dropout") {
    auto model = UNet<float>::reinitialize(tiny_config(), 3);
    auto im = random_input(16, 16, 4);
    REQUIRE(model.predict(im) == model.predict(im));
}

TEST_CASE("active dropout with different seeds changes the output") {
    auto model = UNet<float>::reinitialize(tiny_config(), 5);
    auto im = random_input(16, 16, 6);
    Tensor4<float> x = model.to_batch({&im});
    RunMode a, b;
    a.mc_dropout = b.mc_dropout = true;
    a.dropout_seed = 1;
    b.dropout_seed = 2;
    auto pa = model.forward(x, a).probs;
    auto pb = model.forward(x, b).probs;
    float maxdiff = 0.0f;
    for (size_t i = 0; i < pa.v.size(); ++i) maxdiff = std::max(maxdiff, std::abs(pa.v[i] - pb.v[i]));
    REQUIRE(maxdiff > 0.0f);
}

TEST_CASE("MC inference yields distinct reproducible passes") {
    auto model = UNet<float>::reinitialize(tiny_config(), 7);
    auto im = random_input(16, 16, 8);
    auto passes = model.predict_mc(im, 8, 99);
    REQUIRE(passes.size() == 8);
    int distinct_pairs = 0;
    for (size_t a = 0; a < passes.size(); ++a)
        for (size_t b = a + 1; b < passes.size(); ++b)
            if (!(passes[a] == passes[b])) ++distinct_pairs;
    REQUIRE(distinct_pairs == 28);  // all pairs differ on an untrained model

    auto replay = model.predict_mc(im, 8, 99);
    for (size_t i = 0; i < passes.size(); ++i) REQUIRE(passes[i] == replay[i]);

    REQUIRE_THROWS_AS(model.predict_mc(im, 1, 0), std::invalid_argument);
    ModelConfig nodrop = tiny_config();
    nodrop.dropout_p = 0.0;
    auto dry = UNet<float>::reinitialize(nodrop, 1);
    REQUIRE_THROWS_AS(dry.predict_mc(im, 8, 0), std::invalid_argument);
}

TEST_CASE("bottleneck features are stable, sized by the architecture, and trainable") {
    ModelConfig cfg = tiny_config();
    auto model = UNet<float>::reinitialize(cfg, 9);
    auto im = random_input(16, 16, 10);
    auto f1 = model.bottleneck_features(im);
    auto f2 = model.bottleneck_features(im);
    REQUIRE(f1 == f2);
    REQUIRE(f1.size() == static_cast<size_t>(cfg.bottleneck_channels()));

    // one optimizer step on this image moves the features
    TrainConfig tcfg;
    tcfg.base_lr = 1e-2;
    tcfg.warmup_factor = 1.0;
    tcfg.warmup_epochs = 0;
    Adam<float> opt(model, tcfg);
    auto grads = model.make_grads();
    Tensor4<float> x = model.to_batch({&im});
    RunMode mode;
    mode.training = true;
    auto out = model.forward(x, mode, true);
    Mask target(16, 16, 1);
    PlaneStack<float> probs = slice_sample(out.probs, 0);
    PlaneStack<float> g = dice_loss_grad(probs, target);
    Tensor4<float> dprobs(1, cfg.classes, 16, 16);
    put_sample(dprobs, 0, g);
    model.backward(*out.trace, dprobs, grads);
    opt.step(grads, 1e-2);
    auto f3 = model.bottleneck_features(im);
    REQUIRE_FALSE(f1 == f3);
}

TEST_CASE("reinitialization is seed-deterministic") {
    auto a = UNet<float>::reinitialize(tiny_config(), 11);
    auto b = UNet<float>::reinitialize(tiny_config(), 11);
    auto c = UNet<float>::reinitialize(tiny_config(), 12);
    auto im = random_input(16, 16, 13);
    REQUIRE(a.predict(im) == b.predict(im));
    REQUIRE_FALSE(a.predict(im) == c.predict(im));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    auto model = UNet<float>::reinitialize(tiny_config(), 15);
    auto im = random_input(16, 16, 16);
    auto before = model.predict(im);
    const std::string path = (std::filesystem::temp_directory_path() /
                              ("taal_ckpt_" + std::to_string(::getpid()) + ".bin"))
                                 .string();
    model.save(path, 0xDEADBEEF);
    uint64_t tag = 0;
    auto loaded = UNet<float>::load(path, &tag);
    REQUIRE(tag == 0xDEADBEEF);
    REQUIRE(loaded.predict(im) == before);
    std::filesystem::remove(path);
}

TEST_CASE("parameter count matches the closed form") {
    // hand-derived for depth 1, base 2, 2 classes:
    //   encoder 66, bottleneck 240, decoder 198, head 6 -> 510
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.base_channels = 2;
    cfg.classes = 2;
    cfg.input_h = cfg.input_w = 8;
    REQUIRE(unet_param_count(cfg) == 510);
    auto model = UNet<double>::reinitialize(cfg, 1);
    REQUIRE(model.num_params() == 510);

    auto big = tiny_config();
    auto m2 = UNet<float>::reinitialize(big, 2);
    REQUIRE(m2.num_params() == unet_param_count(big));

    ModelConfig paper;
    paper.depth = 4;
    paper.base_channels = 8;
    paper.classes = 4;
    paper.input_h = paper.input_w = 64;
    auto m3 = UNet<float>::reinitialize(paper, 3);
    REQUIRE(m3.num_params() == unet_param_count(paper));
}

TEST_CASE("pipeline-level equivariance property holds") {
    auto model = UNet<float>::reinitialize(tiny_config(), 17);
    auto im = random_input(16, 16, 18);
    auto base = model.predict(im);
    for (const auto& t : spatial_combinations()) {
        Image<float> tx = apply_spatial(t, im);
        auto aligned = invert_spatial(t, model.predict(tx));
        REQUIRE(aligned.c == base.c);
        REQUIRE(aligned.h == base.h);
        REQUIRE(aligned.w == base.w);
        REQUIRE(is_probability_map(aligned, 1e-5f));
    }
}

TEST_CASE("shape violations are rejected") {
    auto model = UNet<float>::reinitialize(tiny_config(), 19);
    REQUIRE_THROWS_AS(model.predict(random_input(8, 8, 20)), std::invalid_argument);
    ModelConfig bad = tiny_config();
    bad.input_h = 10;  // not divisible by 2^depth
    REQUIRE_THROWS_AS(UNet<float>::reinitialize(bad, 1), std::invalid_argument);
}
