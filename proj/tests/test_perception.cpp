#include <doctest.h>

#include "support.hpp"
#include "tryon/checkpoint.hpp"
#include "tryon/perception.hpp"

using namespace tryon;
using testutil::random_tensor;

TEST_CASE("level 0 returns the input bit-exactly") {
    std::mt19937 rng(41);
    PerceptionNet<double> phi(5, 0.05);
    auto img = random_tensor<double>({1, 3, 16, 16}, rng, false, 0.0, 1.0);
    auto feats = phi.features(img, {0});
    REQUIRE(feats.size() == 1);
    CHECK(feats[0].data() == img.data());
}

TEST_CASE("tap spatial sizes halve after stage 1; 256x192 reaches 16x12 at level 5") {
    PerceptionNet<float> phi(5, 1.0 / 16.0);
    auto img = Tensor<float>::filled({1, 3, 256, 192}, 0.5f);
    auto feats = phi.features(img, {1, 2, 3, 4, 5});
    REQUIRE(feats.size() == 5);
    CHECK(feats[0].dim(2) == 256);
    CHECK(feats[0].dim(3) == 192);
    CHECK(feats[1].dim(2) == 128);
    CHECK(feats[4].dim(2) == 16);
    CHECK(feats[4].dim(3) == 12);
    for (int s = 0; s < 5; ++s)
        CHECK(feats[static_cast<std::size_t>(s)].dim(1) == phi.stage_width(s));
}

TEST_CASE("indivisible spatial size is rejected") {
    PerceptionNet<float> phi(5, 0.05);
    auto img = Tensor<float>::filled({1, 3, 60, 64}, 0.5f);
    CHECK_THROWS_AS(phi.features(img, {1}), Error);
}

TEST_CASE("features are deterministic and finite on [0,1] inputs") {
    std::mt19937 rng(42);
    auto img = random_tensor<float>({2, 3, 32, 32}, rng, false, 0.0, 1.0);
    PerceptionNet<float> a(9, 0.1), b(9, 0.1);
    auto fa = a.features(img, {3});
    auto fb = b.features(img, {3});
    CHECK(fa[0].data() == fb[0].data());
    for (float v : fa[0].data()) CHECK(std::isfinite(v));
}

TEST_CASE("backward reaches the image but never the frozen weights") {
    std::mt19937 rng(43);
    PerceptionNet<double> phi(11, 0.05);
    auto img = random_tensor<double>({1, 3, 16, 16}, rng, true, 0.0, 1.0);
    auto feats = phi.features(img, {0, 3, 5});
    Tensor<double> loss = mean_all(abs(feats[1]));
    loss = add(loss, mean_all(abs(feats[2])));
    loss.backward();
    bool any_nonzero = false;
    for (double g : img.grad()) any_nonzero = any_nonzero || g != 0.0;
    CHECK(any_nonzero);
    for (auto& p : phi.named_params()) {
        CHECK_FALSE(p.tensor.requires_grad());
        CHECK_FALSE(p.tensor.has_grad());
    }
}

TEST_CASE("weights loaded from the same file twice give bit-identical features") {
    testutil::TempDir dir("tryon_perception_ckpt");
    PerceptionNet<float> source(21, 0.08);
    {
        auto params = source.named_params();
        std::vector<NamedBuffer<float>> buffers;
        save_checkpoint(dir.str() + "/phi.ckpt", snapshot_model(params, buffers, 0, 21, nullptr, nullptr));
    }
    std::mt19937 rng(44);
    auto img = random_tensor<float>({1, 3, 16, 16}, rng, false, 0.0, 1.0);
    auto load_and_eval = [&] {
        PerceptionNet<float> phi(999, 0.08);  // different seed, then overwritten
        auto params = phi.named_params();
        std::vector<NamedBuffer<float>> buffers;
        restore_model(load_checkpoint(dir.str() + "/phi.ckpt"), params, buffers);
        return phi.features(img, {2})[0].data();
    };
    const auto f1 = load_and_eval();
    const auto f2 = load_and_eval();
    CHECK(f1 == f2);
    bool differs = false;
    const auto fresh = PerceptionNet<float>(999, 0.08).features(img, {2})[0].data();
    for (std::size_t i = 0; i < f1.size(); ++i) differs = differs || f1[i] != fresh[i];
    CHECK(differs);  // restore actually replaced the seed-999 weights
}
