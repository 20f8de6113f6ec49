#include <doctest.h>

#include "support.hpp"
#include "tryon/nn.hpp"

using namespace tryon;

TEST_CASE("layer constructors wire channel counts and hyperparameters") {
    std::mt19937 rng(31);
    Conv2dLayer<float> conv(25, 64, 4, 2, 1, rng, 0.02f);
    CHECK(conv.in_channels() == 25);
    CHECK(conv.out_channels() == 64);
    CHECK(conv.weight.shape() == std::vector<int>({64, 25, 4, 4}));
    CHECK(conv.bias.numel() == 64);
    CHECK(conv.weight.requires_grad());

    ConvTranspose2dLayer<float> deconv(64, 32, 4, 2, 1, rng, 0.02f);
    CHECK(deconv.in_channels() == 64);
    CHECK(deconv.out_channels() == 32);
    CHECK(deconv.weight.shape() == std::vector<int>({64, 32, 4, 4}));

    BatchNorm2dLayer<float> bn(8);
    CHECK(bn.gamma.numel() == 8);
    CHECK(bn.eps == 1e-5f);
    CHECK(bn.momentum == 0.1f);
    for (float v : bn.running_var) CHECK(v == 1.0f);
}

TEST_CASE("normal_init is deterministic for a fixed seed") {
    std::mt19937 a(7), b(7);
    auto wa = normal_init<float>({4, 3, 3, 3}, a, 0.02f);
    auto wb = normal_init<float>({4, 3, 3, 3}, b, 0.02f);
    CHECK(wa.data() == wb.data());
}

TEST_CASE("batch norm layer updates running stats only in train mode") {
    BatchNorm2dLayer<double> bn(1);
    auto x = Tensor<double>::from_data({1, 1, 1, 4}, {1.0, 3.0, 1.0, 3.0});
    bn(x, true);
    // mean 2, biased var 1, unbiased var 4/3; momentum 0.1
    CHECK(bn.running_mean[0] == doctest::Approx(0.2));
    CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.1 * 4.0 / 3.0));
    const auto rm = bn.running_mean, rv = bn.running_var;
    bn(x, false);
    CHECK(bn.running_mean == rm);
    CHECK(bn.running_var == rv);
}

TEST_CASE("adam state defaults match the training setup") {
    AdamState<float> st;
    CHECK(st.beta1 == 0.5f);
    CHECK(st.beta2 == 0.999f);
    CHECK(st.learning_rate == 0.0002f);
    CHECK(st.step_count == 0);
}

TEST_CASE("adam moment buffers track parameter shapes") {
    std::mt19937 rng(33);
    auto p1 = testutil::random_tensor<float>({3, 2}, rng, true);
    auto p2 = testutil::random_tensor<float>({5}, rng, true);
    p1.grad();
    p2.grad();
    std::vector<Tensor<float>> params = {p1, p2};
    AdamState<float> st;
    adam_step(params, st);
    REQUIRE(st.first_moment.size() == 2);
    CHECK(st.first_moment[0].size() == 6);
    CHECK(st.second_moment[1].size() == 5);
}
