#pragma once

// Frozen 5-stage feature extractor used by the perceptual losses. Each stage
// is two 3x3 convolutions with ReLU, stages are separated by 2x2 max-pooling,
// so tap i (i >= 1) has spatial size H/2^(i-1) x W/2^(i-1). Tap 0 is the raw
// input. Weights are either loaded from a checkpoint or drawn once from a
// seeded fan-in-scaled normal; they are never trained.

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "tryon/nn.hpp"

namespace tryon {

inline constexpr std::array<int, 5> kPerceptionBaseWidths = {64, 128, 256, 512, 512};

template <class T>
class PerceptionNet {
public:
    static constexpr int kStages = 5;

    explicit PerceptionNet(std::uint64_t seed, double width_mult = 1.0) {
        std::mt19937 rng = make_rng(seed);
        int in_ch = 3;
        for (int s = 0; s < kStages; ++s) {
            const int out_ch = std::max(1, static_cast<int>(kPerceptionBaseWidths[s] * width_mult + 0.5));
            widths_[s] = out_ch;
            // the net is positively homogeneous in the first-layer weights,
            // so the gain there sets every tap's magnitude; order-one taps
            // reproduce the perceptual-vs-L1 balance of the pretrained
            // reference features
            convs_.push_back(make_conv(in_ch, out_ch, rng, s == 0 ? T(4) : T(1)));
            convs_.push_back(make_conv(out_ch, out_ch, rng, T(1)));
            in_ch = out_ch;
        }
    }

    // Feature maps for the requested tap levels (0..5), in ascending order.
    std::vector<Tensor<T>> features(const Tensor<T>& image, const std::set<int>& levels) const {
        const auto& s = image.shape();
        if (s.size() != 4 || s[1] != 3) fail("perception_features: input must be [N,3,H,W]");
        if (levels.empty()) fail("perception_features: no levels requested");
        for (int lv : levels)
            if (lv < 0 || lv > kStages) fail("perception_features: level ", lv, " out of range 0..5");
        if (s[2] % 16 != 0 || s[3] % 16 != 0)
            fail("perception_features: spatial size ", s[2], "x", s[3],
                 " must be divisible by 16");
        std::vector<Tensor<T>> out;
        const int max_level = *levels.rbegin();
        Tensor<T> cur = image;
        if (levels.count(0)) out.push_back(image);
        for (int lv = 1; lv <= max_level; ++lv) {
            if (lv > 1) cur = max_pool2d(cur);
            cur = activation(convs_[static_cast<std::size_t>(2 * (lv - 1))](cur), Act::relu);
            cur = activation(convs_[static_cast<std::size_t>(2 * (lv - 1) + 1)](cur), Act::relu);
            if (levels.count(lv)) out.push_back(cur);
        }
        return out;
    }

    int stage_width(int stage) const { return widths_[static_cast<std::size_t>(stage)]; }

    std::vector<NamedParam<T>> named_params() {
        std::vector<NamedParam<T>> out;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            out.push_back({cat("perception.conv", i, ".weight"), convs_[i].weight});
            out.push_back({cat("perception.conv", i, ".bias"), convs_[i].bias});
        }
        return out;
    }

private:
    Conv2dLayer<T> make_conv(int in_ch, int out_ch, std::mt19937& rng, T gain) {
        // sqrt(2/fan_in) keeps tap magnitudes roughly level across stages;
        // each ReLU halves second moments otherwise
        const T wstd = gain * std::sqrt(T(2) / static_cast<T>(in_ch * 9));
        Conv2dLayer<T> conv(in_ch, out_ch, 3, 1, 1, rng, wstd);
        conv.weight.set_requires_grad(false);  // frozen
        conv.bias.set_requires_grad(false);
        return conv;
    }

    std::vector<Conv2dLayer<T>> convs_;
    std::array<int, kStages> widths_{};
};

}  // namespace tryon
