#pragma once

// Multi-task encoder-decoder generator: 6 stride-2 4x4 conv encoder layers,
// 6 upsampling 4x4 transposed-conv decoder layers with U-net skip
// concatenation. Produces a 3-channel synthesis in [0,1] and a 1-channel
// clothing mask in [0,1], plus the stage-1 training objective.

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "tryon/nn.hpp"
#include "tryon/perception.hpp"

namespace tryon {

inline constexpr int kRepresentationChannels = 22;
inline constexpr int kCoarseInputChannels = 3 + kRepresentationChannels;
inline constexpr int kCoarseOutputChannels = 4;
inline constexpr std::array<int, 6> kEncoderBaseFilters = {64, 128, 256, 512, 512, 512};
inline constexpr std::array<int, 6> kDecoderBaseChannels = {512, 512, 256, 128, 64, 4};
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kDropoutProb = 0.5;
inline constexpr double kWeightInitStd = 0.02;

template <class T>
struct CoarseOutput {
    Tensor<T> image;  // [N,3,H,W] in [0,1]
    Tensor<T> mask;   // [N,1,H,W] in [0,1]
};

// Per-level weights applied to the mean absolute feature difference of each
// perception tap. All-ones realizes per-level mean normalization.
template <class T>
struct LossWeights {
    std::array<T, 6> lambda = {T(1), T(1), T(1), T(1), T(1), T(1)};
};

template <class T>
class CoarseGenerator {
public:
    struct Options {
        double width_mult = 1.0;
        bool use_skips = true;
        std::uint64_t seed = 0;
    };

    explicit CoarseGenerator(const Options& opt) : opt_(opt) {
        std::mt19937 rng = make_rng(opt.seed);
        const T wstd = T(kWeightInitStd);
        int in_ch = kCoarseInputChannels;
        for (int i = 0; i < 6; ++i) {
            const int out_ch = scaled(kEncoderBaseFilters[static_cast<std::size_t>(i)]);
            enc_filters_[static_cast<std::size_t>(i)] = out_ch;
            enc_.emplace_back(in_ch, out_ch, 4, 2, 1, rng, wstd);
            in_ch = out_ch;
        }
        // batch norm on encoder layers 1..4 (not the first, not the 1x1-prone
        // bottleneck), matching the cited image-to-image convention
        for (int i = 1; i <= 4; ++i)
            enc_bn_.emplace_back(enc_filters_[static_cast<std::size_t>(i)]);
        for (int i = 0; i < 6; ++i) {
            const int out_ch = i < 5 ? scaled(kDecoderBaseChannels[static_cast<std::size_t>(i)])
                                     : kCoarseOutputChannels;
            dec_channels_[static_cast<std::size_t>(i)] = out_ch;
            int dec_in = i == 0 ? enc_filters_[5] : dec_channels_[static_cast<std::size_t>(i - 1)];
            if (opt.use_skips && i > 0) dec_in += enc_filters_[static_cast<std::size_t>(5 - i)];
            dec_.emplace_back(dec_in, out_ch, 4, 2, 1, rng, wstd);
            if (i < 5) dec_bn_.emplace_back(out_ch);
        }
    }

    // (c, p) -> (I', M). Requires H and W divisible by 64.
    CoarseOutput<T> forward(const Tensor<T>& clothing, const Tensor<T>& person, bool train,
                            std::mt19937& rng) {
        const auto& cs = clothing.shape();
        const auto& ps = person.shape();
        if (cs.size() != 4 || cs[1] != 3) fail("coarse_forward: clothing must be [N,3,H,W]");
        if (ps.size() != 4 || ps[1] != kRepresentationChannels)
            fail("coarse_forward: person representation must have ", kRepresentationChannels,
                 " channels, got ", ps.size() == 4 ? ps[1] : -1);
        if (cs[2] % 64 != 0 || cs[3] % 64 != 0)
            fail("coarse_forward: resolution ", cs[2], "x", cs[3], " must be divisible by 64");
        Tensor<T> x = concat_channels<T>({clothing, person});
        return forward_input(x, train, rng);
    }

    // Deterministic forward with batch statistics, as the cited
    // image-to-image convention runs its networks outside training;
    // running stats are left untouched and dropout is off.
    CoarseOutput<T> forward_batch_stats(const Tensor<T>& clothing, const Tensor<T>& person) {
        Tensor<T> x = concat_channels<T>({clothing, person});
        std::mt19937 unused(0);
        return forward_impl(x, BnStats::batch_frozen, false, unused);
    }

    // Encoder activations after each of the six stride-2 stages; the last
    // entry is the bottleneck.
    std::vector<Tensor<T>> encoder_taps(const Tensor<T>& x, bool train) {
        return encode(x, train ? BnStats::batch : BnStats::running);
    }

    CoarseOutput<T> forward_input(const Tensor<T>& x, bool train, std::mt19937& rng) {
        return forward_impl(x, train ? BnStats::batch : BnStats::running, train, rng);
    }

    std::vector<Tensor<T>> encode(const Tensor<T>& x, BnStats stats) {
        std::vector<Tensor<T>> taps;
        Tensor<T> cur = x;
        for (int i = 0; i < 6; ++i) {
            cur = enc_[static_cast<std::size_t>(i)](cur);
            if (i >= 1 && i <= 4) cur = enc_bn_[static_cast<std::size_t>(i - 1)](cur, stats);
            cur = activation(cur, Act::leaky_relu, T(kLeakySlope));
            taps.push_back(cur);
        }
        return taps;
    }

    CoarseOutput<T> forward_impl(const Tensor<T>& x, BnStats stats, bool use_dropout,
                                 std::mt19937& rng) {
        std::vector<Tensor<T>> taps = encode(x, stats);
        Tensor<T> cur = taps.back();
        for (int i = 0; i < 6; ++i) {
            Tensor<T> dec_in = cur;
            if (opt_.use_skips && i > 0)
                dec_in = concat_channels<T>({cur, taps[static_cast<std::size_t>(5 - i)]});
            cur = dec_[static_cast<std::size_t>(i)](dec_in);
            if (i < 5) {
                cur = dec_bn_[static_cast<std::size_t>(i)](cur, stats);
                if (i < 3) cur = dropout(cur, T(kDropoutProb), use_dropout, rng);
                cur = activation(cur, Act::relu);
            }
        }
        Tensor<T> rgb = slice_channels(cur, 0, 3);
        Tensor<T> mask = slice_channels(cur, 3, 4);
        // tanh rescaled to [0,1] for the image, sigmoid for the mask
        Tensor<T> image = add_scalar(scale(activation(rgb, Act::tanh), T(0.5)), T(0.5));
        return {image, activation(mask, Act::sigmoid)};
    }

    std::vector<NamedParam<T>> named_params() {
        std::vector<NamedParam<T>> out;
        for (std::size_t i = 0; i < enc_.size(); ++i) {
            out.push_back({cat("coarse.enc", i, ".weight"), enc_[i].weight});
            out.push_back({cat("coarse.enc", i, ".bias"), enc_[i].bias});
        }
        for (std::size_t i = 0; i < enc_bn_.size(); ++i) {
            out.push_back({cat("coarse.enc_bn", i, ".gamma"), enc_bn_[i].gamma});
            out.push_back({cat("coarse.enc_bn", i, ".beta"), enc_bn_[i].beta});
        }
        for (std::size_t i = 0; i < dec_.size(); ++i) {
            out.push_back({cat("coarse.dec", i, ".weight"), dec_[i].weight});
            out.push_back({cat("coarse.dec", i, ".bias"), dec_[i].bias});
        }
        for (std::size_t i = 0; i < dec_bn_.size(); ++i) {
            out.push_back({cat("coarse.dec_bn", i, ".gamma"), dec_bn_[i].gamma});
            out.push_back({cat("coarse.dec_bn", i, ".beta"), dec_bn_[i].beta});
        }
        return out;
    }

    std::vector<NamedBuffer<T>> named_buffers() {
        std::vector<NamedBuffer<T>> out;
        for (std::size_t i = 0; i < enc_bn_.size(); ++i) {
            out.push_back({cat("coarse.enc_bn", i, ".running_mean"), &enc_bn_[i].running_mean});
            out.push_back({cat("coarse.enc_bn", i, ".running_var"), &enc_bn_[i].running_var});
        }
        for (std::size_t i = 0; i < dec_bn_.size(); ++i) {
            out.push_back({cat("coarse.dec_bn", i, ".running_mean"), &dec_bn_[i].running_mean});
            out.push_back({cat("coarse.dec_bn", i, ".running_var"), &dec_bn_[i].running_var});
        }
        return out;
    }

    std::vector<Tensor<T>> trainable_params() {
        std::vector<Tensor<T>> out;
        for (auto& p : named_params()) out.push_back(p.tensor);
        return out;
    }

    void set_frozen(bool frozen) {
        for (auto& p : named_params()) p.tensor.set_requires_grad(!frozen);
    }

    const std::array<int, 6>& encoder_filters() const { return enc_filters_; }
    const std::array<int, 6>& decoder_channels() const { return dec_channels_; }

private:
    int scaled(int base) const { return std::max(1, static_cast<int>(base * opt_.width_mult + 0.5)); }

    Options opt_;
    std::vector<Conv2dLayer<T>> enc_;
    std::vector<BatchNorm2dLayer<T>> enc_bn_;
    std::vector<ConvTranspose2dLayer<T>> dec_;
    std::vector<BatchNorm2dLayer<T>> dec_bn_;
    std::array<int, 6> enc_filters_{};
    std::array<int, 6> dec_channels_{};
};

// Sum over the requested tap levels of lambda_i * mean|phi_i(a) - phi_i(b)|.
template <class T>
Tensor<T> perceptual_loss(const Tensor<T>& a, const Tensor<T>& b, const std::set<int>& levels,
                          const LossWeights<T>& weights, const PerceptionNet<T>& phi) {
    detail::check_same_shape(a, b, "perceptual_loss");
    bool any_positive = false;
    for (int lv : levels) any_positive = any_positive || weights.lambda[static_cast<std::size_t>(lv)] > T(0);
    if (!any_positive) fail("perceptual_loss: all level weights are zero");
    std::vector<Tensor<T>> fa = phi.features(a, levels);
    std::vector<Tensor<T>> fb = phi.features(b, levels);
    Tensor<T> total;
    std::size_t idx = 0;
    for (int lv : levels) {
        Tensor<T> term = scale(mean_all(abs(sub(fa[idx], fb[idx]))),
                               weights.lambda[static_cast<std::size_t>(lv)]);
        total = total.defined() ? add(total, term) : term;
        ++idx;
    }
    return total;
}

// Stage-1 objective: perceptual term over taps 0..5 plus the mean absolute
// clothing-mask difference.
template <class T>
Tensor<T> coarse_loss(const CoarseOutput<T>& out, const Tensor<T>& target_image,
                      const Tensor<T>& target_mask, const LossWeights<T>& weights,
                      const PerceptionNet<T>& phi) {
    detail::check_same_shape(out.image, target_image, "coarse_loss(image)");
    detail::check_same_shape(out.mask, target_mask, "coarse_loss(mask)");
    Tensor<T> perc = perceptual_loss(out.image, target_image, {0, 1, 2, 3, 4, 5}, weights, phi);
    Tensor<T> mask_term = mean_all(abs(sub(out.mask, target_mask)));
    return add(perc, mask_term);
}

template <class T>
struct CoarseBatch {
    Tensor<T> clothing;      // c  [N,3,H,W]
    Tensor<T> person;        // p  [N,22,H,W]
    Tensor<T> target_image;  // I  [N,3,H,W]
    Tensor<T> target_mask;   // M0 [N,1,H,W]
};

// One forward + backward + Adam update. Returns the pre-update loss.
template <class T>
T train_coarse_step(const CoarseBatch<T>& batch, CoarseGenerator<T>& gen,
                    std::vector<Tensor<T>>& params, AdamState<T>& opt_state,
                    const LossWeights<T>& weights, const PerceptionNet<T>& phi,
                    std::mt19937& rng) {
    for (auto& p : params) p.zero_grad();
    CoarseOutput<T> out = gen.forward(batch.clothing, batch.person, true, rng);
    Tensor<T> loss = coarse_loss(out, batch.target_image, batch.target_mask, weights, phi);
    if (!all_finite(loss)) {
        const char* culprit = first_nonfinite(loss);
        fail("train_coarse_step: non-finite loss (first non-finite tensor: ",
             culprit ? culprit : "loss", ")");
    }
    loss.backward();
    adam_step(params, opt_state);
    return loss.item();
}

}  // namespace tryon
