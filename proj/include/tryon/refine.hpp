#pragma once

// Refinement stage: a four-layer fully convolutional network predicting the
// composition mask alpha from the concatenated warped clothing and coarse
// synthesis, the alpha-blend composite, and the stage-2 objective
// (high-level perceptual term, negative mask-mean term, total variation).

#include <cstdint>
#include <set>
#include <vector>

#include "tryon/coarse.hpp"
#include "tryon/nn.hpp"
#include "tryon/perception.hpp"

namespace tryon {

inline constexpr int kRefineInputChannels = 6;
inline constexpr int kRefineHiddenChannels = 64;
inline constexpr double kLambdaWarpDefault = 0.1;
inline constexpr double kLambdaTvDefault = 5e-6;

template <class T>
struct RefinementLossConfig {
    T lambda_warp = T(kLambdaWarpDefault);
    T lambda_tv = T(kLambdaTvDefault);
    std::set<int> perceptual_levels = {3, 4, 5};
    LossWeights<T> weights;  // reuses the stage-1 per-level normalization
};

template <class T>
class RefinementNet {
public:
    explicit RefinementNet(std::uint64_t seed) {
        std::mt19937 rng = make_rng(seed);
        // fan-in scaled init; this net has no batch norm, so a flat 0.02
        // shrinks the activations layer over layer
        auto he = [](int fan_in) { return std::sqrt(T(2) / static_cast<T>(fan_in)); };
        convs_.emplace_back(kRefineInputChannels, kRefineHiddenChannels, 3, 1, 1, rng,
                            he(kRefineInputChannels * 9));
        convs_.emplace_back(kRefineHiddenChannels, kRefineHiddenChannels, 3, 1, 1, rng,
                            he(kRefineHiddenChannels * 9));
        convs_.emplace_back(kRefineHiddenChannels, kRefineHiddenChannels, 3, 1, 1, rng,
                            he(kRefineHiddenChannels * 9));
        convs_.emplace_back(kRefineHiddenChannels, 1, 1, 1, 0, rng, he(kRefineHiddenChannels));
    }

    // alpha = G_R(concat(c', I')), strictly inside (0,1) via the sigmoid.
    Tensor<T> forward(const Tensor<T>& warped, const Tensor<T>& coarse) const {
        detail::check_same_shape(warped, coarse, "refine_forward");
        if (warped.shape().size() != 4 || warped.shape()[1] != 3)
            fail("refine_forward: inputs must be [N,3,H,W]");
        Tensor<T> x = concat_channels<T>({warped, coarse});
        for (int i = 0; i < 3; ++i)
            x = activation(convs_[static_cast<std::size_t>(i)](x), Act::leaky_relu, T(kLeakySlope));
        return activation(convs_[3](x), Act::sigmoid);
    }

    std::vector<NamedParam<T>> named_params() {
        std::vector<NamedParam<T>> out;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            out.push_back({cat("refine.conv", i, ".weight"), convs_[i].weight});
            out.push_back({cat("refine.conv", i, ".bias"), convs_[i].bias});
        }
        return out;
    }

    std::vector<Tensor<T>> trainable_params() {
        std::vector<Tensor<T>> out;
        for (auto& p : named_params()) out.push_back(p.tensor);
        return out;
    }

    const std::vector<Conv2dLayer<T>>& layers() const { return convs_; }

private:
    std::vector<Conv2dLayer<T>> convs_;
};

// I_hat = alpha (*) c' + (1 - alpha) (*) I', alpha broadcast over channels.
template <class T>
Tensor<T> composite(const Tensor<T>& alpha, const Tensor<T>& warped, const Tensor<T>& coarse) {
    return blend(alpha, warped, coarse);
}

// Stage-2 objective. The negative middle term rewards taking content from
// the warped clothing; total variation keeps alpha spatially smooth. Bounded
// below by -lambda_warp since alpha < 1.
template <class T>
Tensor<T> refinement_loss(const Tensor<T>& composed, const Tensor<T>& reference,
                          const Tensor<T>& alpha, const RefinementLossConfig<T>& config,
                          const PerceptionNet<T>& phi) {
    detail::check_same_shape(composed, reference, "refinement_loss");
    Tensor<T> loss = perceptual_loss(composed, reference, config.perceptual_levels, config.weights, phi);
    loss = add(loss, scale(mean_all(alpha), -config.lambda_warp));
    loss = add(loss, scale(tv_norm(alpha), config.lambda_tv));
    return loss;
}

template <class T>
struct RefineBatch {
    Tensor<T> warped;     // c'  [N,3,H,W]
    Tensor<T> coarse;     // I'  [N,3,H,W]
    Tensor<T> reference;  // I   [N,3,H,W]
};

// One refinement update. The coarse generator is already frozen; only the
// refinement weights move.
template <class T>
T train_refine_step(const RefineBatch<T>& batch, RefinementNet<T>& net,
                    std::vector<Tensor<T>>& params, AdamState<T>& opt_state,
                    const RefinementLossConfig<T>& config, const PerceptionNet<T>& phi) {
    for (auto& p : params) p.zero_grad();
    Tensor<T> alpha = net.forward(batch.warped, batch.coarse);
    Tensor<T> composed = composite(alpha, batch.warped, batch.coarse);
    Tensor<T> loss = refinement_loss(composed, batch.reference, alpha, config, phi);
    if (!all_finite(loss)) {
        const char* culprit = first_nonfinite(loss);
        fail("train_refine_step: non-finite loss (first non-finite tensor: ",
             culprit ? culprit : "loss", ")");
    }
    loss.backward();
    adam_step(params, opt_state);
    return loss.item();
}

}  // namespace tryon
