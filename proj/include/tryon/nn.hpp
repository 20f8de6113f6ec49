#pragma once

// Layer containers over the tensor ops plus the Adam optimizer used for both
// training stages.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tryon/tensor.hpp"

namespace tryon {

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

// Non-trainable state (batch-norm running statistics) serialized alongside
// parameters.
template <class T>
struct NamedBuffer {
    std::string name;
    std::vector<T>* data = nullptr;
};

template <class T>
Tensor<T> normal_init(std::vector<int> shape, std::mt19937& rng, T stddev) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    std::vector<T> v(Tensor<T>::shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from_data(std::move(shape), std::move(v), true);
}

template <class T>
struct Conv2dLayer {
    Tensor<T> weight;  // [out, in, kh, kw]
    Tensor<T> bias;    // [out]
    int stride = 1;
    int pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(int in_ch, int out_ch, int k, int stride_, int pad_, std::mt19937& rng, T wstd)
        : weight(normal_init<T>({out_ch, in_ch, k, k}, rng, wstd)),
          bias(Tensor<T>::zeros({out_ch}, true)),
          stride(stride_),
          pad(pad_) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
    int in_channels() const { return weight.dim(1); }
    int out_channels() const { return weight.dim(0); }
};

template <class T>
struct ConvTranspose2dLayer {
    Tensor<T> weight;  // [in, out, kh, kw]
    Tensor<T> bias;    // [out]
    int stride = 2;
    int pad = 1;

    ConvTranspose2dLayer() = default;
    ConvTranspose2dLayer(int in_ch, int out_ch, int k, int stride_, int pad_, std::mt19937& rng,
                         T wstd)
        : weight(normal_init<T>({in_ch, out_ch, k, k}, rng, wstd)),
          bias(Tensor<T>::zeros({out_ch}, true)),
          stride(stride_),
          pad(pad_) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride, pad);
    }
    int in_channels() const { return weight.dim(0); }
    int out_channels() const { return weight.dim(1); }
};

// Which statistics a batch-norm layer normalizes with.
enum class BnStats {
    batch,         // batch statistics, running stats updated (training)
    running,       // running statistics (standard eval)
    batch_frozen,  // batch statistics without touching running stats
};

template <class T>
struct BatchNorm2dLayer {
    Tensor<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);

    BatchNorm2dLayer() = default;
    explicit BatchNorm2dLayer(int channels)
        : gamma(Tensor<T>::filled({channels}, T(1), true)),
          beta(Tensor<T>::zeros({channels}, true)),
          running_mean(static_cast<std::size_t>(channels), T(0)),
          running_var(static_cast<std::size_t>(channels), T(1)) {}

    Tensor<T> operator()(const Tensor<T>& x, bool train) {
        return (*this)(x, train ? BnStats::batch : BnStats::running);
    }

    Tensor<T> operator()(const Tensor<T>& x, BnStats stats) {
        if (stats == BnStats::batch_frozen) {
            std::vector<T> rm = running_mean, rv = running_var;
            return batch_norm2d(x, gamma, beta, rm, rv, true, eps, momentum);
        }
        return batch_norm2d(x, gamma, beta, running_mean, running_var, stats == BnStats::batch,
                            eps, momentum);
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class T>
struct AdamState {
    long long step_count = 0;
    T beta1 = T(0.5);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
    T learning_rate = T(0.0002);
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

// One Adam update with bias correction. Parameter list order must stay
// stable across steps; moment buffers are allocated on first use.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i].numel(), T(0));
            state.second_moment[i].assign(params[i].numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size())
        fail("adam_step: state tracks ", state.first_moment.size(), " parameters, got ",
             params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad())
            fail("adam_step: parameter ", i, " (", params[i].op(), ") has no gradient");
        if (state.first_moment[i].size() != params[i].numel())
            fail("adam_step: moment size mismatch on parameter ", i);
    }
    state.step_count += 1;
    const T b1 = state.beta1, b2 = state.beta2;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(b1),
                                                 static_cast<double>(state.step_count)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(b2),
                                                 static_cast<double>(state.step_count)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i].data();
        const auto& g = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            theta[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace tryon
