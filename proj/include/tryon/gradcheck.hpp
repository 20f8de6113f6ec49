#pragma once

// Finite-difference gradient oracle. Always runs in double precision: the
// analytic gradient from backward() is compared against central differences
// of the re-evaluated forward function, element by element.

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "tryon/coarse.hpp"
#include "tryon/refine.hpp"
#include "tryon/tensor.hpp"

namespace tryon {

inline constexpr double kGradCheckStep = 1e-4;

// Max relative error between analytic and numeric gradients over the given
// leaves. `make_loss` must rebuild the identical scalar loss on every call
// (re-seeding any randomness internally). per_leaf limits how many elements
// are probed per leaf (0 = all), using an even deterministic stride.
//
// The losses contain L1 terms, so a probe interval can straddle a kink where
// the derivative does not exist; central differences measure the average of
// the one-sided slopes there. Such probes are detected by comparing full-
// and half-step difference quotients (they agree to O(h^2) only where the
// function is locally smooth) and excluded, with a cap on how many probes
// may be excluded.
inline double gradcheck_max_rel_error(std::vector<Tensor<double>> leaves,
                                      const std::function<Tensor<double>()>& make_loss,
                                      double h = kGradCheckStep, int per_leaf = 0) {
    for (auto& leaf : leaves) {
        if (!leaf.requires_grad()) fail("gradcheck: leaf tensor does not require gradients");
        leaf.zero_grad();
    }
    Tensor<double> loss = make_loss();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    double max_err = 0.0;
    std::size_t total_probes = 0, skipped = 0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].data();
        const std::size_t n = data.size();
        const std::size_t probes = per_leaf > 0 ? std::min<std::size_t>(n, static_cast<std::size_t>(per_leaf)) : n;
        for (std::size_t k = 0; k < probes; ++k) {
            const std::size_t i = probes == n ? k : k * n / probes;
            const double saved = data[i];
            auto eval_at = [&](double v) {
                data[i] = v;
                return make_loss().item();
            };
            const double fp = eval_at(saved + h);
            const double fm = eval_at(saved - h);
            const double fph = eval_at(saved + h / 2);
            const double fmh = eval_at(saved - h / 2);
            data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double numeric_half = (fph - fmh) / h;
            ++total_probes;
            if (std::abs(numeric - numeric_half) > 1e-6 * std::max(1.0, std::abs(numeric))) {
                ++skipped;  // kink inside the probe interval
                continue;
            }
            const double a = analytic[li][i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            max_err = std::max(max_err, std::abs(a - numeric) / denom);
        }
    }
    if (total_probes > 0 && skipped * 5 > total_probes)
        fail("gradcheck: ", skipped, " of ", total_probes, " probes hit nonsmooth points");
    return max_err;
}

namespace detail {

inline Tensor<double> random_tensor(std::vector<int> shape, std::mt19937& rng, bool rg,
                                    double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(Tensor<double>::shape_numel(shape));
    for (auto& x : v) x = uni(rng);
    return Tensor<double>::from_data(std::move(shape), std::move(v), rg);
}

// Projection to a scalar with fixed random coefficients so every output
// element participates in the loss.
inline Tensor<double> project(const Tensor<double>& y, std::mt19937& rng) {
    return sum_all(mul(y, random_tensor(y.shape(), rng, false)));
}

}  // namespace detail

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
};

// The standard per-op and full-loss gradient suite, `seeds` random draws per
// entry. Covers every differentiable op plus both training objectives.
inline std::vector<GradCheckResult> run_gradient_suite(int seeds) {
    std::vector<GradCheckResult> results;
    auto record = [&](const std::string& name, double err) {
        for (auto& r : results)
            if (r.name == name) {
                r.max_rel_err = std::max(r.max_rel_err, err);
                return;
            }
        results.push_back({name, err});
    };

    for (int seed = 0; seed < seeds; ++seed) {
        std::mt19937 rng = make_rng(static_cast<std::uint64_t>(seed) + 100);

        {  // elementwise composite: add/sub/mul/scale/abs/mean/sum
            auto a = detail::random_tensor({2, 3, 4, 4}, rng, true);
            auto b = detail::random_tensor({2, 3, 4, 4}, rng, true);
            record("elementwise", gradcheck_max_rel_error({a, b}, [&] {
                       auto s = add(mul(a, b), scale(sub(a, b), 0.7));
                       return add(mean_all(abs(s)), scale(sum_all(s), 0.01));
                   }));
        }
        {  // activations
            for (auto kind : {Act::relu, Act::leaky_relu, Act::sigmoid, Act::tanh}) {
                auto x = detail::random_tensor({2, 3, 5, 5}, rng, true, -2.0, 2.0);
                std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 1);
                auto pr = detail::random_tensor(x.shape(), prj, false);
                record("activation", gradcheck_max_rel_error({x}, [&] {
                           return sum_all(mul(activation(x, kind, 0.2), pr));
                       }));
            }
        }
        {  // conv2d
            const int stride = seed % 2 ? 2 : 1;
            auto x = detail::random_tensor({2, 3, 8, 8}, rng, true);
            auto w = detail::random_tensor({4, 3, 3, 3}, rng, true);
            auto b = detail::random_tensor({4}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 2);
            record("conv2d", gradcheck_max_rel_error({x, w, b}, [&, stride] {
                       std::mt19937 p2 = prj;
                       return detail::project(conv2d(x, w, b, stride, 1), p2);
                   }));
        }
        {  // conv_transpose2d
            auto x = detail::random_tensor({1, 4, 4, 4}, rng, true);
            auto w = detail::random_tensor({4, 3, 4, 4}, rng, true);
            auto b = detail::random_tensor({3}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 3);
            record("conv_transpose2d", gradcheck_max_rel_error({x, w, b}, [&] {
                       std::mt19937 p2 = prj;
                       return detail::project(conv_transpose2d(x, w, b, 2, 1), p2);
                   }));
        }
        {  // batch_norm2d, train and eval
            auto x = detail::random_tensor({2, 3, 4, 4}, rng, true);
            auto gamma = detail::random_tensor({3}, rng, true, 0.5, 1.5);
            auto beta = detail::random_tensor({3}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 4);
            record("batch_norm2d", gradcheck_max_rel_error({x, gamma, beta}, [&] {
                       std::vector<double> rm(3, 0.0), rv(3, 1.0);
                       std::mt19937 p2 = prj;
                       return detail::project(batch_norm2d(x, gamma, beta, rm, rv, true), p2);
                   }));
            std::vector<double> rm = {0.1, -0.2, 0.05}, rv = {1.1, 0.9, 1.4};
            record("batch_norm2d", gradcheck_max_rel_error({x, gamma, beta}, [&] {
                       std::vector<double> rm2 = rm, rv2 = rv;
                       std::mt19937 p2 = prj;
                       return detail::project(batch_norm2d(x, gamma, beta, rm2, rv2, false), p2);
                   }));
        }
        {  // dropout (mask re-seeded per evaluation)
            auto x = detail::random_tensor({2, 3, 6, 6}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 5);
            record("dropout", gradcheck_max_rel_error({x}, [&] {
                       std::mt19937 drop_rng = make_rng(static_cast<std::uint64_t>(seed) + 999);
                       std::mt19937 p2 = prj;
                       return detail::project(dropout(x, 0.3, true, drop_rng), p2);
                   }));
        }
        {  // max_pool2d
            auto x = detail::random_tensor({2, 3, 8, 8}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 6);
            record("max_pool2d", gradcheck_max_rel_error({x}, [&] {
                       std::mt19937 p2 = prj;
                       return detail::project(max_pool2d(x), p2);
                   }));
        }
        {  // bilinear_resize up and down
            auto x = detail::random_tensor({1, 2, 6, 6}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 7);
            record("bilinear_resize", gradcheck_max_rel_error({x}, [&] {
                       std::mt19937 p2 = prj;
                       return detail::project(bilinear_resize(x, 9, 5), p2);
                   }));
            record("bilinear_resize", gradcheck_max_rel_error({x}, [&] {
                       std::mt19937 p2 = prj;
                       return detail::project(bilinear_resize(x, 3, 4), p2);
                   }));
        }
        {  // concat + slice
            auto a = detail::random_tensor({2, 2, 4, 4}, rng, true);
            auto b = detail::random_tensor({2, 3, 4, 4}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 8);
            record("concat_slice", gradcheck_max_rel_error({a, b}, [&] {
                       std::mt19937 p2 = prj;
                       auto cc = concat_channels<double>({a, b});
                       return detail::project(slice_channels(cc, 1, 4), p2);
                   }));
        }
        {  // blend
            auto alpha = detail::random_tensor({2, 1, 5, 5}, rng, true, 0.1, 0.9);
            auto a = detail::random_tensor({2, 3, 5, 5}, rng, true);
            auto b = detail::random_tensor({2, 3, 5, 5}, rng, true);
            std::mt19937 prj = make_rng(static_cast<std::uint64_t>(seed) * 7 + 9);
            record("blend", gradcheck_max_rel_error({alpha, a, b}, [&] {
                       std::mt19937 p2 = prj;
                       return detail::project(blend(alpha, a, b), p2);
                   }));
        }
        {  // tv_norm
            auto x = detail::random_tensor({2, 1, 6, 6}, rng, true);
            record("tv_norm", gradcheck_max_rel_error({x}, [&] { return tv_norm(x); }));
        }
        {  // full stage-1 objective w.r.t. the generator outputs
            PerceptionNet<double> phi(static_cast<std::uint64_t>(seed) + 31, 0.08);
            auto image = detail::random_tensor({1, 3, 16, 16}, rng, true, 0.0, 1.0);
            auto mask = detail::random_tensor({1, 1, 16, 16}, rng, true, 0.0, 1.0);
            auto target_image = detail::random_tensor({1, 3, 16, 16}, rng, false, 0.0, 1.0);
            auto target_mask = detail::random_tensor({1, 1, 16, 16}, rng, false, 0.0, 1.0);
            LossWeights<double> weights;
            record("coarse_loss", gradcheck_max_rel_error(
                                      {image, mask},
                                      [&] {
                                          CoarseOutput<double> out{image, mask};
                                          return coarse_loss(out, target_image, target_mask,
                                                             weights, phi);
                                      },
                                      kGradCheckStep, 96));
        }
        {  // full stage-2 objective w.r.t. the refinement weights
            PerceptionNet<double> phi(static_cast<std::uint64_t>(seed) + 32, 0.08);
            RefinementNet<double> net(static_cast<std::uint64_t>(seed) + 33);
            auto warped = detail::random_tensor({1, 3, 16, 16}, rng, false, 0.0, 1.0);
            auto coarse = detail::random_tensor({1, 3, 16, 16}, rng, false, 0.0, 1.0);
            auto reference = detail::random_tensor({1, 3, 16, 16}, rng, false, 0.0, 1.0);
            RefinementLossConfig<double> cfg;
            std::vector<Tensor<double>> leaves = net.trainable_params();
            record("refinement_loss",
                   gradcheck_max_rel_error(
                       leaves,
                       [&] {
                           Tensor<double> alpha = net.forward(warped, coarse);
                           Tensor<double> composed = composite(alpha, warped, coarse);
                           return refinement_loss(composed, reference, alpha, cfg, phi);
                       },
                       kGradCheckStep, 12));
        }
    }
    return results;
}

}  // namespace tryon
