#pragma once

// Dense N-d tensors with reverse-mode differentiation. A Tensor is a cheap
// handle onto a shared node holding row-major values, an optional gradient
// buffer and, for op results that need gradients, the parent handles plus a
// backward closure. backward() on a scalar walks the graph in reverse
// topological order and accumulates gradients additively; callers zero
// parameter gradients between optimizer steps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

#include "tryon/common.hpp"
#include "tryon/kernels.hpp"

namespace tryon {

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Tensor<T>> parents;
    std::function<void(Node<T>&)> backward;

    std::size_t numel() const { return value.size(); }
    void accum_grad(const T* g, std::size_t count) {
        if (grad.empty()) grad.assign(value.size(), T(0));
        for (std::size_t i = 0; i < count; ++i) grad[i] += g[i];
    }
};

}  // namespace detail

template <class T>
class Tensor {
public:
    using Node = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(std::vector<int> shape, T value, bool requires_grad = false) {
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->value.assign(shape_numel(t.n_->shape), value);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<T> data,
                            bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            fail("tensor: shape product ", shape_numel(shape), " != data length ", data.size());
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(n_->shape.size()); }
    std::size_t numel() const { return n_->value.size(); }

    std::vector<T>& data() { return n_->value; }
    const std::vector<T>& data() const { return n_->value; }
    T item() const {
        if (numel() != 1) fail("item(): tensor has ", numel(), " elements, expected 1");
        return n_->value[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool v) { n_->requires_grad = v; }
    bool has_grad() const { return !n_->grad.empty(); }
    std::vector<T>& grad() {
        if (n_->grad.empty()) n_->grad.assign(n_->value.size(), T(0));
        return n_->grad;
    }
    const std::vector<T>& grad() const { return n_->grad; }
    void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }
    const char* op() const { return n_->op; }

    Node* node() const { return n_.get(); }

    // Reverse-mode sweep from a scalar. Gradients accumulate additively on
    // every requires_grad tensor reachable through the graph.
    void backward() const {
        if (numel() != 1) fail("backward(): loss must be scalar, got ", numel(), " elements");
        std::vector<Node*> order = topo_order();
        // interior grads are scratch for this sweep; only leaves accumulate
        // across sweeps until explicitly zeroed
        for (Node* nd : order)
            if (nd->backward) nd->grad.clear();
        n_->accum_grad(nullptr, 0);  // allocate
        n_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* nd = *it;
            if (nd->backward && !nd->grad.empty()) nd->backward(*nd);
        }
    }

    std::vector<Node*> topo_order() const {
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        struct Frame { Node* node; std::size_t next; };
        std::vector<Frame> stack;
        if (!seen.insert(n_.get()).second) return order;
        stack.push_back({n_.get(), 0});
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.node->parents.size()) {
                Node* p = f.node->parents[f.next++].node();
                if (seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
        return order;  // parents before children; reverse for backprop
    }

    static std::size_t shape_numel(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) fail("tensor: non-positive dimension ", d);
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    // Internal: wrap an op result. Parents and closure are only retained when
    // a gradient can flow, so pure data pipelines free eagerly.
    static Tensor make_result(std::vector<int> shape, std::vector<T> value, const char* op,
                              std::vector<Tensor> parents,
                              std::function<void(Node&)> backward) {
        Tensor t = from_data(std::move(shape), std::move(value));
        t.n_->op = op;
        bool needs = false;
        for (const Tensor& p : parents) needs = needs || p.requires_grad();
        if (needs) {
            t.n_->requires_grad = true;
            t.n_->parents = std::move(parents);
            t.n_->backward = std::move(backward);
        }
        return t;
    }

private:
    std::shared_ptr<Node> n_;
};

// ---------------------------------------------------------------------------
// elementwise and reduction ops
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        std::string sa, sb;
        for (int d : a.shape()) sa += cat(d, " ");
        for (int d : b.shape()) sb += cat(d, " ");
        fail(op, ": shape mismatch [", sa, "] vs [", sb, "]");
    }
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    const auto &av = a.data(), &bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), "add", {a, b},
                                  [](detail::Node<T>& self) {
                                      auto& g = self.grad;
                                      if (self.parents[0].requires_grad())
                                          self.parents[0].node()->accum_grad(g.data(), g.size());
                                      if (self.parents[1].requires_grad())
                                          self.parents[1].node()->accum_grad(g.data(), g.size());
                                  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    const auto &av = a.data(), &bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), "sub", {a, b},
                                  [](detail::Node<T>& self) {
                                      auto& g = self.grad;
                                      if (self.parents[0].requires_grad())
                                          self.parents[0].node()->accum_grad(g.data(), g.size());
                                      if (self.parents[1].requires_grad()) {
                                          auto* p = self.parents[1].node();
                                          if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                                          for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] -= g[i];
                                      }
                                  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    const auto &av = a.data(), &bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return Tensor<T>::make_result(
        a.shape(), std::move(out), "mul", {a, b}, [](detail::Node<T>& self) {
            auto& g = self.grad;
            auto& av = self.parents[0].data();
            auto& bv = self.parents[1].data();
            if (self.parents[0].requires_grad()) {
                auto* p = self.parents[0].node();
                if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i] * bv[i];
            }
            if (self.parents[1].requires_grad()) {
                auto* p = self.parents[1].node();
                if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i] * av[i];
            }
        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return Tensor<T>::make_result(a.shape(), std::move(out), "scale", {a},
                                  [s](detail::Node<T>& self) {
                                      auto& g = self.grad;
                                      auto* p = self.parents[0].node();
                                      if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                          p->grad[i] += g[i] * s;
                                  });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    return Tensor<T>::make_result(a.shape(), std::move(out), "add_scalar", {a},
                                  [](detail::Node<T>& self) {
                                      self.parents[0].node()->accum_grad(self.grad.data(),
                                                                         self.grad.size());
                                  });
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(av[i]);
    // subgradient at 0 resolves to 0
    return Tensor<T>::make_result(a.shape(), std::move(out), "abs", {a},
                                  [](detail::Node<T>& self) {
                                      auto& g = self.grad;
                                      auto& av = self.parents[0].data();
                                      auto* p = self.parents[0].node();
                                      if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          const T s = av[i] > T(0) ? T(1) : (av[i] < T(0) ? T(-1) : T(0));
                                          p->grad[i] += g[i] * s;
                                      }
                                  });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    return Tensor<T>::make_result({1}, {acc}, "sum", {a}, [](detail::Node<T>& self) {
        const T g = self.grad[0];
        auto* p = self.parents[0].node();
        if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    const T inv = T(1) / static_cast<T>(a.numel());
    return Tensor<T>::make_result({1}, {acc * inv}, "mean", {a}, [inv](detail::Node<T>& self) {
        const T g = self.grad[0] * inv;
        auto* p = self.parents[0].node();
        if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    });
}

enum class Act { relu, leaky_relu, sigmoid, tanh };

template <class T>
Tensor<T> activation(const Tensor<T>& a, Act kind, T slope = T(0.2)) {
    if (kind == Act::leaky_relu && (slope < T(0) || slope >= T(1)))
        fail("activation: leaky_relu slope must be in [0,1), got ", slope);
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    switch (kind) {
        case Act::relu:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
            break;
        case Act::leaky_relu:
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = av[i] > T(0) ? av[i] : slope * av[i];
            break;
        case Act::sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-av[i]));
            break;
        case Act::tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
            break;
    }
    std::vector<T> saved = (kind == Act::sigmoid || kind == Act::tanh) ? out : std::vector<T>();
    return Tensor<T>::make_result(
        a.shape(), std::move(out), "activation", {a},
        [kind, slope, saved = std::move(saved)](detail::Node<T>& self) {
            auto& g = self.grad;
            auto& av = self.parents[0].data();
            auto* p = self.parents[0].node();
            if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
            switch (kind) {
                case Act::relu:
                    for (std::size_t i = 0; i < g.size(); ++i)
                        p->grad[i] += av[i] > T(0) ? g[i] : T(0);
                    break;
                case Act::leaky_relu:
                    for (std::size_t i = 0; i < g.size(); ++i)
                        p->grad[i] += g[i] * (av[i] > T(0) ? T(1) : slope);
                    break;
                case Act::sigmoid:
                    for (std::size_t i = 0; i < g.size(); ++i)
                        p->grad[i] += g[i] * saved[i] * (T(1) - saved[i]);
                    break;
                case Act::tanh:
                    for (std::size_t i = 0; i < g.size(); ++i)
                        p->grad[i] += g[i] * (T(1) - saved[i] * saved[i]);
                    break;
            }
        });
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
    if (inputs.empty()) fail("concat_channels: no inputs");
    const auto& s0 = inputs[0].shape();
    if (s0.size() != 4) fail("concat_channels: expected NCHW tensors, got ", s0.size(), " dims");
    int total_c = 0;
    for (const auto& t : inputs) {
        const auto& s = t.shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            fail("concat_channels: spatial/batch mismatch (expected ", s0[0], "x?x", s0[2], "x",
                 s0[3], ")");
        total_c += s[1];
    }
    const int n = s0[0], h = s0[2], w = s0[3];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * total_c * plane);
    for (int ni = 0; ni < n; ++ni) {
        std::size_t co = 0;
        for (const auto& t : inputs) {
            const int ci = t.shape()[1];
            const T* src = t.data().data() + static_cast<std::size_t>(ni) * ci * plane;
            T* dst = out.data() + (static_cast<std::size_t>(ni) * total_c + co) * plane;
            std::copy(src, src + static_cast<std::size_t>(ci) * plane, dst);
            co += static_cast<std::size_t>(ci);
        }
    }
    return Tensor<T>::make_result(
        {n, total_c, h, w}, std::move(out), "concat", inputs,
        [n, total_c, plane](detail::Node<T>& self) {
            std::size_t co = 0;
            for (auto& parent : self.parents) {
                const int ci = parent.shape()[1];
                if (parent.requires_grad()) {
                    auto* p = parent.node();
                    if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                    for (int ni = 0; ni < n; ++ni) {
                        const T* g = self.grad.data() +
                                     (static_cast<std::size_t>(ni) * total_c + co) * plane;
                        T* dst = p->grad.data() + static_cast<std::size_t>(ni) * ci * plane;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(ci) * plane; ++i)
                            dst[i] += g[i];
                    }
                }
                co += static_cast<std::size_t>(ci);
            }
        });
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
    const auto& s = x.shape();
    if (s.size() != 4) fail("slice_channels: expected NCHW tensor");
    if (c0 < 0 || c1 > s[1] || c0 >= c1)
        fail("slice_channels: invalid range [", c0, ",", c1, ") for ", s[1], " channels");
    const int n = s[0], h = s[2], w = s[3], ci = s[1], cs = c1 - c0;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * cs * plane);
    for (int ni = 0; ni < n; ++ni) {
        const T* src = x.data().data() + (static_cast<std::size_t>(ni) * ci + c0) * plane;
        std::copy(src, src + static_cast<std::size_t>(cs) * plane,
                  out.data() + static_cast<std::size_t>(ni) * cs * plane);
    }
    return Tensor<T>::make_result(
        {n, cs, h, w}, std::move(out), "slice", {x},
        [n, ci, c0, cs, plane](detail::Node<T>& self) {
            auto* p = self.parents[0].node();
            if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
            for (int ni = 0; ni < n; ++ni) {
                const T* g = self.grad.data() + static_cast<std::size_t>(ni) * cs * plane;
                T* dst = p->grad.data() + (static_cast<std::size_t>(ni) * ci + c0) * plane;
                for (std::size_t i = 0; i < static_cast<std::size_t>(cs) * plane; ++i)
                    dst[i] += g[i];
            }
        });
}

// ---------------------------------------------------------------------------
// convolution / pooling / resize
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (xs.size() != 4) fail("conv2d: input must be NCHW, got ", xs.size(), " dims");
    if (ws.size() != 4) fail("conv2d: weight must be [out,in,kh,kw]");
    if (xs[1] != ws[1])
        fail("conv2d: input has ", xs[1], " channels, layer expects ", ws[1]);
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != ws[0]))
        fail("conv2d: bias must have ", ws[0], " entries");
    ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, pad};
    d.validate();
    const int oh = d.out_h(), ow = d.out_w();
    std::vector<T> out(static_cast<std::size_t>(d.n) * d.c_out * oh * ow);
    conv_fwd_omp(x.data().data(), weight.data().data(),
                 bias.defined() ? bias.data().data() : nullptr, out.data(), d);
    std::vector<Tensor<T>> parents = {x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<T>::make_result(
        {d.n, d.c_out, oh, ow}, std::move(out), "conv2d", std::move(parents),
        [d](detail::Node<T>& self) {
            const T* gy = self.grad.data();
            Tensor<T>& x = self.parents[0];
            Tensor<T>& w = self.parents[1];
            if (x.requires_grad()) {
                std::vector<T> gx(x.numel());
                conv_bwd_input_omp(gy, w.data().data(), gx.data(), d);
                x.node()->accum_grad(gx.data(), gx.size());
            }
            if (w.requires_grad() || (self.parents.size() > 2 && self.parents[2].requires_grad())) {
                std::vector<T> gw(w.numel());
                std::vector<T> gb(static_cast<std::size_t>(d.c_out));
                conv_bwd_weight_omp(x.data().data(), gy, gw.data(),
                                    self.parents.size() > 2 ? gb.data() : nullptr, d);
                if (w.requires_grad()) w.node()->accum_grad(gw.data(), gw.size());
                if (self.parents.size() > 2 && self.parents[2].requires_grad())
                    self.parents[2].node()->accum_grad(gb.data(), gb.size());
            }
        });
}

// Transposed convolution: the adjoint of conv2d with the same weight array
// w[a,b,kh,kw]. It maps a-channel inputs to b-channel outputs, upsampling by
// `stride`. Output spatial size is (H-1)*stride - 2*pad + k.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (xs.size() != 4) fail("conv_transpose2d: input must be NCHW");
    if (ws.size() != 4) fail("conv_transpose2d: weight must be [in,out,kh,kw]");
    if (xs[1] != ws[0])
        fail("conv_transpose2d: input has ", xs[1], " channels, layer expects ", ws[0]);
    const int out_c = ws[1];
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != out_c))
        fail("conv_transpose2d: bias must have ", out_c, " entries");
    const int oh = (xs[2] - 1) * stride - 2 * pad + ws[2];
    const int ow = (xs[3] - 1) * stride - 2 * pad + ws[3];
    if (oh <= 0 || ow <= 0) fail("conv_transpose2d: non-positive output size");
    // Dims of the conv whose adjoint we are: maps [N,out_c,oh,ow] -> [N,in_c,H,W]
    ConvDims d{xs[0], out_c, oh, ow, xs[1], ws[2], ws[3], stride, pad};
    d.validate();
    std::vector<T> out(static_cast<std::size_t>(d.n) * out_c * oh * ow);
    conv_bwd_input_omp(x.data().data(), weight.data().data(), out.data(), d);
    if (bias.defined()) {
        const std::size_t plane = static_cast<std::size_t>(oh) * ow;
        for (int n = 0; n < d.n; ++n)
            for (int c = 0; c < out_c; ++c) {
                T* p = out.data() + (static_cast<std::size_t>(n) * out_c + c) * plane;
                const T b = bias.data()[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < plane; ++i) p[i] += b;
            }
    }
    std::vector<Tensor<T>> parents = {x, weight};
    if (bias.defined()) parents.push_back(bias);
    return Tensor<T>::make_result(
        {d.n, out_c, oh, ow}, std::move(out), "conv_transpose2d", std::move(parents),
        [d, out_c](detail::Node<T>& self) {
            const T* gy = self.grad.data();
            Tensor<T>& x = self.parents[0];
            Tensor<T>& w = self.parents[1];
            if (x.requires_grad()) {
                std::vector<T> gx(x.numel());
                conv_fwd_omp(gy, w.data().data(), static_cast<const T*>(nullptr), gx.data(), d);
                x.node()->accum_grad(gx.data(), gx.size());
            }
            if (w.requires_grad()) {
                std::vector<T> gw(w.numel());
                conv_bwd_weight_omp(gy, x.data().data(), gw.data(), static_cast<T*>(nullptr), d);
                w.node()->accum_grad(gw.data(), gw.size());
            }
            if (self.parents.size() > 2 && self.parents[2].requires_grad()) {
                const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
                std::vector<T> gb(static_cast<std::size_t>(out_c), T(0));
                for (int n = 0; n < d.n; ++n)
                    for (int c = 0; c < out_c; ++c) {
                        const T* p = gy + (static_cast<std::size_t>(n) * out_c + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) gb[static_cast<std::size_t>(c)] += p[i];
                    }
                self.parents[2].node()->accum_grad(gb.data(), gb.size());
            }
        });
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
    const auto& s = x.shape();
    if (s.size() != 4) fail("max_pool2d: input must be NCHW");
    if (s[2] % 2 != 0 || s[3] % 2 != 0)
        fail("max_pool2d: spatial size ", s[2], "x", s[3], " not divisible by 2");
    PoolDims d{s[0], s[1], s[2], s[3]};
    const int oh = d.out_h(), ow = d.out_w();
    std::vector<T> out(static_cast<std::size_t>(d.n) * d.c * oh * ow);
    std::vector<int> argmax(out.size());
    maxpool2_fwd_omp(x.data().data(), out.data(), argmax.data(), d);
    return Tensor<T>::make_result(
        {d.n, d.c, oh, ow}, std::move(out), "max_pool2d", {x},
        [d, argmax = std::move(argmax)](detail::Node<T>& self) {
            auto* p = self.parents[0].node();
            if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
            const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
            const std::size_t out_plane = static_cast<std::size_t>(d.out_h()) * d.out_w();
            for (int pl = 0; pl < d.n * d.c; ++pl) {
                T* gx = p->grad.data() + static_cast<std::size_t>(pl) * in_plane;
                const T* gy = self.grad.data() + static_cast<std::size_t>(pl) * out_plane;
                const int* am = argmax.data() + static_cast<std::size_t>(pl) * out_plane;
                for (std::size_t i = 0; i < out_plane; ++i) gx[am[i]] += gy[i];
            }
        });
}

// Bilinear resize with the align-corners convention: corner pixels of the
// input map exactly onto corner pixels of the output.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
    const auto& s = x.shape();
    if (s.size() != 4) fail("bilinear_resize: input must be NCHW");
    if (out_h < 1 || out_w < 1) fail("bilinear_resize: target size must be >= 1");
    const int n = s[0], c = s[1], h = s[2], w = s[3];
    if (out_h == h && out_w == w) {
        std::vector<T> out = x.data();
        return Tensor<T>::make_result({n, c, h, w}, std::move(out), "bilinear_resize", {x},
                                      [](detail::Node<T>& self) {
                                          self.parents[0].node()->accum_grad(self.grad.data(),
                                                                             self.grad.size());
                                      });
    }
    const T sy = out_h > 1 ? static_cast<T>(h - 1) / static_cast<T>(out_h - 1) : T(0);
    const T sx = out_w > 1 ? static_cast<T>(w - 1) / static_cast<T>(out_w - 1) : T(0);
    std::vector<T> out(static_cast<std::size_t>(n) * c * out_h * out_w);
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < n * c; ++pl) {
        const T* xp = x.data().data() + static_cast<std::size_t>(pl) * h * w;
        T* yp = out.data() + static_cast<std::size_t>(pl) * out_h * out_w;
        for (int a = 0; a < out_h; ++a) {
            const T fy = static_cast<T>(a) * sy;
            const int y0 = std::min(static_cast<int>(fy), h - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const T wy = fy - static_cast<T>(y0);
            for (int b = 0; b < out_w; ++b) {
                const T fx = static_cast<T>(b) * sx;
                const int x0 = std::min(static_cast<int>(fx), w - 1);
                const int x1 = std::min(x0 + 1, w - 1);
                const T wx = fx - static_cast<T>(x0);
                yp[a * out_w + b] = (T(1) - wy) * ((T(1) - wx) * xp[y0 * w + x0] + wx * xp[y0 * w + x1]) +
                                    wy * ((T(1) - wx) * xp[y1 * w + x0] + wx * xp[y1 * w + x1]);
            }
        }
    }
    return Tensor<T>::make_result(
        {n, c, out_h, out_w}, std::move(out), "bilinear_resize", {x},
        [n, c, h, w, out_h, out_w, sy, sx](detail::Node<T>& self) {
            auto* p = self.parents[0].node();
            if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
            for (int pl = 0; pl < n * c; ++pl) {
                T* gx = p->grad.data() + static_cast<std::size_t>(pl) * h * w;
                const T* gy = self.grad.data() + static_cast<std::size_t>(pl) * out_h * out_w;
                for (int a = 0; a < out_h; ++a) {
                    const T fy = static_cast<T>(a) * sy;
                    const int y0 = std::min(static_cast<int>(fy), h - 1);
                    const int y1 = std::min(y0 + 1, h - 1);
                    const T wy = fy - static_cast<T>(y0);
                    for (int b = 0; b < out_w; ++b) {
                        const T fx = static_cast<T>(b) * sx;
                        const int x0 = std::min(static_cast<int>(fx), w - 1);
                        const int x1 = std::min(x0 + 1, w - 1);
                        const T wx = fx - static_cast<T>(x0);
                        const T g = gy[a * out_w + b];
                        gx[y0 * w + x0] += g * (T(1) - wy) * (T(1) - wx);
                        gx[y0 * w + x1] += g * (T(1) - wy) * wx;
                        gx[y1 * w + x0] += g * wy * (T(1) - wx);
                        gx[y1 * w + x1] += g * wy * wx;
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// normalization / regularization
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       std::vector<T>& running_mean, std::vector<T>& running_var, bool train,
                       T eps = T(1e-5), T momentum = T(0.1)) {
    const auto& s = x.shape();
    if (s.size() != 4) fail("batch_norm2d: input must be NCHW");
    const int n = s[0], c = s[1], h = s[2], w = s[3];
    if (gamma.numel() != static_cast<std::size_t>(c) || beta.numel() != static_cast<std::size_t>(c))
        fail("batch_norm2d: gamma/beta must have ", c, " entries");
    if (running_mean.size() != static_cast<std::size_t>(c) ||
        running_var.size() != static_cast<std::size_t>(c))
        fail("batch_norm2d: running stats must have ", c, " entries");
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * plane;
    if (train && m < 2)
        fail("batch_norm2d: train mode needs at least 2 elements per channel, got ", m);

    std::vector<T> mean(c), inv_std(c);
    if (train) {
        for (int ci = 0; ci < c; ++ci) {
            T mu = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const T* p = x.data().data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) mu += p[i];
            }
            mu /= static_cast<T>(m);
            T var = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const T* p = x.data().data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const T d = p[i] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<T>(m);
            mean[ci] = mu;
            inv_std[ci] = T(1) / std::sqrt(var + eps);
            running_mean[ci] = (T(1) - momentum) * running_mean[ci] + momentum * mu;
            const T var_unbiased = var * static_cast<T>(m) / static_cast<T>(m - 1);
            running_var[ci] = (T(1) - momentum) * running_var[ci] + momentum * var_unbiased;
        }
    } else {
        for (int ci = 0; ci < c; ++ci) {
            mean[ci] = running_mean[ci];
            inv_std[ci] = T(1) / std::sqrt(running_var[ci] + eps);
        }
    }

    std::vector<T> out(x.numel());
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const T* p = x.data().data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            T* o = out.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            const T mu = mean[ci], is = inv_std[ci];
            const T g = gamma.data()[static_cast<std::size_t>(ci)],
                    b = beta.data()[static_cast<std::size_t>(ci)];
            for (std::size_t i = 0; i < plane; ++i) o[i] = (p[i] - mu) * is * g + b;
        }

    return Tensor<T>::make_result(
        {n, c, h, w}, std::move(out), "batch_norm2d", {x, gamma, beta},
        [n, c, plane, m, train, mean = std::move(mean),
         inv_std = std::move(inv_std)](detail::Node<T>& self) {
            Tensor<T>& x = self.parents[0];
            Tensor<T>& gamma = self.parents[1];
            Tensor<T>& beta = self.parents[2];
            const T* gy = self.grad.data();
            std::vector<T> sum_gy(c, T(0)), sum_gy_xhat(c, T(0));
            for (int ni = 0; ni < n; ++ni)
                for (int ci = 0; ci < c; ++ci) {
                    const T* xp = x.data().data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                    const T* gp = gy + (static_cast<std::size_t>(ni) * c + ci) * plane;
                    T a = T(0), b = T(0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        a += gp[i];
                        b += gp[i] * (xp[i] - mean[ci]) * inv_std[ci];
                    }
                    sum_gy[ci] += a;
                    sum_gy_xhat[ci] += b;
                }
            if (beta.requires_grad()) beta.node()->accum_grad(sum_gy.data(), sum_gy.size());
            if (gamma.requires_grad())
                gamma.node()->accum_grad(sum_gy_xhat.data(), sum_gy_xhat.size());
            if (x.requires_grad()) {
                auto* p = x.node();
                if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                const T invm = T(1) / static_cast<T>(m);
                for (int ni = 0; ni < n; ++ni)
                    for (int ci = 0; ci < c; ++ci) {
                        const T* xp =
                            x.data().data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                        const T* gp = gy + (static_cast<std::size_t>(ni) * c + ci) * plane;
                        T* gxp = p->grad.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                        const T g = gamma.data()[static_cast<std::size_t>(ci)];
                        const T is = inv_std[ci];
                        if (train) {
                            for (std::size_t i = 0; i < plane; ++i) {
                                const T xhat = (xp[i] - mean[ci]) * is;
                                gxp[i] += g * is *
                                          (gp[i] - invm * sum_gy[ci] - xhat * invm * sum_gy_xhat[ci]);
                            }
                        } else {
                            for (std::size_t i = 0; i < plane; ++i) gxp[i] += g * is * gp[i];
                        }
                    }
            }
        });
}

// Inverted dropout: train mode zeroes elements with probability p and scales
// survivors by 1/(1-p); eval mode is the identity.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, T p, bool train, std::mt19937& rng) {
    if (p < T(0) || p >= T(1)) fail("dropout: p must be in [0,1), got ", p);
    if (!train || p == T(0)) {
        std::vector<T> out = x.data();
        return Tensor<T>::make_result(x.shape(), std::move(out), "dropout", {x},
                                      [](detail::Node<T>& self) {
                                          self.parents[0].node()->accum_grad(self.grad.data(),
                                                                             self.grad.size());
                                      });
    }
    const T keep = T(1) - p;
    const T inv_keep = T(1) / keep;
    std::vector<std::uint8_t> mask(x.numel());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& mk : mask) mk = uni(rng) >= static_cast<double>(p) ? 1 : 0;
    std::vector<T> out(x.numel());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? xv[i] * inv_keep : T(0);
    return Tensor<T>::make_result(
        x.shape(), std::move(out), "dropout", {x},
        [inv_keep, mask = std::move(mask)](detail::Node<T>& self) {
            auto* p = self.parents[0].node();
            if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (mask[i]) p->grad[i] += self.grad[i] * inv_keep;
        });
}

// ---------------------------------------------------------------------------
// compositing and total variation
// ---------------------------------------------------------------------------

// out = alpha * a + (1 - alpha) * b, with the 1-channel alpha broadcast
// across the channels of a and b.
template <class T>
Tensor<T> blend(const Tensor<T>& alpha, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "blend");
    const auto& as = alpha.shape();
    const auto& s = a.shape();
    if (as.size() != 4 || s.size() != 4 || as[1] != 1 || as[0] != s[0] || as[2] != s[2] ||
        as[3] != s[3])
        fail("blend: alpha must be [N,1,H,W] matching inputs");
    const int n = s[0], c = s[1];
    const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
    std::vector<T> out(a.numel());
    for (int ni = 0; ni < n; ++ni) {
        const T* al = alpha.data().data() + static_cast<std::size_t>(ni) * plane;
        for (int ci = 0; ci < c; ++ci) {
            const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
            const T* ap = a.data().data() + off;
            const T* bp = b.data().data() + off;
            T* op = out.data() + off;
            for (std::size_t i = 0; i < plane; ++i)
                op[i] = al[i] * ap[i] + (T(1) - al[i]) * bp[i];
        }
    }
    return Tensor<T>::make_result(
        s, std::move(out), "blend", {alpha, a, b}, [n, c, plane](detail::Node<T>& self) {
            Tensor<T>& alpha = self.parents[0];
            Tensor<T>& a = self.parents[1];
            Tensor<T>& b = self.parents[2];
            const T* gy = self.grad.data();
            if (alpha.requires_grad()) {
                auto* p = alpha.node();
                if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                for (int ni = 0; ni < n; ++ni) {
                    T* gal = p->grad.data() + static_cast<std::size_t>(ni) * plane;
                    for (int ci = 0; ci < c; ++ci) {
                        const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
                        const T* ap = a.data().data() + off;
                        const T* bp = b.data().data() + off;
                        const T* g = gy + off;
                        for (std::size_t i = 0; i < plane; ++i) gal[i] += g[i] * (ap[i] - bp[i]);
                    }
                }
            }
            for (int which = 1; which <= 2; ++which) {
                Tensor<T>& t = self.parents[static_cast<std::size_t>(which)];
                if (!t.requires_grad()) continue;
                auto* p = t.node();
                if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
                for (int ni = 0; ni < n; ++ni) {
                    const T* al = alpha.data().data() + static_cast<std::size_t>(ni) * plane;
                    for (int ci = 0; ci < c; ++ci) {
                        const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
                        const T* g = gy + off;
                        T* gp = p->grad.data() + off;
                        for (std::size_t i = 0; i < plane; ++i)
                            gp[i] += g[i] * (which == 1 ? al[i] : T(1) - al[i]);
                    }
                }
            }
        });
}

// Anisotropic total variation with forward differences, no wraparound.
// Per-sample sums are averaged over the batch. Subgradients at exact ties
// resolve to 0.
template <class T>
Tensor<T> tv_norm(const Tensor<T>& x) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != 1) fail("tv_norm: input must be [N,1,H,W]");
    const int n = s[0], h = s[2], w = s[3];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    T total = T(0);
    for (int ni = 0; ni < n; ++ni) {
        const T* p = x.data().data() + static_cast<std::size_t>(ni) * plane;
        for (int a = 0; a + 1 < h; ++a)
            for (int b = 0; b < w; ++b) total += std::abs(p[(a + 1) * w + b] - p[a * w + b]);
        for (int a = 0; a < h; ++a)
            for (int b = 0; b + 1 < w; ++b) total += std::abs(p[a * w + b + 1] - p[a * w + b]);
    }
    total /= static_cast<T>(n);
    return Tensor<T>::make_result(
        {1}, {total}, "tv_norm", {x}, [n, h, w, plane](detail::Node<T>& self) {
            auto* p = self.parents[0].node();
            if (p->grad.empty()) p->grad.assign(p->value.size(), T(0));
            const T g = self.grad[0] / static_cast<T>(n);
            for (int ni = 0; ni < n; ++ni) {
                const T* xp = p->value.data() + static_cast<std::size_t>(ni) * plane;
                T* gp = p->grad.data() + static_cast<std::size_t>(ni) * plane;
                auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
                for (int a = 0; a + 1 < h; ++a)
                    for (int b = 0; b < w; ++b) {
                        const T sg = sign(xp[(a + 1) * w + b] - xp[a * w + b]) * g;
                        gp[(a + 1) * w + b] += sg;
                        gp[a * w + b] -= sg;
                    }
                for (int a = 0; a < h; ++a)
                    for (int b = 0; b + 1 < w; ++b) {
                        const T sg = sign(xp[a * w + b + 1] - xp[a * w + b]) * g;
                        gp[a * w + b + 1] += sg;
                        gp[a * w + b] -= sg;
                    }
            }
        });
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

template <class T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// Walks the graph below `loss` in forward topological order and returns the
// op name of the first tensor holding a non-finite value, or nullptr.
template <class T>
const char* first_nonfinite(const Tensor<T>& loss) {
    for (auto* nd : loss.topo_order()) {
        for (T v : nd->value)
            if (!std::isfinite(v)) return nd->op;
    }
    return nullptr;
}

}  // namespace tryon
