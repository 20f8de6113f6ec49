#pragma once

// Dense convolution / pooling kernels. Each kernel comes in two variants:
// *_serial is the plain reference loop nest, *_omp parallelizes over
// independent output slices. Both compute every output element with the
// same fixed accumulation order, so results are bit-identical regardless
// of variant or thread count.

#include <cstddef>
#include <vector>

#include "tryon/common.hpp"

namespace tryon {

struct ConvDims {
    int n = 0;       // batch
    int c_in = 0;    // input channels
    int h = 0, w = 0;
    int c_out = 0;
    int kh = 0, kw = 0;
    int stride = 1;
    int pad = 0;

    int out_h() const { return (h + 2 * pad - kh) / stride + 1; }
    int out_w() const { return (w + 2 * pad - kw) / stride + 1; }

    void validate() const {
        if (n <= 0 || c_in <= 0 || c_out <= 0 || kh <= 0 || kw <= 0)
            fail("conv: non-positive dimension (n=", n, " c_in=", c_in, " c_out=", c_out,
                 " kh=", kh, " kw=", kw, ")");
        if (stride <= 0) fail("conv: stride must be positive, got ", stride);
        if (pad < 0) fail("conv: padding must be nonnegative, got ", pad);
        if (h + 2 * pad < kh || w + 2 * pad < kw)
            fail("conv: kernel ", kh, "x", kw, " does not fit padded input ",
                 h + 2 * pad, "x", w + 2 * pad);
    }
};

namespace detail {

// y[n,o] plane accumulation for one (n,o). Weight-stationary: the inner
// loop runs along contiguous output columns so it vectorizes.
template <class T>
inline void conv_fwd_plane(const T* x, const T* w, const T* b, T* y, const ConvDims& d,
                           int n, int o) {
    const int oh = d.out_h(), ow = d.out_w();
    T* yp = y + (static_cast<std::size_t>(n) * d.c_out + o) * oh * ow;
    const T bias = b ? b[o] : T(0);
    for (int i = 0; i < oh * ow; ++i) yp[i] = bias;
    for (int c = 0; c < d.c_in; ++c) {
        const T* xp = x + (static_cast<std::size_t>(n) * d.c_in + c) * d.h * d.w;
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                const T wv = w[((static_cast<std::size_t>(o) * d.c_in + c) * d.kh + ki) * d.kw + kj];
                if (wv == T(0)) continue;
                for (int a = 0; a < oh; ++a) {
                    const int ih = a * d.stride - d.pad + ki;
                    if (ih < 0 || ih >= d.h) continue;
                    const T* xrow = xp + static_cast<std::size_t>(ih) * d.w;
                    T* yrow = yp + static_cast<std::size_t>(a) * ow;
                    // valid output columns: 0 <= b*stride - pad + kj < w
                    int b0 = 0;
                    while (b0 < ow && b0 * d.stride - d.pad + kj < 0) ++b0;
                    int b1 = ow;
                    while (b1 > b0 && (b1 - 1) * d.stride - d.pad + kj >= d.w) --b1;
                    if (d.stride == 1) {
                        const T* xs = xrow - d.pad + kj;
                        for (int bb = b0; bb < b1; ++bb) yrow[bb] += wv * xs[bb];
                    } else {
                        for (int bb = b0; bb < b1; ++bb)
                            yrow[bb] += wv * xrow[bb * d.stride - d.pad + kj];
                    }
                }
            }
        }
    }
}

// gx[n,c] plane: gather formulation, each input element sums its
// contributing outputs in a fixed (o,ki,kj) order.
template <class T>
inline void conv_bwd_input_plane(const T* gy, const T* w, T* gx, const ConvDims& d,
                                 int n, int c) {
    const int oh = d.out_h(), ow = d.out_w();
    T* gxp = gx + (static_cast<std::size_t>(n) * d.c_in + c) * d.h * d.w;
    for (int i = 0; i < d.h * d.w; ++i) gxp[i] = T(0);
    for (int o = 0; o < d.c_out; ++o) {
        const T* gyp = gy + (static_cast<std::size_t>(n) * d.c_out + o) * oh * ow;
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                const T wv = w[((static_cast<std::size_t>(o) * d.c_in + c) * d.kh + ki) * d.kw + kj];
                if (wv == T(0)) continue;
                for (int a = 0; a < oh; ++a) {
                    const int ih = a * d.stride - d.pad + ki;
                    if (ih < 0 || ih >= d.h) continue;
                    T* gxrow = gxp + static_cast<std::size_t>(ih) * d.w;
                    const T* gyrow = gyp + static_cast<std::size_t>(a) * ow;
                    int b0 = 0;
                    while (b0 < ow && b0 * d.stride - d.pad + kj < 0) ++b0;
                    int b1 = ow;
                    while (b1 > b0 && (b1 - 1) * d.stride - d.pad + kj >= d.w) --b1;
                    if (d.stride == 1) {
                        T* gxs = gxrow - d.pad + kj;
                        for (int bb = b0; bb < b1; ++bb) gxs[bb] += wv * gyrow[bb];
                    } else {
                        for (int bb = b0; bb < b1; ++bb)
                            gxrow[bb * d.stride - d.pad + kj] += wv * gyrow[bb];
                    }
                }
            }
        }
    }
}

template <class T>
inline void conv_bwd_weight_pair(const T* x, const T* gy, T* gw, const ConvDims& d,
                                 int o, int c) {
    const int oh = d.out_h(), ow = d.out_w();
    for (int ki = 0; ki < d.kh; ++ki) {
        for (int kj = 0; kj < d.kw; ++kj) {
            T acc = T(0);
            for (int n = 0; n < d.n; ++n) {
                const T* xp = x + (static_cast<std::size_t>(n) * d.c_in + c) * d.h * d.w;
                const T* gyp = gy + (static_cast<std::size_t>(n) * d.c_out + o) * oh * ow;
                for (int a = 0; a < oh; ++a) {
                    const int ih = a * d.stride - d.pad + ki;
                    if (ih < 0 || ih >= d.h) continue;
                    const T* xrow = xp + static_cast<std::size_t>(ih) * d.w;
                    const T* gyrow = gyp + static_cast<std::size_t>(a) * ow;
                    int b0 = 0;
                    while (b0 < ow && b0 * d.stride - d.pad + kj < 0) ++b0;
                    int b1 = ow;
                    while (b1 > b0 && (b1 - 1) * d.stride - d.pad + kj >= d.w) --b1;
                    if (d.stride == 1) {
                        const T* xs = xrow - d.pad + kj;
                        for (int bb = b0; bb < b1; ++bb) acc += xs[bb] * gyrow[bb];
                    } else {
                        for (int bb = b0; bb < b1; ++bb)
                            acc += xrow[bb * d.stride - d.pad + kj] * gyrow[bb];
                    }
                }
            }
            gw[((static_cast<std::size_t>(o) * d.c_in + c) * d.kh + ki) * d.kw + kj] = acc;
        }
    }
}

}  // namespace detail

// ---- forward: y[N,O,Ho,Wo] = cross-correlation(x, w) + bias ----

template <class T>
void conv_fwd_serial(const T* x, const T* w, const T* b, T* y, const ConvDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int o = 0; o < d.c_out; ++o) detail::conv_fwd_plane(x, w, b, y, d, n, o);
}

template <class T>
void conv_fwd_omp(const T* x, const T* w, const T* b, T* y, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int o = 0; o < d.c_out; ++o) detail::conv_fwd_plane(x, w, b, y, d, n, o);
}

// ---- backward w.r.t. input: gx = adjoint of conv_fwd applied to gy ----

template <class T>
void conv_bwd_input_serial(const T* gy, const T* w, T* gx, const ConvDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c_in; ++c) detail::conv_bwd_input_plane(gy, w, gx, d, n, c);
}

template <class T>
void conv_bwd_input_omp(const T* gy, const T* w, T* gx, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c_in; ++c) detail::conv_bwd_input_plane(gy, w, gx, d, n, c);
}

// ---- backward w.r.t. weights and bias ----

template <class T>
void conv_bwd_weight_serial(const T* x, const T* gy, T* gw, T* gb, const ConvDims& d) {
    for (int o = 0; o < d.c_out; ++o)
        for (int c = 0; c < d.c_in; ++c) detail::conv_bwd_weight_pair(x, gy, gw, d, o, c);
    if (gb) {
        const int plane = d.out_h() * d.out_w();
        for (int o = 0; o < d.c_out; ++o) {
            T acc = T(0);
            for (int n = 0; n < d.n; ++n) {
                const T* gyp = gy + (static_cast<std::size_t>(n) * d.c_out + o) * plane;
                for (int i = 0; i < plane; ++i) acc += gyp[i];
            }
            gb[o] = acc;
        }
    }
}

template <class T>
void conv_bwd_weight_omp(const T* x, const T* gy, T* gw, T* gb, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < d.c_out; ++o)
        for (int c = 0; c < d.c_in; ++c) detail::conv_bwd_weight_pair(x, gy, gw, d, o, c);
    if (gb) {
        const int plane = d.out_h() * d.out_w();
#pragma omp parallel for schedule(static)
        for (int o = 0; o < d.c_out; ++o) {
            T acc = T(0);
            for (int n = 0; n < d.n; ++n) {
                const T* gyp = gy + (static_cast<std::size_t>(n) * d.c_out + o) * plane;
                for (int i = 0; i < plane; ++i) acc += gyp[i];
            }
            gb[o] = acc;
        }
    }
}

// ---- 2x2 max pooling, stride 2 (window starts are disjoint) ----

struct PoolDims {
    int n = 0, c = 0, h = 0, w = 0;
    int out_h() const { return h / 2; }
    int out_w() const { return w / 2; }
};

template <class T>
void maxpool2_fwd_serial(const T* x, T* y, int* argmax, const PoolDims& d) {
    const int oh = d.out_h(), ow = d.out_w();
    for (int p = 0; p < d.n * d.c; ++p) {
        const T* xp = x + static_cast<std::size_t>(p) * d.h * d.w;
        T* yp = y + static_cast<std::size_t>(p) * oh * ow;
        int* ap = argmax + static_cast<std::size_t>(p) * oh * ow;
        for (int a = 0; a < oh; ++a) {
            for (int b = 0; b < ow; ++b) {
                int best = (2 * a) * d.w + 2 * b;
                T bv = xp[best];
                const int cand[3] = {(2 * a) * d.w + 2 * b + 1, (2 * a + 1) * d.w + 2 * b,
                                     (2 * a + 1) * d.w + 2 * b + 1};
                for (int k = 0; k < 3; ++k)
                    if (xp[cand[k]] > bv) { best = cand[k]; bv = xp[cand[k]]; }
                yp[a * ow + b] = bv;
                ap[a * ow + b] = best;
            }
        }
    }
}

template <class T>
void maxpool2_fwd_omp(const T* x, T* y, int* argmax, const PoolDims& d) {
    const int oh = d.out_h(), ow = d.out_w();
#pragma omp parallel for schedule(static)
    for (int p = 0; p < d.n * d.c; ++p) {
        const T* xp = x + static_cast<std::size_t>(p) * d.h * d.w;
        T* yp = y + static_cast<std::size_t>(p) * oh * ow;
        int* ap = argmax + static_cast<std::size_t>(p) * oh * ow;
        for (int a = 0; a < oh; ++a) {
            for (int b = 0; b < ow; ++b) {
                int best = (2 * a) * d.w + 2 * b;
                T bv = xp[best];
                const int cand[3] = {(2 * a) * d.w + 2 * b + 1, (2 * a + 1) * d.w + 2 * b,
                                     (2 * a + 1) * d.w + 2 * b + 1};
                for (int k = 0; k < 3; ++k)
                    if (xp[cand[k]] > bv) { best = cand[k]; bv = xp[cand[k]]; }
                yp[a * ow + b] = bv;
                ap[a * ow + b] = best;
            }
        }
    }
}

}  // namespace tryon
