#pragma once

// Forward/backward kernels for the fixed architectures in this project.
// Each backward accumulates parameter gradients into ParamBlock::grad and
// returns the gradient with respect to the kernel input.

#include <cmath>
#include <string>

#include "sflab/numkit/tensor.hpp"

namespace sflab::numkit {

inline constexpr double kEpsNorm = 1e-12;

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

// ---------------------------------------------------------------- affine
// W: [out, in], b: [out], x: any shape with size() == in (treated as flat).

inline void check_affine(const Tensor& x, const ParamBlock& W, const ParamBlock& b) {
    if (W.value.rank() != 2 || b.value.rank() != 1 || b.value.dim(0) != W.value.dim(0))
        throw DimensionError("affine: W " + shape_str(W.shape()) + ", b " + shape_str(b.shape()));
    if (x.size() != W.value.dim(1))
        throw DimensionError("affine: input size " + std::to_string(x.size()) + " but W expects " +
                             std::to_string(W.value.dim(1)));
}

inline Tensor affine(const Tensor& x, const ParamBlock& W, const ParamBlock& b) {
    check_affine(x, W, b);
    const std::size_t out = W.value.dim(0), in = W.value.dim(1);
    Tensor y(Shape{out});
    const double* w = W.value.data();
    const double* xv = x.data();
    for (std::size_t o = 0; o < out; ++o) {
        const double* row = w + o * in;
        double s = 0.0;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * xv[i];
        y[o] = s + b.value[o];
    }
    return y;
}

// When accumulate_params is false only the input gradient is produced (used
// for frozen layers that still pass gradient upstream).
inline Tensor affine_backward(const Tensor& x, ParamBlock& W, ParamBlock& b, const Tensor& grad_out,
                              bool accumulate_params = true) {
    check_affine(x, W, b);
    const std::size_t out = W.value.dim(0), in = W.value.dim(1);
    if (grad_out.size() != out)
        throw DimensionError("affine_backward: grad_out size " + std::to_string(grad_out.size()) +
                             " but output size is " + std::to_string(out));
    Tensor gx(x.shape());
    const double* w = W.value.data();
    const double* xv = x.data();
    double* gxv = gx.data();
    double* gw = W.grad.data();
    for (std::size_t o = 0; o < out; ++o) {
        const double g = grad_out[o];
        if (g == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) gxv[i] += row[i] * g;
        if (accumulate_params) {
            double* grow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) grow[i] += g * xv[i];
            b.grad[o] += g;
        }
    }
    return gx;
}

// ---------------------------------------------------------------- conv2d
// Valid cross-correlation, no padding, no bias.
// x: [C, H, W], K: [O, C, kh, kw] -> [O, (H-kh)/s+1, (W-kw)/s+1]

struct ConvGeometry {
    std::size_t in_c, in_h, in_w, out_c, kh, kw, stride, out_h, out_w;
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& k, std::size_t stride) {
    if (x.size() != 3 || k.size() != 4)
        throw DimensionError("conv2d: input " + shape_str(x) + ", kernel " + shape_str(k));
    if (stride == 0) throw DimensionError("conv2d: stride must be positive");
    if (k[1] != x[0])
        throw DimensionError("conv2d: kernel expects " + std::to_string(k[1]) + " channels, input has " +
                             std::to_string(x[0]));
    if (k[2] > x[1] || k[3] > x[2])
        throw DimensionError("conv2d: kernel " + shape_str(k) + " larger than input " + shape_str(x));
    ConvGeometry g{x[0], x[1], x[2], k[0], k[2], k[3], stride, 0, 0};
    g.out_h = (g.in_h - g.kh) / stride + 1;
    g.out_w = (g.in_w - g.kw) / stride + 1;
    return g;
}

inline Tensor conv2d(const Tensor& x, const ParamBlock& K, std::size_t stride) {
    const ConvGeometry g = conv_geometry(x.shape(), K.shape(), stride);
    Tensor y(Shape{g.out_c, g.out_h, g.out_w});
    const double* xv = x.data();
    const double* kv = K.value.data();
    double* yv = y.data();
    for (std::size_t o = 0; o < g.out_c; ++o) {
        double* yo = yv + o * g.out_h * g.out_w;
        for (std::size_t c = 0; c < g.in_c; ++c) {
            const double* xc = xv + c * g.in_h * g.in_w;
            for (std::size_t ki = 0; ki < g.kh; ++ki) {
                for (std::size_t kj = 0; kj < g.kw; ++kj) {
                    const double kval = kv[((o * g.in_c + c) * g.kh + ki) * g.kw + kj];
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const double* xr = xc + (oy * g.stride + ki) * g.in_w + kj;
                        double* yr = yo + oy * g.out_w;
                        if (g.stride == 1) {
                            for (std::size_t ox = 0; ox < g.out_w; ++ox) yr[ox] += kval * xr[ox];
                        } else {
                            for (std::size_t ox = 0; ox < g.out_w; ++ox) yr[ox] += kval * xr[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
    return y;
}

// need_input_grad=false skips the input gradient (first layer sees pixels).
inline Tensor conv2d_backward(const Tensor& x, ParamBlock& K, std::size_t stride, const Tensor& grad_out,
                              bool need_input_grad = true) {
    const ConvGeometry g = conv_geometry(x.shape(), K.shape(), stride);
    if (grad_out.shape() != Shape{g.out_c, g.out_h, g.out_w})
        throw DimensionError("conv2d_backward: grad_out " + shape_str(grad_out.shape()));
    Tensor gx;
    if (need_input_grad) gx = Tensor(x.shape());
    const double* xv = x.data();
    const double* kv = K.value.data();
    double* kg = K.grad.data();
    const double* gv = grad_out.data();
    for (std::size_t o = 0; o < g.out_c; ++o) {
        const double* go = gv + o * g.out_h * g.out_w;
        for (std::size_t c = 0; c < g.in_c; ++c) {
            const double* xc = xv + c * g.in_h * g.in_w;
            double* gxc = need_input_grad ? gx.data() + c * g.in_h * g.in_w : nullptr;
            for (std::size_t ki = 0; ki < g.kh; ++ki) {
                for (std::size_t kj = 0; kj < g.kw; ++kj) {
                    const std::size_t kidx = ((o * g.in_c + c) * g.kh + ki) * g.kw + kj;
                    const double kval = kv[kidx];
                    double acc = 0.0;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const std::size_t base = (oy * g.stride + ki) * g.in_w + kj;
                        const double* xr = xc + base;
                        const double* gr = go + oy * g.out_w;
                        if (g.stride == 1) {
                            for (std::size_t ox = 0; ox < g.out_w; ++ox) acc += gr[ox] * xr[ox];
                            if (gxc) {
                                double* gxr = gxc + base;
                                for (std::size_t ox = 0; ox < g.out_w; ++ox) gxr[ox] += kval * gr[ox];
                            }
                        } else {
                            for (std::size_t ox = 0; ox < g.out_w; ++ox) acc += gr[ox] * xr[ox * g.stride];
                            if (gxc) {
                                double* gxr = gxc + base;
                                for (std::size_t ox = 0; ox < g.out_w; ++ox) gxr[ox * g.stride] += kval * gr[ox];
                            }
                        }
                    }
                    kg[kidx] += acc;
                }
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------- activation

inline Tensor activation(const Tensor& x, Activation kind) {
    Tensor y(x.shape());
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    }
    return y;
}

// x is the activation input. ReLU subgradient at 0 is 0.
inline Tensor activation_backward(const Tensor& x, Activation kind, const Tensor& grad_out) {
    require_same_shape(x, grad_out, "activation_backward");
    Tensor gx(x.shape());
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double t = std::tanh(x[i]);
            gx[i] = (1.0 - t * t) * grad_out[i];
        }
    }
    return gx;
}

// ---------------------------------------------------------------- l2 normalize

inline Tensor l2_normalize(const Tensor& x) {
    const double n = norm2(x.span());
    if (!(n >= kEpsNorm)) throw DegenerateInputError("l2_normalize: norm " + std::to_string(n) + " below eps");
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / n;
    return y;
}

// Jacobian (I - y y^T) / ||x||
inline Tensor l2_normalize_backward(const Tensor& x, const Tensor& grad_out) {
    require_same_shape(x, grad_out, "l2_normalize_backward");
    const double n = norm2(x.span());
    if (!(n >= kEpsNorm)) throw DegenerateInputError("l2_normalize: norm " + std::to_string(n) + " below eps");
    double yg = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) yg += x[i] * grad_out[i];
    yg /= n;
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = (grad_out[i] - (x[i] / n) * yg) / n;
    return gx;
}

// ---------------------------------------------------------------- layer norm
// Parameter-free normalisation over the whole vector.

inline constexpr double kLayerNormEps = 1e-5;

inline Tensor layer_norm(const Tensor& x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) * inv;
    return y;
}

inline Tensor layer_norm_backward(const Tensor& x, const Tensor& grad_out) {
    require_same_shape(x, grad_out, "layer_norm_backward");
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    double gmean = 0.0, gy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double y = (x[i] - mean) * inv;
        gmean += grad_out[i];
        gy += grad_out[i] * y;
    }
    gmean /= n;
    gy /= n;
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double y = (x[i] - mean) * inv;
        gx[i] = inv * (grad_out[i] - gmean - y * gy);
    }
    return gx;
}

} // namespace sflab::numkit
