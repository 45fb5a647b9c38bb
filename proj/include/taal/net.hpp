#pragma once

// Encoder-decoder segmentation backbone: stacked conv3x3 + batch-norm +
// leaky-ReLU blocks with 2x2 max pooling, nearest-neighbor upsampling with
// skip concatenation, dropout at the bottleneck and in decoder blocks, and
// a per-pixel softmax head. Forward and backward are written out by hand;
// convolutions run as im2col + GEMM.
//
// Everything is templated on the scalar type: float for experiment runs,
// double for finite-difference gradient verification.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/rng.hpp"
#include "taal/tensor.hpp"

namespace taal {

struct ModelConfig {
    int depth = 4;          // number of pool / upsample levels
    int base_channels = 8;  // channels at the top level; doubles per level
    int classes = 4;
    double dropout_p = 0.5;
    int input_h = 64, input_w = 64;
    double leaky_slope = 0.01;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    void validate() const {
        if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
        if (base_channels < 1) throw std::invalid_argument("ModelConfig: base_channels must be >= 1");
        if (classes < 2) throw std::invalid_argument("ModelConfig: needs at least 2 classes");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw std::invalid_argument("ModelConfig: dropout_p outside [0,1)");
        const int div = 1 << depth;
        if (input_h % div != 0 || input_w % div != 0)
            throw std::invalid_argument("ModelConfig: input size not divisible by 2^depth");
    }
    int channels(int level) const { return base_channels << level; }
    int bottleneck_channels() const { return base_channels << depth; }
};

namespace nn {

template <typename T>
struct Conv {
    int oc = 0, ic = 0, k = 1;
    std::vector<T> w;  // [oc][ic][k][k]
    std::vector<T> b;  // [oc]
    void init_shape(int oc_, int ic_, int k_) {
        oc = oc_;
        ic = ic_;
        k = k_;
        w.assign(static_cast<size_t>(oc) * ic * k * k, T(0));
        b.assign(static_cast<size_t>(oc), T(0));
    }
};

template <typename T>
struct Norm {
    std::vector<T> gamma, beta;
    std::vector<T> run_mean, run_var;  // buffers, not optimized
    void init_shape(int ch) {
        gamma.assign(static_cast<size_t>(ch), T(1));
        beta.assign(static_cast<size_t>(ch), T(0));
        run_mean.assign(static_cast<size_t>(ch), T(0));
        run_var.assign(static_cast<size_t>(ch), T(1));
    }
};

template <typename T>
struct Block {
    Conv<T> conv1, conv2;
    Norm<T> bn1, bn2;
};

template <typename T>
struct DecoderStage {
    Conv<T> up;  // 3x3 after nearest upsample
    Norm<T> bn_up;
    Block<T> block;  // on concatenated channels
};

template <typename T>
struct UNetParams {
    std::vector<Block<T>> enc;
    Block<T> bottleneck;
    std::vector<DecoderStage<T>> dec;  // dec[i] produces level-i channels
    Conv<T> head;

    template <typename F>
    void for_each_param(F&& f) {
        auto visit_conv = [&](Conv<T>& c) {
            f(c.w);
            f(c.b);
        };
        auto visit_norm = [&](Norm<T>& n) {
            f(n.gamma);
            f(n.beta);
        };
        auto visit_block = [&](Block<T>& b) {
            visit_conv(b.conv1);
            visit_norm(b.bn1);
            visit_conv(b.conv2);
            visit_norm(b.bn2);
        };
        for (auto& b : enc) visit_block(b);
        visit_block(bottleneck);
        for (auto& d : dec) {
            visit_conv(d.up);
            visit_norm(d.bn_up);
            visit_block(d.block);
        }
        visit_conv(head);
    }

    template <typename F>
    void for_each_buffer(F&& f) {
        auto visit_norm = [&](Norm<T>& n) {
            f(n.run_mean);
            f(n.run_var);
        };
        auto visit_block = [&](Block<T>& b) {
            visit_norm(b.bn1);
            visit_norm(b.bn2);
        };
        for (auto& b : enc) visit_block(b);
        visit_block(bottleneck);
        for (auto& d : dec) {
            visit_norm(d.bn_up);
            visit_block(d.block);
        }
    }
};

// ---- forward caches -------------------------------------------------------

template <typename T>
struct ConvCtx {
    Tensor4<T> input;
};

template <typename T>
struct NormCtx {
    Tensor4<T> xhat;
    std::vector<T> invstd;
};

template <typename T>
struct ActCtx {
    Tensor4<T> input;  // pre-activation
};

struct PoolCtx {
    std::vector<int32_t> arg;  // flat in-plane index of the max, per output element
    int in_h = 0, in_w = 0;
};

struct DropCtx {
    std::vector<uint8_t> keep;
    bool active = false;
};

template <typename T>
struct BlockCtx {
    ConvCtx<T> c1, c2;
    NormCtx<T> n1, n2;
    ActCtx<T> a1, a2;
};

template <typename T>
struct DecCtx {
    ConvCtx<T> up;
    NormCtx<T> bn_up;
    ActCtx<T> act_up;
    BlockCtx<T> block;
    DropCtx drop;
    int up_channels = 0, skip_channels = 0;
};

template <typename T>
struct Trace {
    std::vector<BlockCtx<T>> enc;
    std::vector<PoolCtx> pools;
    BlockCtx<T> bott;
    DropCtx bott_drop;
    std::vector<DecCtx<T>> dec;  // in forward execution order (deep to shallow)
    ConvCtx<T> head;
    Tensor4<T> probs;
};

// ---- primitive ops --------------------------------------------------------

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// rows: (ic, ky, kx); cols: output pixel (y * w + x)
template <typename T>
void im2col(const T* x, int ic, int h, int w, int k, std::vector<T>& col) {
    const int pad = k / 2;
    const size_t hw = static_cast<size_t>(h) * w;
    col.assign(static_cast<size_t>(ic) * k * k * hw, T(0));
    for (int c = 0; c < ic; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col.data() + ((static_cast<size_t>(c) * k + ky) * k + kx) * hw;
                const int dy = ky - pad, dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* src = x + (static_cast<size_t>(c) * h + sy) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int xx = x0; xx < x1; ++xx) dst[static_cast<size_t>(y) * w + xx] = src[xx + dx];
                }
            }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int ic, int h, int w, int k, T* dx) {
    const int pad = k / 2;
    const size_t hw = static_cast<size_t>(h) * w;
    for (int c = 0; c < ic; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col.data() + ((static_cast<size_t>(c) * k + ky) * k + kx) * hw;
                const int dy = ky - pad, dx_ = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    T* dst = dx + (static_cast<size_t>(c) * h + sy) * w;
                    const int x0 = std::max(0, -dx_), x1 = std::min(w, w - dx_);
                    for (int xx = x0; xx < x1; ++xx) dst[xx + dx_] += src[static_cast<size_t>(y) * w + xx];
                }
            }
}

template <typename T>
Tensor4<T> conv_forward(const Conv<T>& conv, const Tensor4<T>& x, ConvCtx<T>* ctx) {
    if (x.c != conv.ic) throw std::invalid_argument("conv_forward: channel mismatch");
    Tensor4<T> y(x.n, conv.oc, x.h, x.w);
    const size_t hw = static_cast<size_t>(x.h) * x.w;
    std::vector<T> col;
    Eigen::Map<const MatRM<T>> wm(conv.w.data(), conv.oc, static_cast<Eigen::Index>(conv.ic) * conv.k * conv.k);
    for (int i = 0; i < x.n; ++i) {
        im2col(x.sample(i), x.c, x.h, x.w, conv.k, col);
        Eigen::Map<const MatRM<T>> cm(col.data(), wm.cols(), static_cast<Eigen::Index>(hw));
        Eigen::Map<MatRM<T>> ym(y.sample(i), conv.oc, static_cast<Eigen::Index>(hw));
        ym.noalias() = wm * cm;
        for (int o = 0; o < conv.oc; ++o) ym.row(o).array() += conv.b[static_cast<size_t>(o)];
    }
    if (ctx) ctx->input = x;
    return y;
}

template <typename T>
Tensor4<T> conv_backward(const Conv<T>& conv, const ConvCtx<T>& ctx, const Tensor4<T>& dy,
                         Conv<T>& grad) {
    const Tensor4<T>& x = ctx.input;
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    const size_t hw = static_cast<size_t>(x.h) * x.w;
    std::vector<T> col;
    std::vector<T> dcol(static_cast<size_t>(conv.ic) * conv.k * conv.k * hw);
    Eigen::Map<const MatRM<T>> wm(conv.w.data(), conv.oc, static_cast<Eigen::Index>(conv.ic) * conv.k * conv.k);
    Eigen::Map<MatRM<T>> dwm(grad.w.data(), conv.oc, wm.cols());
    for (int i = 0; i < x.n; ++i) {
        im2col(x.sample(i), x.c, x.h, x.w, conv.k, col);
        Eigen::Map<const MatRM<T>> cm(col.data(), wm.cols(), static_cast<Eigen::Index>(hw));
        Eigen::Map<const MatRM<T>> dym(dy.sample(i), conv.oc, static_cast<Eigen::Index>(hw));
        dwm.noalias() += dym * cm.transpose();
        for (int o = 0; o < conv.oc; ++o) grad.b[static_cast<size_t>(o)] += dym.row(o).sum();
        Eigen::Map<MatRM<T>> dcm(dcol.data(), wm.cols(), static_cast<Eigen::Index>(hw));
        dcm.noalias() = wm.transpose() * dym;
        col2im_add(dcol, x.c, x.h, x.w, conv.k, dx.sample(i));
    }
    return dx;
}

template <typename T>
Tensor4<T> bn_forward(Norm<T>& bn, const Tensor4<T>& x, bool training, double eps, double momentum,
                      NormCtx<T>* ctx) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const size_t m = static_cast<size_t>(x.n) * plane;
    if (ctx) {
        ctx->xhat = Tensor4<T>(x.n, x.c, x.h, x.w);
        ctx->invstd.assign(static_cast<size_t>(x.c), T(0));
    }
    for (int c = 0; c < x.c; ++c) {
        T mean, invstd;
        if (training) {
            T s = T(0);
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.sample(i) + static_cast<size_t>(c) * plane;
                for (size_t t = 0; t < plane; ++t) s += p[t];
            }
            mean = s / static_cast<T>(m);
            T v = T(0);
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.sample(i) + static_cast<size_t>(c) * plane;
                for (size_t t = 0; t < plane; ++t) {
                    const T d = p[t] - mean;
                    v += d * d;
                }
            }
            v /= static_cast<T>(m);
            invstd = T(1) / std::sqrt(v + static_cast<T>(eps));
            const T unbiased = m > 1 ? v * static_cast<T>(m) / static_cast<T>(m - 1) : v;
            bn.run_mean[static_cast<size_t>(c)] =
                static_cast<T>(1.0 - momentum) * bn.run_mean[static_cast<size_t>(c)] + static_cast<T>(momentum) * mean;
            bn.run_var[static_cast<size_t>(c)] =
                static_cast<T>(1.0 - momentum) * bn.run_var[static_cast<size_t>(c)] + static_cast<T>(momentum) * unbiased;
        } else {
            mean = bn.run_mean[static_cast<size_t>(c)];
            invstd = T(1) / std::sqrt(bn.run_var[static_cast<size_t>(c)] + static_cast<T>(eps));
        }
        const T g = bn.gamma[static_cast<size_t>(c)], be = bn.beta[static_cast<size_t>(c)];
        for (int i = 0; i < x.n; ++i) {
            const T* p = x.sample(i) + static_cast<size_t>(c) * plane;
            T* q = y.sample(i) + static_cast<size_t>(c) * plane;
            T* xh = ctx ? ctx->xhat.sample(i) + static_cast<size_t>(c) * plane : nullptr;
            for (size_t t = 0; t < plane; ++t) {
                const T xhat = (p[t] - mean) * invstd;
                if (xh) xh[t] = xhat;
                q[t] = g * xhat + be;
            }
        }
        if (ctx) ctx->invstd[static_cast<size_t>(c)] = invstd;
    }
    return y;
}

template <typename T>
Tensor4<T> bn_backward(const Norm<T>& bn, const NormCtx<T>& ctx, const Tensor4<T>& dy, Norm<T>& grad) {
    const Tensor4<T>& xh = ctx.xhat;
    Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
    const size_t plane = static_cast<size_t>(dy.h) * dy.w;
    const size_t m = static_cast<size_t>(dy.n) * plane;
    for (int c = 0; c < dy.c; ++c) {
        T dgamma = T(0), dbeta = T(0);
        for (int i = 0; i < dy.n; ++i) {
            const T* dyp = dy.sample(i) + static_cast<size_t>(c) * plane;
            const T* xhp = xh.sample(i) + static_cast<size_t>(c) * plane;
            for (size_t t = 0; t < plane; ++t) {
                dgamma += dyp[t] * xhp[t];
                dbeta += dyp[t];
            }
        }
        grad.gamma[static_cast<size_t>(c)] += dgamma;
        grad.beta[static_cast<size_t>(c)] += dbeta;
        const T g = bn.gamma[static_cast<size_t>(c)];
        const T invstd = ctx.invstd[static_cast<size_t>(c)];
        const T scale = g * invstd / static_cast<T>(m);
        for (int i = 0; i < dy.n; ++i) {
            const T* dyp = dy.sample(i) + static_cast<size_t>(c) * plane;
            const T* xhp = xh.sample(i) + static_cast<size_t>(c) * plane;
            T* dxp = dx.sample(i) + static_cast<size_t>(c) * plane;
            for (size_t t = 0; t < plane; ++t)
                dxp[t] = scale * (static_cast<T>(m) * dyp[t] - dbeta - xhp[t] * dgamma);
        }
    }
    return dx;
}

template <typename T>
Tensor4<T> lrelu_forward(const Tensor4<T>& x, double slope, ActCtx<T>* ctx) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const T s = static_cast<T>(slope);
    for (size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : s * x.v[i];
    if (ctx) ctx->input = x;
    return y;
}

template <typename T>
Tensor4<T> lrelu_backward(const ActCtx<T>& ctx, const Tensor4<T>& dy, double slope) {
    Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
    const T s = static_cast<T>(slope);
    for (size_t i = 0; i < dy.v.size(); ++i)
        dx.v[i] = ctx.input.v[i] > T(0) ? dy.v[i] : s * dy.v[i];
    return dx;
}

template <typename T>
Tensor4<T> maxpool2_forward(const Tensor4<T>& x, PoolCtx* ctx) {
    const int oh = x.h / 2, ow = x.w / 2;
    Tensor4<T> y(x.n, x.c, oh, ow);
    if (ctx) {
        ctx->arg.assign(y.v.size(), 0);
        ctx->in_h = x.h;
        ctx->in_w = x.w;
    }
    size_t oidx = 0;
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c) {
            const T* p = x.sample(i) + static_cast<size_t>(c) * x.h * x.w;
            for (int y0 = 0; y0 < oh; ++y0)
                for (int x0 = 0; x0 < ow; ++x0, ++oidx) {
                    int by = 2 * y0, bx = 2 * x0;
                    T best = p[static_cast<size_t>(by) * x.w + bx];
                    int barg = by * x.w + bx;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int yy = by + dy, xx = bx + dx;
                            const T v = p[static_cast<size_t>(yy) * x.w + xx];
                            if (v > best) {
                                best = v;
                                barg = yy * x.w + xx;
                            }
                        }
                    y.v[oidx] = best;
                    if (ctx) ctx->arg[oidx] = barg;
                }
        }
    return y;
}

template <typename T>
Tensor4<T> maxpool2_backward(const PoolCtx& ctx, const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, ctx.in_h, ctx.in_w);
    size_t oidx = 0;
    for (int i = 0; i < dy.n; ++i)
        for (int c = 0; c < dy.c; ++c) {
            T* q = dx.sample(i) + static_cast<size_t>(c) * ctx.in_h * ctx.in_w;
            for (int t = 0; t < dy.h * dy.w; ++t, ++oidx) q[ctx.arg[oidx]] += dy.v[oidx];
        }
    return dx;
}

template <typename T>
Tensor4<T> upsample2_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c) {
            const T* p = x.sample(i) + static_cast<size_t>(c) * x.h * x.w;
            T* q = y.sample(i) + static_cast<size_t>(c) * y.h * y.w;
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    q[static_cast<size_t>(yy) * y.w + xx] = p[static_cast<size_t>(yy / 2) * x.w + xx / 2];
        }
    return y;
}

template <typename T>
Tensor4<T> upsample2_backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int i = 0; i < dy.n; ++i)
        for (int c = 0; c < dy.c; ++c) {
            const T* p = dy.sample(i) + static_cast<size_t>(c) * dy.h * dy.w;
            T* q = dx.sample(i) + static_cast<size_t>(c) * dx.h * dx.w;
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx)
                    q[static_cast<size_t>(yy / 2) * dx.w + xx / 2] += p[static_cast<size_t>(yy) * dy.w + xx];
        }
    return dx;
}

template <typename T>
Tensor4<T> dropout_forward(const Tensor4<T>& x, double p, bool active, Rng& rng, DropCtx* ctx) {
    if (!active || p <= 0.0) {
        if (ctx) ctx->active = false;
        return x;
    }
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    if (ctx) {
        ctx->keep.assign(x.v.size(), 1);
        ctx->active = true;
    }
    for (size_t i = 0; i < x.v.size(); ++i) {
        const bool keep = !rng.bernoulli(p);
        if (ctx) ctx->keep[i] = keep;
        y.v[i] = keep ? x.v[i] * scale : T(0);
    }
    return y;
}

template <typename T>
Tensor4<T> dropout_backward(const DropCtx& ctx, const Tensor4<T>& dy, double p) {
    if (!ctx.active) return dy;
    Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = ctx.keep[i] ? dy.v[i] * scale : T(0);
    return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    Tensor4<T> y(a.n, a.c + b.c, a.h, a.w);
    const size_t pa = static_cast<size_t>(a.c) * a.h * a.w, pb = static_cast<size_t>(b.c) * b.h * b.w;
    for (int i = 0; i < a.n; ++i) {
        std::memcpy(y.sample(i), a.sample(i), pa * sizeof(T));
        std::memcpy(y.sample(i) + pa, b.sample(i), pb * sizeof(T));
    }
    return y;
}

template <typename T>
void split_channels(const Tensor4<T>& dy, int ca, Tensor4<T>& da, Tensor4<T>& db) {
    da = Tensor4<T>(dy.n, ca, dy.h, dy.w);
    db = Tensor4<T>(dy.n, dy.c - ca, dy.h, dy.w);
    const size_t pa = da.sample_size(), pb = db.sample_size();
    for (int i = 0; i < dy.n; ++i) {
        std::memcpy(da.sample(i), dy.sample(i), pa * sizeof(T));
        std::memcpy(db.sample(i), dy.sample(i) + pa, pb * sizeof(T));
    }
}

// channelwise softmax with max subtraction
template <typename T>
Tensor4<T> softmax_forward(const Tensor4<T>& z) {
    Tensor4<T> p(z.n, z.c, z.h, z.w);
    const size_t plane = static_cast<size_t>(z.h) * z.w;
    for (int i = 0; i < z.n; ++i) {
        const T* zp = z.sample(i);
        T* pp = p.sample(i);
        for (size_t t = 0; t < plane; ++t) {
            T mx = zp[t];
            for (int c = 1; c < z.c; ++c) mx = std::max(mx, zp[static_cast<size_t>(c) * plane + t]);
            T sum = T(0);
            for (int c = 0; c < z.c; ++c) {
                const T e = std::exp(zp[static_cast<size_t>(c) * plane + t] - mx);
                pp[static_cast<size_t>(c) * plane + t] = e;
                sum += e;
            }
            for (int c = 0; c < z.c; ++c) pp[static_cast<size_t>(c) * plane + t] /= sum;
        }
    }
    return p;
}

template <typename T>
Tensor4<T> softmax_backward(const Tensor4<T>& probs, const Tensor4<T>& dprobs) {
    Tensor4<T> dz(probs.n, probs.c, probs.h, probs.w);
    const size_t plane = static_cast<size_t>(probs.h) * probs.w;
    for (int i = 0; i < probs.n; ++i) {
        const T* pp = probs.sample(i);
        const T* dp = dprobs.sample(i);
        T* dzp = dz.sample(i);
        for (size_t t = 0; t < plane; ++t) {
            T dot = T(0);
            for (int c = 0; c < probs.c; ++c)
                dot += dp[static_cast<size_t>(c) * plane + t] * pp[static_cast<size_t>(c) * plane + t];
            for (int c = 0; c < probs.c; ++c)
                dzp[static_cast<size_t>(c) * plane + t] =
                    pp[static_cast<size_t>(c) * plane + t] * (dp[static_cast<size_t>(c) * plane + t] - dot);
        }
    }
    return dz;
}

}  // namespace nn

struct RunMode {
    bool training = false;       // batch statistics + dropout (training step)
    bool mc_dropout = false;     // dropout active at inference
    uint64_t dropout_seed = 0;
};

template <typename T>
class UNet {
public:
    using Scalar = T;
    using Params = nn::UNetParams<T>;

    UNet() = default;

    static UNet reinitialize(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        UNet m;
        m.cfg_ = cfg;
        m.init_seed_ = seed;
        m.build_shapes();
        Rng rng = stream(seed, "unet-init");
        auto he_fill = [&](nn::Conv<T>& c) {
            const double fan_in = static_cast<double>(c.ic) * c.k * c.k;
            const double slope = m.cfg_.leaky_slope;
            const double stddev = std::sqrt(2.0 / (1.0 + slope * slope) / fan_in);
            for (auto& w : c.w) w = static_cast<T>(rng.normal(0.0, stddev));
        };
        auto visit_block = [&](nn::Block<T>& b) {
            he_fill(b.conv1);
            he_fill(b.conv2);
        };
        for (auto& b : m.params_.enc) visit_block(b);
        visit_block(m.params_.bottleneck);
        for (auto& d : m.params_.dec) {
            he_fill(d.up);
            visit_block(d.block);
        }
        he_fill(m.params_.head);
        return m;
    }

    const ModelConfig& config() const { return cfg_; }
    Params& params() { return params_; }
    const Params& params() const { return params_; }
    uint64_t init_seed() const { return init_seed_; }

    size_t num_params() const {
        size_t n = 0;
        const_cast<UNet*>(this)->params_.for_each_param([&](std::vector<T>& v) { n += v.size(); });
        return n;
    }

    // ---- forward ----------------------------------------------------------

    struct ForwardOut {
        Tensor4<T> probs;
        std::unique_ptr<nn::Trace<T>> trace;
    };

    ForwardOut forward(const Tensor4<T>& x, const RunMode& mode, bool want_trace = false) {
        if (x.c != 1 || x.h != cfg_.input_h || x.w != cfg_.input_w)
            throw std::invalid_argument("UNet::forward: input shape mismatch");
        ForwardOut out;
        nn::Trace<T>* tr = nullptr;
        if (want_trace) {
            out.trace = std::make_unique<nn::Trace<T>>();
            tr = out.trace.get();
            tr->enc.resize(static_cast<size_t>(cfg_.depth));
            tr->pools.resize(static_cast<size_t>(cfg_.depth));
            tr->dec.resize(static_cast<size_t>(cfg_.depth));
        }
        const bool train = mode.training;
        const bool drop_on = (mode.training || mode.mc_dropout) && cfg_.dropout_p > 0.0;
        Rng drop_rng(mode.dropout_seed);

        std::vector<Tensor4<T>> skips(static_cast<size_t>(cfg_.depth));
        Tensor4<T> cur = x;
        for (int i = 0; i < cfg_.depth; ++i) {
            skips[static_cast<size_t>(i)] =
                block_forward(params_.enc[static_cast<size_t>(i)], cur, train, tr ? &tr->enc[static_cast<size_t>(i)] : nullptr);
            cur = nn::maxpool2_forward(skips[static_cast<size_t>(i)], tr ? &tr->pools[static_cast<size_t>(i)] : nullptr);
        }
        cur = block_forward(params_.bottleneck, cur, train, tr ? &tr->bott : nullptr);
        cur = nn::dropout_forward(cur, cfg_.dropout_p, drop_on, drop_rng, tr ? &tr->bott_drop : nullptr);

        for (int i = cfg_.depth - 1; i >= 0; --i) {
            auto& stage = params_.dec[static_cast<size_t>(i)];
            nn::DecCtx<T>* dctx = tr ? &tr->dec[static_cast<size_t>(i)] : nullptr;
            Tensor4<T> up = nn::upsample2_forward(cur);
            up = nn::conv_forward(stage.up, up, dctx ? &dctx->up : nullptr);
            up = nn::bn_forward(stage.bn_up, up, train, cfg_.bn_eps, cfg_.bn_momentum, dctx ? &dctx->bn_up : nullptr);
            up = nn::lrelu_forward(up, cfg_.leaky_slope, dctx ? &dctx->act_up : nullptr);
            if (dctx) {
                dctx->up_channels = up.c;
                dctx->skip_channels = skips[static_cast<size_t>(i)].c;
            }
            Tensor4<T> cat = nn::concat_channels(up, skips[static_cast<size_t>(i)]);
            cur = block_forward(stage.block, cat, train, dctx ? &dctx->block : nullptr);
            cur = nn::dropout_forward(cur, cfg_.dropout_p, drop_on, drop_rng, dctx ? &dctx->drop : nullptr);
        }

        Tensor4<T> logits = nn::conv_forward(params_.head, cur, tr ? &tr->head : nullptr);
        out.probs = nn::softmax_forward(logits);
        if (tr) tr->probs = out.probs;
        return out;
    }

    /// Backward from d(loss)/d(probs); parameter gradients accumulate into `grads`.
    void backward(const nn::Trace<T>& tr, const Tensor4<T>& dprobs, Params& grads) {
        Tensor4<T> dcur = nn::softmax_backward(tr.probs, dprobs);
        dcur = nn::conv_backward(params_.head, tr.head, dcur, grads.head);

        std::vector<Tensor4<T>> dskips(static_cast<size_t>(cfg_.depth));
        for (int i = 0; i < cfg_.depth; ++i) {
            auto& stage = params_.dec[static_cast<size_t>(i)];
            auto& gstage = grads.dec[static_cast<size_t>(i)];
            const auto& dctx = tr.dec[static_cast<size_t>(i)];
            dcur = nn::dropout_backward(dctx.drop, dcur, cfg_.dropout_p);
            Tensor4<T> dcat = block_backward(stage.block, dctx.block, dcur, gstage.block);
            Tensor4<T> dup, dskip;
            nn::split_channels(dcat, dctx.up_channels, dup, dskip);
            dskips[static_cast<size_t>(i)] = std::move(dskip);
            dup = nn::lrelu_backward(dctx.act_up, dup, cfg_.leaky_slope);
            dup = nn::bn_backward(stage.bn_up, dctx.bn_up, dup, gstage.bn_up);
            dup = nn::conv_backward(stage.up, dctx.up, dup, gstage.up);
            dcur = nn::upsample2_backward(dup);
        }

        dcur = nn::dropout_backward(tr.bott_drop, dcur, cfg_.dropout_p);
        dcur = block_backward(params_.bottleneck, tr.bott, dcur, grads.bottleneck);

        for (int i = cfg_.depth - 1; i >= 0; --i) {
            Tensor4<T> de = nn::maxpool2_backward(tr.pools[static_cast<size_t>(i)], dcur);
            const auto& ds = dskips[static_cast<size_t>(i)];
            for (size_t t = 0; t < de.v.size(); ++t) de.v[t] += ds.v[t];
            dcur = block_backward(params_.enc[static_cast<size_t>(i)], tr.enc[static_cast<size_t>(i)], de,
                                  grads.enc[static_cast<size_t>(i)]);
        }
    }

    Params make_grads() const {
        UNet tmp;
        tmp.cfg_ = cfg_;
        tmp.build_shapes();
        tmp.params_.for_each_param([](std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); });
        return std::move(tmp.params_);
    }

    // ---- inference helpers --------------------------------------------------

    PlaneStack<T> predict(const Image<float>& image) {
        Tensor4<T> x = to_batch({&image});
        auto out = forward(x, RunMode{});
        return slice_sample(out.probs, 0);
    }

    std::vector<PlaneStack<T>> predict_batch(const std::vector<const Image<float>*>& images) {
        std::vector<PlaneStack<T>> res;
        if (images.empty()) return res;
        Tensor4<T> x = to_batch(images);
        auto out = forward(x, RunMode{});
        res.reserve(images.size());
        for (size_t i = 0; i < images.size(); ++i) res.push_back(slice_sample(out.probs, static_cast<int>(i)));
        return res;
    }

    /// `passes` stochastic forward passes with dropout active at inference.
    std::vector<PlaneStack<T>> predict_mc(const Image<float>& image, int passes, uint64_t seed) {
        if (cfg_.dropout_p <= 0.0)
            throw std::invalid_argument("predict_mc: MC dropout requires dropout");
        if (passes < 2) throw std::invalid_argument("predict_mc: needs at least 2 passes");
        Tensor4<T> x = to_batch({&image});
        std::vector<PlaneStack<T>> out;
        out.reserve(static_cast<size_t>(passes));
        for (int p = 0; p < passes; ++p) {
            RunMode mode;
            mode.mc_dropout = true;
            mode.dropout_seed = derive_seed(seed, "mc-pass", static_cast<uint64_t>(p));
            auto r = forward(x, mode);
            out.push_back(slice_sample(r.probs, 0));
        }
        return out;
    }

    /// Global-average-pooled bottleneck activation (inference mode).
    std::vector<T> bottleneck_features(const Image<float>& image) {
        Tensor4<T> cur = to_batch({&image});
        for (int i = 0; i < cfg_.depth; ++i) {
            cur = block_forward(params_.enc[static_cast<size_t>(i)], cur, false, nullptr);
            cur = nn::maxpool2_forward(cur, static_cast<nn::PoolCtx*>(nullptr));
        }
        cur = block_forward(params_.bottleneck, cur, false, nullptr);
        std::vector<T> feat(static_cast<size_t>(cur.c), T(0));
        const size_t plane = static_cast<size_t>(cur.h) * cur.w;
        for (int c = 0; c < cur.c; ++c) {
            T s = T(0);
            const T* p = cur.sample(0) + static_cast<size_t>(c) * plane;
            for (size_t t = 0; t < plane; ++t) s += p[t];
            feat[static_cast<size_t>(c)] = s / static_cast<T>(plane);
        }
        return feat;
    }

    Tensor4<T> to_batch(const std::vector<const Image<float>*>& images) const {
        Tensor4<T> x(static_cast<int>(images.size()), 1, cfg_.input_h, cfg_.input_w);
        for (size_t i = 0; i < images.size(); ++i) {
            if (images[i]->h != cfg_.input_h || images[i]->w != cfg_.input_w)
                throw std::invalid_argument("UNet::to_batch: image shape mismatch");
            T* dst = x.sample(static_cast<int>(i));
            for (size_t t = 0; t < images[i]->v.size(); ++t) dst[t] = static_cast<T>(images[i]->v[t]);
        }
        return x;
    }

    // ---- checkpointing ------------------------------------------------------

    void save(const std::string& path, uint64_t tag = 0) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("UNet::save: cannot open " + path);
        const char magic[8] = {'T', 'A', 'A', 'L', 'C', 'K', 'P', '1'};
        os.write(magic, 8);
        auto w32 = [&os](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
        auto w64 = [&os](uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
        auto wf = [&os](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
        w32(1);  // version
        w64(tag);
        w32(static_cast<uint32_t>(sizeof(T)));
        w32(static_cast<uint32_t>(cfg_.depth));
        w32(static_cast<uint32_t>(cfg_.base_channels));
        w32(static_cast<uint32_t>(cfg_.classes));
        w32(static_cast<uint32_t>(cfg_.input_h));
        w32(static_cast<uint32_t>(cfg_.input_w));
        wf(cfg_.dropout_p);
        wf(cfg_.leaky_slope);
        wf(cfg_.bn_eps);
        wf(cfg_.bn_momentum);
        w64(init_seed_);
        auto& self = const_cast<UNet&>(*this);
        self.params_.for_each_param([&](std::vector<T>& v) {
            w64(v.size());
            os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
        });
        self.params_.for_each_buffer([&](std::vector<T>& v) {
            w64(v.size());
            os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
        });
    }

    static UNet load(const std::string& path, uint64_t* tag_out = nullptr) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("UNet::load: cannot open " + path);
        char magic[8];
        is.read(magic, 8);
        if (std::memcmp(magic, "TAALCKP1", 8) != 0)
            throw std::runtime_error("UNet::load: bad checkpoint magic in " + path);
        auto r32 = [&is]() {
            uint32_t v;
            is.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        auto r64 = [&is]() {
            uint64_t v;
            is.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        auto rf = [&is]() {
            double v;
            is.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        if (r32() != 1) throw std::runtime_error("UNet::load: unsupported checkpoint version");
        const uint64_t tag = r64();
        if (tag_out) *tag_out = tag;
        if (r32() != sizeof(T)) throw std::runtime_error("UNet::load: scalar width mismatch");
        UNet m;
        m.cfg_.depth = static_cast<int>(r32());
        m.cfg_.base_channels = static_cast<int>(r32());
        m.cfg_.classes = static_cast<int>(r32());
        m.cfg_.input_h = static_cast<int>(r32());
        m.cfg_.input_w = static_cast<int>(r32());
        m.cfg_.dropout_p = rf();
        m.cfg_.leaky_slope = rf();
        m.cfg_.bn_eps = rf();
        m.cfg_.bn_momentum = rf();
        m.init_seed_ = r64();
        m.build_shapes();
        m.params_.for_each_param([&](std::vector<T>& v) {
            if (r64() != v.size()) throw std::runtime_error("UNet::load: parameter layout mismatch");
            is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
        });
        m.params_.for_each_buffer([&](std::vector<T>& v) {
            if (r64() != v.size()) throw std::runtime_error("UNet::load: buffer layout mismatch");
            is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
        });
        if (!is) throw std::runtime_error("UNet::load: truncated checkpoint " + path);
        return m;
    }

private:
    void build_shapes() {
        params_.enc.resize(static_cast<size_t>(cfg_.depth));
        params_.dec.resize(static_cast<size_t>(cfg_.depth));
        int in_c = 1;
        for (int i = 0; i < cfg_.depth; ++i) {
            const int ch = cfg_.channels(i);
            params_.enc[static_cast<size_t>(i)].conv1.init_shape(ch, in_c, 3);
            params_.enc[static_cast<size_t>(i)].bn1.init_shape(ch);
            params_.enc[static_cast<size_t>(i)].conv2.init_shape(ch, ch, 3);
            params_.enc[static_cast<size_t>(i)].bn2.init_shape(ch);
            in_c = ch;
        }
        const int cb = cfg_.bottleneck_channels();
        params_.bottleneck.conv1.init_shape(cb, cfg_.channels(cfg_.depth - 1), 3);
        params_.bottleneck.bn1.init_shape(cb);
        params_.bottleneck.conv2.init_shape(cb, cb, 3);
        params_.bottleneck.bn2.init_shape(cb);
        for (int i = cfg_.depth - 1; i >= 0; --i) {
            const int ch = cfg_.channels(i);
            const int deeper = (i == cfg_.depth - 1) ? cb : cfg_.channels(i + 1);
            auto& d = params_.dec[static_cast<size_t>(i)];
            d.up.init_shape(ch, deeper, 3);
            d.bn_up.init_shape(ch);
            d.block.conv1.init_shape(ch, 2 * ch, 3);
            d.block.bn1.init_shape(ch);
            d.block.conv2.init_shape(ch, ch, 3);
            d.block.bn2.init_shape(ch);
        }
        params_.head.init_shape(cfg_.classes, cfg_.base_channels, 1);
    }

    Tensor4<T> block_forward(nn::Block<T>& b, const Tensor4<T>& x, bool train, nn::BlockCtx<T>* ctx) {
        Tensor4<T> y = nn::conv_forward(b.conv1, x, ctx ? &ctx->c1 : nullptr);
        y = nn::bn_forward(b.bn1, y, train, cfg_.bn_eps, cfg_.bn_momentum, ctx ? &ctx->n1 : nullptr);
        y = nn::lrelu_forward(y, cfg_.leaky_slope, ctx ? &ctx->a1 : nullptr);
        y = nn::conv_forward(b.conv2, y, ctx ? &ctx->c2 : nullptr);
        y = nn::bn_forward(b.bn2, y, train, cfg_.bn_eps, cfg_.bn_momentum, ctx ? &ctx->n2 : nullptr);
        y = nn::lrelu_forward(y, cfg_.leaky_slope, ctx ? &ctx->a2 : nullptr);
        return y;
    }

    Tensor4<T> block_backward(const nn::Block<T>& b, const nn::BlockCtx<T>& ctx, const Tensor4<T>& dy,
                              nn::Block<T>& g) {
        Tensor4<T> d = nn::lrelu_backward(ctx.a2, dy, cfg_.leaky_slope);
        d = nn::bn_backward(b.bn2, ctx.n2, d, g.bn2);
        d = nn::conv_backward(b.conv2, ctx.c2, d, g.conv2);
        d = nn::lrelu_backward(ctx.a1, d, cfg_.leaky_slope);
        d = nn::bn_backward(b.bn1, ctx.n1, d, g.bn1);
        d = nn::conv_backward(b.conv1, ctx.c1, d, g.conv1);
        return d;
    }

    ModelConfig cfg_;
    nn::UNetParams<T> params_;
    uint64_t init_seed_ = 0;
};

/// Trainable parameter count as a closed-form function of the configuration.
inline size_t unet_param_count(const ModelConfig& cfg) {
    auto conv = [](int oc, int ic, int k) { return static_cast<size_t>(oc) * ic * k * k + oc; };
    auto bn = [](int ch) { return static_cast<size_t>(2) * ch; };
    size_t n = 0;
    int in_c = 1;
    for (int i = 0; i < cfg.depth; ++i) {
        const int ch = cfg.channels(i);
        n += conv(ch, in_c, 3) + bn(ch) + conv(ch, ch, 3) + bn(ch);
        in_c = ch;
    }
    const int cb = cfg.bottleneck_channels();
    n += conv(cb, cfg.channels(cfg.depth - 1), 3) + bn(cb) + conv(cb, cb, 3) + bn(cb);
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int ch = cfg.channels(i);
        const int deeper = (i == cfg.depth - 1) ? cb : cfg.channels(i + 1);
        n += conv(ch, deeper, 3) + bn(ch);
        n += conv(ch, 2 * ch, 3) + bn(ch) + conv(ch, ch, 3) + bn(ch);
    }
    n += conv(cfg.classes, cfg.base_channels, 1);
    return n;
}

}  // namespace taal
