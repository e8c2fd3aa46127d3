#pragma once

#include <lkca/error.hpp>
#include <lkca/parallel.hpp>
#include <lkca/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

/// Forward and reverse-mode kernels for the network primitives. All feature maps are [N, C, H, W].
namespace lkca::ops {

// ---------------------------------------------------------------------------------------------
// 2-D convolution: stride 1, zero "same" padding, optional dilation and channel groups.
// ---------------------------------------------------------------------------------------------

struct ConvSpec {
    std::size_t in_channels  = 1;
    std::size_t out_channels = 1;
    std::size_t kernel       = 1;
    std::size_t dilation     = 1;
    std::size_t groups       = 1;
    bool        bias         = true;

    void validate() const {
        require(in_channels >= 1 && out_channels >= 1, "conv: channel counts must be >= 1");
        require(kernel >= 1 && kernel % 2 == 1, "conv: 'same' padding needs an odd kernel, got " + std::to_string(kernel));
        require(dilation >= 1, "conv: dilation must be >= 1");
        require(groups >= 1 && in_channels % groups == 0 && out_channels % groups == 0,
                "conv: groups=" + std::to_string(groups) + " must divide in_channels=" + std::to_string(in_channels) +
                    " and out_channels=" + std::to_string(out_channels));
    }

    [[nodiscard]] std::size_t pad() const { return (kernel - 1) * dilation / 2; }
    [[nodiscard]] std::size_t receptive_extent() const { return (kernel - 1) * dilation + 1; }
    [[nodiscard]] Shape       weight_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }
    [[nodiscard]] std::size_t weight_count() const { return out_channels * (in_channels / groups) * kernel * kernel; }
    [[nodiscard]] std::size_t param_count() const { return weight_count() + (bias ? out_channels : 0); }
    /// Multiply-accumulates for one h x w output map.
    [[nodiscard]] std::size_t macs(std::size_t h, std::size_t w) const { return weight_count() * h * w; }

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

namespace detail {

// Valid output range [lo, hi) along one axis for a tap offset `off` (input = output + off).
inline void tap_range(std::ptrdiff_t off, std::size_t extent, std::size_t& lo, std::size_t& hi) {
    const auto e = static_cast<std::ptrdiff_t>(extent);
    lo           = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(-off, 0, e));
    hi           = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(e - off, 0, e));
}

template<typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, const ConvSpec& spec) {
    spec.validate();
    require_rank(x, 4, "conv2d");
    require(x.extent(1) == spec.in_channels, "conv2d: input has " + std::to_string(x.extent(1)) +
                                                 " channels, layer expects " + std::to_string(spec.in_channels));
    require(w.shape() == spec.weight_shape(), "conv2d: weight shape " + shape_str(w.shape()) + " != expected " +
                                                  shape_str(spec.weight_shape()));
    if (spec.bias) {
        require(b != nullptr && b->shape() == Shape{spec.out_channels}, "conv2d: bias missing or misshapen");
    }
}

} // namespace detail

template<typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, const ConvSpec& spec) {
    detail::check_conv_args(x, w, b, spec);
    const std::size_t n = x.extent(0), h = x.extent(2), wd = x.extent(3), plane = h * wd;
    const std::size_t cin_g = spec.in_channels / spec.groups, cout_g = spec.out_channels / spec.groups;
    const std::size_t k = spec.kernel, pad = spec.pad(), dil = spec.dilation;
    Tensor<T>         out({n, spec.out_channels, h, wd});

    parallel_for(n * spec.out_channels, [&](std::size_t task) {
        const std::size_t bi = task / spec.out_channels, oc = task % spec.out_channels;
        const std::size_t g  = oc / cout_g;
        T*                o  = out.data() + (bi * spec.out_channels + oc) * plane;
        std::fill_n(o, plane, spec.bias ? (*b)[oc] : T{0});
        for (std::size_t icl = 0; icl < cin_g; ++icl) {
            const std::size_t ic  = g * cin_g + icl;
            const T*          src = x.data() + (bi * spec.in_channels + ic) * plane;
            const T*          wk  = w.data() + (oc * cin_g + icl) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const auto  dy = static_cast<std::ptrdiff_t>(ky * dil) - static_cast<std::ptrdiff_t>(pad);
                std::size_t y0, y1;
                detail::tap_range(dy, h, y0, y1);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto  dx = static_cast<std::ptrdiff_t>(kx * dil) - static_cast<std::ptrdiff_t>(pad);
                    std::size_t x0, x1;
                    detail::tap_range(dx, wd, x0, x1);
                    const T wv = wk[ky * k + kx];
                    for (std::size_t y = y0; y < y1; ++y) {
                        T*       orow = o + y * wd;
                        const T* irow = src + static_cast<std::ptrdiff_t>((y * wd)) + dy * static_cast<std::ptrdiff_t>(wd) + dx;
                        for (std::size_t xx = x0; xx < x1; ++xx) {
                            orow[xx] += wv * irow[xx];
                        }
                    }
                }
            }
        }
    });
    return out;
}

template<typename T>
struct ConvGrads {
    Tensor<T> x;      ///< empty when not requested
    Tensor<T> weight;
    Tensor<T> bias;   ///< empty when the layer has no bias
};

/// Reverse pass of conv2d_forward. Each output element is reduced by a single task in a fixed
/// order, so the result is independent of the thread count.
template<typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                             bool need_grad_x = true) {
    detail::check_conv_args(x, w, static_cast<const Tensor<T>*>(nullptr), ConvSpec{spec.in_channels, spec.out_channels, spec.kernel, spec.dilation,
                                                     spec.groups, false});
    const std::size_t n = x.extent(0), h = x.extent(2), wd = x.extent(3), plane = h * wd;
    require(grad_out.shape() == Shape({n, spec.out_channels, h, wd}), "conv2d_backward: grad_out shape " +
                                                                          shape_str(grad_out.shape()) +
                                                                          " inconsistent with forward");
    const std::size_t cin_g = spec.in_channels / spec.groups, cout_g = spec.out_channels / spec.groups;
    const std::size_t k = spec.kernel, pad = spec.pad(), dil = spec.dilation;

    ConvGrads<T> g;
    g.weight = Tensor<T>(spec.weight_shape());
    if (spec.bias) {
        g.bias = Tensor<T>({spec.out_channels});
    }
    parallel_for(spec.out_channels, [&](std::size_t oc) {
        const std::size_t grp = oc / cout_g;
        T*                gw  = g.weight.data() + oc * cin_g * k * k;
        for (std::size_t bi = 0; bi < n; ++bi) {
            const T* go = grad_out.data() + (bi * spec.out_channels + oc) * plane;
            if (spec.bias) {
                T s{0};
                for (std::size_t i = 0; i < plane; ++i) {
                    s += go[i];
                }
                g.bias[oc] += s;
            }
            for (std::size_t icl = 0; icl < cin_g; ++icl) {
                const T* src = x.data() + (bi * spec.in_channels + grp * cin_g + icl) * plane;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const auto  dy = static_cast<std::ptrdiff_t>(ky * dil) - static_cast<std::ptrdiff_t>(pad);
                    std::size_t y0, y1;
                    detail::tap_range(dy, h, y0, y1);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const auto  dx = static_cast<std::ptrdiff_t>(kx * dil) - static_cast<std::ptrdiff_t>(pad);
                        std::size_t x0, x1;
                        detail::tap_range(dx, wd, x0, x1);
                        T s{0};
                        for (std::size_t y = y0; y < y1; ++y) {
                            const T* grow = go + y * wd;
                            const T* irow = src + static_cast<std::ptrdiff_t>(y * wd) + dy * static_cast<std::ptrdiff_t>(wd) + dx;
                            for (std::size_t xx = x0; xx < x1; ++xx) {
                                s += grow[xx] * irow[xx];
                            }
                        }
                        gw[icl * k * k + ky * k + kx] += s;
                    }
                }
            }
        }
    });

    if (need_grad_x) {
        g.x = Tensor<T>(x.shape());
        parallel_for(n * spec.in_channels, [&](std::size_t task) {
            const std::size_t bi = task / spec.in_channels, ic = task % spec.in_channels;
            const std::size_t grp = ic / cin_g, icl = ic % cin_g;
            T*                gx  = g.x.data() + (bi * spec.in_channels + ic) * plane;
            for (std::size_t ocl = 0; ocl < cout_g; ++ocl) {
                const std::size_t oc = grp * cout_g + ocl;
                const T*          go = grad_out.data() + (bi * spec.out_channels + oc) * plane;
                const T*          wk = w.data() + (oc * cin_g + icl) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const auto  dy = static_cast<std::ptrdiff_t>(ky * dil) - static_cast<std::ptrdiff_t>(pad);
                    std::size_t y0, y1;
                    detail::tap_range(dy, h, y0, y1);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const auto  dx = static_cast<std::ptrdiff_t>(kx * dil) - static_cast<std::ptrdiff_t>(pad);
                        std::size_t x0, x1;
                        detail::tap_range(dx, wd, x0, x1);
                        const T wv = wk[ky * k + kx];
                        for (std::size_t y = y0; y < y1; ++y) {
                            const T* grow = go + y * wd;
                            T*       xrow = gx + static_cast<std::ptrdiff_t>(y * wd) + dy * static_cast<std::ptrdiff_t>(wd) + dx;
                            for (std::size_t xx = x0; xx < x1; ++xx) {
                                xrow[xx] += wv * grow[xx];
                            }
                        }
                    }
                }
            }
        });
    }
    return g;
}

// ---------------------------------------------------------------------------------------------
// Layer normalization over the channel axis at each spatial position.
// ---------------------------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-6;

template<typename T>
struct LayerNormCache {
    Tensor<T>      xhat;
    std::vector<T> rstd; ///< one per (n, h, w)
};

template<typename T>
Tensor<T> layer_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             LayerNormCache<T>* cache = nullptr, double eps = kLayerNormEps) {
    require_rank(x, 4, "layer_norm");
    const std::size_t n = x.extent(0), c = x.extent(1), plane = x.extent(2) * x.extent(3);
    require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "layer_norm: gamma/beta must have C entries");
    Tensor<T>      y(x.shape());
    Tensor<T>      xhat(x.shape());
    std::vector<T> rstd(n * plane);
    std::vector<T> mean(plane), var(plane);
    const T        inv_c = T{1} / static_cast<T>(c);
    for (std::size_t bi = 0; bi < n; ++bi) {
        const T* xb = x.data() + bi * c * plane;
        std::fill(mean.begin(), mean.end(), T{0});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                mean[p] += xb[ch * plane + p];
            }
        }
        for (auto& m : mean) {
            m *= inv_c;
        }
        // Second pass refines the mean so constant inputs centre to exactly zero.
        std::fill(var.begin(), var.end(), T{0});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                var[p] += xb[ch * plane + p] - mean[p];
            }
        }
        for (std::size_t p = 0; p < plane; ++p) {
            mean[p] += var[p] * inv_c;
        }
        std::fill(var.begin(), var.end(), T{0});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                const T d = xb[ch * plane + p] - mean[p];
                var[p] += d * d;
            }
        }
        for (std::size_t p = 0; p < plane; ++p) {
            rstd[bi * plane + p] = T{1} / std::sqrt(var[p] * inv_c + static_cast<T>(eps));
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i  = (bi * c + ch) * plane + p;
                const T           xh = (x[i] - mean[p]) * rstd[bi * plane + p];
                xhat[i]              = xh;
                y[i]                 = xh * gamma[ch] + beta[ch];
            }
        }
    }
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

template<typename T>
struct LayerNormGrads {
    Tensor<T> x, gamma, beta;
};

template<typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& gy, const LayerNormCache<T>& cache, const Tensor<T>& gamma) {
    require_same_shape(gy, cache.xhat, "layer_norm_backward");
    const std::size_t n = gy.extent(0), c = gy.extent(1), plane = gy.extent(2) * gy.extent(3);
    LayerNormGrads<T> g{Tensor<T>(gy.shape()), Tensor<T>({c}), Tensor<T>({c})};
    std::vector<T>    m1(plane), m2(plane);
    const T           inv_c = T{1} / static_cast<T>(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        T sg{0}, sb{0};
        for (std::size_t bi = 0; bi < n; ++bi) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i = (bi * c + ch) * plane + p;
                sg += gy[i] * cache.xhat[i];
                sb += gy[i];
            }
        }
        g.gamma[ch] = sg;
        g.beta[ch]  = sb;
    }
    for (std::size_t bi = 0; bi < n; ++bi) {
        std::fill(m1.begin(), m1.end(), T{0});
        std::fill(m2.begin(), m2.end(), T{0});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i  = (bi * c + ch) * plane + p;
                const T           gh = gy[i] * gamma[ch];
                m1[p] += gh;
                m2[p] += gh * cache.xhat[i];
            }
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i  = (bi * c + ch) * plane + p;
                const T           gh = gy[i] * gamma[ch];
                g.x[i] = cache.rstd[bi * plane + p] * (gh - m1[p] * inv_c - cache.xhat[i] * m2[p] * inv_c);
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------------------------
// GELU, exact Gaussian-CDF form.
// ---------------------------------------------------------------------------------------------

template<typename T>
T gelu(T v) {
    return static_cast<T>(0.5) * v * (T{1} + std::erf(v * static_cast<T>(std::numbers::sqrt2 / 2.0)));
}

template<typename T>
T gelu_derivative(T v) {
    const T cdf = static_cast<T>(0.5) * (T{1} + std::erf(v * static_cast<T>(std::numbers::sqrt2 / 2.0)));
    const T pdf = std::exp(static_cast<T>(-0.5) * v * v) * static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + v * pdf;
}

template<typename T>
Tensor<T> gelu_forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.values()) {
        v = gelu(v);
    }
    return y;
}

template<typename T>
Tensor<T> gelu_backward(const Tensor<T>& gy, const Tensor<T>& x) {
    require_same_shape(gy, x, "gelu_backward");
    Tensor<T> g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] = gy[i] * gelu_derivative(x[i]);
    }
    return g;
}

// ---------------------------------------------------------------------------------------------
// Sub-pixel rearrangement: out(n, c, y*r + i, x*r + j) = in(n, c*r*r + i*r + j, y, x).
// ---------------------------------------------------------------------------------------------

template<typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
    require_rank(x, 4, "pixel_shuffle");
    require(r >= 1 && x.extent(1) % (r * r) == 0,
            "pixel_shuffle: channels " + std::to_string(x.extent(1)) + " not divisible by r^2 = " + std::to_string(r * r));
    const std::size_t n = x.extent(0), cin = x.extent(1), c = cin / (r * r), h = x.extent(2), w = x.extent(3);
    Tensor<T>         out({n, c, h * r, w * r});
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < r; ++j) {
                    const std::size_t src_c = ch * r * r + i * r + j;
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            out(bi, ch, y * r + i, xx * r + j) = x(bi, src_c, y, xx);
                        }
                    }
                }
            }
        }
    }
    return out;
}

template<typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
    require_rank(x, 4, "pixel_unshuffle");
    require(r >= 1 && x.extent(2) % r == 0 && x.extent(3) % r == 0, "pixel_unshuffle: spatial extents not divisible by r");
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2) / r, w = x.extent(3) / r;
    Tensor<T>         out({n, c * r * r, h, w});
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < r; ++j) {
                    const std::size_t dst_c = ch * r * r + i * r + j;
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            out(bi, dst_c, y, xx) = x(bi, ch, y * r + i, xx * r + j);
                        }
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Channel attention: global average pool -> fc (C -> C/rho) -> ReLU -> fc (C/rho -> C) -> sigmoid,
// gate broadcast-multiplied onto the input.
// ---------------------------------------------------------------------------------------------

template<typename T>
struct ChannelAttentionParams {
    Tensor<T> w1, b1; ///< [hidden, C], [hidden]
    Tensor<T> w2, b2; ///< [C, hidden], [C]
};

template<typename T>
struct ChannelAttentionCache {
    Tensor<T> pooled; ///< [N, C]
    Tensor<T> hidden; ///< [N, hidden], pre-activation
    Tensor<T> gate;   ///< [N, C]
};

inline std::size_t ca_hidden(std::size_t channels, std::size_t reduction) {
    require(reduction >= 1 && channels % reduction == 0,
            "channel attention: channels " + std::to_string(channels) + " not divisible by reduction " +
                std::to_string(reduction));
    return channels / reduction;
}

template<typename T>
Tensor<T> channel_attention_forward(const Tensor<T>& x, const ChannelAttentionParams<T>& p,
                                    ChannelAttentionCache<T>* cache = nullptr) {
    require_rank(x, 4, "channel_attention");
    const std::size_t n = x.extent(0), c = x.extent(1), plane = x.extent(2) * x.extent(3);
    require(p.w1.rank() == 2 && p.w1.extent(1) == c, "channel_attention: fc1 weight must be [hidden, C]");
    const std::size_t hid = p.w1.extent(0);
    require(p.b1.shape() == Shape{hid} && p.w2.shape() == Shape({c, hid}) && p.b2.shape() == Shape{c},
            "channel_attention: parameter shapes inconsistent");

    Tensor<T> pooled({n, c}), hidden({n, hid}), gate({n, c});
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = x.data() + (bi * c + ch) * plane;
            T        s{0};
            for (std::size_t i = 0; i < plane; ++i) {
                s += src[i];
            }
            pooled(bi, ch) = s / static_cast<T>(plane);
        }
        for (std::size_t j = 0; j < hid; ++j) {
            T s = p.b1[j];
            for (std::size_t ch = 0; ch < c; ++ch) {
                s += p.w1(j, ch) * pooled(bi, ch);
            }
            hidden(bi, j) = s;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            T s = p.b2[ch];
            for (std::size_t j = 0; j < hid; ++j) {
                s += p.w2(ch, j) * std::max(hidden(bi, j), T{0});
            }
            gate(bi, ch) = T{1} / (T{1} + std::exp(-s));
        }
    }
    Tensor<T> y(x.shape());
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (bi * c + ch) * plane;
            const T           gv  = gate(bi, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                y[off + i] = x[off + i] * gv;
            }
        }
    }
    if (cache != nullptr) {
        *cache = {std::move(pooled), std::move(hidden), std::move(gate)};
    }
    return y;
}

template<typename T>
struct ChannelAttentionGrads {
    Tensor<T>                 x;
    ChannelAttentionParams<T> params;
};

template<typename T>
ChannelAttentionGrads<T> channel_attention_backward(const Tensor<T>& gy, const Tensor<T>& x,
                                                    const ChannelAttentionParams<T>& p,
                                                    const ChannelAttentionCache<T>& cache) {
    require_same_shape(gy, x, "channel_attention_backward");
    const std::size_t n = x.extent(0), c = x.extent(1), plane = x.extent(2) * x.extent(3), hid = p.w1.extent(0);
    ChannelAttentionGrads<T> g{Tensor<T>(x.shape()),
                               {Tensor<T>(p.w1.shape()), Tensor<T>(p.b1.shape()), Tensor<T>(p.w2.shape()),
                                Tensor<T>(p.b2.shape())}};
    std::vector<T> ge(c), gz(hid);
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (bi * c + ch) * plane;
            T                 s{0};
            for (std::size_t i = 0; i < plane; ++i) {
                s += gy[off + i] * x[off + i];
            }
            const T gv = cache.gate(bi, ch);
            ge[ch]     = s * gv * (T{1} - gv);
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            g.params.b2[ch] += ge[ch];
            for (std::size_t j = 0; j < hid; ++j) {
                g.params.w2(ch, j) += ge[ch] * std::max(cache.hidden(bi, j), T{0});
            }
        }
        for (std::size_t j = 0; j < hid; ++j) {
            T s{0};
            for (std::size_t ch = 0; ch < c; ++ch) {
                s += p.w2(ch, j) * ge[ch];
            }
            gz[j] = cache.hidden(bi, j) > T{0} ? s : T{0};
            g.params.b1[j] += gz[j];
            for (std::size_t ch = 0; ch < c; ++ch) {
                g.params.w1(j, ch) += gz[j] * cache.pooled(bi, ch);
            }
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            T gs{0};
            for (std::size_t j = 0; j < hid; ++j) {
                gs += p.w1(j, ch) * gz[j];
            }
            gs /= static_cast<T>(plane);
            const std::size_t off = (bi * c + ch) * plane;
            const T           gv  = cache.gate(bi, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                g.x[off + i] = gy[off + i] * gv + gs;
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------------------------
// Per-sample scaling used by drop path: y[n] = scale[n] * x[n].
// ---------------------------------------------------------------------------------------------

template<typename T>
Tensor<T> scale_samples(const Tensor<T>& x, const std::vector<T>& scale) {
    require(scale.size() == x.extent(0), "scale_samples: one scale per sample required");
    Tensor<T>         y         = x;
    const std::size_t per_batch = x.size() / x.extent(0);
    for (std::size_t bi = 0; bi < x.extent(0); ++bi) {
        for (std::size_t i = 0; i < per_batch; ++i) {
            y[bi * per_batch + i] *= scale[bi];
        }
    }
    return y;
}

} // namespace lkca::ops
