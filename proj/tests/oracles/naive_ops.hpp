#pragma once

// Direct-definition reference implementations used as test oracles. They share no code with
// the library beyond the Tensor container.

#include <lkca/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using lkca::Tensor;

/// out[n,o,y,x] = b[o] + sum_{i in group(o), ky, kx} w[o, i - g0, ky, kx] * x[n, i, y + (ky - c) d, x + (kx - c) d]
/// with zero padding, evaluated by explicit bounds checks.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                             std::size_t groups, std::size_t dilation) {
    const long n = x.extent(0), ci = x.extent(1), h = x.extent(2), wd = x.extent(3);
    const long co = w.extent(0), cig = w.extent(1), k = w.extent(2);
    const long cog = co / static_cast<long>(groups), centre = (k - 1) / 2, d = static_cast<long>(dilation);
    Tensor<double> out({static_cast<std::size_t>(n), static_cast<std::size_t>(co), static_cast<std::size_t>(h),
                        static_cast<std::size_t>(wd)});
    for (long s = 0; s < n; ++s) {
        for (long o = 0; o < co; ++o) {
            const long g = o / cog;
            for (long y = 0; y < h; ++y) {
                for (long xx = 0; xx < wd; ++xx) {
                    double acc = b ? (*b)[o] : 0.0;
                    for (long i = 0; i < cig; ++i) {
                        for (long ky = 0; ky < k; ++ky) {
                            for (long kx = 0; kx < k; ++kx) {
                                const long sy = y + (ky - centre) * d, sx = xx + (kx - centre) * d;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) {
                                    continue;
                                }
                                acc += w(o, i, ky, kx) * x(s, g * cig + i, sy, sx);
                            }
                        }
                    }
                    out(s, o, y, xx) = acc;
                }
            }
        }
    }
    (void)ci;
    return out;
}

/// out[n, c, y*r + i, x*r + j] = in[n, c*r*r + i*r + j, y, x]
inline Tensor<double> pixel_shuffle(const Tensor<double>& in, std::size_t r) {
    const std::size_t n = in.extent(0), c = in.extent(1) / (r * r), h = in.extent(2), w = in.extent(3);
    Tensor<double>    out({n, c, h * r, w * r});
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < r; ++j) {
                            out(s, ch, y * r + i, x * r + j) = in(s, ch * r * r + i * r + j, y, x);
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Channel layer norm per pixel with biased variance.
inline Tensor<double> layer_norm(const Tensor<double>& x, const Tensor<double>& gamma, const Tensor<double>& beta,
                                 double eps) {
    Tensor<double> out(x.shape());
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                double mean = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    mean += x(s, ch, y, xx);
                }
                mean /= static_cast<double>(c);
                double var = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    var += (x(s, ch, y, xx) - mean) * (x(s, ch, y, xx) - mean);
                }
                var /= static_cast<double>(c);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    out(s, ch, y, xx) = (x(s, ch, y, xx) - mean) / std::sqrt(var + eps) * gamma[ch] + beta[ch];
                }
            }
        }
    }
    return out;
}

inline double gelu(double v) { return 0.5 * v * std::erfc(-v / std::sqrt(2.0)); }

/// x * sigmoid(W2 relu(W1 mean_hw(x) + b1) + b2) per channel.
inline Tensor<double> channel_attention(const Tensor<double>& x, const Tensor<double>& w1, const Tensor<double>& b1,
                                        const Tensor<double>& w2, const Tensor<double>& b2) {
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3), hid = w1.extent(0);
    Tensor<double>    out(x.shape());
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> pooled(c, 0.0), hidden(hid, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    pooled[ch] += x(s, ch, y, xx);
                }
            }
            pooled[ch] /= static_cast<double>(h * w);
        }
        for (std::size_t j = 0; j < hid; ++j) {
            double a = b1[j];
            for (std::size_t ch = 0; ch < c; ++ch) {
                a += w1(j, ch) * pooled[ch];
            }
            hidden[j] = a > 0.0 ? a : 0.0;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            double a = b2[ch];
            for (std::size_t j = 0; j < hid; ++j) {
                a += w2(ch, j) * hidden[j];
            }
            const double gate = 1.0 / (1.0 + std::exp(-a));
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    out(s, ch, y, xx) = x(s, ch, y, xx) * gate;
                }
            }
        }
    }
    return out;
}

/// Keys cubic with a = -0.5, written in its piecewise polynomial form.
inline double keys(double t) {
    const double a = -0.5, x = std::fabs(t);
    if (x < 1.0) {
        return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    }
    if (x < 2.0) {
        return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    }
    return 0.0;
}

/// Non-separable 2-D bicubic upsampling of one plane: every output pixel sums the 4x4 source
/// neighbourhood weighted by keys(dx) * keys(dy), with clamped source indices and clamped [0,1] output.
inline std::vector<double> bicubic_upsample_plane(const std::vector<double>& src, std::size_t h, std::size_t w,
                                                  std::size_t oh, std::size_t ow) {
    std::vector<double> out(oh * ow);
    const double        sy = static_cast<double>(oh) / h, sx = static_cast<double>(ow) / w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const double u = (ox + 0.5) / sx - 0.5, v = (oy + 0.5) / sy - 0.5;
            const long   x0 = static_cast<long>(std::floor(u)) - 1, y0 = static_cast<long>(std::floor(v)) - 1;
            double       acc = 0.0, wsum = 0.0;
            for (long yy = y0; yy < y0 + 4; ++yy) {
                for (long xx = x0; xx < x0 + 4; ++xx) {
                    const double wt = keys(u - xx) * keys(v - yy);
                    const long   cy = std::clamp<long>(yy, 0, static_cast<long>(h) - 1);
                    const long   cx = std::clamp<long>(xx, 0, static_cast<long>(w) - 1);
                    acc += wt * src[cy * w + cx];
                    wsum += wt;
                }
            }
            out[oy * ow + ox] = std::clamp(acc / wsum, 0.0, 1.0);
        }
    }
    return out;
}

inline Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
    Tensor<double> out({a.extent(0), b.extent(1)});
    for (std::size_t i = 0; i < a.extent(0); ++i) {
        for (std::size_t j = 0; j < b.extent(1); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.extent(1); ++k) {
                s += a(i, k) * b(k, j);
            }
            out(i, j) = s;
        }
    }
    return out;
}

inline double frobenius(const Tensor<double>& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * a[i];
    }
    return std::sqrt(s);
}

} // namespace oracle
