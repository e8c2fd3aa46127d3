#pragma once

#include <lkca/error.hpp>
#include <lkca/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace lkca {

/// Cubic convolution kernel with a = -0.5 (Catmull-Rom).
inline double cubic_kernel(double x) {
    constexpr double a  = -0.5;
    const double     ax = std::abs(x);
    if (ax <= 1.0) {
        return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    }
    if (ax < 2.0) {
        return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
    }
    return 0.0;
}

namespace detail {

struct ResampleTaps {
    std::size_t              taps = 0;
    std::vector<std::size_t> index;  // out * taps, already edge-clamped
    std::vector<double>      weight; // out * taps, normalized to sum 1
};

// Pixel-center aligned 1-D resampling weights. When shrinking with antialiasing the kernel is
// stretched by the inverse scale so every input sample contributes.
inline ResampleTaps resample_taps(std::size_t in, std::size_t out, bool antialias) {
    const double scale   = static_cast<double>(out) / static_cast<double>(in);
    const bool   stretch = antialias && scale < 1.0;
    const double kscale  = stretch ? scale : 1.0;
    const double width   = stretch ? 4.0 / scale : 4.0;

    ResampleTaps t;
    t.taps = static_cast<std::size_t>(std::ceil(width)) + 2;
    t.index.resize(out * t.taps);
    t.weight.resize(out * t.taps);
    for (std::size_t o = 0; o < out; ++o) {
        const double    u     = (static_cast<double>(o) + 0.5) / scale - 0.5;
        const long long left  = static_cast<long long>(std::floor(u - width / 2.0));
        double          total = 0.0;
        for (std::size_t p = 0; p < t.taps; ++p) {
            const long long j = left + static_cast<long long>(p);
            const double    w = kscale * cubic_kernel(kscale * (u - static_cast<double>(j)));
            const long long c = std::clamp<long long>(j, 0, static_cast<long long>(in) - 1);
            t.index[o * t.taps + p]  = static_cast<std::size_t>(c);
            t.weight[o * t.taps + p] = w;
            total += w;
        }
        for (std::size_t p = 0; p < t.taps; ++p) {
            t.weight[o * t.taps + p] /= total;
        }
    }
    return t;
}

template<typename T>
void resize_plane(const T* src, std::size_t h, std::size_t w, T* dst, std::size_t oh, std::size_t ow,
                  const ResampleTaps& tx, const ResampleTaps& ty) {
    std::vector<double> tmp(h * ow);
    for (std::size_t y = 0; y < h; ++y) {
        const T* row = src + y * w;
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t p = 0; p < tx.taps; ++p) {
                acc += tx.weight[x * tx.taps + p] * static_cast<double>(row[tx.index[x * tx.taps + p]]);
            }
            tmp[y * ow + x] = acc;
        }
    }
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t p = 0; p < ty.taps; ++p) {
                acc += ty.weight[y * ty.taps + p] * tmp[ty.index[y * ty.taps + p] * ow + x];
            }
            dst[y * ow + x] = static_cast<T>(std::clamp(acc, 0.0, 1.0));
        }
    }
}

} // namespace detail

/// Resamples one h x w plane to oh x ow: horizontal pass, then vertical, output clamped to [0, 1].
template<typename T>
void bicubic_resize_plane(const T* src, std::size_t h, std::size_t w, T* dst, std::size_t oh, std::size_t ow,
                          bool antialias = true) {
    detail::resize_plane(src, h, w, dst, oh, ow, detail::resample_taps(w, ow, antialias),
                         detail::resample_taps(h, oh, antialias));
}

/// Bicubic resize of every [n, c] plane of an [N, C, H, W] tensor.
template<typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w, bool antialias = true) {
    require_rank(x, 4, "bicubic_resize");
    require(out_h >= 1 && out_w >= 1, "bicubic_resize: output extents must be >= 1");
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor<T>         out({n, c, out_h, out_w});
    const auto        tx = detail::resample_taps(w, out_w, antialias);
    const auto        ty = detail::resample_taps(h, out_h, antialias);
    for (std::size_t p = 0; p < n * c; ++p) {
        detail::resize_plane(x.data() + p * h * w, h, w, out.data() + p * out_h * out_w, out_h, out_w, tx, ty);
    }
    return out;
}

} // namespace lkca
