#pragma once

#include <lkca/error.hpp>
#include <lkca/tensor.hpp>

#include <cmath>
#include <cstddef>
#include <string>

namespace lkca {

struct LossWeights {
    double lambda1 = 0.5;  ///< sam weight in the H loss
    double lambda2 = 0.1;  ///< gradient weight in the H loss
    double lambda3 = 0.5;  ///< cosine weight in the KD loss
    double lambda4 = 0.5;  ///< sam weight in the KD loss
    double lambda5 = 0.1;  ///< gradient weight in the KD loss
    double alpha   = 0.01; ///< KD coefficient in the total loss

    void validate() const {
        for (double v : {lambda1, lambda2, lambda3, lambda4, lambda5, alpha}) {
            require(std::isfinite(v) && v >= 0.0, "loss weights must be finite and >= 0");
        }
    }
};

/// D(epoch) = factor ^ floor(epoch / every)
struct DecaySchedule {
    double      factor = 0.66;
    std::size_t every  = 10;

    void validate() const {
        require(factor > 0.0 && factor <= 1.0, "decay factor must lie in (0, 1]");
        require(every >= 1, "decay period must be >= 1 epoch");
    }

    [[nodiscard]] double at(std::size_t epoch) const {
        validate();
        return std::pow(factor, static_cast<double>(epoch / every));
    }
};

/// Scalar loss value and, when requested, its gradient with respect to the first argument.
template<typename T>
struct LossValue {
    double    value = 0.0;
    Tensor<T> grad;
};

inline constexpr double kSpectralEps = 1e-8;

namespace detail {

template<typename T>
void check_loss_args(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    require_rank(a, 4, what);
    require_same_shape(a, b, what);
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Visits every spectral vector of an [N,B,H,W] tensor: fn(base offset, stride, bands).
template<typename T, typename Fn>
void for_each_pixel(const Tensor<T>& a, Fn&& fn) {
    const std::size_t n = a.extent(0), bands = a.extent(1), plane = a.extent(2) * a.extent(3);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t p = 0; p < plane; ++p) {
            fn(s * bands * plane + p, plane, bands);
        }
    }
}

} // namespace detail

/// mean |a - b|
template<typename T>
LossValue<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b, bool need_grad = false) {
    detail::check_loss_args(a, b, "l1_loss");
    LossValue<T> out;
    const double inv = 1.0 / static_cast<double>(a.size());
    double       acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    }
    out.value = acc * inv;
    if (need_grad) {
        out.grad = Tensor<T>(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
            out.grad[i] = static_cast<T>(detail::sign(static_cast<double>(a[i]) - static_cast<double>(b[i])) * inv);
        }
    }
    return out;
}

/// Mean spectral angle in radians over all pixels. The angle is 2*atan2(|a^ - b^|, |a^ + b^|),
/// which equals arccos of the cosine but is exactly zero for parallel vectors. Pixels whose norm
/// product is <= 1e-8 contribute 0 when equal and pi/2 otherwise, with zero gradient.
template<typename T>
LossValue<T> sam_loss(const Tensor<T>& a, const Tensor<T>& b, bool need_grad = false) {
    detail::check_loss_args(a, b, "sam_loss");
    LossValue<T> out;
    if (need_grad) {
        out.grad = Tensor<T>(a.shape());
    }
    const double pixels = static_cast<double>(a.size() / a.extent(1));
    double       acc    = 0.0;
    detail::for_each_pixel(a, [&](std::size_t base, std::size_t stride, std::size_t bands) {
        double na2 = 0.0, nb2 = 0.0;
        bool   equal = true;
        for (std::size_t k = 0; k < bands; ++k) {
            const double x = a[base + k * stride], y = b[base + k * stride];
            na2 += x * x;
            nb2 += y * y;
            equal = equal && x == y;
        }
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        if (na * nb <= kSpectralEps) {
            acc += equal ? 0.0 : M_PI / 2.0;
            return;
        }
        double dm = 0.0, dp = 0.0;
        for (std::size_t k = 0; k < bands; ++k) {
            const double x = a[base + k * stride] / na, y = b[base + k * stride] / nb;
            dm += (x - y) * (x - y);
            dp += (x + y) * (x + y);
        }
        const double theta = 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
        acc += theta;
        if (need_grad) {
            const double s = std::sin(theta), c = std::cos(theta);
            if (s < 1e-12) {
                return;
            }
            for (std::size_t k = 0; k < bands; ++k) {
                const double ah = a[base + k * stride] / na, bh = b[base + k * stride] / nb;
                out.grad[base + k * stride] = static_cast<T>(-(bh - c * ah) / (na * s) / pixels);
            }
        }
    });
    out.value = acc / pixels;
    return out;
}

/// 1 - mean per-pixel cosine similarity of spectral vectors. Pixels whose norm product is
/// <= 1e-8 contribute similarity 0. No gradient flows to `teacher`.
template<typename T>
LossValue<T> cos_loss(const Tensor<T>& student, const Tensor<T>& teacher, bool need_grad = false) {
    detail::check_loss_args(student, teacher, "cos_loss");
    LossValue<T> out;
    if (need_grad) {
        out.grad = Tensor<T>(student.shape());
    }
    const double pixels = static_cast<double>(student.size() / student.extent(1));
    double       acc    = 0.0;
    detail::for_each_pixel(student, [&](std::size_t base, std::size_t stride, std::size_t bands) {
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (std::size_t k = 0; k < bands; ++k) {
            const double x = student[base + k * stride], y = teacher[base + k * stride];
            dot += x * y;
            na2 += x * x;
            nb2 += y * y;
        }
        const double denom = std::sqrt(na2 * nb2);
        if (denom <= kSpectralEps) {
            return;
        }
        const double c = dot / denom;
        acc += c;
        if (need_grad) {
            const double na = std::sqrt(na2), nb = std::sqrt(nb2);
            for (std::size_t k = 0; k < bands; ++k) {
                const double ah = student[base + k * stride] / na, bh = teacher[base + k * stride] / nb;
                out.grad[base + k * stride] = static_cast<T>(-(bh - c * ah) / na / pixels);
            }
        }
    });
    out.value = 1.0 - acc / pixels;
    return out;
}

/// mean |dx a - dx b| + mean |dy a - dy b| with forward differences along width and height.
/// A term whose axis has extent 1 is zero.
template<typename T>
LossValue<T> grad_loss(const Tensor<T>& a, const Tensor<T>& b, bool need_grad = false) {
    detail::check_loss_args(a, b, "grad_loss");
    LossValue<T>      out;
    const std::size_t nb = a.extent(0) * a.extent(1), h = a.extent(2), w = a.extent(3);
    Tensor<double>    g;
    if (need_grad) {
        g = Tensor<double>(a.shape());
    }
    auto axis = [&](std::size_t step, std::size_t rows, std::size_t cols) {
        if (rows * cols == 0) {
            return 0.0;
        }
        const double inv = 1.0 / static_cast<double>(nb * rows * cols);
        double       acc = 0.0;
        for (std::size_t s = 0; s < nb; ++s) {
            for (std::size_t y = 0; y < rows; ++y) {
                for (std::size_t x = 0; x < cols; ++x) {
                    const std::size_t i  = s * h * w + y * w + x;
                    const double      da = static_cast<double>(a[i + step]) - static_cast<double>(a[i]);
                    const double      db = static_cast<double>(b[i + step]) - static_cast<double>(b[i]);
                    acc += std::abs(da - db);
                    if (need_grad) {
                        const double sg = detail::sign(da - db) * inv;
                        g[i + step] += sg;
                        g[i] -= sg;
                    }
                }
            }
        }
        return acc * inv;
    };
    out.value = axis(1, h, w - 1) + axis(w, h - 1, w);
    if (need_grad) {
        out.grad = g.template cast<T>();
    }
    return out;
}

template<typename T>
struct CompositeLoss {
    double    value = 0.0;
    double    primary = 0.0; ///< l1 for the H loss, cosine for the KD loss
    double    sam = 0.0, grad = 0.0;
    Tensor<T> gradient;
};

namespace detail {
template<typename T>
void accumulate(Tensor<T>& acc, const Tensor<T>& g, double w) {
    if (w == 0.0) {
        return;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += static_cast<T>(w) * g[i];
    }
}
} // namespace detail

/// l1 + lambda1 * sam + lambda2 * grad
template<typename T>
CompositeLoss<T> h_loss(const Tensor<T>& sr, const Tensor<T>& hr, const LossWeights& w, bool need_grad = false) {
    auto         l1 = l1_loss(sr, hr, need_grad);
    auto         sm = sam_loss(sr, hr, need_grad);
    auto         gr = grad_loss(sr, hr, need_grad);
    CompositeLoss<T> out{l1.value + w.lambda1 * sm.value + w.lambda2 * gr.value, l1.value, sm.value, gr.value, {}};
    if (need_grad) {
        out.gradient = std::move(l1.grad);
        detail::accumulate(out.gradient, sm.grad, w.lambda1);
        detail::accumulate(out.gradient, gr.grad, w.lambda2);
    }
    return out;
}

/// lambda3 * cos + lambda4 * sam + lambda5 * grad, with the teacher map held constant.
template<typename T>
CompositeLoss<T> kd_loss(const Tensor<T>& fs, const Tensor<T>& ft, const LossWeights& w, bool need_grad = false) {
    auto         cs = cos_loss(fs, ft, need_grad);
    auto         sm = sam_loss(fs, ft, need_grad);
    auto         gr = grad_loss(fs, ft, need_grad);
    CompositeLoss<T> out{w.lambda3 * cs.value + w.lambda4 * sm.value + w.lambda5 * gr.value, cs.value, sm.value,
                         gr.value, {}};
    if (need_grad) {
        out.gradient = Tensor<T>(fs.shape());
        detail::accumulate(out.gradient, cs.grad, w.lambda3);
        detail::accumulate(out.gradient, sm.grad, w.lambda4);
        detail::accumulate(out.gradient, gr.grad, w.lambda5);
    }
    return out;
}

/// D * alpha * kd + h
inline double total_loss(double kd, double h, double decay, double alpha) { return decay * alpha * kd + h; }

} // namespace lkca
