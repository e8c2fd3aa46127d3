#pragma once

// Scalar-loop reference metrics and losses over [N,B,H,W] tensors, indexed element by element.

#include <lkca/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using lkca::Tensor;

struct Metrics {
    double mpsnr = 0, mssim = 0, sam = 0, cc = 0, rmse = 0, ergas = 0;
};

inline double acos_angle(const Tensor<double>& a, const Tensor<double>& b, std::size_t s, std::size_t y,
                         std::size_t x) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.extent(1); ++k) {
        dot += a(s, k, y, x) * b(s, k, y, x);
        na += a(s, k, y, x) * a(s, k, y, x);
        nb += b(s, k, y, x) * b(s, k, y, x);
    }
    return std::acos(std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0));
}

/// SSIM with a 2-D Gaussian window (not separated), valid region only.
inline double ssim_band(const Tensor<double>& a, const Tensor<double>& b, std::size_t s, std::size_t k) {
    const std::size_t h = a.extent(2), w = a.extent(3);
    std::size_t       win = std::min<std::size_t>({11, h, w});
    if (win % 2 == 0) {
        --win;
    }
    const double        c = (win - 1) / 2.0;
    std::vector<double> g(win * win);
    double              gs = 0;
    for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
            g[i * win + j] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * 1.5 * 1.5));
            gs += g[i * win + j];
        }
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double       total = 0;
    std::size_t  count = 0;
    for (std::size_t y = 0; y + win <= h; ++y) {
        for (std::size_t x = 0; x + win <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t i = 0; i < win; ++i) {
                for (std::size_t j = 0; j < win; ++j) {
                    const double wt = g[i * win + j] / gs;
                    const double va = a(s, k, y + i, x + j), vb = b(s, k, y + i, x + j);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / count;
}

/// Six metrics of `sr` against reference `hr`, averaged over the batch axis.
inline Metrics metrics(const Tensor<double>& sr, const Tensor<double>& hr, std::size_t r) {
    const std::size_t n = sr.extent(0), nb = sr.extent(1), h = sr.extent(2), w = sr.extent(3);
    Metrics           m;
    for (std::size_t s = 0; s < n; ++s) {
        double psnr = 0, ssim = 0, cc = 0, se_all = 0, erg = 0, sam = 0;
        for (std::size_t k = 0; k < nb; ++k) {
            double se = 0, mu_a = 0, mu_b = 0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    se += (sr(s, k, y, x) - hr(s, k, y, x)) * (sr(s, k, y, x) - hr(s, k, y, x));
                    mu_a += sr(s, k, y, x);
                    mu_b += hr(s, k, y, x);
                }
            }
            const double mse = se / (h * w);
            mu_a /= h * w;
            mu_b /= h * w;
            psnr += mse == 0 ? 100.0 : std::min(100.0, 10 * std::log10(1.0 / mse));
            ssim += ssim_band(sr, hr, s, k);
            double cov = 0, va = 0, vb = 0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    cov += (sr(s, k, y, x) - mu_a) * (hr(s, k, y, x) - mu_b);
                    va += (sr(s, k, y, x) - mu_a) * (sr(s, k, y, x) - mu_a);
                    vb += (hr(s, k, y, x) - mu_b) * (hr(s, k, y, x) - mu_b);
                }
            }
            cc += cov / std::sqrt(va * vb);
            se_all += se;
            erg += mse / (mu_b * mu_b);
        }
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                sam += acos_angle(sr, hr, s, y, x);
            }
        }
        m.mpsnr += psnr / nb;
        m.mssim += ssim / nb;
        m.cc += cc / nb;
        m.rmse += std::sqrt(se_all / (nb * h * w));
        m.ergas += 100.0 / r * std::sqrt(erg / nb);
        m.sam += sam / (h * w) * 180.0 / M_PI;
    }
    m.mpsnr /= n;
    m.mssim /= n;
    m.sam /= n;
    m.cc /= n;
    m.rmse /= n;
    m.ergas /= n;
    return m;
}

inline double l1(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::fabs(a[i] - b[i]);
    }
    return s / a.size();
}

inline double sam_rad(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t n = 0; n < a.extent(0); ++n) {
        for (std::size_t y = 0; y < a.extent(2); ++y) {
            for (std::size_t x = 0; x < a.extent(3); ++x) {
                s += acos_angle(a, b, n, y, x);
            }
        }
    }
    return s / (a.extent(0) * a.extent(2) * a.extent(3));
}

inline double cos_loss(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t n = 0; n < a.extent(0); ++n) {
        for (std::size_t y = 0; y < a.extent(2); ++y) {
            for (std::size_t x = 0; x < a.extent(3); ++x) {
                s += std::cos(acos_angle(a, b, n, y, x));
            }
        }
    }
    return 1.0 - s / (a.extent(0) * a.extent(2) * a.extent(3));
}

inline double grad_l1(const Tensor<double>& a, const Tensor<double>& b) {
    const std::size_t n = a.extent(0), c = a.extent(1), h = a.extent(2), w = a.extent(3);
    double            sx = 0, sy = 0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < c; ++k) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    if (x + 1 < w) {
                        sx += std::fabs((a(s, k, y, x + 1) - a(s, k, y, x)) - (b(s, k, y, x + 1) - b(s, k, y, x)));
                    }
                    if (y + 1 < h) {
                        sy += std::fabs((a(s, k, y + 1, x) - a(s, k, y, x)) - (b(s, k, y + 1, x) - b(s, k, y, x)));
                    }
                }
            }
        }
    }
    return sx / (n * c * h * (w - 1)) + sy / (n * c * (h - 1) * w);
}

} // namespace oracle
