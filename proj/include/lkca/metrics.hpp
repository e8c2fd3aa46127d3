#pragma once

#include <lkca/error.hpp>
#include <lkca/parallel.hpp>
#include <lkca/tensor.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

namespace lkca {

inline constexpr double kPsnrCap = 100.0;

struct MetricResult {
    double                   mpsnr = 0.0, mssim = 0.0, sam = 0.0, cc = 0.0, rmse = 0.0, ergas = 0.0;
    std::vector<std::size_t> constant_bands; ///< bands where CC fell back to the constant-band rule

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"MPSNR", mpsnr}, {"MSSIM", mssim}, {"SAM", sam},         {"CC", cc},
                {"RMSE", rmse},   {"ERGAS", ergas}, {"sam_unit", "degrees"}, {"constant_bands", constant_bands}};
    }

    static std::string csv_header() { return "MPSNR,MSSIM,SAM,CC,RMSE,ERGAS"; }

    [[nodiscard]] std::string csv_row() const {
        std::ostringstream os;
        os.precision(10);
        os << mpsnr << ',' << mssim << ',' << sam << ',' << cc << ',' << rmse << ',' << ergas;
        return os.str();
    }
};

struct SsimOptions {
    std::size_t window = 11;
    double      sigma  = 1.5;
    double      k1 = 0.01, k2 = 0.03, range = 1.0;
};

/// PSNR of one band with peak 1, capped at 100 dB.
inline double band_psnr(const double* a, const double* b, std::size_t count) {
    double mse = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(count);
    if (mse <= 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> g(size);
    const double        c = (static_cast<double>(size) - 1.0) / 2.0;
    double              s = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double x = static_cast<double>(i) - c;
        g[i]           = std::exp(-x * x / (2.0 * sigma * sigma));
        s += g[i];
    }
    for (auto& v : g) {
        v /= s;
    }
    return g;
}

/// Mean SSIM of one band over the valid (unpadded) region. The window is shrunk to the largest
/// odd size that fits when the band is smaller than the configured window.
inline double band_ssim(const double* a, const double* b, std::size_t h, std::size_t w, const SsimOptions& opt = {}) {
    std::size_t win = std::min({opt.window, h, w});
    if (win % 2 == 0) {
        --win;
    }
    const auto        g  = gaussian_window(win, opt.sigma);
    const double      c1 = (opt.k1 * opt.range) * (opt.k1 * opt.range);
    const double      c2 = (opt.k2 * opt.range) * (opt.k2 * opt.range);
    const std::size_t oh = h - win + 1, ow = w - win + 1;

    // separable filtering: rows first into [h, ow], then columns into [oh, ow]
    auto filter = [&](auto&& pixel) {
        std::vector<double> tmp(h * ow, 0.0), out(oh * ow, 0.0);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double s = 0.0;
                for (std::size_t k = 0; k < win; ++k) {
                    s += g[k] * pixel(y * w + x + k);
                }
                tmp[y * ow + x] = s;
            }
        }
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double s = 0.0;
                for (std::size_t k = 0; k < win; ++k) {
                    s += g[k] * tmp[(y + k) * ow + x];
                }
                out[y * ow + x] = s;
            }
        }
        return out;
    };
    const auto mu_a  = filter([&](std::size_t i) { return a[i]; });
    const auto mu_b  = filter([&](std::size_t i) { return b[i]; });
    const auto e_aa  = filter([&](std::size_t i) { return a[i] * a[i]; });
    const auto e_bb  = filter([&](std::size_t i) { return b[i] * b[i]; });
    const auto e_ab  = filter([&](std::size_t i) { return a[i] * b[i]; });
    double     total = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) {
        const double va  = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb  = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                 ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(oh * ow);
}

/// Pearson correlation of one band. Sets `constant` when either band has zero variance; the value
/// is then 1 for two equal constant bands and 0 otherwise.
inline double band_cc(const double* a, const double* b, std::size_t count, bool& constant) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(count);
    mb /= static_cast<double>(count);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    constant = saa == 0.0 || sbb == 0.0;
    if (constant) {
        return (saa == 0.0 && sbb == 0.0 && std::equal(a, a + count, b)) ? 1.0 : 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

/// Spectral angle of one pixel in radians; same guard as sam_loss.
inline double pixel_angle(const double* a, const double* b, std::size_t bands, std::size_t stride) {
    double na2 = 0.0, nb2 = 0.0;
    bool   equal = true;
    for (std::size_t k = 0; k < bands; ++k) {
        na2 += a[k * stride] * a[k * stride];
        nb2 += b[k * stride] * b[k * stride];
        equal = equal && a[k * stride] == b[k * stride];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na * nb <= 1e-8) {
        return equal ? 0.0 : M_PI / 2.0;
    }
    double dm = 0.0, dp = 0.0;
    for (std::size_t k = 0; k < bands; ++k) {
        const double x = a[k * stride] / na, y = b[k * stride] / nb;
        dm += (x - y) * (x - y);
        dp += (x + y) * (x + y);
    }
    return 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
}

/// The six table metrics of one [B,H,W] image pair stored band-sequentially in doubles.
inline MetricResult image_metrics(const std::vector<double>& sr, const std::vector<double>& hr, std::size_t bands,
                                  std::size_t h, std::size_t w, std::size_t scale) {
    const std::size_t   plane = h * w;
    std::vector<double> psnr(bands), ssim(bands), cc(bands), mse(bands), mean_hr(bands);
    std::vector<char>   constant(bands, 0);
    parallel_for(bands, [&](std::size_t b) {
        const double* a = sr.data() + b * plane;
        const double* r = hr.data() + b * plane;
        psnr[b]         = band_psnr(a, r, plane);
        ssim[b]         = band_ssim(a, r, h, w);
        bool flag       = false;
        cc[b]           = band_cc(a, r, plane, flag);
        constant[b]     = flag ? 1 : 0;
        double e = 0.0, m = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            e += (a[i] - r[i]) * (a[i] - r[i]);
            m += r[i];
        }
        mse[b]     = e / static_cast<double>(plane);
        mean_hr[b] = m / static_cast<double>(plane);
    });

    MetricResult res;
    double       total_se = 0.0, ergas_acc = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
        res.mpsnr += psnr[b];
        res.mssim += ssim[b];
        res.cc += cc[b];
        total_se += mse[b];
        const double rel = std::sqrt(mse[b]) / std::max(mean_hr[b], 1e-12);
        ergas_acc += rel * rel;
        if (constant[b] != 0) {
            res.constant_bands.push_back(b);
        }
    }
    const double nb = static_cast<double>(bands);
    res.mpsnr /= nb;
    res.mssim /= nb;
    res.cc /= nb;
    res.rmse  = std::sqrt(total_se / nb);
    res.ergas = 100.0 / static_cast<double>(scale) * std::sqrt(ergas_acc / nb);

    double angle = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
        angle += pixel_angle(sr.data() + p, hr.data() + p, bands, plane);
    }
    res.sam = angle / static_cast<double>(plane) * 180.0 / M_PI;
    return res;
}

/// Averages of the per-image metrics over the batch axis of [N,B,H,W] tensors.
template<typename T>
MetricResult compute_metrics(const Tensor<T>& sr, const Tensor<T>& hr, std::size_t scale) {
    require_rank(sr, 4, "metrics");
    require_same_shape(sr, hr, "metrics");
    require(scale >= 1, "metrics: scale must be >= 1");
    const std::size_t n = sr.extent(0), bands = sr.extent(1), h = sr.extent(2), w = sr.extent(3);
    const std::size_t per = bands * h * w;
    MetricResult      out;
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> a(per), b(per);
        for (std::size_t i = 0; i < per; ++i) {
            a[i] = static_cast<double>(sr[s * per + i]);
            b[i] = static_cast<double>(hr[s * per + i]);
        }
        const auto m = image_metrics(a, b, bands, h, w, scale);
        out.mpsnr += m.mpsnr;
        out.mssim += m.mssim;
        out.sam += m.sam;
        out.cc += m.cc;
        out.rmse += m.rmse;
        out.ergas += m.ergas;
        for (auto cb : m.constant_bands) {
            if (std::find(out.constant_bands.begin(), out.constant_bands.end(), cb) == out.constant_bands.end()) {
                out.constant_bands.push_back(cb);
            }
        }
    }
    const double nn = static_cast<double>(n);
    out.mpsnr /= nn;
    out.mssim /= nn;
    out.sam /= nn;
    out.cc /= nn;
    out.rmse /= nn;
    out.ergas /= nn;
    std::sort(out.constant_bands.begin(), out.constant_bands.end());
    return out;
}

/// Mean of per-band PSNR averaged over the batch; the quantity tracked during training.
template<typename T>
double mean_psnr(const Tensor<T>& sr, const Tensor<T>& hr) {
    require_rank(sr, 4, "mean_psnr");
    require_same_shape(sr, hr, "mean_psnr");
    const std::size_t   planes = sr.extent(0) * sr.extent(1), plane = sr.extent(2) * sr.extent(3);
    double              acc = 0.0;
    std::vector<double> a(plane), b(plane);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < plane; ++i) {
            a[i] = static_cast<double>(sr[p * plane + i]);
            b[i] = static_cast<double>(hr[p * plane + i]);
        }
        acc += band_psnr(a.data(), b.data(), plane);
    }
    return acc / static_cast<double>(planes);
}

} // namespace lkca
