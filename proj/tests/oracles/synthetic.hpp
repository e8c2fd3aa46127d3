#pragma once

// Deterministic synthetic data for tests and probes.

#include <lkca/hsi_io.hpp>
#include <lkca/random.hpp>
#include <lkca/tensor.hpp>

#include <cmath>

namespace synth {

template<typename T = double>
lkca::Tensor<T> uniform_tensor(const lkca::Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    lkca::Rng       rng(seed);
    lkca::Tensor<T> t(shape);
    for (auto& v : t.values()) {
        v = static_cast<T>(lkca::uniform(rng, lo, hi));
    }
    return t;
}

/// Low-rank spectra times oriented sinusoidal fields, values inside [0, 1]. `freq` scales the
/// spatial frequencies; around 0.9 rad/px the content sits well above the LR Nyquist limit at r=4.
inline lkca::HsiCube structured_cube(std::size_t bands, std::size_t h, std::size_t w, std::uint64_t seed,
                                     double freq = 0.9) {
    lkca::Rng     rng(seed);
    lkca::HsiCube cube(bands, h, w);
    constexpr int kRank = 3;
    std::vector<double> spec(kRank * bands);
    for (auto& v : spec) {
        v = 0.3 + 0.7 * lkca::uniform01(rng);
    }
    double phase[kRank];
    for (auto& p : phase) {
        p = 2.0 * M_PI * lkca::uniform01(rng);
    }
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double f[kRank] = {0.5 + 0.5 * std::sin(freq * x + 0.13 * y + phase[0]),
                                     0.5 + 0.5 * std::cos(0.9 * freq * y - 0.05 * x + phase[1]),
                                     0.5 + 0.5 * std::sin(0.11 * (x + y) + phase[2])};
            for (std::size_t b = 0; b < bands; ++b) {
                double v = 0.0;
                for (int k = 0; k < kRank; ++k) {
                    v += spec[k * bands + b] * f[k];
                }
                cube.at(b, y, x) = static_cast<float>(v / kRank);
            }
        }
    }
    return cube;
}

} // namespace synth
