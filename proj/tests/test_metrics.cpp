#include <lkca/metrics.hpp>

#include "oracles/loop_metrics.hpp"
#include "oracles/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>

using lkca::Tensor;

namespace {

void expect_matches_oracle(const Tensor<double>& sr, const Tensor<double>& hr, std::size_t r) {
    const auto m = lkca::compute_metrics(sr, hr, r);
    const auto o = oracle::metrics(sr, hr, r);
    EXPECT_NEAR(m.mpsnr, o.mpsnr, 1e-6);
    EXPECT_NEAR(m.mssim, o.mssim, 1e-6);
    EXPECT_NEAR(m.sam, o.sam, 1e-6);
    EXPECT_NEAR(m.cc, o.cc, 1e-6);
    EXPECT_NEAR(m.rmse, o.rmse, 1e-6);
    EXPECT_NEAR(m.ergas, o.ergas, 1e-6);
}

Tensor<double> with_noise(const Tensor<double>& x, double sigma, std::uint64_t seed) {
    lkca::Rng rng(seed);
    auto      out = x;
    for (auto& v : out.values()) {
        v += sigma * lkca::normal(rng);
    }
    return out;
}

} // namespace

TEST(MetricOracle, RandomInputs) {
    for (std::uint64_t seed : {1u, 2u}) {
        const auto hr = synth::uniform_tensor({2, 8, 12, 12}, seed);
        const auto sr = synth::uniform_tensor({2, 8, 12, 12}, seed + 50);
        expect_matches_oracle(sr, hr, 4);
    }
}

TEST(MetricOracle, CloseReconstructionOnLargerImage) {
    const auto hr = synth::uniform_tensor({2, 8, 24, 20}, 3, 0.2, 0.9);
    expect_matches_oracle(with_noise(hr, 0.02, 4), hr, 8);
}

TEST(MetricOracle, SmallImageShrinksWindow) {
    const auto hr = synth::uniform_tensor({1, 3, 6, 8}, 5, 0.2, 0.9);
    expect_matches_oracle(with_noise(hr, 0.05, 6), hr, 4);
    const auto tiny = synth::uniform_tensor({1, 2, 4, 4}, 7, 0.2, 0.9);
    expect_matches_oracle(with_noise(tiny, 0.05, 8), tiny, 4);
}

TEST(MetricIdentity, ExactValues) {
    const auto hr = synth::uniform_tensor({2, 8, 12, 12}, 9, 0.05, 1.0);
    const auto m  = lkca::compute_metrics(hr, hr, 4);
    EXPECT_EQ(m.sam, 0.0);
    EXPECT_EQ(m.ergas, 0.0);
    EXPECT_EQ(m.cc, 1.0);
    EXPECT_EQ(m.rmse, 0.0);
    EXPECT_EQ(m.mpsnr, lkca::kPsnrCap);
    EXPECT_NEAR(m.mssim, 1.0, 1e-12);
    EXPECT_TRUE(m.constant_bands.empty());
}

TEST(MetricIdentity, ConstantOffset) {
    const auto hr = synth::uniform_tensor({1, 4, 16, 16}, 10, 0.1, 0.8);
    auto       sr = hr;
    for (auto& v : sr.values()) {
        v += 0.1;
    }
    const auto m = lkca::compute_metrics(sr, hr, 4);
    EXPECT_NEAR(m.mpsnr, 20.0, 1e-9);
    EXPECT_NEAR(m.rmse, 0.1, 1e-12);
    EXPECT_NEAR(m.cc, 1.0, 1e-12);
    EXPECT_GT(m.sam, 0.0);
    EXPECT_NEAR(lkca::mean_psnr(sr, hr), 20.0, 1e-9);
}

TEST(MetricIdentity, ErgasScalesWithInverseRatio) {
    const auto hr = synth::uniform_tensor({1, 4, 12, 12}, 11, 0.2, 0.9);
    const auto sr = with_noise(hr, 0.03, 12);
    EXPECT_NEAR(lkca::compute_metrics(sr, hr, 4).ergas, 2.0 * lkca::compute_metrics(sr, hr, 8).ergas, 1e-12);
}

TEST(MetricCC, ConstantBandRule) {
    auto hr = synth::uniform_tensor({1, 4, 8, 8}, 13, 0.2, 0.9);
    auto sr = with_noise(hr, 0.01, 14);
    for (std::size_t i = 0; i < 64; ++i) {
        hr[2 * 64 + i] = 0.5;
        sr[2 * 64 + i] = 0.5;
        hr[3 * 64 + i] = 0.25;
    }
    const auto m = lkca::compute_metrics(sr, hr, 4);
    EXPECT_EQ(m.constant_bands, (std::vector<std::size_t>{2, 3}));
    bool       c0 = false, c1 = false;
    const double cc0 = lkca::band_cc(sr.data(), hr.data(), 64, c0);
    const double cc1 = lkca::band_cc(sr.data() + 64, hr.data() + 64, 64, c1);
    EXPECT_FALSE(c0 || c1);
    EXPECT_NEAR(m.cc, (cc0 + cc1 + 1.0 + 0.0) / 4.0, 1e-12);
}

TEST(MetricMonotone, NoiseDegradesEveryMetric) {
    const auto   hr   = synth::uniform_tensor({1, 6, 16, 16}, 15, 0.2, 0.8);
    lkca::MetricResult prev = lkca::compute_metrics(hr, hr, 4);
    for (double sigma : {0.005, 0.02, 0.05, 0.1}) {
        const auto m = lkca::compute_metrics(with_noise(hr, sigma, 16), hr, 4);
        EXPECT_LT(m.mpsnr, prev.mpsnr);
        EXPECT_LT(m.mssim, prev.mssim);
        EXPECT_LT(m.cc, prev.cc);
        EXPECT_GT(m.sam, prev.sam);
        EXPECT_GT(m.rmse, prev.rmse);
        EXPECT_GT(m.ergas, prev.ergas);
        prev = m;
    }
}

TEST(MetricMisc, BatchAverageAndSerialization) {
    const auto hr = synth::uniform_tensor({2, 3, 12, 12}, 17, 0.2, 0.9);
    const auto sr = with_noise(hr, 0.02, 18);
    const auto m  = lkca::compute_metrics(sr, hr, 4);
    double     psnr = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
        Tensor<double> a({1, 3, 12, 12}), b({1, 3, 12, 12});
        std::copy_n(sr.data() + s * a.size(), a.size(), a.data());
        std::copy_n(hr.data() + s * b.size(), b.size(), b.data());
        psnr += lkca::compute_metrics(a, b, 4).mpsnr / 2.0;
    }
    EXPECT_NEAR(m.mpsnr, psnr, 1e-12);
    EXPECT_EQ(lkca::MetricResult::csv_header(), "MPSNR,MSSIM,SAM,CC,RMSE,ERGAS");
    EXPECT_EQ(m.to_json()["sam_unit"], "degrees");
    EXPECT_THROW((void)lkca::compute_metrics(sr, synth::uniform_tensor({2, 3, 12, 11}, 19), 4), lkca::Error);
}
