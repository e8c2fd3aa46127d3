#include <lkca/lowrank.hpp>

#include "oracles/naive_ops.hpp"
#include "oracles/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using lkca::LkcaNet;
using lkca::NetConfig;
using lkca::Tensor;

namespace {

NetConfig toy_config() {
    NetConfig c;
    c.bands        = 4;
    c.channels     = 8;
    c.blocks       = 1;
    c.scale        = 2;
    c.ca_reduction = 4;
    return c;
}

lkca::UpsamplerSpec full_spec(std::size_t in, std::size_t out) {
    lkca::UpsamplerSpec s;
    s.in_channels  = in;
    s.out_channels = out;
    return s;
}

Tensor<double> orthonormal_product(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    const auto s = lkca::svd(synth::uniform_tensor({rows, cols}, seed, -1, 1));
    return oracle::matmul(s.u, s.vt);
}

} // namespace

TEST(WeightMatrix, RoundTripAndLayout) {
    const auto w = synth::uniform_tensor({6, 4, 3, 3}, 1);
    const auto m = lkca::weights_to_matrix(w);
    ASSERT_EQ(m.shape(), lkca::Shape({6, 36}));
    EXPECT_EQ(m(5, 3 * 9 + 2 * 3 + 1), w(5, 3, 2, 1));
    EXPECT_EQ(lkca::matrix_to_weights<double>(m, w.shape()), w);
    EXPECT_THROW((void)lkca::matrix_to_weights<double>(m, {6, 4, 3, 2}), lkca::Error);
}

TEST(WeightMatrix, ImpulseKernelIsOneHotRow) {
    Tensor<float> w({8, 4, 3, 3});
    w(2, 1, 0, 2) = 1.0f;
    const auto m  = lkca::weights_to_matrix(w);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 36; ++j) {
            EXPECT_EQ(m(i, j), (i == 2 && j == 11) ? 1.0 : 0.0);
        }
    }
}

TEST(WeightMatrix, ChikuseiUpsamplerShape) {
    NetConfig c;
    c.bands = 128;
    c.scale = 4;
    LkcaNet<float> n(c);
    const auto&    w = n.params().at("upsampler.weight").value;
    const auto     m = lkca::weights_to_matrix(w);
    EXPECT_EQ(m.shape(), lkca::Shape({2048, 1152}));
    EXPECT_EQ(std::min(m.extent(0), m.extent(1)), 1152u);
}

TEST(Groups, ChooseG) {
    const std::vector<std::size_t> all = {1, 2, 4, 8, 16};
    EXPECT_EQ(lkca::choose_g(128, 2048, all), 8u);
    EXPECT_EQ(lkca::choose_g(128, 2048, {2, 4}), 4u);
    EXPECT_EQ(lkca::choose_g(128, 2048, {16, 32}), 16u);
    EXPECT_EQ(lkca::choose_g(128, 2048, all, 2), 2u);
    EXPECT_THROW((void)lkca::choose_g(128, 2048, {3}), lkca::Error);
    EXPECT_THROW((void)lkca::choose_g(128, 2048, {}), lkca::Error);
    NetConfig pavia;
    pavia.bands = 102;
    pavia.scale = 8;
    EXPECT_EQ(lkca::choose_g(pavia, all), 8u);
    EXPECT_THROW((void)lkca::choose_g(pavia, {256}), lkca::Error);
}

TEST(Groups, ParameterReductionEqualsG) {
    const auto full = full_spec(128, 2048);
    const auto w    = synth::uniform_tensor({2048, 128, 3, 3}, 2, -0.1, 0.1);
    lkca::Rng  rng(3);
    for (std::size_t g : {1u, 2u, 4u, 8u, 16u}) {
        const auto gu = lkca::build_grouped(full, w, g, lkca::GroupedInit::Random, rng);
        EXPECT_EQ(gu.weight.size(), gu.spec.param_count());
        EXPECT_EQ(full.param_count(), g * gu.spec.param_count());
    }
}

TEST(Groups, RandomInitBound) {
    const auto full = full_spec(16, 32);
    lkca::Rng  rng(4);
    const auto gu   = lkca::build_grouped(full, Tensor<double>({32, 16, 3, 3}), 4, lkca::GroupedInit::Random, rng);
    const double bound = 1.0 / std::sqrt(4.0 * 9.0);
    double       mx    = 0.0;
    for (double v : gu.weight.values()) {
        mx = std::max(mx, std::fabs(v));
    }
    EXPECT_LE(mx, bound);
    EXPECT_GT(mx, 0.5 * bound);
}

TEST(Groups, BlockDiagonalCopyMatchesFullForward) {
    const std::size_t ci = 16, co = 32, g = 4;
    const auto        full = full_spec(ci, co);
    const auto        w    = synth::uniform_tensor<float>({co, ci, 3, 3}, 5, -0.5, 0.5);
    const auto        m    = lkca::block_diagonal_projection(lkca::weights_to_matrix(w), g);
    const auto        wbd  = lkca::matrix_to_weights<float>(m, w.shape());
    lkca::Rng         rng(6);
    const auto        gu   = lkca::build_grouped(full, wbd, g, lkca::GroupedInit::SvdBlocks, rng);
    EXPECT_EQ(lkca::grouped_to_full(gu.weight, g), wbd);

    const auto x  = synth::uniform_tensor<float>({2, ci, 9, 7}, 7);
    const auto yf = lkca::ops::conv2d_forward(x, wbd, static_cast<const Tensor<float>*>(nullptr), full.conv_spec());
    const auto yg = lkca::ops::conv2d_forward(x, gu.weight, static_cast<const Tensor<float>*>(nullptr), gu.spec.conv_spec());
    EXPECT_LE(lkca::max_abs_diff(yf, yg), 1e-6f);

    // also through the oracle in double
    const auto yo = oracle::conv2d(x.cast<double>(), gu.weight.cast<double>(), nullptr, g, 1);
    EXPECT_LE(lkca::max_abs_diff(yo, yg.cast<double>()), 1e-6);
}

TEST(Groups, SvdBlocksCopiesDiagonalOfDenseWeights) {
    const std::size_t ci = 8, co = 16, g = 2;
    const auto        w  = synth::uniform_tensor({co, ci, 3, 3}, 8, -1, 1);
    lkca::Rng         rng(9);
    const auto        gu = lkca::build_grouped(full_spec(ci, co), w, g, lkca::GroupedInit::SvdBlocks, rng);
    for (std::size_t o = 0; o < co; ++o) {
        const std::size_t grp = o / (co / g);
        for (std::size_t i = 0; i < ci / g; ++i) {
            for (std::size_t k = 0; k < 9; ++k) {
                EXPECT_EQ(gu.weight(o, i, k / 3, k % 3), w(o, grp * (ci / g) + i, k / 3, k % 3));
            }
        }
    }
}

TEST(Groups, OffDiagonalEnergyAndNearestProjection) {
    const std::size_t rows = 24, cols = 36, g = 3;
    const auto        m    = synth::uniform_tensor({rows, cols}, 10, -1, 1);
    const auto        p    = lkca::block_diagonal_projection(m, g);
    double            off  = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (i / (rows / g) != j / (cols / g)) {
                off += m(i, j) * m(i, j);
            } else {
                EXPECT_EQ(p(i, j), m(i, j));
            }
        }
    }
    EXPECT_NEAR(oracle::frobenius(m - p), std::sqrt(off), 1e-12);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto other = lkca::block_diagonal_projection(synth::uniform_tensor({rows, cols}, 100 + s, -1, 1), g);
        EXPECT_GE(oracle::frobenius(m - other), oracle::frobenius(m - p));
    }
    EXPECT_THROW((void)lkca::block_diagonal_projection(m, 5), lkca::Error);
}

TEST(Groups, WithGroupedUpsamplerKeepsTrunk) {
    auto       c = toy_config();
    LkcaNet<double> n(c);
    lkca::Rng  rng(11);
    n.init(rng);
    auto& w = n.params().at("upsampler.weight").value;
    w       = lkca::matrix_to_weights<double>(lkca::block_diagonal_projection(lkca::weights_to_matrix(w), 4), w.shape());
    const auto lr = lkca::with_grouped_upsampler(n, 4, lkca::GroupedInit::SvdBlocks, rng);
    EXPECT_EQ(lr.config().upsampler_groups, 4u);
    EXPECT_EQ(lr.config().upsampler_kind, lkca::UpsamplerKind::Grouped);
    for (const auto& p : lr.params()) {
        if (p.name != "upsampler.weight") {
            EXPECT_EQ(p.value, n.params().at(p.name).value) << p.name;
        }
    }
    EXPECT_EQ(lkca::param_count(c).total - lkca::param_count(lr.config()).total,
              c.upsampler().param_count() * 3 / 4);
    const auto x = synth::uniform_tensor({1, 4, 6, 6}, 12);
    EXPECT_LE(lkca::max_abs_diff(lr.forward(x).sr, n.forward(x).sr), 1e-6);
}

TEST(Analyze, IsotropicSpectrum) {
    auto       c = toy_config();
    LkcaNet<double> n(c);
    auto&      w = n.params().at("upsampler.weight").value;
    ASSERT_EQ(w.shape(), lkca::Shape({16, 8, 3, 3}));
    w              = lkca::matrix_to_weights<double>(orthonormal_product(16, 72, 13), w.shape());
    const auto rep = lkca::analyze(n, "upsampler", 4);
    EXPECT_EQ(rep.rows, 16u);
    EXPECT_EQ(rep.cols, 72u);
    EXPECT_EQ(rep.full_rank_bound(), 16u);
    ASSERT_EQ(rep.sigma.size(), 16u);
    for (double s : rep.sigma) {
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_EQ(rep.rank_90, static_cast<std::size_t>(std::ceil(0.9 * 16)));
    EXPECT_EQ(rep.rank_95, 16u);
    EXPECT_EQ(rep.rank_99, 16u);
    EXPECT_EQ(rep.params_full, 16u * 72u);
    EXPECT_EQ(rep.params_grouped, 16u * 72u / 4);
}

TEST(Analyze, PlantedRankOne) {
    const std::size_t rows = 32, cols = 72;
    const auto        u = synth::uniform_tensor({rows, 1}, 14, -1, 1);
    const auto        v = synth::uniform_tensor({1, cols}, 15, -1, 1);
    const auto        m = oracle::matmul(u, v);
    const auto        rep = lkca::analyze_matrix(m, full_spec(8, 32), 8);
    EXPECT_NEAR(rep.sigma[0], oracle::frobenius(u) * oracle::frobenius(v), 1e-9);
    for (std::size_t i = 1; i < rep.sigma.size(); ++i) {
        EXPECT_LE(rep.sigma[i], 1e-10 * rep.sigma[0]);
    }
    EXPECT_EQ(rep.rank_90, 1u);
    EXPECT_EQ(rep.rank_99, 1u);
}

TEST(Analyze, CurveCsvHasOneRowPerSingularValue) {
    for (std::size_t r : {2u, 4u}) {
        auto c  = toy_config();
        c.scale = r;
        LkcaNet<double> n(c);
        lkca::Rng       rng(16);
        n.init(rng);
        const auto rep = lkca::analyze(n);
        const std::size_t p = std::min<std::size_t>(4 * r * r, 9 * 8);
        EXPECT_EQ(rep.sigma.size(), p);
        std::istringstream is(rep.curve_csv());
        std::string        line;
        std::getline(is, line);
        EXPECT_EQ(line, "index,sigma,cumulative");
        std::size_t rows = 0;
        while (std::getline(is, line)) {
            ++rows;
            EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
        }
        EXPECT_EQ(rows, p);
        EXPECT_EQ(rep.cumulative.back(), 1.0);
        const auto j = rep.to_json();
        EXPECT_EQ(j["full_rank_bound"], p);
    }
}

TEST(Analyze, GroupedModelUsesDenseImage) {
    auto c             = toy_config();
    c.upsampler_kind   = lkca::UpsamplerKind::Grouped;
    c.upsampler_groups = 4;
    LkcaNet<double> n(c);
    lkca::Rng       rng(17);
    n.init(rng);
    const auto rep = lkca::analyze(n);
    EXPECT_EQ(rep.rows, 16u);
    EXPECT_EQ(rep.cols, 72u);
}

TEST(Analyze, RejectsUnknownOrUnsupportedLayer) {
    LkcaNet<double> n(toy_config());
    EXPECT_THROW((void)lkca::analyze(n), lkca::Error);
    lkca::Rng rng(18);
    n.init(rng);
    try {
        (void)lkca::analyze(n, "blocks.9.fuse");
        FAIL() << "expected an error";
    } catch (const lkca::Error& e) {
        EXPECT_EQ(e.exit_code(), 3);
        EXPECT_NE(std::string(e.what()).find("not found"), std::string::npos);
    }
    EXPECT_THROW((void)lkca::analyze(n, "head"), lkca::Error);
    EXPECT_NO_THROW((void)lkca::analyze(n, "upsampler.weight", 2));
    EXPECT_THROW((void)lkca::analyze(n, "upsampler", 3), lkca::Error);
    EXPECT_EQ(lkca::parse_grouped_init("svd_blocks"), lkca::GroupedInit::SvdBlocks);
    EXPECT_THROW((void)lkca::parse_grouped_init("blocks"), lkca::Error);
}
