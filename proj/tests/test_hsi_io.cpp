#include <lkca/hsi_io.hpp>
#include <lkca/resample.hpp>

#include "oracles/naive_ops.hpp"
#include "oracles/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

using lkca::HsiCube;

namespace {

HsiCube random_cube(std::size_t b, std::size_t h, std::size_t w, std::uint64_t seed) {
    lkca::Rng rng(seed);
    HsiCube   c(b, h, w);
    for (auto& v : c.data) {
        v = static_cast<float>(lkca::uniform01(rng));
    }
    return c;
}

std::string error_of(const std::vector<unsigned char>& bytes) {
    try {
        (void)lkca::decode_cube(lkca::binio::Reader(bytes, "cube"));
    } catch (const lkca::Error& e) {
        EXPECT_EQ(e.exit_code(), 3);
        return e.what();
    }
    return "";
}

std::vector<unsigned char> with_header(const std::string& header, std::size_t floats, float fill = 0.5f) {
    lkca::binio::Writer w;
    w.bytes(lkca::kCubeMagic);
    w.string_u32(header);
    std::vector<float> data(floats, fill);
    w.f32_array(data);
    return w.buffer();
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

} // namespace

TEST(CubeFormat, RoundTripIsBitIdentical) {
    auto c         = random_cube(4, 8, 8, 1);
    c.meta["name"] = "synthetic";
    const auto path = (std::filesystem::temp_directory_path() / "lkca_roundtrip.hsc").string();
    lkca::write_cube(c, path);
    const auto back = lkca::read_cube(path);
    EXPECT_EQ(back, c);
    EXPECT_EQ(lkca::encode_cube(back), lkca::encode_cube(c));
    std::remove(path.c_str());
}

TEST(CubeFormat, TruncatedPayload) {
    const auto msg = error_of(with_header(R"({"bands":3,"height":2,"width":2})", 2 * 2 * 2));
    EXPECT_TRUE(contains(msg, "truncated payload")) << msg;
}

TEST(CubeFormat, BadMagic) {
    auto bytes = lkca::encode_cube(random_cube(1, 2, 2, 2));
    bytes[0]   = 'X';
    EXPECT_TRUE(contains(error_of(bytes), "bad magic"));
    EXPECT_TRUE(contains(error_of({'H', 'S'}), "bad magic"));
}

TEST(CubeFormat, ExtentOverflow) {
    const auto msg = error_of(with_header(R"({"bands":4294967296,"height":4294967296,"width":4294967296})", 0));
    EXPECT_TRUE(contains(msg, "extent overflow")) << msg;
}

TEST(CubeFormat, NonFiniteSampleRejected) {
    auto c    = random_cube(2, 3, 3, 3);
    c.data[4] = std::nanf("");
    lkca::binio::Writer w;
    w.bytes(lkca::kCubeMagic);
    w.string_u32(R"({"bands":2,"height":3,"width":3})");
    w.f32_array(c.data);
    const auto msg = error_of(w.buffer());
    EXPECT_TRUE(contains(msg, "non-finite")) << msg;
    EXPECT_THROW((void)lkca::encode_cube(c), lkca::Error);
}

TEST(CubeFormat, OutOfRangeAndTrailingBytes) {
    EXPECT_TRUE(contains(error_of(with_header(R"({"bands":1,"height":1,"width":2})", 2, 1.5f)), "[0, 1]"));
    auto bytes = with_header(R"({"bands":1,"height":1,"width":2})", 2);
    bytes.push_back(0);
    EXPECT_TRUE(contains(error_of(bytes), "trailing"));
}

TEST(CubeFormat, MissingFileIsValidationError) {
    try {
        (void)lkca::read_cube("/nonexistent/dir/cube.hsc");
        FAIL();
    } catch (const lkca::Error& e) {
        EXPECT_EQ(e.exit_code(), 3);
    }
}

TEST(Normalize, DividesByPeakAndClampsNegatives) {
    const auto c = lkca::normalize_raw(1, 1, 4, {-1.0f, 0.0f, 2.0f, 4.0f});
    EXPECT_EQ(c.data, std::vector<float>({0.0f, 0.0f, 0.5f, 1.0f}));
    EXPECT_EQ(c.meta["normalization_max"].get<float>(), 4.0f);
    EXPECT_EQ(c.meta["clamped_negative"].get<int>(), 1);
}

TEST(Bicubic, KernelValues) {
    EXPECT_EQ(lkca::cubic_kernel(0.0), 1.0);
    EXPECT_EQ(lkca::cubic_kernel(1.0), 0.0);
    EXPECT_EQ(lkca::cubic_kernel(2.0), 0.0);
    EXPECT_DOUBLE_EQ(lkca::cubic_kernel(0.5), 0.5625);
    EXPECT_DOUBLE_EQ(lkca::cubic_kernel(-1.5), -0.0625);
    for (double t = -2.5; t <= 2.5; t += 0.125) {
        EXPECT_NEAR(lkca::cubic_kernel(t), oracle::keys(t), 1e-15);
    }
}

TEST(Bicubic, UpsamplingMatchesDirectTwoDimensionalSum) {
    const auto cube = random_cube(3, 5, 7, 4);
    for (std::size_t r : {2u, 4u, 8u}) {
        const auto up = lkca::bicubic_resize(cube, 5 * r, 7 * r);
        for (std::size_t b = 0; b < 3; ++b) {
            std::vector<double> plane(cube.data.begin() + b * 35, cube.data.begin() + (b + 1) * 35);
            const auto          ref = oracle::bicubic_upsample_plane(plane, 5, 7, 5 * r, 7 * r);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                ASSERT_NEAR(up.data[b * ref.size() + i], ref[i], 1e-6) << "r=" << r << " band " << b << " i " << i;
            }
        }
    }
}

TEST(Bicubic, SameSizeIsIdentity) {
    const auto cube = random_cube(2, 6, 5, 5);
    EXPECT_EQ(lkca::bicubic_resize(cube, 6, 5).data, cube.data);
}

TEST(Bicubic, PreservesConstantsAndStaysInRange) {
    HsiCube c(1, 16, 16);
    std::fill(c.data.begin(), c.data.end(), 0.25f);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {64, 64}, {7, 11}}) {
        const auto out = lkca::bicubic_resize(c, h, w);
        for (float v : out.data) {
            EXPECT_NEAR(v, 0.25f, 1e-6f);
        }
    }
    const auto r = lkca::bicubic_resize(random_cube(2, 9, 9, 6), 36, 36);
    for (float v : r.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Bicubic, AntialiasedDownsamplingAveragesFineDetail) {
    // a 1-pixel checkerboard carries no energy at the LR Nyquist rate; the antialiased reduction
    // collapses it close to its mean while point sampling would alias it
    HsiCube c(1, 32, 32);
    for (std::size_t y = 0; y < 32; ++y) {
        for (std::size_t x = 0; x < 32; ++x) {
            c.at(0, y, x) = ((x + y) % 2 == 0) ? 1.0f : 0.0f;
        }
    }
    const auto lr = lkca::degrade(c, 4);
    ASSERT_EQ(lr.height, 8u);
    for (std::size_t y = 1; y < 7; ++y) {
        for (std::size_t x = 1; x < 7; ++x) {
            EXPECT_NEAR(lr.at(0, y, x), 0.5f, 0.02f);
        }
    }
}

TEST(Bicubic, DegradeRequiresDivisibleExtents) {
    EXPECT_THROW((void)lkca::degrade(random_cube(1, 10, 12, 7), 4), lkca::Error);
    EXPECT_EQ(lkca::degrade(random_cube(1, 16, 12, 7), 4).width, 3u);
}

TEST(Patches, GridCountsAndContents) {
    EXPECT_EQ(lkca::patch_count(512, 64, 32), 15u);
    EXPECT_EQ(lkca::patch_count(63, 64, 32), 0u);
    const auto            cube = random_cube(2, 96, 128, 8);
    const lkca::PatchSpec spec{64, 32, 4};
    const auto            patches = lkca::extract_patches(cube, spec);
    ASSERT_EQ(patches.size(), 2u * 3u);
    const auto& p = patches[4];
    EXPECT_EQ(p.origin.row, 32u);
    EXPECT_EQ(p.origin.col, 32u);
    EXPECT_EQ(p.hr.at(1, 5, 7), cube.at(1, 37, 39));
    EXPECT_EQ(p.lr.height, 16u);
    EXPECT_EQ(p.lr, lkca::degrade(p.hr, 4));
}

TEST(Patches, SpecValidation) {
    EXPECT_THROW((lkca::PatchSpec{64, 64, 4}.validate()), lkca::Error);
    EXPECT_THROW((lkca::PatchSpec{66, 32, 4}.validate()), lkca::Error);
    EXPECT_THROW((lkca::PatchSpec{64, 32, 3}.validate()), lkca::Error);
    EXPECT_NO_THROW((lkca::PatchSpec{128, 64, 8}.validate()));
}

TEST(Protocols, BuiltInRegions) {
    const auto ch = lkca::make_protocol(lkca::Dataset::Chikusei, 2304, 2048);
    ASSERT_EQ(ch.test_regions.size(), 4u);
    EXPECT_EQ(ch.test_regions[3], (lkca::Rect{0, 1536, 512, 512}));
    const auto ho = lkca::make_protocol(lkca::Dataset::Houston2018, 1202, 4172);
    ASSERT_EQ(ho.test_regions.size(), 8u);
    EXPECT_EQ(ho.test_regions[7], (lkca::Rect{256, 768, 256, 256}));
    ASSERT_EQ(ho.exclusions.size(), 1u);
    const auto pa = lkca::make_protocol(lkca::Dataset::Pavia, 1096, 715);
    ASSERT_EQ(pa.test_regions.size(), 3u);
    EXPECT_EQ(pa.exclusions[0], (lkca::Rect{0, 672, 224, 43}));
    for (const auto& p : {ch, ho, pa}) {
        EXPECT_DOUBLE_EQ(p.validation_fraction, 0.10);
    }
    EXPECT_THROW((void)lkca::make_protocol(lkca::Dataset::Pavia, 100, 700), lkca::Error);
}

TEST(Protocols, OverlappingRegionsRejected) {
    lkca::SplitProtocol p;
    p.test_regions = {{0, 0, 10, 10}, {5, 5, 10, 10}};
    EXPECT_THROW(p.validate(100, 100), lkca::Error);
    p.test_regions = {{0, 0, 10, 10}, {0, 95, 10, 10}};
    EXPECT_THROW(p.validate(100, 100), lkca::Error);
}

TEST(Split, TrainingPatchesAvoidTestRegionsAndExclusions) {
    const auto          cube = random_cube(2, 160, 192, 9);
    lkca::SplitProtocol p;
    p.test_regions = {{0, 0, 64, 64}, {0, 64, 64, 64}};
    p.exclusions   = {{0, 128, 64, 64}};
    const lkca::PatchSpec spec{32, 16, 4};
    const auto            s = lkca::build_split(cube, p, spec, 5);
    const std::size_t     total = s.train.size() + s.val.size();
    // grid is 9 x 11; rows whose patch touches y < 64 are excluded across the full width
    EXPECT_EQ(total, (9u - 4u) * 11u);
    EXPECT_EQ(s.val.size(), static_cast<std::size_t>(std::llround(total * 0.1)));
    for (const auto* set : {&s.train, &s.val}) {
        for (const auto& o : *set) {
            const lkca::Rect r{o.row, o.col, 32, 32};
            for (const auto& t : p.test_regions) {
                EXPECT_FALSE(r.intersects(t));
            }
            EXPECT_FALSE(r.intersects(p.exclusions[0]));
        }
    }
}

TEST(Split, SeededAndSerializable) {
    const auto            cube = random_cube(1, 128, 128, 10);
    const auto            p    = lkca::custom_protocol(nlohmann::json::parse(
        R"({"test_regions":[{"row":0,"col":0,"height":32,"width":32}],"validation_fraction":0.2})"));
    const lkca::PatchSpec spec{32, 16, 4};
    const auto            a = lkca::build_split(cube, p, spec, 77);
    const auto            b = lkca::build_split(cube, p, spec, 77);
    const auto            c = lkca::build_split(cube, p, spec, 78);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_NE(a.val, c.val);
    const auto back = lkca::split_from_json(nlohmann::json::parse(lkca::split_to_json(a).dump()));
    EXPECT_EQ(back.train, a.train);
    EXPECT_EQ(back.val, a.val);
    EXPECT_EQ(back.protocol.test_regions, a.protocol.test_regions);
    EXPECT_EQ(lkca::split_to_json(back), lkca::split_to_json(a));
}

TEST(Crop, CenterCrop) {
    const auto c = random_cube(1, 10, 12, 11);
    const auto k = lkca::center_crop(c, 4, 6);
    EXPECT_EQ(k.at(0, 0, 0), c.at(0, 3, 3));
    EXPECT_THROW((void)lkca::center_crop(c, 11, 2), lkca::Error);
}
