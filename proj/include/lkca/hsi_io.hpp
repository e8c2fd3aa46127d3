#pragma once

#include <lkca/binio.hpp>
#include <lkca/error.hpp>
#include <lkca/random.hpp>
#include <lkca/resample.hpp>
#include <lkca/tensor.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lkca {

using nlohmann::json;

/// Band-sequential hyperspectral cube with samples normalized to [0, 1].
struct HsiCube {
    std::size_t        bands = 0, height = 0, width = 0;
    std::vector<float> data; ///< band-major, then rows, then columns
    json               meta = json::object();

    HsiCube() = default;
    HsiCube(std::size_t b, std::size_t h, std::size_t w, float fill = 0.0f)
        : bands(b), height(h), width(w), data(b * h * w, fill) {}

    [[nodiscard]] float&       at(std::size_t b, std::size_t y, std::size_t x) { return data[(b * height + y) * width + x]; }
    [[nodiscard]] const float& at(std::size_t b, std::size_t y, std::size_t x) const {
        return data[(b * height + y) * width + x];
    }

    friend bool operator==(const HsiCube&, const HsiCube&) = default;
};

/// Checks extents, finiteness and the unit range.
inline void validate_cube(const HsiCube& c) {
    require(c.bands >= 1 && c.height >= 1 && c.width >= 1, "cube extents must all be >= 1");
    require(c.data.size() == c.bands * c.height * c.width, "cube data length does not match bands*height*width");
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        const float v = c.data[i];
        if (!std::isfinite(v)) {
            fail_validation("cube sample " + std::to_string(i) + " is non-finite");
        }
        if (v < 0.0f || v > 1.0f) {
            fail_validation("cube sample " + std::to_string(i) + " = " + std::to_string(v) + " lies outside [0, 1]");
        }
    }
}

template<typename T = float>
Tensor<T> cube_to_tensor(const HsiCube& c) {
    std::vector<T> v(c.data.begin(), c.data.end());
    return Tensor<T>({1, c.bands, c.height, c.width}, std::move(v));
}

template<typename T>
HsiCube tensor_to_cube(const Tensor<T>& t, std::size_t n = 0) {
    require_rank(t, 4, "tensor_to_cube");
    HsiCube           c(t.extent(1), t.extent(2), t.extent(3));
    const std::size_t len = c.data.size();
    for (std::size_t i = 0; i < len; ++i) {
        c.data[i] = static_cast<float>(t[n * len + i]);
    }
    return c;
}

// ---------------------------------------------------------------------------------------------
// .hsc file format:
//   "HSCUBE01" | u32 header length | UTF-8 JSON {bands, height, width, meta} | f32 LE samples
// ---------------------------------------------------------------------------------------------

inline constexpr std::string_view kCubeMagic = "HSCUBE01";

inline std::vector<unsigned char> encode_cube(const HsiCube& c) {
    validate_cube(c);
    binio::Writer w;
    w.bytes(kCubeMagic);
    const json header = {{"bands", c.bands}, {"height", c.height}, {"width", c.width}, {"meta", c.meta}};
    w.string_u32(header.dump());
    w.f32_array(c.data);
    return w.buffer();
}

inline HsiCube decode_cube(binio::Reader r) {
    const auto magic = r.remaining() >= kCubeMagic.size() ? r.bytes(kCubeMagic.size(), "magic") : std::string{};
    if (magic != kCubeMagic) {
        fail_validation(r.what() + ": bad magic (expected \"HSCUBE01\")");
    }
    const auto text = r.string_u32("json header");
    json       header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        fail_validation(r.what() + ": malformed json header: " + e.what());
    }
    HsiCube c;
    try {
        c.bands  = header.at("bands").get<std::size_t>();
        c.height = header.at("height").get<std::size_t>();
        c.width  = header.at("width").get<std::size_t>();
        if (header.contains("meta")) {
            c.meta = header.at("meta");
        }
    } catch (const json::exception& e) {
        fail_validation(r.what() + ": header missing field: " + e.what());
    }
    require(c.bands >= 1 && c.height >= 1 && c.width >= 1, r.what() + ": header extents must be >= 1");
    constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max() / sizeof(float);
    const std::uint64_t     b = c.bands, h = c.height, w = c.width;
    if (h > kMax / b || w > kMax / (b * h)) {
        fail_validation(r.what() + ": extent overflow in header (" + std::to_string(b) + "x" + std::to_string(h) + "x" +
                        std::to_string(w) + ")");
    }
    const std::uint64_t count = b * h * w;
    r.need(count * sizeof(float), "sample payload");
    c.data.resize(count);
    r.f32_array(c.data, "sample payload");
    if (r.remaining() != 0) {
        fail_validation(r.what() + ": " + std::to_string(r.remaining()) + " unexpected trailing bytes");
    }
    try {
        validate_cube(c);
    } catch (const Error& e) {
        fail_validation(r.what() + ": " + e.what());
    }
    return c;
}

inline void write_cube(const HsiCube& c, const std::string& path) {
    binio::Writer w;
    const auto    bytes = encode_cube(c);
    w.bytes(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    w.save(path);
}

inline HsiCube read_cube(const std::string& path) { return decode_cube(binio::Reader::from_file(path, path)); }

/// Divides raw samples by their maximum, clamps negatives to zero and records the scale in meta.
inline HsiCube normalize_raw(std::size_t bands, std::size_t height, std::size_t width, std::vector<float> raw) {
    require(raw.size() == bands * height * width, "raw sample count does not match the declared extents");
    float       peak      = 0.0f;
    std::size_t negatives = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) {
            fail_validation("raw sample " + std::to_string(i) + " is non-finite");
        }
        peak = std::max(peak, raw[i]);
    }
    require(peak > 0.0f, "raw cube has no positive samples; cannot normalize");
    HsiCube c(bands, height, width);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] < 0.0f) {
            ++negatives;
        }
        c.data[i] = std::clamp(raw[i] / peak, 0.0f, 1.0f);
    }
    c.meta["normalization_max"] = peak;
    c.meta["clamped_negative"]  = negatives;
    return c;
}

// ---------------------------------------------------------------------------------------------
// Resampling and patches
// ---------------------------------------------------------------------------------------------

inline HsiCube bicubic_resize(const HsiCube& c, std::size_t out_h, std::size_t out_w, bool antialias = true) {
    require(out_h >= 1 && out_w >= 1, "bicubic_resize: output extents must be >= 1");
    HsiCube     out(c.bands, out_h, out_w);
    const auto  tx = detail::resample_taps(c.width, out_w, antialias);
    const auto  ty = detail::resample_taps(c.height, out_h, antialias);
    const auto  in_plane = c.height * c.width, out_plane = out_h * out_w;
    for (std::size_t b = 0; b < c.bands; ++b) {
        detail::resize_plane(c.data.data() + b * in_plane, c.height, c.width, out.data.data() + b * out_plane, out_h,
                             out_w, tx, ty);
    }
    out.meta = c.meta;
    return out;
}

/// Bicubic downsampling by an integer factor.
inline HsiCube degrade(const HsiCube& hr, std::size_t r) {
    require(r >= 1, "degrade: scale factor must be >= 1");
    require(hr.height % r == 0 && hr.width % r == 0,
            "degrade: extents " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                " are not divisible by r = " + std::to_string(r));
    return bicubic_resize(hr, hr.height / r, hr.width / r);
}

struct Rect {
    std::size_t row = 0, col = 0, height = 0, width = 0;

    [[nodiscard]] bool intersects(const Rect& o) const {
        return row < o.row + o.height && o.row < row + height && col < o.col + o.width && o.col < col + width;
    }
    [[nodiscard]] bool within(std::size_t h, std::size_t w) const { return row + height <= h && col + width <= w; }
    friend bool        operator==(const Rect&, const Rect&) = default;
};

inline HsiCube crop(const HsiCube& c, const Rect& r) {
    require(r.height >= 1 && r.width >= 1 && r.within(c.height, c.width), "crop: rectangle outside the cube");
    HsiCube out(c.bands, r.height, r.width);
    for (std::size_t b = 0; b < c.bands; ++b) {
        for (std::size_t y = 0; y < r.height; ++y) {
            std::copy_n(&c.at(b, r.row + y, r.col), r.width, &out.at(b, y, 0));
        }
    }
    return out;
}

/// Central h x w window, offsets rounded down.
inline HsiCube center_crop(const HsiCube& c, std::size_t h, std::size_t w) {
    require(h <= c.height && w <= c.width, "center_crop: window " + std::to_string(h) + "x" + std::to_string(w) +
                                               " exceeds the " + std::to_string(c.height) + "x" +
                                               std::to_string(c.width) + " cube");
    return crop(c, {(c.height - h) / 2, (c.width - w) / 2, h, w});
}

struct PatchSpec {
    std::size_t patch_size = 64, overlap = 32, scale = 4;

    void validate() const {
        require(scale == 4 || scale == 8, "patch spec: scale factor must be 4 or 8");
        require(patch_size >= 1 && overlap < patch_size, "patch spec: need 0 <= overlap < patch_size");
        require(patch_size % scale == 0, "patch spec: patch_size must be divisible by the scale factor");
    }
    [[nodiscard]] std::size_t stride() const { return patch_size - overlap; }
};

/// floor((extent - size) / stride) + 1, or 0 when the patch does not fit.
inline std::size_t patch_count(std::size_t extent, std::size_t size, std::size_t stride) {
    require(stride >= 1, "patch_count: stride must be >= 1");
    return extent < size ? 0 : (extent - size) / stride + 1;
}

struct PatchOrigin {
    std::size_t row = 0, col = 0;
    friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Row-major grid of patch origins covering an h x w area.
inline std::vector<PatchOrigin> patch_grid(std::size_t h, std::size_t w, const PatchSpec& spec) {
    spec.validate();
    const auto               ny = patch_count(h, spec.patch_size, spec.stride());
    const auto               nx = patch_count(w, spec.patch_size, spec.stride());
    std::vector<PatchOrigin> out;
    out.reserve(ny * nx);
    for (std::size_t i = 0; i < ny; ++i) {
        for (std::size_t j = 0; j < nx; ++j) {
            out.push_back({i * spec.stride(), j * spec.stride()});
        }
    }
    return out;
}

struct PatchPair {
    PatchOrigin origin;
    HsiCube     hr;
    HsiCube     lr;
};

inline PatchPair make_patch(const HsiCube& cube, const PatchOrigin& o, const PatchSpec& spec) {
    PatchPair p{o, crop(cube, {o.row, o.col, spec.patch_size, spec.patch_size}), {}};
    p.lr = degrade(p.hr, spec.scale);
    return p;
}

inline std::vector<PatchPair> extract_patches(const HsiCube& cube, const PatchSpec& spec) {
    spec.validate();
    require(cube.height >= spec.patch_size && cube.width >= spec.patch_size,
            "extract_patches: cube is smaller than one patch");
    std::vector<PatchPair> out;
    for (const auto& o : patch_grid(cube.height, cube.width, spec)) {
        out.push_back(make_patch(cube, o, spec));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Dataset split protocols
// ---------------------------------------------------------------------------------------------

enum class Dataset { Chikusei, Houston2018, Pavia, Custom };

inline std::string dataset_name(Dataset d) {
    switch (d) {
    case Dataset::Chikusei: return "chikusei";
    case Dataset::Houston2018: return "houston2018";
    case Dataset::Pavia: return "pavia";
    case Dataset::Custom: return "custom";
    }
    return "custom";
}

inline Dataset parse_dataset(const std::string& s) {
    if (s == "chikusei") return Dataset::Chikusei;
    if (s == "houston2018" || s == "houston") return Dataset::Houston2018;
    if (s == "pavia") return Dataset::Pavia;
    if (s == "custom") return Dataset::Custom;
    fail_validation("unknown dataset '" + s + "' (expected chikusei, houston2018, pavia or custom)");
}

inline json rect_to_json(const Rect& r) {
    return {{"row", r.row}, {"col", r.col}, {"height", r.height}, {"width", r.width}};
}

inline Rect rect_from_json(const json& j) {
    return {j.at("row").get<std::size_t>(), j.at("col").get<std::size_t>(), j.at("height").get<std::size_t>(),
            j.at("width").get<std::size_t>()};
}

struct SplitProtocol {
    Dataset           dataset = Dataset::Custom;
    std::vector<Rect> test_regions;
    std::vector<Rect> exclusions; ///< never used for training or testing
    double            validation_fraction = 0.10;

    void validate(std::size_t h, std::size_t w) const {
        require(validation_fraction >= 0.0 && validation_fraction < 1.0,
                "split protocol: validation fraction must lie in [0, 1)");
        for (std::size_t i = 0; i < test_regions.size(); ++i) {
            const auto& a = test_regions[i];
            require(a.height >= 1 && a.width >= 1 && a.within(h, w),
                    "split protocol: test region " + std::to_string(i) + " lies outside the " + std::to_string(h) +
                        "x" + std::to_string(w) + " cube");
            for (std::size_t j = i + 1; j < test_regions.size(); ++j) {
                require(!a.intersects(test_regions[j]), "split protocol: test regions " + std::to_string(i) + " and " +
                                                            std::to_string(j) + " overlap");
            }
        }
        for (const auto& e : exclusions) {
            require(e.within(h, w), "split protocol: exclusion zone outside the cube");
        }
    }
};

/// Built-in protocols. Regions are anchored at the top of the (pre-cropped) cube.
inline SplitProtocol make_protocol(Dataset d, std::size_t h, std::size_t w) {
    SplitProtocol p;
    p.dataset = d;
    switch (d) {
    case Dataset::Chikusei:
        // Four 512 x 512 tiles from the top 512 x 2048 strip of the centrally cropped cube.
        require(h >= 512 && w >= 2048, "chikusei protocol needs a cube of at least 512x2048");
        for (std::size_t j = 0; j < 4; ++j) {
            p.test_regions.push_back({0, j * 512, 512, 512});
        }
        if (w > 2048) {
            p.exclusions.push_back({0, 2048, 512, w - 2048});
        }
        break;
    case Dataset::Houston2018:
        // Eight 256 x 256 tiles from the top 512 x 1024 block; the rest of the top strip is discarded.
        require(h >= 512 && w >= 1024, "houston2018 protocol needs a cube of at least 512x1024");
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                p.test_regions.push_back({i * 256, j * 256, 256, 256});
            }
        }
        if (w > 1024) {
            p.exclusions.push_back({0, 1024, 512, w - 1024});
        }
        break;
    case Dataset::Pavia:
        // Three 224 x 224 tiles from the top 224-row strip; the leftover right part is discarded.
        require(h >= 224 && w >= 672, "pavia protocol needs a cube of at least 224x672");
        for (std::size_t j = 0; j < 3; ++j) {
            p.test_regions.push_back({0, j * 224, 224, 224});
        }
        if (w > 672) {
            p.exclusions.push_back({0, 672, 224, w - 672});
        }
        break;
    case Dataset::Custom: break;
    }
    return p;
}

inline SplitProtocol custom_protocol(const json& j) {
    SplitProtocol p;
    p.dataset = Dataset::Custom;
    for (const auto& r : j.at("test_regions")) {
        p.test_regions.push_back(rect_from_json(r));
    }
    if (j.contains("exclusions")) {
        for (const auto& r : j.at("exclusions")) {
            p.exclusions.push_back(rect_from_json(r));
        }
    }
    if (j.contains("validation_fraction")) {
        p.validation_fraction = j.at("validation_fraction").get<double>();
    }
    return p;
}

struct Split {
    SplitProtocol            protocol;
    PatchSpec                spec;
    std::uint64_t            seed = 0;
    std::size_t              cube_bands = 0, cube_height = 0, cube_width = 0;
    std::vector<PatchOrigin> train, val;
};

/// Test set = the declared regions. Training candidates are grid patches avoiding every test
/// region and exclusion zone; a seeded shuffle then moves round(n * fraction) of them to validation.
inline Split build_split(const HsiCube& cube, const SplitProtocol& protocol, const PatchSpec& spec, std::uint64_t seed) {
    spec.validate();
    protocol.validate(cube.height, cube.width);
    Split s{protocol, spec, seed, cube.bands, cube.height, cube.width, {}, {}};

    std::vector<PatchOrigin> candidates;
    for (const auto& o : patch_grid(cube.height, cube.width, spec)) {
        const Rect r{o.row, o.col, spec.patch_size, spec.patch_size};
        const auto hits = [&](const Rect& z) { return r.intersects(z); };
        if (std::none_of(protocol.test_regions.begin(), protocol.test_regions.end(), hits) &&
            std::none_of(protocol.exclusions.begin(), protocol.exclusions.end(), hits)) {
            candidates.push_back(o);
        }
    }
    Rng rng(seed);
    shuffle(candidates, rng);
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(candidates.size()) *
                                                             protocol.validation_fraction));
    s.val.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(candidates.begin() + static_cast<std::ptrdiff_t>(n_val), candidates.end());

    for (const auto* set : {&s.train, &s.val}) {
        for (const auto& o : *set) {
            const Rect r{o.row, o.col, spec.patch_size, spec.patch_size};
            for (const auto& t : protocol.test_regions) {
                if (r.intersects(t)) {
                    throw std::logic_error("build_split: training patch intersects a test region");
                }
            }
        }
    }
    return s;
}

inline json split_to_json(const Split& s) {
    json j;
    j["format"]              = "lkca-split";
    j["version"]             = 1;
    j["dataset"]             = dataset_name(s.protocol.dataset);
    j["seed"]                = s.seed;
    j["cube"]                = {{"bands", s.cube_bands}, {"height", s.cube_height}, {"width", s.cube_width}};
    j["patch"]               = {{"size", s.spec.patch_size}, {"overlap", s.spec.overlap}, {"scale", s.spec.scale}};
    j["validation_fraction"] = s.protocol.validation_fraction;
    j["test_regions"]        = json::array();
    for (const auto& r : s.protocol.test_regions) {
        j["test_regions"].push_back(rect_to_json(r));
    }
    j["exclusions"] = json::array();
    for (const auto& r : s.protocol.exclusions) {
        j["exclusions"].push_back(rect_to_json(r));
    }
    for (const char* key : {"train", "val"}) {
        auto&       arr = j[key] = json::array();
        const auto& src = std::string(key) == "train" ? s.train : s.val;
        for (const auto& o : src) {
            arr.push_back({o.row, o.col});
        }
    }
    return j;
}

inline Split split_from_json(const json& j) {
    try {
        require(j.at("format") == "lkca-split", "split manifest: unexpected format tag");
        Split s;
        s.protocol.dataset             = parse_dataset(j.at("dataset").get<std::string>());
        s.seed                         = j.at("seed").get<std::uint64_t>();
        s.cube_bands                   = j.at("cube").at("bands").get<std::size_t>();
        s.cube_height                  = j.at("cube").at("height").get<std::size_t>();
        s.cube_width                   = j.at("cube").at("width").get<std::size_t>();
        s.spec.patch_size              = j.at("patch").at("size").get<std::size_t>();
        s.spec.overlap                 = j.at("patch").at("overlap").get<std::size_t>();
        s.spec.scale                   = j.at("patch").at("scale").get<std::size_t>();
        s.protocol.validation_fraction = j.at("validation_fraction").get<double>();
        for (const auto& r : j.at("test_regions")) {
            s.protocol.test_regions.push_back(rect_from_json(r));
        }
        for (const auto& r : j.at("exclusions")) {
            s.protocol.exclusions.push_back(rect_from_json(r));
        }
        for (const auto& o : j.at("train")) {
            s.train.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
        }
        for (const auto& o : j.at("val")) {
            s.val.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
        }
        s.spec.validate();
        return s;
    } catch (const json::exception& e) {
        fail_validation(std::string("split manifest: ") + e.what());
    }
}

} // namespace lkca
