#pragma once

#include <lkca/error.hpp>
#include <lkca/model.hpp>
#include <lkca/random.hpp>
#include <lkca/svd.hpp>
#include <lkca/tensor.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

namespace lkca {

/// [C_out, C_in, k, k] -> [C_out, C_in*k*k]; row c_out is the filter flattened c_in-major, then
/// kernel row, then kernel column. Widened to double for analysis.
template<typename T>
Tensor<double> weights_to_matrix(const Tensor<T>& w) {
    require_rank(w, 4, "weights_to_matrix");
    return w.template cast<double>().reshaped({w.extent(0), w.extent(1) * w.extent(2) * w.extent(3)});
}

/// Inverse of weights_to_matrix.
template<typename T>
Tensor<T> matrix_to_weights(const Tensor<double>& m, const Shape& weight_shape) {
    require_rank(m, 2, "matrix_to_weights");
    require(weight_shape.size() == 4 && weight_shape[0] == m.extent(0) &&
                weight_shape[1] * weight_shape[2] * weight_shape[3] == m.extent(1),
            "matrix_to_weights: matrix " + shape_str(m.shape()) + " does not match weights " + shape_str(weight_shape));
    return m.template cast<T>().reshaped(weight_shape);
}

/// Expands grouped weights [C_out, C_in/g, k, k] into the equivalent dense [C_out, C_in, k, k].
template<typename T>
Tensor<T> grouped_to_full(const Tensor<T>& w, std::size_t groups) {
    require_rank(w, 4, "grouped_to_full");
    const std::size_t co = w.extent(0), cig = w.extent(1), kk = w.extent(2) * w.extent(3);
    require(groups >= 1 && co % groups == 0, "grouped_to_full: groups must divide the output channels");
    const std::size_t cog = co / groups;
    Tensor<T>         full({co, cig * groups, w.extent(2), w.extent(3)});
    for (std::size_t o = 0; o < co; ++o) {
        const std::size_t g = o / cog;
        std::copy_n(w.data() + o * cig * kk, cig * kk, full.data() + (o * cig * groups + g * cig) * kk);
    }
    return full;
}

/// Keeps the g diagonal blocks of a [R, Q] matrix and zeroes the rest: the nearest block-diagonal
/// matrix in Frobenius norm.
inline Tensor<double> block_diagonal_projection(const Tensor<double>& m, std::size_t groups) {
    require_rank(m, 2, "block_diagonal_projection");
    const std::size_t rows = m.extent(0), cols = m.extent(1);
    require(groups >= 1 && rows % groups == 0 && cols % groups == 0,
            "block_diagonal_projection: groups must divide both matrix extents");
    const std::size_t rb = rows / groups, cb = cols / groups;
    Tensor<double>    out(m.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t g = i / rb;
        for (std::size_t j = g * cb; j < (g + 1) * cb; ++j) {
            out(i, j) = m(i, j);
        }
    }
    return out;
}

/// Throws unless g divides both channel counts of the upsampler conv.
inline void check_group_divisibility(std::size_t g, std::size_t in_channels, std::size_t out_channels) {
    require(g >= 1 && in_channels % g == 0 && out_channels % g == 0,
            "g=" + std::to_string(g) + " must divide both C=" + std::to_string(in_channels) + " and B*r^2=" +
                std::to_string(out_channels));
}

inline constexpr std::size_t kDefaultGroups = 8;

/// Picks the group count from a candidate set. Every candidate must divide both channel counts.
/// Returns `preferred` when it is a candidate, else the largest candidate below it, else the
/// smallest candidate.
inline std::size_t choose_g(std::size_t in_channels, std::size_t out_channels, const std::vector<std::size_t>& candidates,
                            std::size_t preferred = kDefaultGroups) {
    require(!candidates.empty(), "choose_g: empty candidate set");
    for (auto g : candidates) {
        check_group_divisibility(g, in_channels, out_channels);
    }
    if (std::find(candidates.begin(), candidates.end(), preferred) != candidates.end()) {
        return preferred;
    }
    std::vector<std::size_t> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    auto below = std::upper_bound(sorted.begin(), sorted.end(), preferred);
    return below == sorted.begin() ? sorted.front() : *std::prev(below);
}

inline std::size_t choose_g(const NetConfig& cfg, const std::vector<std::size_t>& candidates,
                            std::size_t preferred = kDefaultGroups) {
    const auto up = cfg.upsampler();
    return choose_g(up.in_channels, up.out_channels, candidates, preferred);
}

struct RankReport {
    std::string         layer;
    std::size_t         rows = 0, cols = 0;
    std::vector<double> sigma, cumulative;
    std::size_t         rank_90 = 0, rank_95 = 0, rank_99 = 0;
    std::size_t         recommended_g  = kDefaultGroups;
    std::size_t         params_full    = 0;
    std::size_t         params_grouped = 0;
    std::string         note;

    [[nodiscard]] std::size_t full_rank_bound() const { return std::min(rows, cols); }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"layer", layer},
                {"matrix_shape", {rows, cols}},
                {"full_rank_bound", full_rank_bound()},
                {"sigma", sigma},
                {"cumulative_energy", cumulative},
                {"rank_at", {{"0.90", rank_90}, {"0.95", rank_95}, {"0.99", rank_99}}},
                {"recommended_g", recommended_g},
                {"params_full", params_full},
                {"params_grouped", params_grouped},
                {"note", note}};
    }

    /// index,sigma,cumulative with a 1-based index
    [[nodiscard]] std::string curve_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "index,sigma,cumulative\n";
        for (std::size_t i = 0; i < sigma.size(); ++i) {
            os << (i + 1) << ',' << sigma[i] << ',' << cumulative[i] << '\n';
        }
        return os.str();
    }
};

inline RankReport analyze_matrix(const Tensor<double>& m, const UpsamplerSpec& full, std::size_t g) {
    RankReport rep;
    rep.rows       = m.extent(0);
    rep.cols       = m.extent(1);
    rep.sigma      = singular_values(m);
    rep.cumulative = cumulative_energy(rep.sigma);
    rep.rank_90    = rank_at_energy(rep.sigma, 0.90);
    rep.rank_95    = rank_at_energy(rep.sigma, 0.95);
    rep.rank_99    = rank_at_energy(rep.sigma, 0.99);
    check_group_divisibility(g, full.in_channels, full.out_channels);
    rep.recommended_g  = g;
    UpsamplerSpec grouped = full;
    grouped.kind          = UpsamplerKind::Grouped;
    grouped.groups        = g;
    rep.params_full       = full.param_count();
    rep.params_grouped    = grouped.param_count();
    rep.note = "g must divide both C and B*r^2";
    return rep;
}

/// SVD diagnosis of a model's upsampler. Grouped upsamplers are analysed through their dense
/// block-diagonal image.
template<typename T>
RankReport analyze(const LkcaNet<T>& model, const std::string& layer = "upsampler", std::size_t g = kDefaultGroups) {
    const std::string name = layer.ends_with(".weight") ? layer.substr(0, layer.size() - 7) : layer;
    if (!model.params().find(name + ".weight")) {
        fail_validation("analyze: layer '" + layer + "' not found");
    }
    if (name != "upsampler") {
        fail_validation("analyze: layer '" + layer + "' does not feed the pixel shuffle");
    }
    const auto& ref  = model.upsampler();
    const auto& w    = model.params()[ref.weight].value;
    auto        full = model.config().upsampler();
    full.kind        = UpsamplerKind::Full;
    full.groups      = 1;
    auto rep  = analyze_matrix(weights_to_matrix(grouped_to_full(w, ref.spec.groups)), full, g);
    rep.layer = name;
    return rep;
}

enum class GroupedInit { Random, SvdBlocks };

inline GroupedInit parse_grouped_init(const std::string& s) {
    if (s == "random") {
        return GroupedInit::Random;
    }
    if (s == "svd_blocks") {
        return GroupedInit::SvdBlocks;
    }
    fail_validation("unknown grouped init mode '" + s + "' (expected random or svd_blocks)");
}

template<typename T>
struct GroupedUpsampler {
    UpsamplerSpec spec;
    Tensor<T>     weight; ///< [B*r^2, C/g, k, k]
};

/// Grouped replacement of a full upsampler. `SvdBlocks` copies the diagonal blocks of the full
/// weight matrix; `Random` draws U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template<typename T>
GroupedUpsampler<T> build_grouped(const UpsamplerSpec& full, const Tensor<T>& full_weight, std::size_t g,
                                  GroupedInit init, Rng& rng) {
    require(full.effective_groups() == 1, "build_grouped: source upsampler must be full");
    require(full_weight.shape() == full.conv_spec().weight_shape(),
            "build_grouped: weight shape " + shape_str(full_weight.shape()) + " does not match spec " +
                shape_str(full.conv_spec().weight_shape()));
    check_group_divisibility(g, full.in_channels, full.out_channels);
    GroupedUpsampler<T> out;
    out.spec        = full;
    out.spec.kind   = g == 1 ? UpsamplerKind::Full : UpsamplerKind::Grouped;
    out.spec.groups = g;
    out.weight      = Tensor<T>(out.spec.conv_spec().weight_shape());
    const std::size_t co = full.out_channels, ci = full.in_channels, kk = full.kernel * full.kernel;
    const std::size_t cog = co / g, cig = ci / g;
    if (init == GroupedInit::SvdBlocks || g == 1) {
        for (std::size_t o = 0; o < co; ++o) {
            const std::size_t grp = o / cog;
            std::copy_n(full_weight.data() + (o * ci + grp * cig) * kk, cig * kk, out.weight.data() + o * cig * kk);
        }
    } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cig * kk));
        for (auto& v : out.weight.values()) {
            v = static_cast<T>(uniform(rng, -bound, bound));
        }
    }
    return out;
}

/// Copy of `model` whose upsampler is replaced by grouped(g); every other parameter is kept.
template<typename T>
LkcaNet<T> with_grouped_upsampler(const LkcaNet<T>& model, std::size_t g, GroupedInit init, Rng& rng) {
    const auto& src_ref  = model.upsampler();
    Tensor<T>   dense    = grouped_to_full(model.params()[src_ref.weight].value, src_ref.spec.groups);
    auto        full     = model.config().upsampler();
    full.kind            = UpsamplerKind::Full;
    full.groups          = 1;
    const auto grouped   = build_grouped(full, dense, g, init, rng);
    NetConfig  cfg       = model.config();
    cfg.upsampler_kind   = grouped.spec.kind;
    cfg.upsampler_groups = grouped.spec.effective_groups();
    LkcaNet<T> out(cfg);
    for (auto& p : out.params()) {
        if (p.name == "upsampler.weight") {
            p.value = grouped.weight;
        } else {
            p.value = model.params().at(p.name).value;
        }
    }
    return out;
}

} // namespace lkca
