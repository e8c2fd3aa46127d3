#pragma once

#include <lkca/binio.hpp>
#include <lkca/error.hpp>
#include <lkca/ops.hpp>
#include <lkca/random.hpp>
#include <lkca/resample.hpp>
#include <lkca/tensor.hpp>

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lkca {

using nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------------------------

enum class UpsamplerKind { Full, Grouped };

/// The learnable upsampling head: a k x k conv C -> B*r^2 feeding pixel_shuffle(r).
struct UpsamplerSpec {
    UpsamplerKind kind         = UpsamplerKind::Full;
    std::size_t   groups       = 1;
    std::size_t   kernel       = 3;
    std::size_t   in_channels  = 128;
    std::size_t   out_channels = 128 * 16;

    [[nodiscard]] std::size_t effective_groups() const { return kind == UpsamplerKind::Full ? 1 : groups; }

    void validate() const {
        const auto g = effective_groups();
        require(g >= 1, "upsampler: groups must be >= 1");
        require(in_channels % g == 0 && out_channels % g == 0,
                "upsampler: g=" + std::to_string(g) + " must divide both C=" + std::to_string(in_channels) +
                    " and B*r^2=" + std::to_string(out_channels));
    }

    /// C * B * r^2 * k^2 / g
    [[nodiscard]] std::size_t param_count() const {
        return in_channels * out_channels * kernel * kernel / effective_groups();
    }

    [[nodiscard]] ops::ConvSpec conv_spec() const {
        return {in_channels, out_channels, kernel, 1, effective_groups(), false};
    }
};

struct NetConfig {
    std::size_t   bands          = 128;
    std::size_t   channels       = 128;
    std::size_t   blocks         = 16;
    std::size_t   scale          = 4;
    std::size_t   kernel1        = 5;
    std::size_t   dilation1      = 5;
    std::size_t   kernel2        = 7;
    std::size_t   dilation2      = 7;
    std::size_t   lkca_groups    = 4;
    std::size_t   ca_reduction   = 16;
    UpsamplerKind upsampler_kind = UpsamplerKind::Full;
    std::size_t   upsampler_groups = 1;
    double        drop_path_rate = 0.1;
    bool          proj_out       = true; ///< trailing 1x1 conv inside each block before the residual add

    [[nodiscard]] UpsamplerSpec upsampler() const {
        return {upsampler_kind, upsampler_kind == UpsamplerKind::Full ? 1 : upsampler_groups, 3, channels,
                bands * scale * scale};
    }

    void validate() const {
        require(bands >= 1 && channels >= 1, "net config: bands and channels must be >= 1");
        require(scale >= 1, "net config: scale factor must be >= 1");
        require(kernel1 % 2 == 1 && kernel2 % 2 == 1, "net config: depthwise kernels must be odd");
        require(dilation1 >= 1 && dilation2 >= 1, "net config: dilations must be >= 1");
        require(lkca_groups >= 1 && channels % lkca_groups == 0 && (3 * channels) % lkca_groups == 0,
                "net config: lkca_groups=" + std::to_string(lkca_groups) + " must divide C and 3C (C=" +
                    std::to_string(channels) + ")");
        require(ca_reduction >= 1 && (3 * channels) % ca_reduction == 0,
                "net config: ca_reduction=" + std::to_string(ca_reduction) + " must divide 3C=" +
                    std::to_string(3 * channels));
        require(drop_path_rate >= 0.0 && drop_path_rate < 1.0, "net config: drop_path_rate must lie in [0, 1)");
        upsampler().validate();
    }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline json config_to_json(const NetConfig& c) {
    return {{"bands", c.bands},
            {"channels", c.channels},
            {"blocks", c.blocks},
            {"scale", c.scale},
            {"kernel1", c.kernel1},
            {"dilation1", c.dilation1},
            {"kernel2", c.kernel2},
            {"dilation2", c.dilation2},
            {"lkca_groups", c.lkca_groups},
            {"ca_reduction", c.ca_reduction},
            {"upsampler", {{"kind", c.upsampler_kind == UpsamplerKind::Full ? "full" : "grouped"},
                           {"groups", c.upsampler().effective_groups()},
                           {"kernel", 3}}},
            {"drop_path_rate", c.drop_path_rate},
            {"proj_out", c.proj_out}};
}

inline NetConfig config_from_json(const json& j) {
    NetConfig c;
    try {
        c.bands          = j.at("bands").get<std::size_t>();
        c.channels       = j.at("channels").get<std::size_t>();
        c.blocks         = j.at("blocks").get<std::size_t>();
        c.scale          = j.at("scale").get<std::size_t>();
        c.kernel1        = j.at("kernel1").get<std::size_t>();
        c.dilation1      = j.at("dilation1").get<std::size_t>();
        c.kernel2        = j.at("kernel2").get<std::size_t>();
        c.dilation2      = j.at("dilation2").get<std::size_t>();
        c.lkca_groups    = j.at("lkca_groups").get<std::size_t>();
        c.ca_reduction   = j.at("ca_reduction").get<std::size_t>();
        const auto kind  = j.at("upsampler").at("kind").get<std::string>();
        require(kind == "full" || kind == "grouped", "net config: upsampler kind must be full or grouped");
        c.upsampler_kind   = kind == "full" ? UpsamplerKind::Full : UpsamplerKind::Grouped;
        c.upsampler_groups = j.at("upsampler").at("groups").get<std::size_t>();
        require(j.at("upsampler").value("kernel", 3) == 3, "net config: only 3x3 upsampler kernels are supported");
        c.drop_path_rate = j.at("drop_path_rate").get<double>();
        c.proj_out       = j.at("proj_out").get<bool>();
    } catch (const json::exception& e) {
        fail_validation(std::string("net config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------------------------

template<typename T>
struct Parameter {
    std::string name;
    Tensor<T>   value;
    Tensor<T>   grad;
};

/// Named parameters with a gradient accumulator of identical shape each.
template<typename T>
class ParamStore {
public:
    std::size_t add(std::string name, Shape shape) {
        require(!index_.contains(name), "duplicate parameter name '" + name + "'");
        index_[name] = params_.size();
        params_.push_back({std::move(name), Tensor<T>(shape), Tensor<T>(shape)});
        return params_.size() - 1;
    }

    [[nodiscard]] std::size_t size() const { return params_.size(); }
    Parameter<T>&             operator[](std::size_t i) { return params_[i]; }
    const Parameter<T>&       operator[](std::size_t i) const { return params_[i]; }

    [[nodiscard]] std::optional<std::size_t> find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    }

    Parameter<T>& at(const std::string& name) {
        auto i = find(name);
        require(i.has_value(), "unknown parameter '" + name + "'");
        return params_[*i];
    }
    const Parameter<T>& at(const std::string& name) const {
        auto i = find(name);
        require(i.has_value(), "unknown parameter '" + name + "'");
        return params_[*i];
    }

    void zero_grad() {
        for (auto& p : params_) {
            p.grad.fill(T{0});
        }
    }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += p.value.size();
        }
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter<T>>          params_;
    std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------------------------

inline constexpr std::size_t kNoParam = std::numeric_limits<std::size_t>::max();

struct ConvRef {
    ops::ConvSpec spec;
    std::size_t   weight = kNoParam, bias = kNoParam;
};

struct BlockRefs {
    std::size_t norm_weight = kNoParam, norm_bias = kNoParam;
    ConvRef     proj_in, dw1, dw2, fuse, proj_out;
    std::size_t ca_w1 = kNoParam, ca_b1 = kNoParam, ca_w2 = kNoParam, ca_b2 = kNoParam;
};

enum class Mode { Eval, Train };

template<typename T>
struct BlockCache {
    Tensor<T>                     x, t0, t1, u, a1, a2, ac, aca, af, gated;
    ops::LayerNormCache<T>        ln;
    ops::ChannelAttentionCache<T> ca;
    std::vector<T>                drop_scale; ///< empty when drop path is inactive
};

template<typename T>
struct ForwardCache {
    Tensor<T>                  lr, f0, fn, up_pre;
    std::vector<BlockCache<T>> blocks;
};

template<typename T>
struct ForwardResult {
    Tensor<T> sr;  ///< I_SR = F_UP + bicubic(I_LR)
    Tensor<T> fup; ///< F_UP, the post-pixel-shuffle feature map used for distillation
};

template<typename T>
class LkcaNet {
public:
    explicit LkcaNet(NetConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        build();
    }

    [[nodiscard]] const NetConfig&     config() const { return cfg_; }
    [[nodiscard]] ParamStore<T>&       params() { return params_; }
    [[nodiscard]] const ParamStore<T>& params() const { return params_; }
    [[nodiscard]] const BlockRefs&     block(std::size_t i) const { return blocks_.at(i); }
    [[nodiscard]] const ConvRef&       head() const { return head_; }
    [[nodiscard]] const ConvRef&       upsampler() const { return up_; }

    void set_drop_path_rate(double rate) {
        require(rate >= 0.0 && rate < 1.0, "drop_path_rate must lie in [0, 1)");
        cfg_.drop_path_rate = rate;
    }

    /// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases,
    /// unit scale and zero shift for layer norms.
    void init(Rng& rng) {
        auto fill_uniform = [&](std::size_t idx, double bound) {
            if (idx == kNoParam) {
                return;
            }
            for (auto& v : params_[idx].value.values()) {
                v = static_cast<T>(uniform(rng, -bound, bound));
            }
        };
        auto conv = [&](const ConvRef& c) {
            const double fan_in = static_cast<double>(c.spec.in_channels / c.spec.groups * c.spec.kernel * c.spec.kernel);
            fill_uniform(c.weight, 1.0 / std::sqrt(fan_in));
            fill_uniform(c.bias, 1.0 / std::sqrt(fan_in));
        };
        conv(head_);
        for (const auto& b : blocks_) {
            params_[b.norm_weight].value.fill(T{1});
            params_[b.norm_bias].value.fill(T{0});
            conv(b.proj_in);
            conv(b.dw1);
            conv(b.dw2);
            const double c3 = static_cast<double>(3 * cfg_.channels);
            const double hid = static_cast<double>(params_[b.ca_w1].value.extent(0));
            fill_uniform(b.ca_w1, 1.0 / std::sqrt(c3));
            fill_uniform(b.ca_b1, 1.0 / std::sqrt(c3));
            fill_uniform(b.ca_w2, 1.0 / std::sqrt(hid));
            fill_uniform(b.ca_b2, 1.0 / std::sqrt(hid));
            conv(b.fuse);
            if (cfg_.proj_out) {
                conv(b.proj_out);
            }
        }
        conv(up_);
    }

    [[nodiscard]] Tensor<T> conv(const ConvRef& c, const Tensor<T>& x) const {
        return ops::conv2d_forward(x, params_[c.weight].value, c.bias == kNoParam ? nullptr : &params_[c.bias].value,
                                   c.spec);
    }

    [[nodiscard]] ops::ChannelAttentionParams<T> ca_params(std::size_t i) const {
        const auto& b = blocks_.at(i);
        return {params_[b.ca_w1].value, params_[b.ca_b1].value, params_[b.ca_w2].value, params_[b.ca_b2].value};
    }

    /// LKCA unit: cascaded dilated depthwise convs, concat, channel attention, grouped 1x1 fusion,
    /// multiplicative gate with the input.
    [[nodiscard]] Tensor<T> lkca_forward(std::size_t i, const Tensor<T>& fu, BlockCache<T>* cache = nullptr) const {
        const auto& b   = blocks_.at(i);
        Tensor<T>   a1  = conv(b.dw1, fu);
        Tensor<T>   a2  = conv(b.dw2, a1);
        Tensor<T>   ac  = concat_channels({&fu, &a1, &a2});
        const auto  cap = ca_params(i);
        Tensor<T>   aca = ops::channel_attention_forward(ac, cap, cache ? &cache->ca : nullptr);
        Tensor<T>   af  = conv(b.fuse, aca);
        Tensor<T>   out = hadamard(af, fu);
        if (cache != nullptr) {
            cache->a1  = std::move(a1);
            cache->a2  = std::move(a2);
            cache->ac  = std::move(ac);
            cache->aca = std::move(aca);
            cache->af  = std::move(af);
        }
        return out;
    }

    /// LKB: x + drop_path(proj_out(LKCA(GELU(conv1x1(LN(x)))))).
    [[nodiscard]] Tensor<T> lkb_forward(std::size_t i, const Tensor<T>& x, Mode mode = Mode::Eval, Rng* rng = nullptr,
                                        BlockCache<T>* cache = nullptr) const {
        const auto& b = blocks_.at(i);
        Tensor<T>   t0 = ops::layer_norm_forward(x, params_[b.norm_weight].value, params_[b.norm_bias].value,
                                                 cache ? &cache->ln : nullptr);
        Tensor<T>   t1 = conv(b.proj_in, t0);
        Tensor<T>   u  = ops::gelu_forward(t1);
        Tensor<T>   w  = lkca_forward(i, u, cache);
        Tensor<T>   p  = cfg_.proj_out ? conv(b.proj_out, w) : w;

        std::vector<T> scale;
        if (mode == Mode::Train && cfg_.drop_path_rate > 0.0) {
            require(rng != nullptr, "lkb_forward: training with drop path needs a random source");
            scale.resize(x.extent(0));
            const T keep_scale = static_cast<T>(1.0 / (1.0 - cfg_.drop_path_rate));
            for (auto& s : scale) {
                s = uniform01(*rng) >= cfg_.drop_path_rate ? keep_scale : T{0};
            }
            p = ops::scale_samples(p, scale);
        }
        Tensor<T> y = x + p;
        if (cache != nullptr) {
            cache->x          = x;
            cache->t0         = std::move(t0);
            cache->t1         = std::move(t1);
            cache->u          = std::move(u);
            cache->gated      = std::move(w);
            cache->drop_scale = std::move(scale);
        }
        return y;
    }

    [[nodiscard]] ForwardResult<T> forward(const Tensor<T>& lr, Mode mode = Mode::Eval, Rng* rng = nullptr,
                                           ForwardCache<T>* cache = nullptr) const {
        require_rank(lr, 4, "net_forward");
        require(lr.extent(1) == cfg_.bands, "net_forward: input has " + std::to_string(lr.extent(1)) +
                                                " bands, network expects " + std::to_string(cfg_.bands));
        Tensor<T> x = conv(head_, lr);
        if (cache != nullptr) {
            cache->lr = lr;
            cache->f0 = x;
            cache->blocks.assign(blocks_.size(), {});
        }
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            x = lkb_forward(i, x, mode, rng, cache ? &cache->blocks[i] : nullptr);
        }
        Tensor<T> up  = conv(up_, x);
        Tensor<T> fup = ops::pixel_shuffle(up, cfg_.scale);
        Tensor<T> sr  = fup + bicubic_resize(lr, lr.extent(2) * cfg_.scale, lr.extent(3) * cfg_.scale);
        if (cache != nullptr) {
            cache->fn     = std::move(x);
            cache->up_pre = std::move(up);
        }
        return {std::move(sr), std::move(fup)};
    }

    /// Accumulates parameter gradients given dL/dI_SR and, optionally, an extra dL/dF_UP.
    void backward(const ForwardCache<T>& cache, const Tensor<T>& grad_sr, const Tensor<T>* grad_fup = nullptr) {
        Tensor<T> g = grad_sr;
        if (grad_fup != nullptr) {
            add_inplace(g, *grad_fup);
        }
        Tensor<T> gx = conv_backward(up_, ops::pixel_unshuffle(g, cfg_.scale), cache.fn, true);
        for (std::size_t i = blocks_.size(); i-- > 0;) {
            gx = lkb_backward(i, gx, cache.blocks[i]);
        }
        conv_backward(head_, gx, cache.lr, false);
    }

    template<typename U>
    [[nodiscard]] LkcaNet<U> cast() const {
        LkcaNet<U> out(cfg_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            out.params()[i].value = params_[i].value.template cast<U>();
        }
        return out;
    }

private:
    ConvRef add_conv(const std::string& name, const ops::ConvSpec& spec) {
        spec.validate();
        ConvRef r{spec, params_.add(name + ".weight", spec.weight_shape()), kNoParam};
        if (spec.bias) {
            r.bias = params_.add(name + ".bias", {spec.out_channels});
        }
        return r;
    }

    void build() {
        const std::size_t c = cfg_.channels;
        head_               = add_conv("head", {cfg_.bands, c, 3, 1, 1, true});
        for (std::size_t i = 0; i < cfg_.blocks; ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            BlockRefs         b;
            b.norm_weight = params_.add(p + "norm.weight", {c});
            b.norm_bias   = params_.add(p + "norm.bias", {c});
            b.proj_in     = add_conv(p + "proj_in", {c, c, 1, 1, 1, true});
            b.dw1         = add_conv(p + "lkca.dw1", {c, c, cfg_.kernel1, cfg_.dilation1, c, true});
            b.dw2         = add_conv(p + "lkca.dw2", {c, c, cfg_.kernel2, cfg_.dilation2, c, true});
            const std::size_t hid = ops::ca_hidden(3 * c, cfg_.ca_reduction);
            b.ca_w1       = params_.add(p + "lkca.ca.fc1.weight", {hid, 3 * c});
            b.ca_b1       = params_.add(p + "lkca.ca.fc1.bias", {hid});
            b.ca_w2       = params_.add(p + "lkca.ca.fc2.weight", {3 * c, hid});
            b.ca_b2       = params_.add(p + "lkca.ca.fc2.bias", {3 * c});
            b.fuse        = add_conv(p + "lkca.fuse", {3 * c, c, 1, 1, cfg_.lkca_groups, true});
            if (cfg_.proj_out) {
                b.proj_out = add_conv(p + "proj_out", {c, c, 1, 1, 1, true});
            }
            blocks_.push_back(b);
        }
        up_ = add_conv("upsampler", cfg_.upsampler().conv_spec());
    }

    Tensor<T> conv_backward(const ConvRef& c, const Tensor<T>& gy, const Tensor<T>& x, bool need_x) {
        auto g = ops::conv2d_backward(gy, x, params_[c.weight].value, c.spec, need_x);
        add_inplace(params_[c.weight].grad, g.weight);
        if (c.bias != kNoParam) {
            add_inplace(params_[c.bias].grad, g.bias);
        }
        return std::move(g.x);
    }

    Tensor<T> lkb_backward(std::size_t i, const Tensor<T>& gy, const BlockCache<T>& bc) {
        const auto& b  = blocks_[i];
        Tensor<T>   gp = bc.drop_scale.empty() ? gy : ops::scale_samples(gy, bc.drop_scale);
        Tensor<T>   gw = cfg_.proj_out ? conv_backward(b.proj_out, gp, bc.gated, true) : gp;

        Tensor<T> gaf = hadamard(gw, bc.u);
        Tensor<T> gu  = hadamard(gw, bc.af);
        Tensor<T> gaca = conv_backward(b.fuse, gaf, bc.aca, true);
        auto      cag  = ops::channel_attention_backward(gaca, bc.ac, ca_params(i), bc.ca);
        add_inplace(params_[b.ca_w1].grad, cag.params.w1);
        add_inplace(params_[b.ca_b1].grad, cag.params.b1);
        add_inplace(params_[b.ca_w2].grad, cag.params.w2);
        add_inplace(params_[b.ca_b2].grad, cag.params.b2);

        const std::size_t c = cfg_.channels;
        add_inplace(gu, slice_channels(cag.x, 0, c));
        Tensor<T> ga1 = slice_channels(cag.x, c, c);
        Tensor<T> ga2 = slice_channels(cag.x, 2 * c, c);
        add_inplace(ga1, conv_backward(b.dw2, ga2, bc.a1, true));
        add_inplace(gu, conv_backward(b.dw1, ga1, bc.u, true));

        Tensor<T> gt1 = ops::gelu_backward(gu, bc.t1);
        Tensor<T> gt0 = conv_backward(b.proj_in, gt1, bc.t0, true);
        auto      lng = ops::layer_norm_backward(gt0, bc.ln, params_[b.norm_weight].value);
        add_inplace(params_[b.norm_weight].grad, lng.gamma);
        add_inplace(params_[b.norm_bias].grad, lng.beta);
        Tensor<T> gx = gy;
        add_inplace(gx, lng.x);
        return gx;
    }

    NetConfig              cfg_;
    ParamStore<T>          params_;
    ConvRef                head_, up_;
    std::vector<BlockRefs> blocks_;
};

// ---------------------------------------------------------------------------------------------
// Parameter and FLOPs accounting
// ---------------------------------------------------------------------------------------------

struct LayerCount {
    std::string   name;
    std::uint64_t count = 0;
};

struct ParamBreakdown {
    std::vector<LayerCount> layers;
    std::uint64_t           total     = 0;
    std::uint64_t           upsampler = 0;

    [[nodiscard]] double upsampler_share() const {
        return total == 0 ? 0.0 : static_cast<double>(upsampler) / static_cast<double>(total);
    }
};

namespace detail {
inline void push_layer(std::vector<LayerCount>& v, std::string name, std::uint64_t n) { v.push_back({std::move(name), n}); }
} // namespace detail

/// Closed-form scalar parameter count. Matches LkcaNet::params().scalar_count() exactly.
inline ParamBreakdown param_count(const NetConfig& cfg) {
    cfg.validate();
    ParamBreakdown    pb;
    const std::size_t c   = cfg.channels;
    const std::size_t hid = ops::ca_hidden(3 * c, cfg.ca_reduction);
    detail::push_layer(pb.layers, "head", ops::ConvSpec{cfg.bands, c, 3, 1, 1, true}.param_count());
    std::uint64_t per_block = 2 * c;
    per_block += ops::ConvSpec{c, c, 1, 1, 1, true}.param_count();
    per_block += ops::ConvSpec{c, c, cfg.kernel1, cfg.dilation1, c, true}.param_count();
    per_block += ops::ConvSpec{c, c, cfg.kernel2, cfg.dilation2, c, true}.param_count();
    per_block += hid * 3 * c + hid + 3 * c * hid + 3 * c;
    per_block += ops::ConvSpec{3 * c, c, 1, 1, cfg.lkca_groups, true}.param_count();
    if (cfg.proj_out) {
        per_block += ops::ConvSpec{c, c, 1, 1, 1, true}.param_count();
    }
    detail::push_layer(pb.layers, "blocks (x" + std::to_string(cfg.blocks) + ")", per_block * cfg.blocks);
    pb.upsampler = cfg.upsampler().param_count();
    detail::push_layer(pb.layers, "upsampler", pb.upsampler);
    for (const auto& l : pb.layers) {
        pb.total += l.count;
    }
    return pb;
}

struct FlopsBreakdown {
    std::vector<LayerCount> layers;
    std::uint64_t           total = 0;
};

/// 2 x multiply-accumulates of every convolution and linear layer for an input_h x input_w
/// low-resolution input. Normalization, activations and elementwise ops are not counted.
inline FlopsBreakdown flops_estimate(const NetConfig& cfg, std::size_t input_h, std::size_t input_w) {
    cfg.validate();
    FlopsBreakdown    fb;
    const std::size_t c = cfg.channels, hw = input_h * input_w;
    const std::size_t hid = ops::ca_hidden(3 * c, cfg.ca_reduction);
    detail::push_layer(fb.layers, "head", 2 * ops::ConvSpec{cfg.bands, c, 3, 1, 1, true}.macs(input_h, input_w));
    std::uint64_t per_block = 0;
    per_block += 2 * ops::ConvSpec{c, c, 1, 1, 1, true}.macs(input_h, input_w);
    per_block += 2 * ops::ConvSpec{c, c, cfg.kernel1, cfg.dilation1, c, true}.macs(input_h, input_w);
    per_block += 2 * ops::ConvSpec{c, c, cfg.kernel2, cfg.dilation2, c, true}.macs(input_h, input_w);
    per_block += 2 * (3 * c * hid + hid * 3 * c);
    per_block += 2 * ops::ConvSpec{3 * c, c, 1, 1, cfg.lkca_groups, true}.macs(input_h, input_w);
    if (cfg.proj_out) {
        per_block += 2 * ops::ConvSpec{c, c, 1, 1, 1, true}.macs(input_h, input_w);
    }
    detail::push_layer(fb.layers, "blocks (x" + std::to_string(cfg.blocks) + ")", per_block * cfg.blocks);
    detail::push_layer(fb.layers, "upsampler", 2 * cfg.upsampler().param_count() * hw);
    for (const auto& l : fb.layers) {
        fb.total += l.count;
    }
    return fb;
}

// ---------------------------------------------------------------------------------------------
// Checkpoints:
//   "LKCACKPT" | u32 version | u32 json length | json {config, meta}
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank, u64 dims..., f32 LE data
// ---------------------------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic   = "LKCACKPT";
inline constexpr std::uint32_t    kCheckpointVersion = 1;

struct Checkpoint {
    LkcaNet<float> model;
    json           meta = json::object();
};

inline std::vector<unsigned char> encode_checkpoint(const LkcaNet<float>& model, const json& meta = json::object()) {
    binio::Writer w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.string_u32(json{{"config", config_to_json(model.config())}, {"meta", meta}}.dump());
    w.u32(static_cast<std::uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
        w.string_u32(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) {
            w.u64(d);
        }
        w.f32_array(p.value.storage());
    }
    return w.buffer();
}

inline void save_checkpoint(const LkcaNet<float>& model, const std::string& path, const json& meta = json::object()) {
    const auto    bytes = encode_checkpoint(model, meta);
    binio::Writer w;
    w.bytes(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    w.save(path);
}

inline Checkpoint decode_checkpoint(binio::Reader r) {
    const auto magic = r.remaining() >= kCheckpointMagic.size() ? r.bytes(kCheckpointMagic.size(), "magic") : "";
    if (magic != kCheckpointMagic) {
        fail_validation(r.what() + ": bad magic (expected \"LKCACKPT\")");
    }
    const auto version = r.u32("version");
    if (version != kCheckpointVersion) {
        fail_validation(r.what() + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    json header;
    try {
        header = json::parse(r.string_u32("json header"));
    } catch (const json::exception& e) {
        fail_validation(r.what() + ": malformed json header: " + e.what());
    }
    require(header.contains("config"), r.what() + ": header has no config");
    Checkpoint ck{LkcaNet<float>(config_from_json(header.at("config"))), header.value("meta", json::object())};

    const auto        count = r.u32("tensor count");
    std::vector<bool> seen(ck.model.params().size(), false);
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name = r.string_u32("tensor name");
        const auto rank = r.u32("tensor rank");
        require(rank >= 1 && rank <= 8, r.what() + ": tensor '" + name + "' has implausible rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) {
            d = r.u64("tensor extent");
        }
        const auto idx = ck.model.params().find(name);
        if (!idx) {
            fail_validation(r.what() + ": tensor '" + name + "' does not exist in the configured network");
        }
        auto& p = ck.model.params()[*idx];
        if (p.value.shape() != shape) {
            fail_validation(r.what() + ": shape mismatch for tensor '" + name + "': file " + shape_str(shape) +
                            " vs config " + shape_str(p.value.shape()));
        }
        r.f32_array(p.value.storage(), "tensor data");
        seen[*idx] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            fail_validation(r.what() + ": tensor '" + ck.model.params()[i].name + "' missing from checkpoint");
        }
    }
    if (r.remaining() != 0) {
        fail_validation(r.what() + ": unexpected trailing bytes");
    }
    for (const auto& p : ck.model.params()) {
        if (!p.value.all_finite()) {
            fail_validation(r.what() + ": tensor '" + p.name + "' contains non-finite values");
        }
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(binio::Reader::from_file(path, path));
}

} // namespace lkca
