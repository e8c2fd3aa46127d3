#pragma once

#include <lkca/error.hpp>
#include <lkca/hsi_io.hpp>
#include <lkca/losses.hpp>
#include <lkca/metrics.hpp>
#include <lkca/model.hpp>
#include <lkca/random.hpp>
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

// ---------------------------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer over a ParamStore. Moments are kept in double.
template<typename T>
class Adam {
public:
    explicit Adam(const ParamStore<T>& params, AdamConfig cfg = {}) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }

    [[nodiscard]] std::size_t steps() const { return t_; }

    /// Applies one update from the accumulated gradients. A non-finite gradient aborts before any
    /// parameter is modified.
    void step(ParamStore<T>& params, double lr) {
        require(params.size() == m_.size(), "adam: parameter set changed since construction");
        for (const auto& p : params) {
            if (!p.grad.all_finite()) {
                fail_numeric("non-finite gradient in parameter '" + p.name + "'");
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k];
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = static_cast<double>(p.grad[i]);
                m[i]           = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i]           = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mh = m[i] / bc1, vh = v[i] / bc2;
                p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - lr * mh / (std::sqrt(vh) + cfg_.eps));
            }
        }
    }

private:
    AdamConfig                       cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t                      t_ = 0;
};

// ---------------------------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------------------------

enum class LrSchedule { Cosine, Step };

inline std::string schedule_name(LrSchedule s) { return s == LrSchedule::Cosine ? "cosine" : "step"; }

inline LrSchedule parse_schedule(const std::string& s) {
    if (s == "cosine") {
        return LrSchedule::Cosine;
    }
    if (s == "step") {
        return LrSchedule::Step;
    }
    fail_validation("unknown lr schedule '" + s + "' (expected cosine or step)");
}

struct TrainConfig {
    std::size_t           epochs     = 1;
    std::size_t           batch_size = 8;
    std::uint64_t         seed       = 0;
    double                initial_lr = 2e-3;
    double                final_lr   = 2e-4;
    LrSchedule            schedule   = LrSchedule::Cosine;
    std::size_t           step_every = 10;  ///< step schedule: epochs between decays
    double                step_gamma = 0.5; ///< step schedule: multiplicative decay, floored at final_lr
    AdamConfig            adam;
    double                grad_clip = 0.0; ///< global L2 norm cap; 0 disables
    std::optional<double> drop_path_rate;  ///< overrides the network config when set
    LossWeights           weights;
    bool                  shuffle        = true;
    bool                  keep_best      = true; ///< restore the best-validation parameters at the end
    std::size_t           validate_every = 1;

    void validate() const {
        require(batch_size >= 1, "train config: batch_size must be >= 1");
        require(initial_lr > 0.0 && final_lr > 0.0 && final_lr <= initial_lr,
                "train config: learning rates must satisfy 0 < final_lr <= initial_lr");
        require(step_every >= 1 && step_gamma > 0.0 && step_gamma <= 1.0, "train config: invalid step schedule");
        require(grad_clip >= 0.0, "train config: grad_clip must be >= 0");
        require(validate_every >= 1, "train config: validate_every must be >= 1");
        require(!drop_path_rate || (*drop_path_rate >= 0.0 && *drop_path_rate < 1.0),
                "train config: drop_path_rate must lie in [0, 1)");
        weights.validate();
    }

    /// Learning rate used throughout `epoch` (0-based).
    [[nodiscard]] double lr_at(std::size_t epoch) const {
        if (schedule == LrSchedule::Step) {
            return std::max(final_lr, initial_lr * std::pow(step_gamma, static_cast<double>(epoch / step_every)));
        }
        const double progress = epochs > 1 ? static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1) : 0.0;
        return final_lr + 0.5 * (initial_lr - final_lr) * (1.0 + std::cos(M_PI * progress));
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"epochs", epochs},
                {"batch_size", batch_size},
                {"seed", seed},
                {"initial_lr", initial_lr},
                {"final_lr", final_lr},
                {"schedule", schedule_name(schedule)},
                {"step_every", step_every},
                {"step_gamma", step_gamma},
                {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
                {"grad_clip", grad_clip},
                {"drop_path_rate", drop_path_rate ? nlohmann::json(*drop_path_rate) : nlohmann::json(nullptr)},
                {"lambda1", weights.lambda1},
                {"lambda2", weights.lambda2},
                {"shuffle", shuffle},
                {"keep_best", keep_best},
                {"validate_every", validate_every},
                {"augmentation", "none"},
                {"grad_loss", "l1 of forward differences, both axes, all bands"}};
    }
};

enum class KdTarget { Upsampled, Reconstruction };

struct DistillConfig {
    LossWeights   weights;
    DecaySchedule decay;
    KdTarget      target = KdTarget::Upsampled; ///< F_UP (default) or the full reconstruction I_SR

    void validate() const {
        weights.validate();
        decay.validate();
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"lambda3", weights.lambda3},
                {"lambda4", weights.lambda4},
                {"lambda5", weights.lambda5},
                {"alpha", weights.alpha},
                {"decay_factor", decay.factor},
                {"decay_every", decay.every},
                {"kd_target", target == KdTarget::Upsampled ? "f_up" : "i_sr"}};
    }
};

// ---------------------------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------------------------

/// One training example as [1,B,h,w] tensors.
struct Sample {
    Tensor<float> lr, hr;
};

inline Sample to_sample(const PatchPair& p) { return {cube_to_tensor<float>(p.lr), cube_to_tensor<float>(p.hr)}; }

inline std::vector<Sample> materialize(const HsiCube& cube, const std::vector<PatchOrigin>& origins,
                                       const PatchSpec& spec) {
    std::vector<Sample> out;
    out.reserve(origins.size());
    for (const auto& o : origins) {
        out.push_back(to_sample(make_patch(cube, o, spec)));
    }
    return out;
}

struct TrainingData {
    std::vector<Sample> train, val;
};

inline TrainingData load_split(const HsiCube& cube, const Split& split) {
    require(cube.bands == split.cube_bands && cube.height == split.cube_height && cube.width == split.cube_width,
            "split was built for a " + std::to_string(split.cube_bands) + "x" + std::to_string(split.cube_height) +
                "x" + std::to_string(split.cube_width) + " cube");
    return {materialize(cube, split.train, split.spec), materialize(cube, split.val, split.spec)};
}

/// Concatenates samples[idx[begin..end)] along the batch axis.
inline std::pair<Tensor<float>, Tensor<float>> stack_batch(const std::vector<Sample>& samples,
                                                           const std::vector<std::size_t>& idx, std::size_t begin,
                                                           std::size_t end) {
    const Shape lr1 = samples.at(idx[begin]).lr.shape(), hr1 = samples.at(idx[begin]).hr.shape();
    const std::size_t n = end - begin;
    Tensor<float>     lr({n, lr1[1], lr1[2], lr1[3]}), hr({n, hr1[1], hr1[2], hr1[3]});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = samples.at(idx[begin + i]);
        require(s.lr.shape() == lr1 && s.hr.shape() == hr1, "stack_batch: samples have inconsistent shapes");
        std::copy(s.lr.storage().begin(), s.lr.storage().end(), lr.data() + i * s.lr.size());
        std::copy(s.hr.storage().begin(), s.hr.storage().end(), hr.data() + i * s.hr.size());
    }
    return {std::move(lr), std::move(hr)};
}

/// Mean per-band PSNR of `model` over a sample set, evaluated in batches.
inline double validation_mpsnr(const LkcaNet<float>& model, const std::vector<Sample>& samples, std::size_t batch) {
    if (samples.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    double acc = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += batch) {
        const std::size_t e = std::min(idx.size(), b + batch);
        auto [lr, hr]       = stack_batch(samples, idx, b, e);
        const auto out      = model.forward(lr);
        acc += mean_psnr(out.sr, hr) * static_cast<double>(e - b);
    }
    return acc / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------------------------

struct EpochLog {
    std::size_t epoch   = 0;
    double      lr      = 0.0;
    double      decay   = 0.0; ///< D(epoch); plain training reports the default schedule
    double      loss_h  = 0.0;
    double      loss_kd = 0.0;
    double      val_mpsnr = 0.0;

    [[nodiscard]] nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        return {{"epoch", epoch}, {"lr", lr},           {"D", decay},
                {"loss_h", num(loss_h)}, {"loss_kd", num(loss_kd)}, {"val_mpsnr", num(val_mpsnr)}};
    }
};

enum class TrainStatus { Completed, Diverged };

struct TrainResult {
    std::vector<EpochLog> log;
    TrainStatus           status = TrainStatus::Completed;
    std::string           message;
    double                best_val_mpsnr = -std::numeric_limits<double>::infinity();
    std::size_t           best_epoch     = 0;
    std::size_t           steps          = 0;

    [[nodiscard]] std::string log_jsonl() const {
        std::string s;
        for (const auto& e : log) {
            s += e.to_json().dump() + "\n";
        }
        return s;
    }
};

namespace detail {

inline std::vector<Tensor<float>> snapshot(const LkcaNet<float>& model) {
    std::vector<Tensor<float>> out;
    for (const auto& p : model.params()) {
        out.push_back(p.value);
    }
    return out;
}

inline void restore(LkcaNet<float>& model, const std::vector<Tensor<float>>& snap) {
    for (std::size_t i = 0; i < snap.size(); ++i) {
        model.params()[i].value = snap[i];
    }
}

inline void clip_gradients(ParamStore<float>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (float g : p.grad.values()) {
            sq += static_cast<double>(g) * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && std::isfinite(norm)) {
        const float s = static_cast<float>(max_norm / norm);
        for (auto& p : params) {
            for (auto& g : p.grad.values()) {
                g *= s;
            }
        }
    }
}

/// Shared loop of train() and distill(). With a zero KD coefficient the teacher is never run, so
/// the student trajectory and the log equal those of plain training.
inline TrainResult fit(LkcaNet<float>& model, const TrainingData& data, const TrainConfig& cfg,
                       const LkcaNet<float>* teacher, const DistillConfig* dcfg) {
    cfg.validate();
    if (dcfg != nullptr) {
        dcfg->validate();
    }
    TrainResult res;
    if (cfg.epochs == 0) {
        return res;
    }
    require(!data.train.empty(), "train: the training set is empty");
    if (cfg.drop_path_rate) {
        model.set_drop_path_rate(*cfg.drop_path_rate);
    }

    Rng                      rng(cfg.seed);
    Adam<float>              opt(model.params(), cfg.adam);
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    auto best      = snapshot(model);
    bool have_best = false;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto   last_good = snapshot(model);
        const double lr        = cfg.lr_at(epoch);
        const double decay     = dcfg != nullptr ? dcfg->decay.at(epoch) : DecaySchedule{}.at(epoch);
        const double kd_coef   = teacher != nullptr ? decay * dcfg->weights.alpha : 0.0;
        if (cfg.shuffle) {
            shuffle(order, rng);
        }
        double sum_h = 0.0, sum_kd = 0.0;
        try {
            for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
                const std::size_t e = std::min(order.size(), b + cfg.batch_size);
                auto [lr_in, hr]    = stack_batch(data.train, order, b, e);
                ForwardCache<float> cache;
                const auto          out = model.forward(lr_in, Mode::Train, &rng, &cache);
                auto                h   = h_loss(out.sr, hr, cfg.weights, true);
                double              kd  = 0.0;
                std::optional<Tensor<float>> kd_grad;
                if (kd_coef != 0.0) {
                    const auto  tout = teacher->forward(lr_in);
                    const bool  up   = dcfg->target == KdTarget::Upsampled;
                    auto        k    = kd_loss(up ? out.fup : out.sr, up ? tout.fup : tout.sr, dcfg->weights, true);
                    kd               = k.value;
                    kd_grad          = scaled(k.gradient, static_cast<float>(kd_coef));
                    if (!up) {
                        add_inplace(h.gradient, *kd_grad);
                        kd_grad.reset();
                    }
                }
                const double total = total_loss(kd, h.value, decay, teacher != nullptr ? dcfg->weights.alpha : 0.0);
                if (!std::isfinite(total)) {
                    fail_numeric("loss became non-finite at epoch " + std::to_string(epoch));
                }
                model.params().zero_grad();
                model.backward(cache, h.gradient, kd_grad ? &*kd_grad : nullptr);
                if (cfg.grad_clip > 0.0) {
                    clip_gradients(model.params(), cfg.grad_clip);
                }
                opt.step(model.params(), lr);
                ++res.steps;
                const double w = static_cast<double>(e - b);
                sum_h += h.value * w;
                sum_kd += kd * w;
            }
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::Numeric) {
                throw;
            }
            restore(model, have_best && cfg.keep_best ? best : last_good);
            res.status  = TrainStatus::Diverged;
            res.message = err.what();
            return res;
        }
        const double n = static_cast<double>(order.size());
        EpochLog     log{epoch, lr, decay, sum_h / n, sum_kd / n, std::numeric_limits<double>::quiet_NaN()};
        if ((epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs) {
            log.val_mpsnr = validation_mpsnr(model, data.val, cfg.batch_size);
            if (std::isfinite(log.val_mpsnr) && log.val_mpsnr > res.best_val_mpsnr) {
                res.best_val_mpsnr = log.val_mpsnr;
                res.best_epoch     = epoch;
                best               = snapshot(model);
                have_best          = true;
            }
        }
        res.log.push_back(log);
    }
    if (cfg.keep_best && have_best) {
        restore(model, best);
    }
    return res;
}

} // namespace detail

/// Minimizes the H loss over the training patches.
inline TrainResult train(LkcaNet<float>& model, const TrainingData& data, const TrainConfig& cfg) {
    return detail::fit(model, data, cfg, nullptr, nullptr);
}

/// Trains the student on D(e) * alpha * KD + H against a frozen teacher.
inline TrainResult distill(const LkcaNet<float>& teacher, LkcaNet<float>& student, const TrainingData& data,
                           const TrainConfig& cfg, const DistillConfig& dcfg) {
    const auto& tc = teacher.config();
    const auto& sc = student.config();
    require(tc.bands == sc.bands && tc.scale == sc.scale,
            "distill: teacher and student must share bands and scale so their F_UP maps match");
    require(tc.blocks > sc.blocks, "distill: the teacher must have more blocks than the student (m > n)");
    return detail::fit(student, data, cfg, &teacher, &dcfg);
}

// ---------------------------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------------------------

struct EvalReport {
    std::vector<MetricResult> regions;
    MetricResult              mean;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& r : regions) {
            per.push_back(r.to_json());
        }
        return {{"mean", mean.to_json()}, {"regions", per}};
    }
};

inline MetricResult average_metrics(const std::vector<MetricResult>& rs) {
    require(!rs.empty(), "evaluate: empty region list");
    MetricResult m;
    for (const auto& r : rs) {
        m.mpsnr += r.mpsnr;
        m.mssim += r.mssim;
        m.sam += r.sam;
        m.cc += r.cc;
        m.rmse += r.rmse;
        m.ergas += r.ergas;
        for (auto b : r.constant_bands) {
            if (std::find(m.constant_bands.begin(), m.constant_bands.end(), b) == m.constant_bands.end()) {
                m.constant_bands.push_back(b);
            }
        }
    }
    const double n = static_cast<double>(rs.size());
    m.mpsnr /= n;
    m.mssim /= n;
    m.sam /= n;
    m.cc /= n;
    m.rmse /= n;
    m.ergas /= n;
    std::sort(m.constant_bands.begin(), m.constant_bands.end());
    return m;
}

/// Forward pass over overlapping LR tiles, keeping the centre of each tile. Channel attention
/// pools over each tile, so the result only approximates the untiled forward.
inline Tensor<float> tiled_forward(const LkcaNet<float>& model, const Tensor<float>& lr, std::size_t tile,
                                   std::size_t overlap) {
    const std::size_t h = lr.extent(2), w = lr.extent(3), r = model.config().scale, bands = lr.extent(1);
    if (tile == 0 || (tile >= h && tile >= w)) {
        return model.forward(lr).sr;
    }
    require(overlap < tile, "tiled_forward: overlap must be smaller than the tile");
    Tensor<float>     out({1, bands, h * r, w * r});
    const std::size_t step = tile - overlap;
    auto starts = [&](std::size_t extent) {
        std::vector<std::size_t> s;
        if (extent <= tile) {
            return std::vector<std::size_t>{0};
        }
        for (std::size_t p = 0;; p += step) {
            if (p + tile >= extent) {
                s.push_back(extent - tile);
                break;
            }
            s.push_back(p);
        }
        return s;
    };
    const auto ys = starts(h), xs = starts(w);
    for (std::size_t yi = 0; yi < ys.size(); ++yi) {
        for (std::size_t xi = 0; xi < xs.size(); ++xi) {
            const std::size_t y0 = ys[yi], x0 = xs[xi], th = std::min(tile, h), tw = std::min(tile, w);
            Tensor<float>     in({1, bands, th, tw});
            for (std::size_t c = 0; c < bands; ++c) {
                for (std::size_t y = 0; y < th; ++y) {
                    for (std::size_t x = 0; x < tw; ++x) {
                        in(0, c, y, x) = lr(0, c, y0 + y, x0 + x);
                    }
                }
            }
            const auto sr = model.forward(in).sr;
            // keep the part of this tile closest to its centre
            const std::size_t ky0 = yi == 0 ? 0 : (ys[yi - 1] + th + y0) / 2;
            const std::size_t ky1 = yi + 1 == ys.size() ? h : (y0 + th + ys[yi + 1]) / 2;
            const std::size_t kx0 = xi == 0 ? 0 : (xs[xi - 1] + tw + x0) / 2;
            const std::size_t kx1 = xi + 1 == xs.size() ? w : (x0 + tw + xs[xi + 1]) / 2;
            for (std::size_t c = 0; c < bands; ++c) {
                for (std::size_t y = ky0 * r; y < ky1 * r; ++y) {
                    for (std::size_t x = kx0 * r; x < kx1 * r; ++x) {
                        out(0, c, y, x) = sr(0, c, y - y0 * r, x - x0 * r);
                    }
                }
            }
        }
    }
    return out;
}

/// Degrades each HR test region by r, super-resolves it and scores it. A null model scores the
/// bicubic baseline.
inline EvalReport evaluate(const LkcaNet<float>* model, const HsiCube& cube, const std::vector<Rect>& regions,
                           std::size_t scale, std::size_t tile = 0, std::size_t overlap = 0) {
    require(!regions.empty(), "evaluate: empty region list");
    if (model != nullptr) {
        require(model->config().bands == cube.bands, "evaluate: cube has " + std::to_string(cube.bands) +
                                                         " bands, model expects " +
                                                         std::to_string(model->config().bands));
        require(model->config().scale == scale, "evaluate: model scale differs from the requested scale");
    }
    EvalReport rep;
    for (const auto& region : regions) {
        require(region.height % scale == 0 && region.width % scale == 0,
                "evaluate: region extents must be divisible by the scale factor");
        const HsiCube hr = crop(cube, region);
        const HsiCube lr = degrade(hr, scale);
        const auto    lt = cube_to_tensor<float>(lr);
        Tensor<float> sr = model != nullptr ? tiled_forward(*model, lt, tile, overlap)
                                            : bicubic_resize(lt, hr.height, hr.width);
        rep.regions.push_back(compute_metrics(sr, cube_to_tensor<float>(hr), scale));
    }
    rep.mean = average_metrics(rep.regions);
    return rep;
}

} // namespace lkca
