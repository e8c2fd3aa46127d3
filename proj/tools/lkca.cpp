// lkca: command-line front end for cube preparation, training, distillation, rank analysis,
// upsampler approximation, evaluation and model accounting.

#include <lkca/lkca.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------------------------
// Options with config-file fallback
// ---------------------------------------------------------------------------------------------

/// Binds flags to variables. A value from --config replaces the built-in default before parsing,
/// so an explicit flag still wins. Every bound value is echoed into the run manifest.
class Options {
public:
    explicit Options(json file) : file_(std::move(file)) {
        if (file_.is_object() && file_.value("format", "") == "lkca-run-manifest") {
            manifest_ = true;
        }
    }

    template<typename T>
    CLI::Option* add(CLI::App* sub, const std::string& name, T& var, const std::string& desc) {
        apply(sub, name, var);
        fields_[sub].push_back({name, [&var] { return json(var); }});
        return sub->add_option("--" + name, var, desc);
    }

    CLI::Option* flag(CLI::App* sub, const std::string& name, bool& var, const std::string& desc) {
        apply(sub, name, var);
        fields_[sub].push_back({name, [&var] { return json(var); }});
        return sub->add_flag("--" + name, var, desc);
    }

    [[nodiscard]] json resolved(const CLI::App* sub) const {
        json out = json::object();
        for (const auto* app : {root_, sub}) {
            const auto it = fields_.find(app);
            if (it == fields_.end()) {
                continue;
            }
            for (const auto& [name, get] : it->second) {
                out[name] = get();
            }
        }
        return out;
    }

    void set_root(const CLI::App* root) { root_ = root; }

    /// True when the option added last took its value from the config file.
    [[nodiscard]] bool configured() const { return configured_; }

private:
    [[nodiscard]] const json* lookup(const CLI::App* sub, const std::string& name) const {
        if (!file_.is_object()) {
            return nullptr;
        }
        std::string alt = name;
        std::replace(alt.begin(), alt.end(), '-', '_');
        auto find_in = [&](const json& obj) -> const json* {
            for (const auto& key : {name, alt}) {
                if (obj.is_object() && obj.contains(key)) {
                    return &obj.at(key);
                }
            }
            return nullptr;
        };
        if (manifest_) {
            return file_.contains("config") ? find_in(file_.at("config")) : nullptr;
        }
        if (sub != root_ && file_.contains(sub->get_name())) {
            if (const auto* j = find_in(file_.at(sub->get_name()))) {
                return j;
            }
        }
        return find_in(file_);
    }

    template<typename T>
    void apply(const CLI::App* sub, const std::string& name, T& var) {
        configured_ = false;
        if (const auto* j = lookup(sub, name)) {
            configured_ = true;
            try {
                var = j->get<T>();
            } catch (const json::exception& e) {
                lkca::fail_usage("config key '" + name + "': " + e.what());
            }
        }
    }

    json                                                                                file_;
    bool                                                                                manifest_ = false;
    bool                                                                                configured_ = false;
    const CLI::App*                                                                     root_     = nullptr;
    std::map<const CLI::App*, std::vector<std::pair<std::string, std::function<json()>>>> fields_;
};

struct Globals {
    std::uint64_t seed          = 0;
    bool          deterministic = false;
    unsigned      threads       = 1;
    std::string   config;
    bool          json_errors = false;
};

// ---------------------------------------------------------------------------------------------
// Small I/O helpers
// ---------------------------------------------------------------------------------------------

json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        lkca::fail_validation("cannot open '" + path + "'");
    }
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        lkca::fail_validation("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        lkca::fail_validation("cannot open '" + path + "' for writing");
    }
    os << text;
    if (!os) {
        lkca::fail_validation("write to '" + path + "' failed");
    }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm    tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::string& command, const json& config, const Globals& g, const json& inputs,
                    const json& outputs) {
    const std::string path = outputs.at(0).get<std::string>() + ".manifest.json";
    write_json(path, {{"format", "lkca-run-manifest"},
                      {"version", 1},
                      {"command", command},
                      {"config", config},
                      {"seeds", {{"seed", g.seed}}},
                      {"deterministic", g.deterministic},
                      {"threads", lkca::num_threads()},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"tool_version", kToolVersion},
                      {"timestamp", utc_timestamp()}});
}

std::pair<std::size_t, std::size_t> parse_extent(const std::string& s, const std::string& what) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) {
            throw std::invalid_argument(s);
        }
        std::size_t used = 0;
        const auto  h    = std::stoul(s.substr(0, x), &used);
        const auto  w    = std::stoul(s.substr(x + 1));
        return {h, w};
    } catch (const std::exception&) {
        lkca::fail_usage(what + ": expected HxW, got '" + s + "'");
    }
}

std::size_t dataset_bands(const std::string& name) {
    switch (lkca::parse_dataset(name)) {
    case lkca::Dataset::Chikusei: return 128;
    case lkca::Dataset::Houston2018: return 48;
    case lkca::Dataset::Pavia: return 102;
    case lkca::Dataset::Custom: break;
    }
    lkca::fail_usage("dataset 'custom' has no preset band count; pass --bands");
}

// ---------------------------------------------------------------------------------------------
// Network flags
// ---------------------------------------------------------------------------------------------

struct NetFlags {
    std::size_t channels = 128, blocks = 16, ca_reduction = 16, lkca_groups = 4;
    std::size_t kernel1 = 5, dilation1 = 5, kernel2 = 7, dilation2 = 7;
    std::string upsampler = "full";
    std::size_t groups    = 8;
    double      drop_path = 0.1;
    bool        no_proj_out = false;

    void bind(Options& o, CLI::App* sub, bool student = false) {
        const std::string inherit = student ? " (teacher's unless given)" : "";
        track(o, "channels", o.add(sub, "channels", channels, "Feature channels C" + inherit));
        o.add(sub, "blocks", blocks, student ? "Student LKB blocks n (0: half the teacher's blocks)" : "LKB blocks N");
        track(o, "ca-reduction", o.add(sub, "ca-reduction", ca_reduction, "Channel attention reduction ratio" + inherit));
        track(o, "lkca-groups", o.add(sub, "lkca-groups", lkca_groups, "Groups of the 1x1 fusion conv" + inherit));
        track(o, "kernel1", o.add(sub, "kernel1", kernel1, "First depthwise kernel" + inherit));
        track(o, "dilation1", o.add(sub, "dilation1", dilation1, "First depthwise dilation" + inherit));
        track(o, "kernel2", o.add(sub, "kernel2", kernel2, "Second depthwise kernel" + inherit));
        track(o, "dilation2", o.add(sub, "dilation2", dilation2, "Second depthwise dilation" + inherit));
        o.add(sub, "upsampler", upsampler, "Upsampler kind")->check(CLI::IsMember({"full", "grouped"}));
        o.add(sub, "groups", groups, "Groups of a grouped upsampler");
        o.add(sub, "drop-path", drop_path, "Drop path rate");
        track(o, "no-proj-out", o.flag(sub, "no-proj-out", no_proj_out, "Omit the 1x1 projection after LKCA" + inherit));
    }

    /// Copies trunk settings the user did not give (flag or config) from `t`.
    void inherit_trunk(const lkca::NetConfig& t) {
        const auto take = [&](const char* name, std::size_t& field, std::size_t value) {
            if (!given(name)) {
                field = value;
            }
        };
        take("channels", channels, t.channels);
        take("ca-reduction", ca_reduction, t.ca_reduction);
        take("lkca-groups", lkca_groups, t.lkca_groups);
        take("kernel1", kernel1, t.kernel1);
        take("dilation1", dilation1, t.dilation1);
        take("kernel2", kernel2, t.kernel2);
        take("dilation2", dilation2, t.dilation2);
        if (!given("no-proj-out")) {
            no_proj_out = !t.proj_out;
        }
    }

    [[nodiscard]] lkca::NetConfig config(std::size_t bands, std::size_t scale) const {
        lkca::NetConfig c;
        c.bands            = bands;
        c.scale            = scale;
        c.channels         = channels;
        c.blocks           = blocks;
        c.ca_reduction     = ca_reduction;
        c.lkca_groups      = lkca_groups;
        c.kernel1          = kernel1;
        c.dilation1        = dilation1;
        c.kernel2          = kernel2;
        c.dilation2        = dilation2;
        c.upsampler_kind   = upsampler == "grouped" ? lkca::UpsamplerKind::Grouped : lkca::UpsamplerKind::Full;
        c.upsampler_groups = upsampler == "grouped" ? groups : 1;
        c.drop_path_rate   = drop_path;
        c.proj_out         = !no_proj_out;
        c.validate();
        return c;
    }

private:
    void track(const Options& o, const std::string& name, const CLI::Option* opt) {
        sources_[name] = {opt, o.configured()};
    }
    [[nodiscard]] bool given(const std::string& name) const {
        const auto it = sources_.find(name);
        return it != sources_.end() && (it->second.second || it->second.first->count() > 0);
    }

    std::map<std::string, std::pair<const CLI::Option*, bool>> sources_;
};

// ---------------------------------------------------------------------------------------------
// cube
// ---------------------------------------------------------------------------------------------

json cube_summary(const lkca::HsiCube& c) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (float v : c.data) {
        lo = std::min<double>(lo, v);
        hi = std::max<double>(hi, v);
        sum += v;
    }
    return {{"bands", c.bands},
            {"height", c.height},
            {"width", c.width},
            {"min", lo},
            {"max", hi},
            {"mean", sum / static_cast<double>(c.data.size())},
            {"meta", c.meta}};
}

struct ConvertArgs {
    std::string input, output, dtype = "f32", interleave = "bsq";
    std::size_t bands = 0, height = 0, width = 0;
};

std::vector<float> read_raw(const ConvertArgs& a) {
    auto       r     = lkca::binio::Reader::from_file(a.input, a.input);
    const auto count = a.bands * a.height * a.width;
    const auto bytes = a.dtype == "f32" ? 4u : 2u;
    if (r.remaining() != count * bytes) {
        lkca::fail_validation("'" + a.input + "' holds " + std::to_string(r.remaining()) + " bytes, expected " +
                              std::to_string(count * bytes) + " for " + std::to_string(a.bands) + "x" +
                              std::to_string(a.height) + "x" + std::to_string(a.width) + " " + a.dtype);
    }
    std::vector<float> in(count);
    for (auto& v : in) {
        v = a.dtype == "f32" ? r.scalar<float>("sample") : static_cast<float>(r.scalar<std::uint16_t>("sample"));
    }
    if (a.interleave == "bsq") {
        return in;
    }
    std::vector<float> out(count);
    const std::size_t  b = a.bands, h = a.height, w = a.width;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t k = 0; k < b; ++k) {
                const std::size_t src = a.interleave == "bip" ? (y * w + x) * b + k : (y * b + k) * w + x;
                out[(k * h + y) * w + x] = in[src];
            }
        }
    }
    return out;
}

/// Smooth low-rank test scene: a few random spectra mixed by oriented sinusoids.
lkca::HsiCube synthetic_cube(std::size_t bands, std::size_t h, std::size_t w, std::uint64_t seed, double freq) {
    lkca::Rng           rng(seed);
    lkca::HsiCube       c(bands, h, w);
    constexpr int       kRank = 3;
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
                c.at(b, y, x) = static_cast<float>(v / kRank);
            }
        }
    }
    c.meta["synthetic"] = {{"seed", seed}, {"freq", freq}};
    return c;
}

// ---------------------------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------------------------

struct DataArgs {
    std::string cube, split;
    std::size_t max_train = 0, max_val = 0;

    void bind(Options& o, CLI::App* sub) {
        o.add(sub, "cube", cube, "Input cube (.hsc)")->required(!o.configured());
        o.add(sub, "split", split, "Split manifest from `prepare`")->required(!o.configured());
        o.add(sub, "max-train", max_train, "Use at most this many training patches (0: all)");
        o.add(sub, "max-val", max_val, "Use at most this many validation patches (0: all)");
    }
};

struct LoadedData {
    lkca::TrainingData data;
    lkca::Split        split;
    std::size_t        bands = 0;
};

LoadedData load_data(const DataArgs& a) {
    LoadedData out;
    out.split       = lkca::split_from_json(read_json(a.split));
    const auto cube = lkca::read_cube(a.cube);
    auto       s    = out.split;
    if (a.max_train != 0 && s.train.size() > a.max_train) {
        s.train.resize(a.max_train);
    }
    if (a.max_val != 0 && s.val.size() > a.max_val) {
        s.val.resize(a.max_val);
    }
    out.data  = lkca::load_split(cube, s);
    out.bands = cube.bands;
    return out;
}

// ---------------------------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------------------------

struct TrainArgs {
    DataArgs    data;
    NetFlags    net;
    std::string output, log, init;
    std::size_t epochs = 1, batch_size = 8, step_every = 10, validate_every = 1;
    double      lr = 2e-3, final_lr = 2e-4, step_gamma = 0.5, grad_clip = 0.0;
    double      lambda1 = 0.5, lambda2 = 0.1;
    std::string schedule = "cosine";
    bool        no_keep_best = false, no_shuffle = false;
    // distillation only
    std::string teacher;
    double      alpha = 0.01, lambda3 = 0.5, lambda4 = 0.5, lambda5 = 0.1, decay = 0.66;
    std::size_t decay_every = 10;
    std::string kd_target   = "f_up";

    void bind(Options& o, CLI::App* sub, bool distill) {
        data.bind(o, sub);
        if (distill) {
            o.add(sub, "teacher", teacher, "Teacher checkpoint (frozen)")->required(!o.configured());
            net.blocks = 0;
        }
        net.bind(o, sub, distill);
        o.add(sub, "output", output, "Output checkpoint")->required(!o.configured());
        o.add(sub, "log", log, "JSON-lines epoch log (default: <output>.log.jsonl)");
        o.add(sub, "init", init, "Start from this checkpoint instead of a seeded initialization");
        o.add(sub, "epochs", epochs, "Training epochs");
        o.add(sub, "batch-size", batch_size, "Patches per step");
        o.add(sub, "lr", lr, "Initial learning rate");
        o.add(sub, "final-lr", final_lr, "Final learning rate");
        o.add(sub, "schedule", schedule, "Learning-rate schedule")->check(CLI::IsMember({"cosine", "step"}));
        o.add(sub, "step-every", step_every, "Step schedule: epochs between decays");
        o.add(sub, "step-gamma", step_gamma, "Step schedule: decay factor");
        o.add(sub, "grad-clip", grad_clip, "Global gradient norm cap (0: off)");
        o.add(sub, "validate-every", validate_every, "Epochs between validation passes");
        o.add(sub, "lambda1", lambda1, "SAM weight in the reconstruction loss");
        o.add(sub, "lambda2", lambda2, "Gradient weight in the reconstruction loss");
        o.flag(sub, "no-keep-best", no_keep_best, "Keep the last parameters instead of the best validated ones");
        o.flag(sub, "no-shuffle", no_shuffle, "Visit patches in split order");
        if (distill) {
            o.add(sub, "alpha", alpha, "Distillation loss coefficient");
            o.add(sub, "lambda3", lambda3, "Cosine weight in the distillation loss");
            o.add(sub, "lambda4", lambda4, "SAM weight in the distillation loss");
            o.add(sub, "lambda5", lambda5, "Gradient weight in the distillation loss");
            o.add(sub, "decay", decay, "Distillation decay factor d");
            o.add(sub, "decay-every", decay_every, "Epochs between distillation decays f");
            o.add(sub, "kd-target", kd_target, "Aligned feature: upsampled features or full reconstruction")
                ->check(CLI::IsMember({"f_up", "i_sr"}));
        }
    }

    [[nodiscard]] lkca::TrainConfig train_config(std::uint64_t seed) const {
        lkca::TrainConfig c;
        c.epochs          = epochs;
        c.batch_size      = batch_size;
        c.seed            = seed;
        c.initial_lr      = lr;
        c.final_lr        = final_lr;
        c.schedule        = lkca::parse_schedule(schedule);
        c.step_every      = step_every;
        c.step_gamma      = step_gamma;
        c.grad_clip       = grad_clip;
        c.weights.lambda1 = lambda1;
        c.weights.lambda2 = lambda2;
        c.shuffle         = !no_shuffle;
        c.keep_best       = !no_keep_best;
        c.validate_every  = validate_every;
        c.validate();
        return c;
    }

    [[nodiscard]] lkca::DistillConfig distill_config() const {
        lkca::DistillConfig d;
        d.weights.lambda1 = lambda1;
        d.weights.lambda2 = lambda2;
        d.weights.lambda3 = lambda3;
        d.weights.lambda4 = lambda4;
        d.weights.lambda5 = lambda5;
        d.weights.alpha   = alpha;
        d.decay.factor    = decay;
        d.decay.every     = decay_every;
        d.target          = kd_target == "i_sr" ? lkca::KdTarget::Reconstruction : lkca::KdTarget::Upsampled;
        d.validate();
        return d;
    }
};

int run_train(const TrainArgs& a, const Globals& g, const json& resolved, bool distill) {
    const auto cfg  = a.train_config(g.seed);
    const auto dcfg = distill ? a.distill_config() : lkca::DistillConfig{};
    std::optional<lkca::Checkpoint> teacher;
    if (distill) {
        teacher = lkca::load_checkpoint(a.teacher);
    }
    const auto loaded = load_data(a.data);
    const auto scale  = loaded.split.spec.scale;

    std::optional<lkca::LkcaNet<float>> model;
    if (!a.init.empty()) {
        model.emplace(lkca::load_checkpoint(a.init).model);
        model->set_drop_path_rate(a.net.drop_path);
    } else {
        model.emplace(a.net.config(loaded.bands, scale));
        lkca::Rng rng(g.seed);
        model->init(rng);
    }
    lkca::require(model->config().bands == loaded.bands && model->config().scale == scale,
                  "model bands/scale do not match the cube and split");

    const auto res = distill ? lkca::distill(teacher->model, *model, loaded.data, cfg, dcfg)
                             : lkca::train(*model, loaded.data, cfg);
    const std::string log = a.log.empty() ? a.output + ".log.jsonl" : a.log;
    write_text(log, res.log_jsonl());
    json meta = {{"command", distill ? "distill" : "train"},
                 {"epochs_completed", res.log.size()},
                 {"steps", res.steps},
                 {"status", res.status == lkca::TrainStatus::Completed ? "completed" : "diverged"},
                 {"best_epoch", res.best_epoch},
                 {"best_val_mpsnr", std::isfinite(res.best_val_mpsnr) ? json(res.best_val_mpsnr) : json(nullptr)},
                 {"train_config", cfg.to_json()}};
    if (distill) {
        meta["distill_config"] = dcfg.to_json();
    }
    lkca::save_checkpoint(*model, a.output, meta);
    json inputs = {{"cube", a.data.cube}, {"split", a.data.split}};
    if (distill) {
        inputs["teacher"] = a.teacher;
    }
    if (!a.init.empty()) {
        inputs["init"] = a.init;
    }
    write_manifest(distill ? "distill" : "train", resolved, g, inputs, json::array({a.output, log}));
    std::cout << json{{"checkpoint", a.output}, {"log", log}, {"summary", meta}}.dump(2) << "\n";
    if (res.status == lkca::TrainStatus::Diverged) {
        lkca::fail_numeric("training diverged: " + res.message);
    }
    return 0;
}

struct InitArgs {
    NetFlags    net;
    std::size_t bands = 128, scale = 4;
    std::string output;
};

struct PrepareArgs {
    std::string cube, dataset = "custom", regions, center_crop, cube_out, output;
    std::size_t scale = 4, patch_size = 64, overlap = 32;
    double      val_fraction = 0.1;
};

int run_prepare(const PrepareArgs& a, const Globals& g, const json& resolved) {
    lkca::PatchSpec spec{a.patch_size, a.overlap, a.scale};
    spec.validate();
    const auto dataset = lkca::parse_dataset(a.dataset);
    lkca::require(dataset != lkca::Dataset::Custom || !a.regions.empty(), "--dataset custom needs --regions");
    lkca::require(a.center_crop.empty() || !a.cube_out.empty(),
                  "--center-crop needs --cube-out so the split refers to a stored cube");
    auto cube = lkca::read_cube(a.cube);
    if (!a.center_crop.empty()) {
        const auto [h, w] = parse_extent(a.center_crop, "--center-crop");
        auto meta         = cube.meta;
        cube              = lkca::center_crop(cube, h, w);
        meta["center_crop"] = {h, w};
        cube.meta         = meta;
    }
    auto protocol = dataset == lkca::Dataset::Custom ? lkca::custom_protocol(read_json(a.regions))
                                                     : lkca::make_protocol(dataset, cube.height, cube.width);
    protocol.validation_fraction = a.val_fraction;
    const auto split             = lkca::build_split(cube, protocol, spec, g.seed);
    json       outputs           = json::array({a.output});
    if (!a.cube_out.empty()) {
        lkca::write_cube(cube, a.cube_out);
        outputs.push_back(a.cube_out);
    }
    write_json(a.output, lkca::split_to_json(split));
    write_manifest("prepare", resolved, g, {{"cube", a.cube}}, outputs);
    std::cout << json{{"split", a.output},
                      {"cube", {{"bands", cube.bands}, {"height", cube.height}, {"width", cube.width}}},
                      {"test_regions", split.protocol.test_regions.size()},
                      {"train_patches", split.train.size()},
                      {"val_patches", split.val.size()}}
                     .dump(2)
              << "\n";
    return 0;
}

struct AnalyzeArgs {
    std::string              checkpoint, layer = "upsampler", output, curve;
    std::size_t              g = 0;
    std::vector<std::size_t> candidates = {1, 2, 4, 8, 16};
};

int run_analyze(const AnalyzeArgs& a, const Globals& gl, const json& resolved) {
    const auto ck = lkca::load_checkpoint(a.checkpoint);
    const auto up = ck.model.config().upsampler();
    std::vector<std::size_t> valid;
    for (auto c : a.candidates) {
        if (c >= 1 && up.in_channels % c == 0 && up.out_channels % c == 0) {
            valid.push_back(c);
        }
    }
    lkca::require(a.g != 0 || !valid.empty(), "no candidate group count divides both C and B*r^2");
    const auto g = a.g != 0 ? a.g : lkca::choose_g(up.in_channels, up.out_channels, valid);
    const auto rep = lkca::analyze(ck.model, a.layer, g);
    const auto j   = rep.to_json();
    if (!a.curve.empty()) {
        write_text(a.curve, rep.curve_csv());
    }
    if (!a.output.empty()) {
        write_json(a.output, j);
        json outputs = json::array({a.output});
        if (!a.curve.empty()) {
            outputs.push_back(a.curve);
        }
        write_manifest("analyze-rank", resolved, gl, {{"checkpoint", a.checkpoint}}, outputs);
    } else if (!a.curve.empty()) {
        write_manifest("analyze-rank", resolved, gl, {{"checkpoint", a.checkpoint}}, json::array({a.curve}));
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

struct ApproxArgs {
    std::string checkpoint, output, init = "svd_blocks";
    std::size_t g = 8;
};

int run_approximate(const ApproxArgs& a, const Globals& gl, const json& resolved) {
    const auto ck   = lkca::load_checkpoint(a.checkpoint);
    const auto mode = lkca::parse_grouped_init(a.init);
    lkca::Rng  rng(gl.seed);
    const auto out  = lkca::with_grouped_upsampler(ck.model, a.g, mode, rng);
    json       meta = ck.meta;
    meta["approximated"] = {{"g", a.g}, {"init", a.init}, {"source", a.checkpoint}};
    lkca::save_checkpoint(out, a.output, meta);
    write_manifest("approximate", resolved, gl, {{"checkpoint", a.checkpoint}}, json::array({a.output}));
    std::cout << json{{"checkpoint", a.output},
                      {"g", a.g},
                      {"upsampler_params_before", ck.model.config().upsampler().param_count()},
                      {"upsampler_params_after", out.config().upsampler().param_count()},
                      {"total_params_before", lkca::param_count(ck.model.config()).total},
                      {"total_params_after", lkca::param_count(out.config()).total}}
                     .dump(2)
              << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint, cube, split, dataset, output, csv;
    bool        bicubic = false;
    std::size_t scale = 0, tile = 0, tile_overlap = 8;
};

int run_eval(const EvalArgs& a, const Globals& gl, const json& resolved) {
    lkca::require(a.bicubic != !a.checkpoint.empty(), "eval needs exactly one of --checkpoint or --bicubic");
    lkca::require(a.split.empty() != a.dataset.empty(), "eval needs exactly one of --split or --dataset");
    std::optional<lkca::Checkpoint> ck;
    if (!a.bicubic) {
        ck = lkca::load_checkpoint(a.checkpoint);
    }
    const auto        cube = lkca::read_cube(a.cube);
    std::vector<lkca::Rect> regions;
    std::size_t       scale = a.scale;
    if (!a.split.empty()) {
        const auto s = lkca::split_from_json(read_json(a.split));
        lkca::require(s.cube_bands == cube.bands && s.cube_height == cube.height && s.cube_width == cube.width,
                      "split was built for a different cube");
        regions = s.protocol.test_regions;
        if (scale == 0) {
            scale = s.spec.scale;
        }
    } else {
        regions = lkca::make_protocol(lkca::parse_dataset(a.dataset), cube.height, cube.width).test_regions;
    }
    if (scale == 0) {
        lkca::require(ck.has_value(), "eval --bicubic with --dataset needs --scale");
        scale = ck->model.config().scale;
    }
    const auto rep = lkca::evaluate(ck ? &ck->model : nullptr, cube, regions, scale, a.tile, a.tile_overlap);
    json       j   = rep.to_json();
    j["method"]    = a.bicubic ? "bicubic" : "checkpoint";
    j["scale"]     = scale;
    json outputs   = json::array();
    if (!a.output.empty()) {
        write_json(a.output, j);
        outputs.push_back(a.output);
    }
    if (!a.csv.empty()) {
        std::string text = "region," + lkca::MetricResult::csv_header() + "\n";
        for (std::size_t i = 0; i < rep.regions.size(); ++i) {
            text += std::to_string(i) + "," + rep.regions[i].csv_row() + "\n";
        }
        text += "mean," + rep.mean.csv_row() + "\n";
        write_text(a.csv, text);
        outputs.push_back(a.csv);
    }
    if (!outputs.empty()) {
        json inputs = {{"cube", a.cube}};
        if (!a.split.empty()) {
            inputs["split"] = a.split;
        }
        if (ck) {
            inputs["checkpoint"] = a.checkpoint;
        }
        write_manifest("eval", resolved, gl, inputs, outputs);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

struct BenchArgs {
    NetFlags    net;
    std::string checkpoint, dataset = "chikusei";
    std::size_t bands = 0, scale = 4, g = 8, height = 64, width = 64, time = 0;
};

json breakdown_json(const lkca::ParamBreakdown& pb) {
    json layers = json::array();
    for (const auto& l : pb.layers) {
        layers.push_back({{"name", l.name}, {"count", l.count}});
    }
    return {{"layers", layers}, {"total", pb.total}, {"upsampler", pb.upsampler}, {"upsampler_share", pb.upsampler_share()}};
}

int run_bench(const BenchArgs& a, const Globals&) {
    lkca::NetConfig cfg;
    if (!a.checkpoint.empty()) {
        cfg = lkca::load_checkpoint(a.checkpoint).model.config();
    } else {
        cfg = a.net.config(a.bands != 0 ? a.bands : dataset_bands(a.dataset), a.scale);
    }
    lkca::NetConfig grouped = cfg;
    grouped.upsampler_kind  = lkca::UpsamplerKind::Grouped;
    grouped.upsampler_groups = a.g;
    grouped.validate();
    lkca::NetConfig full  = cfg;
    full.upsampler_kind   = lkca::UpsamplerKind::Full;
    full.upsampler_groups = 1;

    const auto fl = lkca::flops_estimate(cfg, a.height, a.width);
    json       flops_layers = json::array();
    for (const auto& l : fl.layers) {
        flops_layers.push_back({{"name", l.name}, {"count", l.count}});
    }
    json j = {{"config", lkca::config_to_json(cfg)},
              {"params", breakdown_json(lkca::param_count(cfg))},
              {"full_upsampler", breakdown_json(lkca::param_count(full))},
              {"grouped_upsampler", {{"g", a.g}, {"params", breakdown_json(lkca::param_count(grouped))}}},
              {"flops", {{"input", {a.height, a.width}}, {"layers", flops_layers}, {"total", fl.total}}}};
    if (a.time > 0) {
        lkca::LkcaNet<float> n(cfg);
        lkca::Rng            rng(0);
        n.init(rng);
        lkca::Tensor<float> x({1, cfg.bands, a.height, a.width});
        for (auto& v : x.values()) {
            v = static_cast<float>(lkca::uniform01(rng));
        }
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < a.time; ++i) {
            (void)n.forward(x);
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        j["timing"]     = {{"forward_passes", a.time}, {"ms_per_forward", ms / static_cast<double>(a.time)},
                           {"threads", lkca::num_threads()}};
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------------------------
// Entry
// ---------------------------------------------------------------------------------------------

/// Finds `--name value` or `--name=value` before parsing proper.
std::string prescan(int argc, char** argv, const std::string& name) {
    for (int i = 1; i < argc; ++i) {
        const std::string s = argv[i];
        if (s == name && i + 1 < argc) {
            return argv[i + 1];
        }
        if (s.rfind(name + "=", 0) == 0) {
            return s.substr(name.size() + 1);
        }
    }
    return "";
}

bool prescan_flag(int argc, char** argv, const std::string& name) {
    for (int i = 1; i < argc; ++i) {
        if (argv[i] == name) {
            return true;
        }
    }
    return false;
}

int report(const Globals& g, const std::string& kind, int code, const std::string& msg) {
    if (g.json_errors) {
        std::cerr << json{{"error", {{"kind", kind}, {"exit_code", code}, {"message", msg}}}}.dump() << "\n";
    } else {
        std::cerr << "lkca: " << kind << " error: " << msg << "\n";
    }
    return code;
}

int run(int argc, char** argv, Globals& g) {
    g.json_errors = prescan_flag(argc, argv, "--json");
    json cfg_file;
    if (const auto path = prescan(argc, argv, "--config"); !path.empty()) {
        cfg_file = read_json(path);
    }
    Options  opts(std::move(cfg_file));
    CLI::App app{"Hyperspectral super-resolution with large-kernel channel attention networks", "lkca"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kToolVersion);
    opts.set_root(&app);
    opts.add(&app, "seed", g.seed, "Seed for initialization, shuffling and splits");
    opts.flag(&app, "deterministic", g.deterministic, "Single-threaded execution");
    opts.add(&app, "threads", g.threads, "Worker threads (0: all cores)");
    app.add_option("--config", g.config, "JSON config; keys are flag names, optionally grouped by subcommand");
    app.add_flag("--json", g.json_errors, "Machine-readable error JSON on stderr");

    // cube
    auto*       cube = app.add_subcommand("cube", "Inspect, convert or synthesize .hsc cubes");
    cube->require_subcommand(1);
    std::string info_path;
    auto*       info = cube->add_subcommand("info", "Print extents, value range and metadata");
    info->add_option("path", info_path, "Cube file")->required();
    ConvertArgs conv;
    auto*       convert = cube->add_subcommand("convert", "Raw little-endian samples to a normalized .hsc cube");
    opts.add(convert, "input", conv.input, "Raw sample file")->required(!opts.configured());
    opts.add(convert, "output", conv.output, "Output cube")->required(!opts.configured());
    opts.add(convert, "bands", conv.bands, "Band count")->required(!opts.configured());
    opts.add(convert, "height", conv.height, "Rows")->required(!opts.configured());
    opts.add(convert, "width", conv.width, "Columns")->required(!opts.configured());
    opts.add(convert, "dtype", conv.dtype, "Sample type")->check(CLI::IsMember({"f32", "u16"}));
    opts.add(convert, "interleave", conv.interleave, "Sample order")->check(CLI::IsMember({"bsq", "bil", "bip"}));
    std::string synth_out;
    std::size_t synth_bands = 8, synth_h = 64, synth_w = 64;
    double      synth_freq = 0.9;
    auto*       synth      = cube->add_subcommand("synth", "Write a synthetic test cube");
    opts.add(synth, "output", synth_out, "Output cube")->required(!opts.configured());
    opts.add(synth, "bands", synth_bands, "Band count");
    opts.add(synth, "height", synth_h, "Rows");
    opts.add(synth, "width", synth_w, "Columns");
    opts.add(synth, "freq", synth_freq, "Spatial frequency in rad/px");

    // init
    InitArgs ia;
    auto*    init = app.add_subcommand("init", "Write a seeded, untrained checkpoint");
    opts.add(init, "bands", ia.bands, "Spectral bands B");
    opts.add(init, "scale", ia.scale, "Upscaling factor r");
    ia.net.bind(opts, init);
    opts.add(init, "output", ia.output, "Output checkpoint")->required(!opts.configured());

    // prepare
    PrepareArgs pa;
    auto*       prep = app.add_subcommand("prepare", "Build the train/val/test split of a cube");
    opts.add(prep, "cube", pa.cube, "Input cube")->required(!opts.configured());
    opts.add(prep, "dataset", pa.dataset, "Split protocol")
        ->check(CLI::IsMember({"chikusei", "houston2018", "houston", "pavia", "custom"}));
    opts.add(prep, "regions", pa.regions, "JSON {test_regions, exclusions} for --dataset custom");
    opts.add(prep, "scale", pa.scale, "Upscaling factor r")->check(CLI::IsMember({4, 8}));
    opts.add(prep, "patch-size", pa.patch_size, "Training patch size");
    opts.add(prep, "overlap", pa.overlap, "Training patch overlap");
    opts.add(prep, "val-fraction", pa.val_fraction, "Fraction of training patches held out for validation");
    opts.add(prep, "center-crop", pa.center_crop, "Crop the cube to its central HxW window first");
    opts.add(prep, "cube-out", pa.cube_out, "Where to store the cropped cube");
    opts.add(prep, "output", pa.output, "Split manifest")->required(!opts.configured());

    // train / distill
    TrainArgs ta;
    auto*     train = app.add_subcommand("train", "Train a network on prepared patches");
    ta.bind(opts, train, false);
    TrainArgs da;
    auto*     distill = app.add_subcommand("distill", "Train a shallower student against a frozen teacher");
    da.bind(opts, distill, true);

    // analyze-rank
    AnalyzeArgs aa;
    auto*       analyze = app.add_subcommand("analyze-rank", "Singular value analysis of the upsampling layer");
    opts.add(analyze, "checkpoint", aa.checkpoint, "Checkpoint")->required(!opts.configured());
    opts.add(analyze, "layer", aa.layer, "Layer name");
    opts.add(analyze, "g", aa.g, "Group count to report (0: choose from --candidates)");
    opts.add(analyze, "candidates", aa.candidates, "Candidate group counts; those not dividing C and B*r^2 are skipped")->delimiter(',');
    opts.add(analyze, "output", aa.output, "Report JSON (also printed)");
    opts.add(analyze, "curve", aa.curve, "Cumulative energy CSV");

    // approximate
    ApproxArgs pa2;
    auto*      approx = app.add_subcommand("approximate", "Replace the upsampler by a grouped convolution");
    opts.add(approx, "checkpoint", pa2.checkpoint, "Source checkpoint")->required(!opts.configured());
    opts.add(approx, "output", pa2.output, "Output checkpoint")->required(!opts.configured());
    opts.add(approx, "g", pa2.g, "Group count");
    opts.add(approx, "init", pa2.init, "Grouped weight initialization")
        ->check(CLI::IsMember({"svd_blocks", "random"}));

    // eval
    EvalArgs ea;
    auto*    eval = app.add_subcommand("eval", "Score a checkpoint or the bicubic baseline on the test regions");
    opts.add(eval, "checkpoint", ea.checkpoint, "Checkpoint to evaluate");
    opts.flag(eval, "bicubic", ea.bicubic, "Evaluate plain bicubic upsampling");
    opts.add(eval, "cube", ea.cube, "Cube holding the test regions")->required(!opts.configured());
    opts.add(eval, "split", ea.split, "Split manifest naming the test regions");
    opts.add(eval, "dataset", ea.dataset, "Built-in protocol naming the test regions");
    opts.add(eval, "scale", ea.scale, "Upscaling factor (0: from split or checkpoint)");
    opts.add(eval, "tile", ea.tile, "LR tile size for memory-bounded inference (0: whole region)");
    opts.add(eval, "tile-overlap", ea.tile_overlap, "LR tile overlap");
    opts.add(eval, "output", ea.output, "Metrics JSON");
    opts.add(eval, "csv", ea.csv, "Per-region metrics CSV");

    // bench
    BenchArgs ba;
    auto*     bench = app.add_subcommand("bench", "Parameter and FLOP breakdown, optionally with timing");
    opts.add(bench, "checkpoint", ba.checkpoint, "Read the configuration from a checkpoint");
    opts.add(bench, "dataset", ba.dataset, "Band preset")->check(CLI::IsMember({"chikusei", "houston2018", "houston", "pavia"}));
    opts.add(bench, "bands", ba.bands, "Spectral bands (0: dataset preset)");
    opts.add(bench, "scale", ba.scale, "Upscaling factor r");
    ba.net.bind(opts, bench);
    opts.add(bench, "g", ba.g, "Groups of the compared grouped upsampler");
    opts.add(bench, "height", ba.height, "LR input rows for FLOP counting");
    opts.add(bench, "width", ba.width, "LR input columns for FLOP counting");
    opts.add(bench, "time", ba.time, "Timed forward passes (0: skip)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        return report(g, "usage", 2, e.what());
    }

    lkca::set_num_threads(g.deterministic ? 1 : g.threads);

    if (info->parsed()) {
        std::cout << cube_summary(lkca::read_cube(info_path)).dump(2) << "\n";
        return 0;
    }
    if (convert->parsed()) {
        auto c = lkca::normalize_raw(conv.bands, conv.height, conv.width, read_raw(conv));
        c.meta["source"] = conv.input;
        lkca::write_cube(c, conv.output);
        write_manifest("cube convert", opts.resolved(convert), g, {{"input", conv.input}}, json::array({conv.output}));
        std::cout << cube_summary(c).dump(2) << "\n";
        return 0;
    }
    if (synth->parsed()) {
        const auto c = synthetic_cube(synth_bands, synth_h, synth_w, g.seed, synth_freq);
        lkca::write_cube(c, synth_out);
        write_manifest("cube synth", opts.resolved(synth), g, json::object(), json::array({synth_out}));
        std::cout << cube_summary(c).dump(2) << "\n";
        return 0;
    }
    if (init->parsed()) {
        lkca::LkcaNet<float> n(ia.net.config(ia.bands, ia.scale));
        lkca::Rng            rng(g.seed);
        n.init(rng);
        lkca::save_checkpoint(n, ia.output, {{"command", "init"}, {"seed", g.seed}});
        write_manifest("init", opts.resolved(init), g, json::object(), json::array({ia.output}));
        std::cout << json{{"checkpoint", ia.output}, {"params", lkca::param_count(n.config()).total}}.dump(2) << "\n";
        return 0;
    }
    if (prep->parsed()) {
        return run_prepare(pa, g, opts.resolved(prep));
    }
    if (train->parsed()) {
        return run_train(ta, g, opts.resolved(train), false);
    }
    if (distill->parsed()) {
        if (da.init.empty()) {
            const auto tc = lkca::load_checkpoint(da.teacher).model.config();
            da.net.inherit_trunk(tc);
            if (da.net.blocks == 0) {
                da.net.blocks = std::max<std::size_t>(1, tc.blocks / 2);
            }
        }
        return run_train(da, g, opts.resolved(distill), true);
    }
    if (analyze->parsed()) {
        return run_analyze(aa, g, opts.resolved(analyze));
    }
    if (approx->parsed()) {
        return run_approximate(pa2, g, opts.resolved(approx));
    }
    if (eval->parsed()) {
        return run_eval(ea, g, opts.resolved(eval));
    }
    if (bench->parsed()) {
        return run_bench(ba, g);
    }
    return report(g, "usage", 2, "no command given");
}

} // namespace

int main(int argc, char** argv) {
    Globals g;
    try {
        return run(argc, argv, g);
    } catch (const lkca::Error& e) {
        return report(g, e.kind_name(), e.exit_code(), e.what());
    } catch (const std::exception& e) {
        return report(g, "internal", 1, e.what());
    }
}
