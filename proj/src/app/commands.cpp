#include "app/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "app/manifest.hpp"
#include "ssa/checkpoint.hpp"
#include "ssa/data.hpp"
#include "ssa/evaluation.hpp"
#include "ssa/explain.hpp"
#include "ssa/model.hpp"
#include "ssa/training.hpp"

namespace ssa::app {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// shared option groups

struct DataOptions {
    std::string path;
    std::string task = "precip";
    std::size_t crop = 0;  // 0 = no crop
    double train_frac = 0.70;
    double val_frac = 0.15;
    std::string filter = "none";
    std::string filter_mode = "all";
    double rain_cutoff = 0.0;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 6;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--data", d.path, "RSEQ archive")->required()->check(CLI::ExistingFile);
    cmd->add_option("--task", d.task, "precip (12 in) or cloud (4 in, 6 out)")
        ->check(CLI::IsMember({"precip", "cloud"}))
        ->capture_default_str();
    cmd->add_option("--crop", d.crop, "center-crop side in pixels (0 keeps the full frame)");
    cmd->add_option("--train-frac", d.train_frac, "chronological training fraction")->capture_default_str();
    cmd->add_option("--val-frac", d.val_frac, "chronological validation fraction")->capture_default_str();
    cmd->add_option("--filter", d.filter, "keep windows whose targets have >= 20% / 50% rainy pixels")
        ->check(CLI::IsMember({"none", "nl20", "nl50"}))
        ->capture_default_str();
    cmd->add_option("--filter-mode", d.filter_mode, "all: every target frame must pass; any: one suffices")
        ->check(CLI::IsMember({"all", "any"}))
        ->capture_default_str();
    cmd->add_option("--rain-cutoff", d.rain_cutoff, "normalized value above which a pixel is rainy")
        ->capture_default_str();
    cmd->add_option("--train-stride", d.train_stride, "window stride for training and validation")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--eval-stride", d.eval_stride, "window stride for the test split")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

nlohmann::json to_json(const DataOptions& d) {
    return {{"data", d.path},          {"task", d.task},
            {"crop", d.crop},          {"train_frac", d.train_frac},
            {"val_frac", d.val_frac},  {"filter", d.filter},
            {"filter_mode", d.filter_mode}, {"rain_cutoff", d.rain_cutoff},
            {"train_stride", d.train_stride}, {"eval_stride", d.eval_stride}};
}

struct ModelOptions {
    std::size_t outputs = 12;
    std::size_t kernels = 3;
    std::string attention = "shuffle";
    bool classic = false;
    bool tiny = false;
    std::string widths;
    std::string conv_groups;
    std::string sa_groups;
    std::uint64_t seed = 0;
};

void add_model_options(CLI::App* cmd, ModelOptions& m, bool with_outputs = true) {
    if (with_outputs) {
        cmd->add_option("--outputs", m.outputs, "predicted frames")
            ->check(CLI::IsMember(std::vector<std::size_t>{1, 6, 12}))
            ->capture_default_str();
    }
    cmd->add_option("--kernels", m.kernels, "kernels per layer of the shuffled blocks")
        ->check(CLI::IsMember(std::vector<std::size_t>{2, 3}))
        ->capture_default_str();
    cmd->add_option("--attention", m.attention)->check(CLI::IsMember({"shuffle", "cbam"}))->capture_default_str();
    cmd->add_flag("--classic", m.classic, "plain separable convolutions in every encoder level");
    cmd->add_flag("--tiny", m.tiny, "widths 8..128 with matching group sizes");
    cmd->add_option("--widths", m.widths, "five comma-separated encoder widths");
    cmd->add_option("--conv-groups", m.conv_groups, "four comma-separated shuffled-conv group sizes");
    cmd->add_option("--sa-groups", m.sa_groups, "five comma-separated Shuffle Attention group sizes");
}

std::vector<std::size_t> parse_list(const std::string& flag, const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ConfigError(flag + ": '" + s + "' is not a list of integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

ModelConfig model_config(const ModelOptions& m, const std::string& task) {
    const bool cloud = task == "cloud";
    ModelConfig c = m.tiny ? ModelConfig::tiny(cloud ? 4 : 12, cloud ? 6 : m.outputs)
                           : (cloud ? ModelConfig::cloud() : ModelConfig::standard(m.outputs));
    c.kernels_per_layer = m.kernels;
    c.attention = parse_attention(m.attention);
    c.shuffled = !m.classic;
    if (!m.widths.empty()) c.widths = parse_list("--widths", m.widths);
    if (!m.conv_groups.empty()) c.conv_groups = parse_list("--conv-groups", m.conv_groups);
    if (!m.sa_groups.empty()) c.sa_groups = parse_list("--sa-groups", m.sa_groups);
    c.seed = m.seed;
    c.validate();
    return c;
}

std::optional<double> filter_fraction(const std::string& f) {
    if (f == "nl20") return 0.2;
    if (f == "nl50") return 0.5;
    return std::nullopt;
}

WindowSpec window_spec(const std::string& task, std::size_t outputs) {
    return task == "cloud" ? WindowSpec::cloud() : WindowSpec::precipitation(outputs);
}

struct Splits {
    std::vector<SampleWindow> train, val, test;
    double scale = 1.0;
    std::size_t frames = 0;
};

/// Chronological split, crop, normalization by the training maximum (or
/// `scale` when given), windowing and optional rain filtering.
Splits prepare(const DataOptions& d, const WindowSpec& spec, std::optional<double> scale) {
    const FrameSequence seq = load_archive(d.path);
    const auto split = chronological_split(seq, d.train_frac, d.val_frac);
    const std::optional<std::size_t> crop = d.crop ? std::optional<std::size_t>(d.crop) : std::nullopt;

    Splits out;
    out.frames = seq.size();
    if (!scale) {
        if (split.train.size() == 0) throw DataError("training split is empty; cannot derive a normalization constant");
        scale = preprocess(split.train, crop).scale;
    }
    out.scale = *scale;
    auto windows = [&](const FrameSequence& part, std::size_t stride) {
        if (part.size() == 0) return std::vector<SampleWindow>{};
        auto w = make_windows(preprocess(part, crop, out.scale).sequence, spec, stride, out.scale);
        if (auto f = filter_fraction(d.filter)) {
            w = filter_windows(w, *f, d.rain_cutoff, d.filter_mode == "any" ? FilterMode::AnyTarget
                                                                             : FilterMode::AllTargets);
        }
        return w;
    };
    out.train = windows(split.train, d.train_stride);
    out.val = windows(split.val, d.train_stride);
    out.test = windows(split.test, d.eval_stride);
    return out;
}

fs::path manifest_for(const fs::path& file) {
    return file.parent_path() / (file.stem().string() + ".manifest.json");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"in_channels", c.in_channels},
            {"out_channels", c.out_channels},
            {"kernels_per_layer", c.kernels_per_layer},
            {"base_kernels_per_layer", c.base_kernels_per_layer},
            {"widths", c.widths},
            {"conv_groups", c.conv_groups},
            {"sa_groups", c.sa_groups},
            {"attention", attention_name(c.attention)},
            {"shuffled", c.shuffled},
            {"cbam_reduction", c.cbam_reduction},
            {"seed", c.seed}};
}

Predictor model_predictor(Model& model) {
    return [&model](const Tensor& x) { return model.forward(x, Pass<float>{Mode::Eval, false, {}}); };
}

Predictor persistence_predictor(std::size_t outputs) {
    return [outputs](const Tensor& x) { return persistence_predict(x, outputs); };
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string task = "precip";
    std::size_t frames = 120;
    std::size_t size = 0;  // 0: 288 precip, 256 cloud
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthOptions& o, RunManifest& manifest, std::ostream& log) {
    const std::size_t size = o.size ? o.size : (o.task == "cloud" ? 256 : 288);
    if (o.frames == 0) throw ConfigError("--frames must be >= 1");
    const FrameSequence seq = o.task == "cloud" ? synth_cloud(o.frames, size, size, o.seed)
                                                : synth_generate(o.frames, size, size, o.seed);
    const fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_archive(seq, out);

    manifest.config() = {{"task", o.task}, {"frames", o.frames}, {"size", size}, {"out", o.out}};
    manifest.set_seed(o.seed);
    manifest.add_output(out);
    manifest.results() = {{"frames", seq.size()}, {"interval_minutes", seq.interval_minutes},
                          {"max_value", max_value(seq)}};
    manifest.write(manifest_for(out));
    log << "wrote " << seq.size() << " frames of " << size << "x" << size << " to " << out.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    DataOptions data;
    ModelOptions model;
    std::size_t epochs = 200;
    std::size_t batch = 6;
    double lr = 1e-3;
    std::string out;
};

int cmd_train(const TrainOptions& o, RunManifest& manifest, std::ostream& log) {
    const ModelConfig cfg = model_config(o.model, o.data.task);
    const Splits splits = prepare(o.data, window_spec(o.data.task, cfg.out_channels), std::nullopt);
    if (splits.train.empty()) throw DataError("no training windows after windowing and filtering");
    if (splits.val.empty()) throw DataError("no validation windows after windowing and filtering");

    Model model(cfg);
    const fs::path dir = o.out;
    TrainConfig tc;
    tc.batch_size = o.batch;
    tc.max_epochs = o.epochs;
    tc.lr = o.lr;
    tc.seed = cfg.seed;
    tc.scale = splits.scale;
    tc.checkpoint_dir = dir;
    log << "training on " << splits.train.size() << " windows, validating on " << splits.val.size() << " ("
        << model.param_count() << " parameters)\n";
    const TrainResult result = train(model, splits.train, splits.val, tc, [&](const EpochRecord& r) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "epoch %3zu  train %.6g  val %.6g  lr %.3g\n", r.epoch, r.train_mse, r.val_mse,
                      r.lr);
        log << buf;
    });
    write_loss_csv(result.history, dir / "loss.csv");

    manifest.config() = {{"data", to_json(o.data)}, {"model", to_json(cfg)}, {"epochs", o.epochs},
                         {"batch", o.batch},        {"lr", o.lr},            {"out", o.out}};
    manifest.set_seed(cfg.seed);
    manifest.add_input(o.data.path);
    for (const auto& r : result.history) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03zu.ssac", r.epoch);
        manifest.add_output(dir / name);
    }
    manifest.add_output(dir / "best.ssac");
    manifest.add_output(dir / "loss.csv");
    manifest.results() = {{"param_count", model.param_count()},
                          {"best_epoch", result.best_epoch},
                          {"best_val_mse", result.best_val_mse},
                          {"epochs_run", result.history.size()},
                          {"scale", splits.scale},
                          {"train_windows", splits.train.size()},
                          {"val_windows", splits.val.size()}};
    manifest.write(dir / "manifest.json");
    log << "best epoch " << result.best_epoch << " (val " << result.best_val_mse << "), checkpoints in "
        << dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    DataOptions data;
    std::string checkpoint;
    bool baseline_only = false;
    std::size_t outputs = 12;
    double threshold = 0.5;
    std::string split = "test";
    std::string model_id;
    bool strict = false;
    std::string out;
};

int cmd_eval(const EvalOptions& o, RunManifest& manifest, std::ostream& log) {
    if (o.checkpoint.empty() && !o.baseline_only) {
        throw ConfigError("eval needs --checkpoint or --baseline-only");
    }
    std::optional<Checkpoint> ck;
    std::size_t outputs = o.data.task == "cloud" ? 6 : o.outputs;
    if (!o.baseline_only) {
        ck = load_checkpoint(o.checkpoint);
        outputs = ck->config.out_channels;
    }
    const Splits splits = prepare(o.data, window_spec(o.data.task, outputs),
                                  ck ? std::optional<double>(ck->meta.scale) : std::nullopt);
    const std::vector<SampleWindow>& windows =
        o.split == "train" ? splits.train : (o.split == "val" ? splits.val : splits.test);
    if (windows.empty()) throw DataError("no " + o.split + " windows to evaluate");

    EvalConfig ec;
    ec.threshold = o.threshold;
    ec.scale = splits.scale;
    std::vector<MetricsRecord> records;
    if (ck) {
        const std::string id = !o.model_id.empty() ? o.model_id
                                                   : (ck->config.attention == Attention::Cbam ? "baseline" : "ssa-unet");
        records = evaluate(id, model_predictor(*ck->model), windows, ec);
    }
    const auto pers = evaluate("persistence", persistence_predictor(outputs), windows, ec);
    records.insert(records.end(), pers.begin(), pers.end());

    const fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_report_csv(records, out);

    manifest.config() = {{"data", to_json(o.data)}, {"checkpoint", o.checkpoint}, {"baseline_only", o.baseline_only},
                         {"outputs", outputs},      {"threshold", o.threshold},   {"split", o.split},
                         {"strict", o.strict},      {"out", o.out}};
    if (ck) manifest.set_seed(ck->config.seed);
    manifest.add_input(o.data.path);
    if (ck) manifest.add_input(o.checkpoint);
    manifest.add_output(out);
    manifest.results() = {{"windows", windows.size()}, {"scale", splits.scale}, {"rows", records.size()}};
    manifest.write(manifest_for(out));

    log << report_csv(records);
    const bool degenerate =
        std::any_of(records.begin(), records.end(), [](const MetricsRecord& r) { return r.metrics.degenerate; });
    if (degenerate && o.strict) {
        log << "degenerate metrics present (zero denominators) and --strict is set\n";
        return kExitData;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// params

struct ParamsOptions {
    ModelOptions model;
    std::string task = "precip";
    bool compare = false;
};

int cmd_params(const ParamsOptions& o, std::ostream& out) {
    char buf[160];
    if (o.compare) {
        const std::size_t outputs = o.model.outputs;
        struct Row {
            const char* name;
            ModelConfig cfg;
        };
        const Row rows[] = {{"baseline (CBAM, classic)", ModelConfig::baseline(outputs)},
                            {"ssa-unet (km=3)", ModelConfig::standard(outputs)},
                            {"ssa-unet reduced (km=2)", ModelConfig::reduced(outputs)}};
        std::size_t base = 0;
        std::snprintf(buf, sizeof buf, "%-28s %12s %12s\n", "model", "params", "reduction");
        out << buf;
        for (const auto& r : rows) {
            Model m(r.cfg);
            const std::size_t n = m.param_count();
            if (base == 0) {
                base = n;
                std::snprintf(buf, sizeof buf, "%-28s %12zu %12s\n", r.name, n, "-");
            } else {
                const double red =
                    100.0 * (static_cast<double>(base) - static_cast<double>(n)) / static_cast<double>(base);
                std::snprintf(buf, sizeof buf, "%-28s %12zu %11.2f%%\n", r.name, n, red);
            }
            out << buf;
        }
        return kExitOk;
    }
    const ModelConfig cfg = model_config(o.model, o.task);
    Model model(cfg);
    std::snprintf(buf, sizeof buf, "%-32s %12s\n", "module", "params");
    out << buf;
    for (const auto& row : audit_parameters(model)) {
        std::snprintf(buf, sizeof buf, "%-32s %12zu\n", row.module.c_str(), row.params);
        out << buf;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainOptions {
    DataOptions data;
    std::string checkpoint;
    std::vector<std::string> layers;
    bool sweep = false;
    std::optional<std::size_t> frame_index;
    std::size_t window_index = 0;
    std::string split = "test";
    bool composite = false;
    std::string out;
};

int cmd_explain(const ExplainOptions& o, RunManifest& manifest, std::ostream& log) {
    if (o.layers.empty() && !o.sweep) throw ConfigError("explain needs --layer or --sweep");
    Checkpoint ck = load_checkpoint(o.checkpoint);
    const Splits splits = prepare(o.data, window_spec(o.data.task, ck.config.out_channels), ck.meta.scale);
    const std::vector<SampleWindow>& windows =
        o.split == "train" ? splits.train : (o.split == "val" ? splits.val : splits.test);
    if (o.window_index >= windows.size()) {
        throw DataError("--window-index " + std::to_string(o.window_index) + " out of range; the " + o.split +
                        " split has " + std::to_string(windows.size()) + " windows");
    }
    const SampleWindow& win = windows[o.window_index];

    std::vector<SweepLayer> wanted;
    if (o.sweep) wanted = default_sweep_layers();
    const auto defaults = default_sweep_layers();
    for (const auto& name : o.layers) {
        auto it = std::find_if(defaults.begin(), defaults.end(),
                               [&](const SweepLayer& l) { return l.module == name || l.label == name; });
        wanted.push_back(it != defaults.end() ? *it : SweepLayer{name, name});
    }
    std::vector<std::string> modules;
    for (const auto& l : wanted) modules.push_back(l.module);

    CamTarget target;
    target.frame = o.frame_index;
    const auto maps = grad_cam(*ck.model, win.inputs, modules, target);

    const fs::path dir = o.out;
    fs::create_directories(dir);
    std::optional<Tensor> pred;
    if (o.composite) pred = ck.model->forward(win.inputs, Pass<float>{Mode::Eval, false, {}});
    const std::size_t frame = o.frame_index.value_or(ck.config.out_channels - 1);
    nlohmann::json flagged = nlohmann::json::array();
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const fs::path file = dir / (wanted[i].label + ".pgm");
        write_pgm(maps[i].values, file);
        manifest.add_output(file);
        if (maps[i].all_zero) flagged.push_back(wanted[i].label);
        if (o.composite) {
            const Shape& s = win.inputs.shape();
            auto frame_of = [&](const Tensor& t, std::size_t c) {
                TensorD f(Shape{1, 1, s.h, s.w});
                for (std::size_t k = 0; k < s.plane(); ++k) f.ptr()[k] = t.plane(0, c)[k];
                return f;
            };
            const fs::path cfile = dir / (wanted[i].label + ".composite.pgm");
            write_composite({frame_of(win.inputs, s.c - 1), frame_of(*pred, frame), frame_of(win.targets, frame),
                             maps[i].values},
                            cfile);
            manifest.add_output(cfile);
        }
    }

    manifest.config() = {{"data", to_json(o.data)}, {"checkpoint", o.checkpoint}, {"layers", modules},
                         {"sweep", o.sweep},        {"frame_index", frame},       {"window_index", o.window_index},
                         {"split", o.split},        {"composite", o.composite},   {"out", o.out}};
    manifest.set_seed(ck.config.seed);
    manifest.add_input(o.data.path);
    manifest.add_input(o.checkpoint);
    manifest.results() = {{"heatmaps", maps.size()}, {"all_zero", flagged}};
    manifest.write(dir / "manifest.json");
    log << "wrote " << maps.size() << " heatmaps to " << dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep-sa

struct SweepOptions {
    DataOptions data;
    ModelOptions model;
    std::vector<std::string> configs;
    std::size_t epochs = 5;
    std::string out;
};

int cmd_sweep_sa(const SweepOptions& o, RunManifest& manifest, std::ostream& log) {
    ModelOptions base = o.model;
    if (base.widths.empty()) base.tiny = true;
    const std::size_t outputs = o.data.task == "cloud" ? 6 : base.outputs;
    const Splits splits = prepare(o.data, window_spec(o.data.task, outputs), std::nullopt);
    if (splits.train.empty() || splits.val.empty()) throw DataError("sweep needs training and validation windows");

    std::string csv = "config,val_mse,reason\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& g : o.configs) {
        ModelOptions mo = base;
        mo.sa_groups = g;
        std::string reason;
        double val = 0.0;
        try {
            const ModelConfig cfg = model_config(mo, o.data.task);
            Model model(cfg);
            TrainConfig tc;
            tc.max_epochs = o.epochs;
            tc.seed = cfg.seed;
            tc.scale = splits.scale;
            val = train(model, splits.train, splits.val, tc).best_val_mse;
        } catch (const ConfigError& e) {
            reason = e.what();
        }
        std::replace(reason.begin(), reason.end(), '"', '\'');
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", val);
        csv += "\"" + g + "\"," + (reason.empty() ? std::string(buf) : std::string()) + ",\"" + reason + "\"\n";
        rows.push_back({{"config", g}, {"val_mse", reason.empty() ? nlohmann::json(val) : nlohmann::json()},
                        {"reason", reason}});
        log << g << ": " << (reason.empty() ? std::string(buf) : "skipped (" + reason + ")") << '\n';
    }

    const fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream(out, std::ios::binary) << csv;

    manifest.config() = {{"data", to_json(o.data)}, {"configs", o.configs}, {"epochs", o.epochs}, {"out", o.out}};
    manifest.set_seed(o.model.seed);
    manifest.add_input(o.data.path);
    manifest.add_output(out);
    manifest.results() = rows;
    manifest.write(manifest_for(out));
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Shuffle-attention UNet nowcasting toolkit", "ssa-unet"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthOptions so;
    auto* synth = app.add_subcommand("synth", "generate a synthetic RSEQ archive");
    synth->add_option("--task", so.task)->check(CLI::IsMember({"precip", "cloud"}))->capture_default_str();
    synth->add_option("--frames", so.frames)->capture_default_str();
    synth->add_option("--size", so.size, "square frame side (default 288 precip, 256 cloud)");
    synth->add_option("--seed", so.seed)->capture_default_str();
    synth->add_option("--out", so.out, "output archive")->required();

    TrainOptions to;
    auto* trn = app.add_subcommand("train", "train a model and write checkpoints");
    add_data_options(trn, to.data);
    add_model_options(trn, to.model);
    trn->add_option("--seed", to.model.seed)->capture_default_str();
    trn->add_option("--epochs", to.epochs, "maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
    trn->add_option("--batch", to.batch)->check(CLI::PositiveNumber)->capture_default_str();
    trn->add_option("--lr", to.lr)->check(CLI::PositiveNumber)->capture_default_str();
    trn->add_option("--out", to.out, "checkpoint directory")->required();

    EvalOptions eo;
    auto* ev = app.add_subcommand("eval", "metrics for a checkpoint and the persistence baseline");
    add_data_options(ev, eo.data);
    ev->add_option("--checkpoint", eo.checkpoint)->check(CLI::ExistingFile);
    ev->add_flag("--baseline-only", eo.baseline_only, "persistence only");
    ev->add_option("--outputs", eo.outputs, "frames for --baseline-only")
        ->check(CLI::IsMember(std::vector<std::size_t>{1, 6, 12}))
        ->capture_default_str();
    ev->add_option("--threshold", eo.threshold, "binarization threshold on denormalized values")
        ->capture_default_str();
    ev->add_option("--split", eo.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
    ev->add_option("--model-id", eo.model_id, "name used in the model column");
    ev->add_flag("--strict", eo.strict, "exit 3 if any metric had a zero denominator");
    ev->add_option("--out", eo.out, "metrics CSV")->required();

    ParamsOptions po;
    auto* prm = app.add_subcommand("params", "parameter audit");
    add_model_options(prm, po.model);
    prm->add_option("--task", po.task)->check(CLI::IsMember({"precip", "cloud"}))->capture_default_str();
    prm->add_flag("--compare", po.compare, "baseline vs. both SSA-UNet sizes");

    ExplainOptions xo;
    auto* xp = app.add_subcommand("explain", "Grad-CAM heatmaps");
    add_data_options(xp, xo.data);
    xp->add_option("--checkpoint", xo.checkpoint)->required()->check(CLI::ExistingFile);
    auto* layer_opt = xp->add_option("--layer", xo.layers, "module name or sweep label (repeatable)");
    xp->add_flag("--sweep", xo.sweep, "all 24 default layers")->excludes(layer_opt);
    xp->add_option("--frame-index", xo.frame_index, "output frame to explain (default: last)");
    xp->add_option("--window-index", xo.window_index)->capture_default_str();
    xp->add_option("--split", xo.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
    xp->add_flag("--composite", xo.composite, "also write input | prediction | target | heatmap panels");
    xp->add_option("--out", xo.out, "output directory")->required();

    SweepOptions wo;
    auto* sw = app.add_subcommand("sweep-sa", "validation MSE per Shuffle Attention group configuration");
    add_data_options(sw, wo.data);
    add_model_options(sw, wo.model);
    sw->add_option("--seed", wo.model.seed)->capture_default_str();
    sw->add_option("--config", wo.configs, "five comma-separated group sizes (repeatable)")->required();
    sw->add_option("--epochs", wo.epochs)->check(CLI::PositiveNumber)->capture_default_str();
    sw->add_option("--out", wo.out, "CSV path")->required();

    std::vector<std::string> argv{"ssa-unet"};
    argv.insert(argv.end(), args.begin(), args.end());
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            RunManifest m("synth", argv);
            return cmd_synth(so, m, err);
        }
        if (trn->parsed()) {
            RunManifest m("train", argv);
            return cmd_train(to, m, err);
        }
        if (ev->parsed()) {
            RunManifest m("eval", argv);
            return cmd_eval(eo, m, out);
        }
        if (prm->parsed()) return cmd_params(po, out);
        if (xp->parsed()) {
            RunManifest m("explain", argv);
            return cmd_explain(xo, m, err);
        }
        if (sw->parsed()) {
            RunManifest m("sweep-sa", argv);
            return cmd_sweep_sa(wo, m, err);
        }
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const DimensionError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace ssa::app
