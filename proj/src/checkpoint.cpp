#include "ssa/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <vector>

#include "ssa/io.hpp"

namespace ssa {

namespace {

constexpr const char* kMomentM = "#adam.m";
constexpr const char* kMomentV = "#adam.v";

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw FormatError("checkpoint key " + key + " is not a number: " + s);
    return v;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint header lacks key '" + key + "'");
    return it->second;
}

void write_named(io::ByteWriter& out, const std::vector<std::pair<std::string, const Tensor*>>& items) {
    out.u32(static_cast<std::uint32_t>(items.size()));
    for (const auto& [name, t] : items) {
        out.str(name);
        io::write_rten(out, *t);
    }
}

}  // namespace

void save_checkpoint(Model& model, const OptimizerState<float>* optimizer, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
    std::string header = model.config().to_kv();
    header += "meta.epoch=" + std::to_string(meta.epoch) + "\n";
    header += "meta.best_val_loss=" + hex(meta.best_val_loss) + "\n";
    header += "meta.scale=" + hex(meta.scale) + "\n";
    if (optimizer) {
        header += "opt.lr=" + hex(optimizer->lr) + "\n";
        header += "opt.beta1=" + hex(optimizer->beta1) + "\n";
        header += "opt.beta2=" + hex(optimizer->beta2) + "\n";
        header += "opt.eps=" + hex(optimizer->eps) + "\n";
        header += "opt.step=" + std::to_string(optimizer->step) + "\n";
    }

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    model.visit_parameters([&](Parameter<float>& p) { tensors.emplace_back(p.name, &p.value); });
    model.visit_buffers([&](const std::string& name, Tensor& t) { tensors.emplace_back(name, &t); });

    std::vector<std::pair<std::string, const Tensor*>> moments;
    if (optimizer) {
        for (const auto& [name, m] : optimizer->moments) {
            moments.emplace_back(name + kMomentM, &m.m);
            moments.emplace_back(name + kMomentV, &m.v);
        }
    }

    io::ByteWriter out;
    out.bytes("SSAC");
    out.u32(kCheckpointVersion);
    out.str(header);
    write_named(out, tensors);
    write_named(out, moments);
    out.write_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
    auto in = io::ByteReader::from_file(path);
    if (in.remaining() < 4 || in.bytes(4) != "SSAC") throw FormatError("not an SSAC checkpoint: " + path.string());
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const std::string header = in.str();
    const auto kv = parse_kv(header);

    Checkpoint ck;
    ck.config = ModelConfig::from_kv(header);
    ck.meta.epoch = std::stoull(require(kv, "meta.epoch"));
    ck.meta.best_val_loss = parse_double("meta.best_val_loss", require(kv, "meta.best_val_loss"));
    ck.meta.scale = parse_double("meta.scale", require(kv, "meta.scale"));
    if (kv.count("opt.lr")) {
        ck.optimizer.lr = parse_double("opt.lr", require(kv, "opt.lr"));
        ck.optimizer.beta1 = parse_double("opt.beta1", require(kv, "opt.beta1"));
        ck.optimizer.beta2 = parse_double("opt.beta2", require(kv, "opt.beta2"));
        ck.optimizer.eps = parse_double("opt.eps", require(kv, "opt.eps"));
        ck.optimizer.step = std::stoull(require(kv, "opt.step"));
    }

    if (expected) ck.config = *expected;
    auto model = std::make_unique<Model>(ck.config);

    std::map<std::string, Tensor*> slots;
    model->visit_parameters([&](Parameter<float>& p) { slots[p.name] = &p.value; });
    model->visit_buffers([&](const std::string& name, Tensor& t) { slots[name] = &t; });

    const std::uint32_t count = in.u32();
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = in.str();
        Tensor t = io::read_rten(in);
        auto it = slots.find(name);
        if (it == slots.end()) throw FormatError("checkpoint holds unknown tensor '" + name + "'");
        if (it->second->shape() != t.shape()) {
            throw DimensionError("shape mismatch for '" + name + "': checkpoint " + t.shape().str() + ", model " +
                                 it->second->shape().str());
        }
        *it->second = std::move(t);
        ++loaded;
    }
    if (loaded != slots.size()) {
        throw FormatError("checkpoint provides " + std::to_string(loaded) + " of " + std::to_string(slots.size()) +
                          " model tensors");
    }

    std::map<std::string, Tensor> param_shapes;
    model->visit_parameters([&](Parameter<float>& p) { param_shapes.emplace(p.name, Tensor()); });
    const std::uint32_t n_moments = in.u32();
    for (std::uint32_t i = 0; i < n_moments; ++i) {
        const std::string name = in.str();
        Tensor t = io::read_rten(in);
        const auto hash = name.rfind('#');
        const std::string param = hash == std::string::npos ? name : name.substr(0, hash);
        const std::string suffix = hash == std::string::npos ? "" : name.substr(hash);
        if (!slots.count(param) || !param_shapes.count(param) || (suffix != kMomentM && suffix != kMomentV)) {
            throw FormatError("checkpoint holds unknown optimizer entry '" + name + "'");
        }
        if (slots[param]->shape() != t.shape()) {
            throw DimensionError("shape mismatch for optimizer entry '" + name + "'");
        }
        auto& m = ck.optimizer.moments[param];
        (suffix == kMomentM ? m.m : m.v) = std::move(t);
    }
    for (const auto& [name, m] : ck.optimizer.moments) {
        if (m.m.empty() || m.v.empty()) throw FormatError("optimizer moments for '" + name + "' are incomplete");
    }
    if (!in.at_end()) {
        throw FormatError("trailing bytes after checkpoint payload at byte offset " + std::to_string(in.offset()));
    }
    ck.model = std::move(model);
    return ck;
}

}  // namespace ssa
