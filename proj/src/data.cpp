#include "ssa/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ssa/io.hpp"

namespace ssa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Tensor blank_frame(std::size_t h, std::size_t w) { return Tensor(Shape{1, 1, h, w}); }

void check_synth_size(std::size_t h, std::size_t w) {
    if (h < kMinSynthSize || w < kMinSynthSize) {
        throw ConfigError("synthetic frames must be at least " + std::to_string(kMinSynthSize) + "x" +
                          std::to_string(kMinSynthSize) + ", got " + std::to_string(h) + "x" + std::to_string(w));
    }
}

/// Shortest signed distance on a ring of length `period`.
double wrap_delta(double d, double period) {
    d = std::fmod(d, period);
    if (d > period / 2) d -= period;
    if (d < -period / 2) d += period;
    return d;
}

double wrap(double v, double period) {
    v = std::fmod(v, period);
    return v < 0 ? v + period : v;
}

}  // namespace

// ---------------------------------------------------------------------------

bool FrameSequence::contiguous() const {
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        if (timestamps[i] - timestamps[i - 1] != static_cast<std::int64_t>(interval_minutes)) return false;
    }
    return true;
}

void FrameSequence::validate() const {
    if (frames.size() != timestamps.size()) {
        throw DataError("frame count " + std::to_string(frames.size()) + " != timestamp count " +
                        std::to_string(timestamps.size()));
    }
    if (interval_minutes == 0) throw DataError("frame interval must be positive");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Shape& s = frames[i].shape();
        if (s.n != 1 || s.c != 1 || s.h != height() || s.w != width()) {
            throw DataError("frame " + std::to_string(i) + " has shape " + s.str() + ", expected 1x1x" +
                            std::to_string(height()) + "x" + std::to_string(width()));
        }
        if (i > 0 && timestamps[i] <= timestamps[i - 1]) {
            throw DataError("timestamps not strictly increasing at frame " + std::to_string(i));
        }
    }
}

FrameSequence FrameSequence::slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, frames.size());
    begin = std::min(begin, end);
    FrameSequence out;
    out.interval_minutes = interval_minutes;
    out.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(begin), frames.begin() + static_cast<std::ptrdiff_t>(end));
    out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          timestamps.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

// ---------------------------------------------------------------------------
// synthetic precipitation

namespace {

struct Blob {
    double x, y;
    double sx, sy;
    double cos_t, sin_t;
    double log_amp;
    double growth;  // amplitude of the log-intensity oscillation
    double phase;
    double period;
};

struct VelocityField {
    double base_u, base_v;
    double var;
    double phase_u, phase_v;
    double omega;

    std::pair<double, double> at(double x, double y, double t, double h, double w) const {
        const double u = base_u + var * std::sin(kTwoPi * y / h + phase_u + omega * t);
        const double v = base_v + var * std::cos(kTwoPi * x / w + phase_v + omega * t);
        return {u, v};
    }
};

}  // namespace

FrameSequence synth_generate(std::size_t n_frames, std::size_t h, std::size_t w, std::uint64_t seed,
                             const SynthParams& p) {
    check_synth_size(h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto lerp = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

    const double side = static_cast<double>(std::min(h, w));
    const double H = static_cast<double>(h);
    const double W = static_cast<double>(w);

    VelocityField field{};
    const double heading = lerp(0.0, kTwoPi);
    field.base_u = p.static_field ? 0.0 : p.mean_speed * std::cos(heading);
    field.base_v = p.static_field ? 0.0 : p.mean_speed * std::sin(heading);
    field.var = p.static_field ? 0.0 : p.speed_variation * p.mean_speed;
    field.phase_u = lerp(0.0, kTwoPi);
    field.phase_v = lerp(0.0, kTwoPi);
    field.omega = lerp(0.005, 0.02);

    std::vector<Blob> blobs(p.blobs);
    for (auto& b : blobs) {
        b.x = lerp(0.0, W);
        b.y = lerp(0.0, H);
        b.sx = lerp(p.min_sigma, p.max_sigma) * side;
        b.sy = lerp(p.min_sigma, p.max_sigma) * side;
        const double theta = lerp(0.0, std::numbers::pi);
        b.cos_t = std::cos(theta);
        b.sin_t = std::sin(theta);
        b.log_amp = std::log(lerp(p.min_amplitude, p.max_amplitude));
        b.growth = p.static_field ? 0.0 : lerp(-p.growth_rate, p.growth_rate);
        b.phase = lerp(0.0, kTwoPi);
        b.period = lerp(40.0, 120.0);
    }

    FrameSequence seq;
    seq.interval_minutes = 5;
    seq.frames.reserve(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        Tensor frame = blank_frame(h, w);
        float* px = frame.ptr();
        for (const auto& b : blobs) {
            // log-amplitude oscillates with slope at most `growth` per frame
            const double amp =
                std::exp(b.log_amp + b.growth * b.period / kTwoPi * std::sin(kTwoPi * t / b.period + b.phase));
            for (std::size_t y = 0; y < h; ++y) {
                const double dy = wrap_delta(static_cast<double>(y) - b.y, H);
                for (std::size_t x = 0; x < w; ++x) {
                    const double dx = wrap_delta(static_cast<double>(x) - b.x, W);
                    const double u = (b.cos_t * dx + b.sin_t * dy) / b.sx;
                    const double v = (-b.sin_t * dx + b.cos_t * dy) / b.sy;
                    px[y * w + x] += static_cast<float>(amp * std::exp(-0.5 * (u * u + v * v)));
                }
            }
        }
        for (auto& v : frame.data()) v = std::clamp(v, 0.0f, static_cast<float>(p.max_intensity));
        seq.frames.push_back(std::move(frame));
        seq.timestamps.push_back(static_cast<std::int64_t>(t) * seq.interval_minutes);

        for (auto& b : blobs) {
            const auto [u, v] = field.at(b.x, b.y, static_cast<double>(t), H, W);
            b.x = wrap(b.x + u, W);
            b.y = wrap(b.y + v, H);
        }
    }
    return seq;
}

// ---------------------------------------------------------------------------
// synthetic cloud cover

FrameSequence synth_cloud(std::size_t n_frames, std::size_t h, std::size_t w, std::uint64_t seed,
                          const CloudParams& p) {
    check_synth_size(h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    struct Mode {
        double kx, ky, amp, phase;
    };
    std::vector<Mode> modes(p.modes);
    double total = 0.0;
    for (auto& m : modes) {
        m.kx = kTwoPi * std::floor(1.0 + 3.0 * uni(rng)) / static_cast<double>(w);
        m.ky = kTwoPi * std::floor(1.0 + 3.0 * uni(rng)) / static_cast<double>(h);
        if (uni(rng) < 0.5) m.kx = -m.kx;
        m.amp = 0.3 + uni(rng);
        m.phase = kTwoPi * uni(rng);
        total += m.amp;
    }
    const double heading = kTwoPi * uni(rng);
    const double vx = p.speed * std::cos(heading);
    const double vy = p.speed * std::sin(heading);

    FrameSequence seq;
    seq.interval_minutes = 15;
    for (std::size_t t = 0; t < n_frames; ++t) {
        Tensor frame = blank_frame(h, w);
        const double td = static_cast<double>(t);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double f = 0.0;
                for (const auto& m : modes) {
                    f += m.amp * std::cos(m.kx * (static_cast<double>(x) - vx * td) +
                                          m.ky * (static_cast<double>(y) - vy * td) + m.phase);
                }
                f = total > 0 ? f / total : 0.0;  // in [-1, 1]
                frame(0, 0, y, x) = f > p.threshold ? 1.0f : 0.0f;
            }
        }
        seq.frames.push_back(std::move(frame));
        seq.timestamps.push_back(static_cast<std::int64_t>(t) * seq.interval_minutes);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// preprocessing

Tensor center_crop(const Tensor& frame, std::size_t side) {
    const Shape& s = frame.shape();
    if (side == 0 || side > s.h || side > s.w) {
        throw DimensionError("center_crop: side " + std::to_string(side) + " exceeds frame " + std::to_string(s.h) +
                             "x" + std::to_string(s.w));
    }
    const std::size_t oy = (s.h - side) / 2;
    const std::size_t ox = (s.w - side) / 2;
    Tensor out(Shape{s.n, s.c, side, side});
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < side; ++y) {
                std::copy_n(&frame(i, c, oy + y, ox), side, &out(i, c, y, 0));
            }
        }
    }
    return out;
}

double max_value(const FrameSequence& seq) {
    double m = 0.0;
    bool any = false;
    for (const auto& f : seq.frames) {
        for (float v : f.data()) {
            if (!any || v > m) m = v;
            any = true;
        }
    }
    return m;
}

Preprocessed preprocess(const FrameSequence& seq, std::optional<std::size_t> crop, std::optional<double> train_max) {
    seq.validate();
    Preprocessed out;
    out.sequence.interval_minutes = seq.interval_minutes;
    out.sequence.timestamps = seq.timestamps;
    out.sequence.frames.reserve(seq.size());
    for (const auto& f : seq.frames) out.sequence.frames.push_back(crop ? center_crop(f, *crop) : f);

    const double scale = train_max ? *train_max : max_value(out.sequence);
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DataError("normalization undefined: training maximum is " + std::to_string(scale));
    }
    out.scale = scale;
    for (auto& f : out.sequence.frames) {
        for (auto& v : f.data()) v = static_cast<float>(static_cast<double>(v) / scale);
    }
    return out;
}

// ---------------------------------------------------------------------------
// windows

std::size_t WindowSpec::span() const {
    const std::size_t last = offsets.empty() ? 0 : *std::max_element(offsets.begin(), offsets.end());
    return inputs + last;
}

WindowSpec WindowSpec::precipitation(std::size_t outputs) {
    WindowSpec spec;
    spec.inputs = 12;
    if (outputs == 1) {
        spec.offsets = {6};
    } else if (outputs == 6 || outputs == 12) {
        for (std::size_t k = 1; k <= outputs; ++k) spec.offsets.push_back(k);
    } else {
        throw ConfigError("precipitation outputs must be 1, 6 or 12, got " + std::to_string(outputs));
    }
    return spec;
}

WindowSpec WindowSpec::cloud() {
    WindowSpec spec;
    spec.inputs = 4;
    spec.offsets = {1, 2, 3, 4, 5, 6};
    return spec;
}

std::vector<SampleWindow> make_windows(const FrameSequence& seq, const WindowSpec& spec, std::size_t stride,
                                       double scale) {
    seq.validate();
    if (stride == 0) throw ConfigError("window stride must be >= 1");
    if (spec.inputs == 0 || spec.offsets.empty()) throw ConfigError("window needs inputs and targets");
    std::vector<SampleWindow> out;
    const std::size_t span = spec.span();
    if (seq.size() < span) return out;
    const std::size_t h = seq.height();
    const std::size_t w = seq.width();
    const std::size_t P = h * w;
    const auto interval = static_cast<std::int64_t>(seq.interval_minutes);

    for (std::size_t start = 0; start + span <= seq.size(); start += stride) {
        const std::int64_t t0 = seq.timestamps[start];
        bool gap = false;
        for (std::size_t k = 1; k < span && !gap; ++k) {
            gap = seq.timestamps[start + k] - t0 != static_cast<std::int64_t>(k) * interval;
        }
        if (gap) continue;

        SampleWindow win;
        win.inputs = Tensor(Shape{1, spec.inputs, h, w});
        win.targets = Tensor(Shape{1, spec.outputs(), h, w});
        for (std::size_t k = 0; k < spec.inputs; ++k) {
            std::copy_n(seq.frames[start + k].ptr(), P, win.inputs.plane(0, k));
        }
        const std::size_t last_input = start + spec.inputs - 1;
        for (std::size_t k = 0; k < spec.outputs(); ++k) {
            std::copy_n(seq.frames[last_input + spec.offsets[k]].ptr(), P, win.targets.plane(0, k));
            win.horizon_minutes.push_back(spec.offsets[k] * seq.interval_minutes);
        }
        win.start_time = t0;
        win.scale = scale;
        out.push_back(std::move(win));
    }
    return out;
}

double rainy_fraction(const Tensor& frame, std::size_t channel, double cutoff) {
    const Shape& s = frame.shape();
    std::size_t rainy = 0;
    for (std::size_t i = 0; i < s.n; ++i) {
        const float* p = frame.plane(i, channel);
        for (std::size_t k = 0; k < s.plane(); ++k) rainy += p[k] > cutoff ? 1 : 0;
    }
    return static_cast<double>(rainy) / static_cast<double>(s.n * s.plane());
}

std::vector<SampleWindow> filter_windows(const std::vector<SampleWindow>& windows, double fraction,
                                         double rain_cutoff, FilterMode mode) {
    std::vector<SampleWindow> out;
    for (const auto& win : windows) {
        const std::size_t n = win.targets.shape().c;
        std::size_t passing = 0;
        for (std::size_t c = 0; c < n; ++c) {
            if (rainy_fraction(win.targets, c, rain_cutoff) >= fraction) ++passing;
        }
        const bool keep = mode == FilterMode::AllTargets ? passing == n : passing > 0;
        if (keep) out.push_back(win);
    }
    return out;
}

SequenceSplit chronological_split(const FrameSequence& seq, double train_fraction, double val_fraction) {
    if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0 + 1e-12) {
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    }
    const std::size_t n = seq.size();
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
    return {seq.slice(0, n_train), seq.slice(n_train, n_train + n_val), seq.slice(n_train + n_val, n)};
}

namespace {

Tensor stack(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& indices, bool targets) {
    if (indices.empty()) throw DataError("cannot stack an empty batch");
    const Shape s0 = targets ? windows[indices[0]].targets.shape() : windows[indices[0]].inputs.shape();
    Tensor out(Shape{indices.size(), s0.c, s0.h, s0.w});
    const std::size_t per = s0.c * s0.plane();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Tensor& t = targets ? windows[indices[b]].targets : windows[indices[b]].inputs;
        require_same_shape(t.shape(), s0, "stack windows");
        std::copy_n(t.ptr(), per, out.ptr() + b * per);
    }
    return out;
}

}  // namespace

Tensor stack_inputs(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& indices) {
    return stack(windows, indices, false);
}

Tensor stack_targets(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& indices) {
    return stack(windows, indices, true);
}

// ---------------------------------------------------------------------------
// RSEQ archives

void save_archive(const FrameSequence& seq, const std::filesystem::path& path) {
    seq.validate();
    if (!seq.contiguous()) {
        throw DataError("RSEQ archives store contiguous sequences only; this sequence has timestamp gaps");
    }
    if (seq.size() == 0) throw DataError("cannot archive an empty sequence");
    io::ByteWriter out;
    out.bytes("RSEQ");
    out.u32(static_cast<std::uint32_t>(seq.size()));
    out.u32(seq.interval_minutes);
    out.u32(static_cast<std::uint32_t>(seq.height()));
    out.u32(static_cast<std::uint32_t>(seq.width()));
    for (const auto& f : seq.frames) io::write_rten(out, f);
    out.write_file(path);
}

FrameSequence load_archive(const std::filesystem::path& path) {
    auto in = io::ByteReader::from_file(path);
    if (in.remaining() < 4 || in.bytes(4) != "RSEQ") throw FormatError("not an RSEQ archive: " + path.string());
    const std::uint32_t count = in.u32();
    const std::uint32_t interval = in.u32();
    const std::uint32_t h = in.u32();
    const std::uint32_t w = in.u32();
    if (interval == 0) throw IntegrityError("RSEQ header has a zero frame interval");
    FrameSequence seq;
    seq.interval_minutes = interval;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t at = in.offset();
        Tensor f = io::read_rten(in);
        if (f.shape() != Shape{1, 1, h, w}) {
            throw IntegrityError("frame " + std::to_string(k) + " at byte offset " + std::to_string(at) + " has shape " +
                                 f.shape().str() + " but the header declares 1x1x" + std::to_string(h) + "x" +
                                 std::to_string(w));
        }
        seq.frames.push_back(std::move(f));
        seq.timestamps.push_back(static_cast<std::int64_t>(k) * interval);
    }
    if (!in.at_end()) {
        throw IntegrityError("header declares " + std::to_string(count) + " frames but " +
                             std::to_string(in.remaining()) + " bytes remain at byte offset " +
                             std::to_string(in.offset()));
    }
    return seq;
}

}  // namespace ssa
