#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

/// Ordered single-channel maps, each (1, 1, h, w). Timestamps are in minutes,
/// strictly increasing; gaps larger than the interval mark missing frames.
struct FrameSequence {
    std::vector<Tensor> frames;
    std::vector<std::int64_t> timestamps;
    std::uint32_t interval_minutes = 5;

    std::size_t size() const { return frames.size(); }
    std::size_t height() const { return frames.empty() ? 0 : frames.front().shape().h; }
    std::size_t width() const { return frames.empty() ? 0 : frames.front().shape().w; }
    bool contiguous() const;
    /// Throws DataError on shape or timestamp inconsistencies.
    void validate() const;
    /// Frames [begin, end) with their timestamps.
    FrameSequence slice(std::size_t begin, std::size_t end) const;
};

/// Advected Gaussian rain cells.
struct SynthParams {
    std::size_t blobs = 6;
    double max_intensity = 40.0;     // mm/h ceiling after clipping
    double min_amplitude = 4.0;
    double max_amplitude = 30.0;
    double min_sigma = 0.05;         // fraction of the shorter side
    double max_sigma = 0.14;
    double mean_speed = 0.9;         // pixels per frame
    double speed_variation = 0.35;   // amplitude of the spatial velocity modulation
    double growth_rate = 0.03;       // max |d log amplitude / frame|
    bool static_field = false;       // zero velocity and growth
};

constexpr std::size_t kMinSynthSize = 32;

FrameSequence synth_generate(std::size_t n_frames, std::size_t h, std::size_t w, std::uint64_t seed,
                             const SynthParams& params = {});

struct CloudParams {
    double threshold = 0.0;    // cloud where the smooth field exceeds this
    std::size_t modes = 6;     // random Fourier modes per field
    double speed = 0.8;        // pixels per frame
};

/// Binary {0, 1} cloud masks at 15-minute spacing.
FrameSequence synth_cloud(std::size_t n_frames, std::size_t h, std::size_t w, std::uint64_t seed,
                          const CloudParams& params = {});

/// Square center crop; the offset is (h - side) / 2 rounded down.
Tensor center_crop(const Tensor& frame, std::size_t side);

struct Preprocessed {
    FrameSequence sequence;
    double scale = 1.0;  // divide raw values by this; multiply to denormalize
};

/// Optional center crop, then division by `train_max` (the maximum of the
/// given frames when absent). A zero maximum is a DataError.
Preprocessed preprocess(const FrameSequence& seq, std::optional<std::size_t> crop,
                        std::optional<double> train_max = std::nullopt);

double max_value(const FrameSequence& seq);

/// Which frames form one sample: `inputs` consecutive frames, then targets at
/// the given offsets (1 = the frame right after the last input).
struct WindowSpec {
    std::size_t inputs = 12;
    std::vector<std::size_t> offsets;

    std::size_t outputs() const { return offsets.size(); }
    std::size_t span() const;

    /// 12 inputs; 1 output at +30 min, 6 at +5..+30, or 12 at +5..+60.
    static WindowSpec precipitation(std::size_t outputs);
    /// 4 inputs, 6 outputs at consecutive steps.
    static WindowSpec cloud();
};

struct SampleWindow {
    Tensor inputs;   // (1, n_in, h, w), oldest frame first
    Tensor targets;  // (1, n_out, h, w)
    std::vector<std::size_t> horizon_minutes;
    std::int64_t start_time = 0;
    double scale = 1.0;
};

/// Sliding windows at `stride`; windows spanning a timestamp gap are skipped.
/// A sequence shorter than the window span yields no windows.
std::vector<SampleWindow> make_windows(const FrameSequence& seq, const WindowSpec& spec, std::size_t stride,
                                       double scale = 1.0);

enum class FilterMode { AllTargets, AnyTarget };

/// Fraction of pixels strictly above `cutoff`.
double rainy_fraction(const Tensor& frame, std::size_t channel, double cutoff);

/// Keeps windows whose target frames have at least `fraction` rainy pixels
/// (every target frame by default). Order is preserved.
std::vector<SampleWindow> filter_windows(const std::vector<SampleWindow>& windows, double fraction,
                                         double rain_cutoff = 0.0, FilterMode mode = FilterMode::AllTargets);

struct SequenceSplit {
    FrameSequence train;
    FrameSequence val;
    FrameSequence test;
};

/// Contiguous time-ordered split.
SequenceSplit chronological_split(const FrameSequence& seq, double train_fraction = 0.70,
                                  double val_fraction = 0.15);

/// Stacks windows[indices] along the batch axis.
Tensor stack_inputs(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& indices);
Tensor stack_targets(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& indices);

/// RSEQ v1: "RSEQ", u32 frame count, u32 interval, u32 h, u32 w, then one RTEN
/// (1, 1, h, w) blob per frame.
void save_archive(const FrameSequence& seq, const std::filesystem::path& path);
FrameSequence load_archive(const std::filesystem::path& path);

}  // namespace ssa
