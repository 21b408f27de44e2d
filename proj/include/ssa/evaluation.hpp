#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ssa/data.hpp"
#include "ssa/tensor.hpp"

namespace ssa {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

/// A pixel is positive iff its value exceeds `threshold`. `scale` multiplies
/// both tensors first (pass the normalization constant to compare on
/// denormalized values).
ConfusionCounts binarize(const Tensor& pred, const Tensor& target, double threshold, double scale = 1.0);
/// Counts for output channel `channel` only.
ConfusionCounts binarize_channel(const Tensor& pred, const Tensor& target, std::size_t channel, double threshold,
                                 double scale = 1.0);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    /// Set when any ratio had a zero denominator and was reported as 0.
    bool degenerate = false;
};

ClassMetrics metrics_from_counts(const ConfusionCounts& c);

inline constexpr std::size_t kAllHorizons = 0;

struct MetricsRecord {
    std::string model;
    std::size_t horizon_minutes = kAllHorizons;  // kAllHorizons marks the aggregate row
    double threshold = 0.0;
    double mse = 0.0;
    ClassMetrics metrics;
    ConfusionCounts counts;

    bool is_aggregate() const { return horizon_minutes == kAllHorizons; }
};

/// Maps a batch of stacked inputs (n, c_in, h, w) to predictions (n, c_out, h, w).
using Predictor = std::function<Tensor(const Tensor& inputs)>;

struct EvalConfig {
    double threshold = 0.5;  // on denormalized values
    double scale = 1.0;      // normalization constant
    std::size_t batch_size = 6;
};

/// Pixel MSE on denormalized values, sum of squares over count.
double pixel_mse(const Tensor& pred, const Tensor& target, double scale = 1.0);

/// One record per lead time in window order, then the aggregate. MSE is the
/// mean over every evaluated pixel; classification metrics use pooled counts.
std::vector<MetricsRecord> evaluate(const std::string& model_id, const Predictor& predictor,
                                    const std::vector<SampleWindow>& windows, const EvalConfig& config);

/// Columns: model, horizon_min, mse, precision, recall, accuracy, f1, tp, fp,
/// tn, fn. Reals use 6 significant digits.
std::string report_csv(const std::vector<MetricsRecord>& records);
void write_report_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path);

}  // namespace ssa
