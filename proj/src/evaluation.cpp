#include "ssa/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

namespace ssa {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

namespace {

void count_into(ConfusionCounts& c, const float* p, const float* t, std::size_t n, double threshold, double scale) {
    for (std::size_t i = 0; i < n; ++i) {
        const bool pp = static_cast<double>(p[i]) * scale > threshold;
        const bool tp = static_cast<double>(t[i]) * scale > threshold;
        if (pp && tp) {
            ++c.tp;
        } else if (pp) {
            ++c.fp;
        } else if (tp) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
}

double sum_sq(const float* p, const float* t, std::size_t n, double scale) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (static_cast<double>(p[i]) - static_cast<double>(t[i])) * scale;
        s += d * d;
    }
    return s;
}

}  // namespace

ConfusionCounts binarize(const Tensor& pred, const Tensor& target, double threshold, double scale) {
    require_same_shape(pred.shape(), target.shape(), "binarize");
    ConfusionCounts c;
    count_into(c, pred.ptr(), target.ptr(), pred.numel(), threshold, scale);
    return c;
}

ConfusionCounts binarize_channel(const Tensor& pred, const Tensor& target, std::size_t channel, double threshold,
                                 double scale) {
    require_same_shape(pred.shape(), target.shape(), "binarize");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.shape().n; ++i) {
        count_into(c, pred.plane(i, channel), target.plane(i, channel), pred.shape().plane(), threshold, scale);
    }
    return c;
}

ClassMetrics metrics_from_counts(const ConfusionCounts& c) {
    ClassMetrics m;
    auto ratio = [&](double num, double den) {
        if (den == 0.0) {
            m.degenerate = true;
            return 0.0;
        }
        return num / den;
    };
    const auto tp = static_cast<double>(c.tp);
    m.precision = ratio(tp, tp + static_cast<double>(c.fp));
    m.recall = ratio(tp, tp + static_cast<double>(c.fn));
    m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

double pixel_mse(const Tensor& pred, const Tensor& target, double scale) {
    require_same_shape(pred.shape(), target.shape(), "pixel_mse");
    return sum_sq(pred.ptr(), target.ptr(), pred.numel(), scale) / static_cast<double>(pred.numel());
}

std::vector<MetricsRecord> evaluate(const std::string& model_id, const Predictor& predictor,
                                    const std::vector<SampleWindow>& windows, const EvalConfig& config) {
    if (windows.empty()) throw DataError("evaluation dataset has no windows");
    if (config.batch_size == 0) throw ConfigError("batch size must be >= 1");
    const std::vector<std::size_t>& horizons = windows.front().horizon_minutes;
    const std::size_t n_out = horizons.size();
    for (const auto& w : windows) {
        if (w.horizon_minutes != horizons) throw DataError("evaluation windows disagree on their lead times");
    }

    std::vector<double> sse(n_out, 0.0);
    std::vector<std::uint64_t> pixels(n_out, 0);
    std::vector<ConfusionCounts> counts(n_out);

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(order.size(), start + config.batch_size)));
        const Tensor targets = stack_targets(windows, idx);
        const Tensor pred = predictor(stack_inputs(windows, idx));
        require_same_shape(pred.shape(), targets.shape(), "evaluate prediction");
        const std::size_t plane = targets.shape().plane();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t k = 0; k < n_out; ++k) {
                sse[k] += sum_sq(pred.plane(i, k), targets.plane(i, k), plane, config.scale);
                pixels[k] += plane;
                count_into(counts[k], pred.plane(i, k), targets.plane(i, k), plane, config.threshold, config.scale);
            }
        }
    }

    std::vector<MetricsRecord> records;
    MetricsRecord all;
    all.model = model_id;
    all.threshold = config.threshold;
    double sse_all = 0.0;
    std::uint64_t px_all = 0;
    for (std::size_t k = 0; k < n_out; ++k) {
        MetricsRecord r;
        r.model = model_id;
        r.horizon_minutes = horizons[k];
        r.threshold = config.threshold;
        r.mse = sse[k] / static_cast<double>(pixels[k]);
        r.counts = counts[k];
        r.metrics = metrics_from_counts(counts[k]);
        records.push_back(r);
        sse_all += sse[k];
        px_all += pixels[k];
        all.counts += counts[k];
    }
    all.mse = sse_all / static_cast<double>(px_all);
    all.metrics = metrics_from_counts(all.counts);
    records.push_back(all);
    return records;
}

std::string report_csv(const std::vector<MetricsRecord>& records) {
    std::string out = "model,horizon_min,mse,precision,recall,accuracy,f1,tp,fp,tn,fn\n";
    char buf[512];
    for (const auto& r : records) {
        const std::string horizon = r.is_aggregate() ? "all" : std::to_string(r.horizon_minutes);
        std::snprintf(buf, sizeof buf, "%s,%s,%.6g,%.6g,%.6g,%.6g,%.6g,%llu,%llu,%llu,%llu\n", r.model.c_str(),
                      horizon.c_str(), r.mse, r.metrics.precision, r.metrics.recall, r.metrics.accuracy, r.metrics.f1,
                      static_cast<unsigned long long>(r.counts.tp), static_cast<unsigned long long>(r.counts.fp),
                      static_cast<unsigned long long>(r.counts.tn), static_cast<unsigned long long>(r.counts.fn));
        out += buf;
    }
    return out;
}

void write_report_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << report_csv(records);
}

}  // namespace ssa
