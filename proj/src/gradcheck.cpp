#include "ssa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ssa {

double GradCheckReport::worst() const {
    double w = 0.0;
    for (double e : max_rel_error) w = std::max(w, e);
    return w;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    if (!failure.empty()) {
        os << "gradcheck error: " << failure;
        return os.str();
    }
    os << (passed ? "pass" : "FAIL");
    for (std::size_t i = 0; i < max_rel_error.size(); ++i) {
        os << " | input " << i << ": max rel err " << max_rel_error[i] << " over " << probed[i] << " probes";
        if (kinks[i] > 0) os << " (" << kinks[i] << " kinks skipped)";
    }
    return os.str();
}

namespace {

double projected(const TensorD& out, const TensorD& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += out.ptr()[i] * r.ptr()[i];
    return s;
}

std::vector<std::size_t> probe_indices(std::size_t numel, std::size_t limit, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(numel);
    std::iota(idx.begin(), idx.end(), 0);
    if (limit == 0 || limit >= numel) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport finite_difference_check(const GradForward& forward, const GradBackward& backward,
                                        const std::vector<TensorD>& inputs, const GradCheckOptions& options) {
    GradCheckReport report;
    try {
        std::mt19937_64 rng(options.seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);

        const TensorD out = forward(inputs);
        TensorD r(out.shape());
        for (auto& v : r.data()) v = uni(rng);
        const std::vector<TensorD> analytic = backward(inputs, r);
        if (analytic.size() != inputs.size()) {
            report.failure = "backward returned " + std::to_string(analytic.size()) + " gradients for " +
                             std::to_string(inputs.size()) + " inputs";
            return report;
        }

        report.passed = true;
        const double h = options.step;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (analytic[k].shape() != inputs[k].shape()) {
                report.failure = "gradient " + std::to_string(k) + " has shape " + analytic[k].shape().str() +
                                 ", input has " + inputs[k].shape().str();
                report.passed = false;
                return report;
            }
            std::vector<TensorD> probe = inputs;
            double worst = 0.0;
            std::size_t kinks = 0;
            const auto indices = probe_indices(inputs[k].numel(), options.max_probes, rng);
            const double base = projected(out, r);
            // entries smaller than the difference quotient can resolve are compared absolutely
            double magnitude = 0.0;
            for (std::size_t i = 0; i < out.numel(); ++i) magnitude += std::abs(r.ptr()[i] * out.ptr()[i]);
            const double resolvable = options.roundoff_safety * std::numeric_limits<double>::epsilon() *
                                      magnitude / (h * options.tolerance);
            const double floor = std::max(options.abs_floor, resolvable);
            for (std::size_t idx : indices) {
                const double x0 = inputs[k].ptr()[idx];
                probe[k].ptr()[idx] = x0 + h;
                const double fp = projected(forward(probe), r);
                probe[k].ptr()[idx] = x0 - h;
                const double fm = projected(forward(probe), r);
                probe[k].ptr()[idx] = x0;

                const double right = (fp - base) / h;
                const double left = (base - fm) / h;
                if (std::abs(right - left) >
                    options.kink_tolerance * std::max({1.0, std::abs(left), std::abs(right)})) {
                    ++kinks;
                    continue;
                }
                const double numeric = (fp - fm) / (2.0 * h);
                const double a = analytic[k].ptr()[idx];
                const double denom = std::max({std::abs(a), std::abs(numeric), floor});
                worst = std::max(worst, std::abs(a - numeric) / denom);
            }
            report.max_rel_error.push_back(worst);
            report.probed.push_back(indices.size() - kinks);
            report.kinks.push_back(kinks);
            if (!(worst < options.tolerance)) report.passed = false;
        }
    } catch (const std::exception& e) {
        report.passed = false;
        report.failure = e.what();
    }
    return report;
}

}  // namespace ssa
