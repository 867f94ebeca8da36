#include "umt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace umt {

double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

double central_difference(Tensor& input, std::size_t index, const std::function<double()>& loss, double step) {
    auto values = input.mutable_data();
    const double original = values[index];
    values[index] = original + step;
    const double plus = loss();
    values[index] = original - step;
    const double minus = loss();
    values[index] = original;
    return (plus - minus) / (2.0 * step);
}

GradCheckReport compare_gradients(std::vector<GradProbe> probes, const std::function<double()>& loss,
                                  double step, double floor) {
    GradCheckReport report;
    report.entries.reserve(probes.size());
    for (GradProbe& probe : probes) {
        GradCheckEntry entry;
        entry.tensor = probe.name;
        entry.index = probe.index;
        entry.analytic = probe.tensor.grad()[probe.index];
        entry.numeric = central_difference(probe.tensor, probe.index, loss, step);
        entry.relative_error = relative_error(entry.analytic, entry.numeric, floor);
        report.max_relative_error = std::max(report.max_relative_error, entry.relative_error);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace umt
