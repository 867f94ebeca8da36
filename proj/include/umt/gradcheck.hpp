#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "umt/tensor.hpp"

namespace umt {

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// the ratio meaningful for entries whose true gradient is (near) zero.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central difference d loss / d input[index], restoring the value afterwards.
/// `loss` must recompute the scalar from scratch on every call.
double central_difference(Tensor& input, std::size_t index, const std::function<double()>& loss,
                          double step = kFiniteDifferenceStep);

struct GradCheckEntry {
    std::string tensor;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_relative_error = 0.0;

    bool passed(double tolerance) const { return !entries.empty() && max_relative_error < tolerance; }
};

/// Probe of one coordinate of a named tensor.
struct GradProbe {
    std::string name;
    Tensor tensor;
    std::size_t index = 0;
};

/// Compares analytic gradients (already accumulated on the probed tensors)
/// against central differences of `loss`.
GradCheckReport compare_gradients(std::vector<GradProbe> probes, const std::function<double()>& loss,
                                  double step = kFiniteDifferenceStep, double floor = 1e-6);

}  // namespace umt
