#include "umt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "umt/error.hpp"
#include "umt/log.hpp"
#include "umt/ops.hpp"

namespace umt {

namespace {

using detail::Node;

void require_column(const Tensor& t, std::size_t n, const char* what) {
    if (t.size() != n) {
        throw ShapeError(std::string(what) + ": prediction of shape " + shape_string(t.shape()) + " vs " +
                         std::to_string(n) + " targets");
    }
}

double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

bool inside_clamp(double p) { return p > kProbabilityClamp && p < 1.0 - kProbabilityClamp; }

}  // namespace

void LossWeights::validate() const {
    for (double w : {saliency, center, window, offset}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ConfigError("loss weights must be finite and non-negative");
        }
    }
    if (!(alpha >= 0.0) || !(gamma >= 0.0) || !(mu > 0.0) || !(rho > 0.0)) {
        throw ConfigError("alpha, gamma must be >= 0 and mu, rho > 0");
    }
}

double kernel_radius(double window, const LossWeights& weights) { return weights.mu * window; }

double kernel_sigma(double window, const LossWeights& weights) {
    return weights.rho * (kernel_radius(window, weights) + 1.0);
}

TargetSet build_targets(std::span<const MomentAnnotation> moments, std::span<const double> saliency,
                        std::size_t num_clips, const LossWeights& weights) {
    if (saliency.size() != num_clips) {
        throw ShapeError("build_targets: " + std::to_string(saliency.size()) + " saliency targets for " +
                         std::to_string(num_clips) + " clips");
    }
    TargetSet t;
    t.heatmap.assign(num_clips, 0.0);
    t.saliency.assign(saliency.begin(), saliency.end());
    for (const MomentAnnotation& m : moments) {
        if (!(m.center >= 0.0 && m.center < static_cast<double>(num_clips))) {
            throw DataError("moment centre " + std::to_string(m.center) + " outside [0, " +
                            std::to_string(num_clips) + ")");
        }
        if (!(m.window > 0.0)) {
            throw DataError("moment window must be positive");
        }
        // round() maps x.5 away from zero, so the offset stays in [-0.5, 0.5],
        // except for a centre in [N_v - 0.5, N_v), which is pulled back onto
        // the last clip and keeps its full offset.
        const auto quantized =
            std::min(static_cast<std::size_t>(std::round(m.center)), num_clips - 1);
        const double sigma = kernel_sigma(m.window, weights);
        const double denom = 2.0 * sigma * sigma;
        for (std::size_t x = 0; x < num_clips; ++x) {
            const double dx = static_cast<double>(x) - static_cast<double>(quantized);
            t.heatmap[x] = std::max(t.heatmap[x], std::exp(-(dx * dx) / denom));
        }
        t.center_indices.push_back(quantized);
        t.window_targets.push_back(m.window);
        t.offset_targets.push_back(m.center - static_cast<double>(quantized));
    }
    return t;
}

Tensor saliency_loss(const Tensor& pred, std::span<const double> target) {
    require_column(pred, target.size(), "saliency_loss");
    if (target.empty()) {
        throw ShapeError("saliency_loss: no clips");
    }
    const auto p = pred.data();
    const double n = static_cast<double>(target.size());
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double q = clamp_probability(p[i]);
        total -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
    }
    std::vector<double> y(target.begin(), target.end());
    return Tensor::make_result({}, {total / n}, {pred}, [y = std::move(y), n](Node& self) {
        Node& pp = *self.parents[0];
        auto& g = pp.grad_buffer();
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double q = pp.data[i];
            if (inside_clamp(q)) {
                g[i] += self.grad[0] * (-(y[i] / q) + (1.0 - y[i]) / (1.0 - q)) / n;
            }
        }
    });
}

Tensor focal_center_loss(const Tensor& pred, std::span<const double> target, std::size_t num_moments,
                         const LossWeights& weights) {
    require_column(pred, target.size(), "focal_center_loss");
    if (num_moments == 0) {
        log_warning("focal_center_loss: sample has no moments, centre loss is 0");
        return ops::scale(ops::sum(pred), 0.0);
    }
    const double alpha = weights.alpha;
    const double gamma = weights.gamma;
    const double n = static_cast<double>(num_moments);
    const auto p = pred.data();
    double total = 0.0;
    for (std::size_t x = 0; x < target.size(); ++x) {
        const double q = clamp_probability(p[x]);
        if (target[x] == 1.0) {
            total -= std::pow(1.0 - q, alpha) * std::log(q);
        } else {
            total -= std::pow(1.0 - target[x], gamma) * std::pow(q, alpha) * std::log(1.0 - q);
        }
    }
    std::vector<double> h(target.begin(), target.end());
    return Tensor::make_result({}, {total / n}, {pred}, [h = std::move(h), alpha, gamma, n](Node& self) {
        Node& pp = *self.parents[0];
        auto& g = pp.grad_buffer();
        for (std::size_t x = 0; x < h.size(); ++x) {
            const double q = pp.data[x];
            if (!inside_clamp(q)) {
                continue;
            }
            double d;
            if (h[x] == 1.0) {
                // d/dq [-(1-q)^a log q]
                d = alpha * std::pow(1.0 - q, alpha - 1.0) * std::log(q) - std::pow(1.0 - q, alpha) / q;
            } else {
                // d/dq [-(1-h)^g q^a log(1-q)]
                const double w = std::pow(1.0 - h[x], gamma);
                d = -w * (alpha * std::pow(q, alpha - 1.0) * std::log(1.0 - q) - std::pow(q, alpha) / (1.0 - q));
            }
            g[x] += self.grad[0] * d / n;
        }
    });
}

RegressionLosses regression_losses(const Tensor& pred_window, const Tensor& pred_offset,
                                   const TargetSet& targets) {
    const std::size_t count = targets.num_moments();
    if (count == 0) {
        return {ops::scale(ops::sum(pred_window), 0.0), ops::scale(ops::sum(pred_offset), 0.0)};
    }
    const std::size_t num_clips = targets.heatmap.size();
    require_column(pred_window, num_clips, "regression_losses(window)");
    require_column(pred_offset, num_clips, "regression_losses(offset)");
    auto l1_at_centres = [&](const Tensor& pred, const std::vector<double>& goal) {
        const auto p = pred.data();
        double total = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            total += std::abs(goal[k] - p[targets.center_indices[k]]);
        }
        const double n = static_cast<double>(count);
        return Tensor::make_result({}, {total / n}, {pred},
                                   [idx = targets.center_indices, goal, n](Node& self) {
                                       Node& pp = *self.parents[0];
                                       auto& g = pp.grad_buffer();
                                       for (std::size_t k = 0; k < idx.size(); ++k) {
                                           const double diff = pp.data[idx[k]] - goal[k];
                                           const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                                           g[idx[k]] += self.grad[0] * sign / n;
                                       }
                                   });
    };
    return {l1_at_centres(pred_window, targets.window_targets), l1_at_centres(pred_offset, targets.offset_targets)};
}

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
    Tensor total = ops::scale(c.saliency, w.saliency);
    total = ops::add(total, ops::scale(c.center, w.center));
    total = ops::add(total, ops::scale(c.window, w.window));
    return ops::add(total, ops::scale(c.offset, w.offset));
}

LossBreakdown compute_losses(const RawPredictions& predictions, const TargetSet& targets,
                             const LossWeights& weights) {
    LossBreakdown out;
    out.components.saliency = saliency_loss(predictions.saliency, targets.saliency);
    out.components.center =
        targets.num_moments() == 0
            ? ops::scale(ops::sum(predictions.heatmap), 0.0)
            : focal_center_loss(predictions.heatmap, targets.heatmap, targets.num_moments(), weights);
    const RegressionLosses reg = regression_losses(predictions.window, predictions.offset, targets);
    out.components.window = reg.window;
    out.components.offset = reg.offset;
    out.total = total_loss(out.components, weights);
    return out;
}

}  // namespace umt
