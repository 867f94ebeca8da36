#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "umt/features.hpp"
#include "umt/model.hpp"
#include "umt/tensor.hpp"

namespace umt {

/// Loss weights and target-shape hyperparameters.
struct LossWeights {
    double saliency = 3.0;  // lambda_s
    double center = 1.0;    // lambda_c
    double window = 0.1;    // lambda_w
    double offset = 1.0;    // lambda_o
    double alpha = 2.0;     // focal weighting exponent
    double gamma = 4.0;     // focal penalty-reduction exponent
    double mu = 0.2;        // radius = mu * window
    double rho = 0.2;       // sigma = rho * (radius + 1)

    void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Supervision for one video. Per-moment vectors share the moment order.
struct TargetSet {
    std::vector<double> heatmap;              // N_v, gaussian kernels merged by max
    std::vector<double> saliency;             // N_v
    std::vector<std::size_t> center_indices;  // quantised centres round(p)
    std::vector<double> window_targets;       // d, clips
    std::vector<double> offset_targets;       // p - round(p), in [-0.5, 0.5]

    std::size_t num_moments() const { return center_indices.size(); }
};

double kernel_radius(double window, const LossWeights& weights);
double kernel_sigma(double window, const LossWeights& weights);

/// Throws DataError when a moment centre falls outside [0, N_v).
TargetSet build_targets(std::span<const MomentAnnotation> moments, std::span<const double> saliency,
                        std::size_t num_clips, const LossWeights& weights);

/// Mean binary cross-entropy over clips; predictions are clamped to
/// [1e-7, 1 - 1e-7] (zero gradient outside).
Tensor saliency_loss(const Tensor& pred, std::span<const double> target);

/// Gaussian focal loss over the heatmap, normalised by the moment count.
/// Returns 0 (with a warning) when `num_moments` is zero.
Tensor focal_center_loss(const Tensor& pred, std::span<const double> target, std::size_t num_moments,
                         const LossWeights& weights);

struct RegressionLosses {
    Tensor window;
    Tensor offset;
};

/// Mean L1 window and offset errors, read only at the ground-truth centres.
RegressionLosses regression_losses(const Tensor& pred_window, const Tensor& pred_offset, const TargetSet& targets);

struct LossComponents {
    Tensor saliency;
    Tensor center;
    Tensor window;
    Tensor offset;
};

/// lambda_s L_s + lambda_c L_c + lambda_w L_w + lambda_o L_o
Tensor total_loss(const LossComponents& components, const LossWeights& weights);

struct LossBreakdown {
    LossComponents components;
    Tensor total;
};

LossBreakdown compute_losses(const RawPredictions& predictions, const TargetSet& targets,
                             const LossWeights& weights);

}  // namespace umt
