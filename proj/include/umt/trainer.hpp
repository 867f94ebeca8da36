#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "umt/decoding.hpp"
#include "umt/gradcheck.hpp"
#include "umt/losses.hpp"
#include "umt/metrics.hpp"
#include "umt/model.hpp"

namespace umt {

/// Which task's losses and metrics are active.
enum class Task { moment_retrieval, highlight, both };

std::string task_name(Task task);
Task parse_task(const std::string& name);

/// Loss weights with the inactive task's terms zeroed.
LossWeights task_weights(const LossWeights& weights, Task task);

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;  // decoupled from the gradient
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 8;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    LossWeights loss;
    Task task = Task::both;
    std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
    bool clip_gradients = false;
    double clip_norm = 10.0;  // global L2 norm, used when clip_gradients is set

    void validate() const;
};

/// Adaptive-moment optimizer with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
class AdamW {
public:
    AdamW(ParameterSet& params, const TrainConfig& config);

    /// One update from the gradients currently stored on the parameters.
    void step();
    std::size_t steps() const { return steps_; }

private:
    ParameterSet& params_;
    TrainConfig config_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::size_t steps_ = 0;
};

/// Global L2 norm of all parameter gradients.
double gradient_norm(const ParameterSet& params);

struct StepRecord {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double total = 0.0;
    double saliency = 0.0;
    double center = 0.0;
    double window = 0.0;
    double offset = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;  // mean per-sample total loss over the epoch
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;
};

struct TrainHooks {
    /// Called after every epoch with the updated model.
    std::function<void(const EpochRecord&, const UmtModel&)> on_epoch;
    /// Directory for periodic and final checkpoints; none when empty.
    std::filesystem::path checkpoint_dir;
};

/// Seeded mini-batch training. Each batch's loss is the mean of the
/// per-sample totals. Throws NumericError naming the batch on a non-finite
/// loss.
TrainResult train(UmtModel& model, const std::vector<VideoSample>& dataset, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Forward pass in inference mode.
RawPredictions infer(const UmtModel& model, const VideoSample& sample);

std::vector<PredictionRecord> predict(const UmtModel& model, const std::vector<VideoSample>& dataset,
                                      const DecodeOptions& options = {});

/// Ground-truth intervals of a sample in seconds, clipped to the video.
std::vector<Interval> ground_truth_intervals(const VideoSample& sample);

/// Metrics of dumped predictions against a dataset (matched by id).
EvalReport evaluate_records(const std::vector<PredictionRecord>& records, const std::vector<VideoSample>& dataset,
                            Task task);

/// Throws DataError when the task needs annotations the dataset lacks.
EvalReport evaluate(const UmtModel& model, const std::vector<VideoSample>& dataset, Task task,
                    const DecodeOptions& options = {});

/// Finite-difference check of the full training loss on one sample: dropout
/// off, gradients from one backward pass, `probes` distinct parameter
/// coordinates drawn uniformly from all scalar parameters.
GradCheckReport check_model_gradients(UmtModel& model, const VideoSample& sample, const LossWeights& weights,
                                      std::size_t probes, Rng& rng);

}  // namespace umt
