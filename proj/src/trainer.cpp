#include "umt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "umt/checkpoint.hpp"
#include "umt/error.hpp"
#include "umt/log.hpp"
#include "umt/ops.hpp"

namespace umt {

namespace {

// Keeps dropout draws independent of the shuffling stream.
constexpr std::uint64_t kDropoutStream = 0x9E3779B97F4A7C15ULL;

bool has_moments(const std::vector<VideoSample>& dataset) {
    for (const VideoSample& s : dataset) {
        if (!s.moments.empty()) {
            return true;
        }
    }
    return false;
}

bool has_positives(const std::vector<VideoSample>& dataset) {
    for (const VideoSample& s : dataset) {
        for (std::uint8_t p : s.positives) {
            if (p != 0) {
                return true;
            }
        }
    }
    return false;
}

void require_annotations(const std::vector<VideoSample>& dataset, Task task) {
    if (task != Task::highlight && !has_moments(dataset)) {
        throw DataError("task " + task_name(task) + " needs moment annotations, the dataset has none");
    }
    if (task != Task::moment_retrieval && !has_positives(dataset)) {
        throw DataError("task " + task_name(task) + " needs positive highlight clips, the dataset has none");
    }
}

}  // namespace

std::string task_name(Task task) {
    switch (task) {
        case Task::moment_retrieval:
            return "mr";
        case Task::highlight:
            return "hd";
        case Task::both:
            return "both";
    }
    return "both";
}

Task parse_task(const std::string& name) {
    if (name == "mr") {
        return Task::moment_retrieval;
    }
    if (name == "hd") {
        return Task::highlight;
    }
    if (name == "both") {
        return Task::both;
    }
    throw ConfigError("unknown task '" + name + "' (expected mr, hd or both)");
}

LossWeights task_weights(const LossWeights& weights, Task task) {
    LossWeights out = weights;
    if (task == Task::moment_retrieval) {
        out.saliency = 0.0;
    } else if (task == Task::highlight) {
        out.center = 0.0;
        out.window = 0.0;
        out.offset = 0.0;
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0) || !std::isfinite(learning_rate) ||
        !std::isfinite(weight_decay)) {
        throw ConfigError("learning_rate and weight_decay must be finite and non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw ConfigError("betas must lie in [0, 1) and epsilon must be positive");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (clip_gradients && !(clip_norm > 0.0)) {
        throw ConfigError("clip_norm must be positive");
    }
    loss.validate();
}

AdamW::AdamW(ParameterSet& params, const TrainConfig& config) : params_(params), config_(config) {
    for (const auto& entry : params_.entries()) {
        first_.emplace_back(entry.second.size(), 0.0);
        second_.emplace_back(entry.second.size(), 0.0);
    }
}

void AdamW::step() {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    const double lr = config_.learning_rate;
    const auto& entries = params_.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        Tensor p = entries[k].second;
        if (!p.has_grad()) {
            continue;
        }
        auto values = p.mutable_data();
        const auto grad = p.mutable_grad();
        auto& m = first_[k];
        auto& v = second_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.epsilon) + config_.weight_decay * values[i]);
        }
    }
}

double gradient_norm(const ParameterSet& params) {
    double sq = 0.0;
    for (const auto& entry : params.entries()) {
        if (!entry.second.has_grad()) {
            continue;
        }
        for (double g : entry.second.grad()) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

TrainResult train(UmtModel& model, const std::vector<VideoSample>& dataset, const TrainConfig& config,
                  const TrainHooks& hooks) {
    config.validate();
    if (dataset.empty()) {
        throw DataError("cannot train on an empty dataset");
    }
    const LossWeights weights = task_weights(config.loss, config.task);
    ParameterSet& params = model.parameters();
    AdamW optimizer(params, config);
    Rng shuffle_rng(config.seed);
    Rng dropout_rng(config.seed ^ kDropoutStream);
    const ForwardContext ctx{true, &dropout_rng};

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    if (!hooks.checkpoint_dir.empty()) {
        std::filesystem::create_directories(hooks.checkpoint_dir);
    }

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_total = 0.0;
        std::size_t batch = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            params.zero_grad();
            StepRecord step{epoch, batch, 0.0, 0.0, 0.0, 0.0, 0.0};
            for (std::size_t i = begin; i < end; ++i) {
                const VideoSample& sample = dataset[order[i]];
                const std::string where =
                    "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + " (sample '" + sample.id + "')";
                LossBreakdown loss;
                try {
                    const RawPredictions raw = model.forward(sample, ctx);
                    const TargetSet targets =
                        build_targets(sample.moments, sample.saliency, sample.num_clips(), weights);
                    loss = compute_losses(raw, targets, weights);
                } catch (const NumericError& e) {
                    throw NumericError(std::string(e.what()) + " in " + where);
                }
                const double total = loss.total.item();
                if (!std::isfinite(total)) {
                    throw NumericError("non-finite loss in " + where);
                }
                step.total += total * inv_batch;
                step.saliency += loss.components.saliency.item() * inv_batch;
                step.center += loss.components.center.item() * inv_batch;
                step.window += loss.components.window.item() * inv_batch;
                step.offset += loss.components.offset.item() * inv_batch;
                if (loss.total.requires_grad()) {
                    backward(ops::scale(loss.total, inv_batch));
                }
            }
            if (config.clip_gradients) {
                const double norm = gradient_norm(params);
                if (norm > config.clip_norm) {
                    const double factor = config.clip_norm / norm;
                    for (const auto& entry : params.entries()) {
                        Tensor p = entry.second;
                        if (p.has_grad()) {
                            for (double& g : p.mutable_grad()) {
                                g *= factor;
                            }
                        }
                    }
                }
            }
            optimizer.step();
            epoch_total += step.total * static_cast<double>(end - begin);
            log_message(LogLevel::debug, "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) +
                                             " loss " + std::to_string(step.total) + " (saliency " +
                                             std::to_string(step.saliency) + ", center " +
                                             std::to_string(step.center) + ", window " +
                                             std::to_string(step.window) + ", offset " +
                                             std::to_string(step.offset) + ")");
            result.steps.push_back(step);
        }
        const EpochRecord record{epoch, epoch_total / static_cast<double>(dataset.size())};
        result.epochs.push_back(record);
        log_info("epoch " + std::to_string(epoch) + " mean loss " + std::to_string(record.mean_loss));
        if (hooks.on_epoch) {
            hooks.on_epoch(record, model);
        }
        if (!hooks.checkpoint_dir.empty() && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 &&
            epoch != config.epochs) {
            save_checkpoint(model, hooks.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"));
        }
    }
    if (!hooks.checkpoint_dir.empty()) {
        save_checkpoint(model, hooks.checkpoint_dir / "final.ckpt");
    }
    return result;
}

RawPredictions infer(const UmtModel& model, const VideoSample& sample) {
    const NoGradGuard guard;
    return model.forward(sample, ForwardContext{false, nullptr});
}

std::vector<PredictionRecord> predict(const UmtModel& model, const std::vector<VideoSample>& dataset,
                                      const DecodeOptions& options) {
    std::vector<PredictionRecord> records;
    records.reserve(dataset.size());
    for (const VideoSample& sample : dataset) {
        records.push_back(decode_predictions(sample.id, infer(model, sample), sample.clip_seconds, options));
    }
    return records;
}

std::vector<Interval> ground_truth_intervals(const VideoSample& sample) {
    const double extent = static_cast<double>(sample.num_clips()) * sample.clip_seconds;
    std::vector<Interval> out;
    for (const MomentAnnotation& m : sample.moments) {
        out.push_back({std::clamp(m.start() * sample.clip_seconds, 0.0, extent),
                       std::clamp(m.end() * sample.clip_seconds, 0.0, extent)});
    }
    return out;
}

EvalReport evaluate_records(const std::vector<PredictionRecord>& records, const std::vector<VideoSample>& dataset,
                            Task task) {
    require_annotations(dataset, task);
    std::unordered_map<std::string, const PredictionRecord*> by_id;
    for (const PredictionRecord& r : records) {
        by_id[r.id] = &r;
    }
    std::vector<QueryResult> queries;
    std::vector<HighlightResult> highlights;
    for (const VideoSample& sample : dataset) {
        const auto it = by_id.find(sample.id);
        if (it == by_id.end()) {
            throw DataError("no prediction record for sample '" + sample.id + "'");
        }
        const PredictionRecord& record = *it->second;
        if (task != Task::highlight) {
            queries.push_back({record.moments, ground_truth_intervals(sample)});
        }
        if (task != Task::moment_retrieval) {
            if (record.saliency.size() != sample.positives.size()) {
                throw ShapeError("prediction for '" + sample.id + "' has " + std::to_string(record.saliency.size()) +
                                 " saliency scores for " + std::to_string(sample.positives.size()) + " clips");
            }
            highlights.push_back({record.saliency, sample.positives});
        }
    }
    EvalReport report;
    if (task != Task::highlight) {
        report.moment = moment_metrics(queries);
    }
    if (task != Task::moment_retrieval) {
        report.highlight = highlight_block(highlights);
    }
    return report;
}

EvalReport evaluate(const UmtModel& model, const std::vector<VideoSample>& dataset, Task task,
                    const DecodeOptions& options) {
    require_annotations(dataset, task);
    return evaluate_records(predict(model, dataset, options), dataset, task);
}

GradCheckReport check_model_gradients(UmtModel& model, const VideoSample& sample, const LossWeights& weights,
                                      std::size_t probes, Rng& rng) {
    const ForwardContext ctx{false, nullptr};
    const TargetSet targets = build_targets(sample.moments, sample.saliency, sample.num_clips(), weights);
    const ModalityInputs inputs = model.inputs_for(sample);
    auto loss = [&] { return compute_losses(model.forward(inputs, ctx), targets, weights).total; };

    ParameterSet& params = model.parameters();
    params.zero_grad();
    backward(loss());

    const std::size_t total = params.numel();
    if (probes > total) {
        throw ConfigError("cannot probe " + std::to_string(probes) + " of " + std::to_string(total) +
                          " parameters");
    }
    // Partial Fisher-Yates over flat coordinates, mapped back to tensors.
    std::vector<std::size_t> flat(total);
    std::iota(flat.begin(), flat.end(), std::size_t{0});
    for (std::size_t i = 0; i < probes; ++i) {
        std::swap(flat[i], flat[i + rng.uniform_index(total - i)]);
    }
    std::sort(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(probes));
    std::vector<GradProbe> chosen;
    std::size_t offset = 0;
    std::size_t next = 0;
    for (const auto& [name, tensor] : params.entries()) {
        while (next < probes && flat[next] < offset + tensor.size()) {
            chosen.push_back({name, tensor, flat[next] - offset});
            ++next;
        }
        offset += tensor.size();
    }
    return compare_gradients(std::move(chosen), [&] {
        const NoGradGuard guard;
        return loss().item();
    });
}

}  // namespace umt
