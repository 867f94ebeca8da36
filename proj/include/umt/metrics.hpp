#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umt/decoding.hpp"

namespace umt {

/// Closed time interval [start, end].
struct Interval {
    double start = 0.0;
    double end = 0.0;
};

/// |a ∩ b| / |a ∪ b|; 0 when disjoint or when either interval is degenerate.
double temporal_iou(const Interval& a, const Interval& b);

/// Ranked predictions and ground truths of one (video, query) pair.
struct QueryResult {
    std::vector<MomentPrediction> predictions;  // any order; ranked internally
    std::vector<Interval> ground_truth;
};

/// Predictions sorted by confidence descending, then earlier start, then
/// lower original index.
std::vector<MomentPrediction> rank_predictions(std::span<const MomentPrediction> predictions);

/// Fraction of queries (with at least one ground truth) whose top-k ranked
/// predictions reach IoU >= threshold with some ground truth.
double recall_at_k(std::span<const QueryResult> queries, std::size_t k, double threshold);

/// All-point interpolated AP of one query under greedy matching: each ranked
/// prediction claims the unmatched ground truth of highest IoU (ties: lower
/// index) when that IoU is >= threshold.
double average_precision(const QueryResult& query, double threshold);

/// Mean AP over queries with at least one ground truth; 0 when there are none.
double mean_ap(std::span<const QueryResult> queries, double threshold);

/// 0.5, 0.55, ..., 0.95.
std::vector<double> map_thresholds();

/// AP of `scores` ranked descending (ties: lower index) against binary labels,
/// over the first `depth` ranks. The denominator is min(depth, #positives).
/// Precondition: at least one positive.
double ranking_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 std::size_t depth);

/// Per-video saliency scores and positive flags.
struct HighlightResult {
    std::vector<double> scores;
    std::vector<std::uint8_t> positives;
};

struct HighlightMetrics {
    double hd_map = 0.0;
    double hit_at_1 = 0.0;
    std::size_t videos = 0;  // videos with at least one positive
};

/// Videos without positive clips are excluded from both averages.
HighlightMetrics highlight_metrics(std::span<const HighlightResult> videos);

/// AP restricted to each video's five highest-scored clips (all clips when
/// fewer than five), averaged over videos with at least one positive.
double top5_map(std::span<const HighlightResult> videos);

struct EvalReport {
    struct MomentMetrics {
        std::vector<std::pair<double, double>> r1_at;
        std::vector<std::pair<double, double>> r5_at;
        std::vector<std::pair<double, double>> map_at;
        double map_avg = 0.0;
        std::size_t queries = 0;
    };
    struct HighlightBlock {
        double hd_map = 0.0;
        double hit_at_1 = 0.0;
        double top5_map = 0.0;
        std::size_t videos = 0;
    };
    std::optional<MomentMetrics> moment;
    std::optional<HighlightBlock> highlight;
};

EvalReport::MomentMetrics moment_metrics(std::span<const QueryResult> queries);
EvalReport::HighlightBlock highlight_block(std::span<const HighlightResult> videos);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace umt
