#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "umt/losses.hpp"
#include "umt/model.hpp"

namespace umt {

enum class CenterMode { local_maxima, all_clips };

std::string center_mode_name(CenterMode mode);
CenterMode parse_center_mode(const std::string& name);

/// Predicted interval in seconds with its heatmap confidence.
struct MomentPrediction {
    double start = 0.0;
    double end = 0.0;
    double confidence = 0.0;
};

inline constexpr std::size_t kDefaultTopK = 10;

/// Candidate centre indices ranked by heatmap score (ties: lower index).
/// local_maxima keeps indices whose score is >= both neighbours (boundary
/// clips compare with their single neighbour); all_clips keeps every index.
std::vector<std::size_t> extract_centers(std::span<const double> heatmap, CenterMode mode, std::size_t top_k);

/// For each centre c: refined centre c + offset[c], span (centre -/+ window[c]/2)
/// in clips, scaled to seconds and clipped to the video. Empty spans are
/// dropped. Sorted by confidence (heatmap[c]) descending, ties by lower index.
std::vector<MomentPrediction> compose_moments(std::span<const std::size_t> centers,
                                              std::span<const double> heatmap, std::span<const double> window,
                                              std::span<const double> offset, double clip_seconds);

/// Decodes ground-truth targets back into moments (clip units). Used to check
/// that target construction and decoding agree.
std::vector<MomentPrediction> roundtrip(const TargetSet& targets);

struct DecodeOptions {
    CenterMode mode = CenterMode::all_clips;
    std::size_t top_k = kDefaultTopK;
};

/// One (video, query) record of the JSON-lines prediction dump.
struct PredictionRecord {
    std::string id;
    double clip_seconds = 2.0;
    std::vector<MomentPrediction> moments;  // ranked
    std::vector<double> saliency;           // per clip
};

PredictionRecord decode_predictions(const std::string& id, const RawPredictions& raw, double clip_seconds,
                                    const DecodeOptions& options = {});

std::string to_json_line(const PredictionRecord& record);
PredictionRecord parse_json_line(const std::string& line);

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace umt
