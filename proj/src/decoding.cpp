#include "umt/decoding.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "umt/error.hpp"

namespace umt {

namespace {

using nlohmann::json;

// Higher score first, lower index on ties.
void rank_by_score(std::vector<std::size_t>& indices, std::span<const double> scores) {
    std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    });
}

}  // namespace

std::string center_mode_name(CenterMode mode) { return mode == CenterMode::all_clips ? "all_clips" : "local_maxima"; }

CenterMode parse_center_mode(const std::string& name) {
    if (name == "all_clips") {
        return CenterMode::all_clips;
    }
    if (name == "local_maxima") {
        return CenterMode::local_maxima;
    }
    throw ConfigError("unknown centre mode '" + name + "' (expected all_clips or local_maxima)");
}

std::vector<std::size_t> extract_centers(std::span<const double> heatmap, CenterMode mode, std::size_t top_k) {
    if (top_k == 0) {
        throw ConfigError("extract_centers: top_k must be at least 1");
    }
    const std::size_t n = heatmap.size();
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < n; ++i) {
        if (mode == CenterMode::local_maxima) {
            const bool left_ok = i == 0 || heatmap[i] >= heatmap[i - 1];
            const bool right_ok = i + 1 == n || heatmap[i] >= heatmap[i + 1];
            if (!(left_ok && right_ok)) {
                continue;
            }
        }
        picked.push_back(i);
    }
    rank_by_score(picked, heatmap);
    if (picked.size() > top_k) {
        picked.resize(top_k);
    }
    return picked;
}

std::vector<MomentPrediction> compose_moments(std::span<const std::size_t> centers,
                                              std::span<const double> heatmap, std::span<const double> window,
                                              std::span<const double> offset, double clip_seconds) {
    const std::size_t n = heatmap.size();
    if (window.size() != n || offset.size() != n) {
        throw ShapeError("compose_moments: heatmap, window and offset lengths differ");
    }
    const double extent = static_cast<double>(n) * clip_seconds;
    std::vector<std::size_t> order(centers.begin(), centers.end());
    for (std::size_t c : order) {
        if (c >= n) {
            throw ShapeError("compose_moments: centre index " + std::to_string(c) + " out of range");
        }
    }
    rank_by_score(order, heatmap);
    std::vector<MomentPrediction> out;
    out.reserve(order.size());
    for (std::size_t c : order) {
        const double centre = static_cast<double>(c) + offset[c];
        const double half = window[c] / 2.0;
        const double start = std::clamp((centre - half) * clip_seconds, 0.0, extent);
        const double end = std::clamp((centre + half) * clip_seconds, 0.0, extent);
        if (!(end > start)) {
            continue;
        }
        out.push_back({start, end, heatmap[c]});
    }
    return out;
}

std::vector<MomentPrediction> roundtrip(const TargetSet& targets) {
    const std::size_t n = targets.heatmap.size();
    if (targets.num_moments() == 0) {
        return {};
    }
    std::vector<double> window(n, 0.0);
    std::vector<double> offset(n, 0.0);
    for (std::size_t k = 0; k < targets.num_moments(); ++k) {
        window[targets.center_indices[k]] = targets.window_targets[k];
        offset[targets.center_indices[k]] = targets.offset_targets[k];
    }
    const auto centers = extract_centers(targets.heatmap, CenterMode::local_maxima, targets.num_moments());
    return compose_moments(centers, targets.heatmap, window, offset, 1.0);
}

PredictionRecord decode_predictions(const std::string& id, const RawPredictions& raw, double clip_seconds,
                                    const DecodeOptions& options) {
    const auto heatmap = raw.heatmap.data();
    const auto centers = extract_centers(heatmap, options.mode, options.top_k);
    PredictionRecord record;
    record.id = id;
    record.clip_seconds = clip_seconds;
    record.moments = compose_moments(centers, heatmap, raw.window.data(), raw.offset.data(), clip_seconds);
    record.saliency = raw.saliency.values();
    return record;
}

std::string to_json_line(const PredictionRecord& record) {
    json j;
    j["id"] = record.id;
    j["clip_seconds"] = record.clip_seconds;
    j["num_clips"] = record.saliency.size();
    j["moments"] = json::array();
    for (const MomentPrediction& m : record.moments) {
        j["moments"].push_back({m.start, m.end, m.confidence});
    }
    j["saliency"] = record.saliency;
    return j.dump();
}

PredictionRecord parse_json_line(const std::string& line) {
    PredictionRecord record;
    try {
        const json j = json::parse(line);
        record.id = j.at("id").get<std::string>();
        record.clip_seconds = j.at("clip_seconds").get<double>();
        for (const json& m : j.at("moments")) {
            if (!m.is_array() || m.size() != 3) {
                throw DataError("prediction '" + record.id + "': moments must be [start, end, confidence]");
            }
            record.moments.push_back({m[0].get<double>(), m[1].get<double>(), m[2].get<double>()});
        }
        record.saliency = j.at("saliency").get<std::vector<double>>();
        if (j.contains("num_clips") && j["num_clips"].get<std::size_t>() != record.saliency.size()) {
            throw DataError("prediction '" + record.id + "': num_clips disagrees with saliency length");
        }
    } catch (const json::exception& e) {
        throw DataError("malformed prediction record: " + std::string(e.what()));
    }
    return record;
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write predictions to " + path.string());
    }
    for (const PredictionRecord& r : records) {
        out << to_json_line(r) << '\n';
    }
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open predictions " + path.string());
    }
    std::vector<PredictionRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        records.push_back(parse_json_line(line));
    }
    return records;
}

}  // namespace umt
