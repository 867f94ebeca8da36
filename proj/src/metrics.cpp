#include "umt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "umt/error.hpp"

namespace umt {

double temporal_iou(const Interval& a, const Interval& b) {
    if (!(a.end > a.start) || !(b.end > b.start)) {
        return 0.0;
    }
    const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    if (inter <= 0.0) {
        return 0.0;
    }
    const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
    return inter / uni;
}

std::vector<MomentPrediction> rank_predictions(std::span<const MomentPrediction> predictions) {
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const MomentPrediction& pa = predictions[a];
        const MomentPrediction& pb = predictions[b];
        if (pa.confidence != pb.confidence) {
            return pa.confidence > pb.confidence;
        }
        if (pa.start != pb.start) {
            return pa.start < pb.start;
        }
        return a < b;
    });
    std::vector<MomentPrediction> ranked;
    ranked.reserve(order.size());
    for (std::size_t i : order) {
        ranked.push_back(predictions[i]);
    }
    return ranked;
}

double recall_at_k(std::span<const QueryResult> queries, std::size_t k, double threshold) {
    std::size_t counted = 0;
    std::size_t hits = 0;
    for (const QueryResult& q : queries) {
        if (q.ground_truth.empty()) {
            continue;
        }
        ++counted;
        const auto ranked = rank_predictions(q.predictions);
        const std::size_t limit = std::min(k, ranked.size());
        bool hit = false;
        for (std::size_t r = 0; r < limit && !hit; ++r) {
            for (const Interval& gt : q.ground_truth) {
                if (temporal_iou({ranked[r].start, ranked[r].end}, gt) >= threshold) {
                    hit = true;
                    break;
                }
            }
        }
        hits += hit ? 1 : 0;
    }
    return counted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(counted);
}

namespace {

// All-point interpolation: each true positive adds its recall increment times
// the precision envelope at its rank.
double interpolated_ap(const std::vector<bool>& is_tp, std::size_t relevant) {
    if (relevant == 0) {
        return 0.0;
    }
    const std::size_t n = is_tp.size();
    std::vector<double> precision(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += is_tp[i] ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    for (std::size_t i = n; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double previous_recall = 0.0;
    tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_tp[i]) {
            ++tp;
            const double recall = static_cast<double>(tp) / static_cast<double>(relevant);
            ap += (recall - previous_recall) * precision[i];
            previous_recall = recall;
        }
    }
    return ap;
}

std::vector<std::size_t> rank_scores(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

bool has_positive(const HighlightResult& v) {
    return std::any_of(v.positives.begin(), v.positives.end(), [](std::uint8_t p) { return p != 0; });
}

void require_aligned(const HighlightResult& v) {
    if (v.scores.size() != v.positives.size()) {
        throw ShapeError("highlight scores and labels differ in length (" + std::to_string(v.scores.size()) +
                         " vs " + std::to_string(v.positives.size()) + ")");
    }
}

}  // namespace

double average_precision(const QueryResult& query, double threshold) {
    const auto ranked = rank_predictions(query.predictions);
    std::vector<bool> matched(query.ground_truth.size(), false);
    std::vector<bool> is_tp(ranked.size(), false);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        double best = -1.0;
        std::size_t best_gt = 0;
        for (std::size_t g = 0; g < query.ground_truth.size(); ++g) {
            if (matched[g]) {
                continue;
            }
            const double iou = temporal_iou({ranked[r].start, ranked[r].end}, query.ground_truth[g]);
            if (iou >= threshold && iou > best) {
                best = iou;
                best_gt = g;
            }
        }
        if (best >= 0.0) {
            matched[best_gt] = true;
            is_tp[r] = true;
        }
    }
    return interpolated_ap(is_tp, query.ground_truth.size());
}

double mean_ap(std::span<const QueryResult> queries, double threshold) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const QueryResult& q : queries) {
        if (q.ground_truth.empty()) {
            continue;
        }
        total += average_precision(q, threshold);
        ++counted;
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

std::vector<double> map_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) {
        t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
    }
    return t;
}

double ranking_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 std::size_t depth) {
    if (scores.size() != labels.size()) {
        throw ShapeError("ranking_average_precision: scores and labels differ in length");
    }
    const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t p) { return p != 0; }));
    if (positives == 0) {
        throw DataError("ranking_average_precision: no positive labels");
    }
    const auto order = rank_scores(scores);
    const std::size_t n = std::min(depth, order.size());
    std::vector<bool> is_tp(n);
    for (std::size_t i = 0; i < n; ++i) {
        is_tp[i] = labels[order[i]] != 0;
    }
    return interpolated_ap(is_tp, std::min(n, positives));
}

HighlightMetrics highlight_metrics(std::span<const HighlightResult> videos) {
    HighlightMetrics out;
    double ap_total = 0.0;
    double hits = 0.0;
    for (const HighlightResult& v : videos) {
        require_aligned(v);
        if (!has_positive(v)) {
            continue;
        }
        ++out.videos;
        ap_total += ranking_average_precision(v.scores, v.positives, v.scores.size());
        hits += v.positives[rank_scores(v.scores).front()] != 0 ? 1.0 : 0.0;
    }
    if (out.videos > 0) {
        out.hd_map = ap_total / static_cast<double>(out.videos);
        out.hit_at_1 = hits / static_cast<double>(out.videos);
    }
    return out;
}

double top5_map(std::span<const HighlightResult> videos) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const HighlightResult& v : videos) {
        require_aligned(v);
        if (!has_positive(v)) {
            continue;
        }
        total += ranking_average_precision(v.scores, v.positives, 5);
        ++counted;
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

EvalReport::MomentMetrics moment_metrics(std::span<const QueryResult> queries) {
    EvalReport::MomentMetrics m;
    for (double t : {0.5, 0.7}) {
        m.r1_at.emplace_back(t, recall_at_k(queries, 1, t));
        m.r5_at.emplace_back(t, recall_at_k(queries, 5, t));
    }
    double sum = 0.0;
    for (double t : map_thresholds()) {
        const double v = mean_ap(queries, t);
        m.map_at.emplace_back(t, v);
        sum += v;
    }
    m.map_avg = sum / static_cast<double>(m.map_at.size());
    m.queries = static_cast<std::size_t>(
        std::count_if(queries.begin(), queries.end(), [](const QueryResult& q) { return !q.ground_truth.empty(); }));
    return m;
}

EvalReport::HighlightBlock highlight_block(std::span<const HighlightResult> videos) {
    const HighlightMetrics hm = highlight_metrics(videos);
    return {hm.hd_map, hm.hit_at_1, top5_map(videos), hm.videos};
}

namespace {

std::string threshold_key(double t) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", t);
    return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j = nlohmann::json::object();
    if (report.moment) {
        const auto& m = *report.moment;
        nlohmann::json mr;
        for (const auto& [name, values] : {std::pair{"r1_at", &m.r1_at}, std::pair{"r5_at", &m.r5_at},
                                           std::pair{"map_at", &m.map_at}}) {
            nlohmann::json block = nlohmann::json::object();
            for (const auto& [t, v] : *values) {
                block[threshold_key(t)] = v;
            }
            mr[name] = block;
        }
        mr["map_avg"] = m.map_avg;
        mr["queries"] = m.queries;
        j["moment_retrieval"] = mr;
    }
    if (report.highlight) {
        const auto& h = *report.highlight;
        j["highlight_detection"] = {
            {"hd_map", h.hd_map}, {"hit_at_1", h.hit_at_1}, {"top5_map", h.top5_map}, {"videos", h.videos}};
    }
    return j.dump(2);
}

std::string report_to_table(const EvalReport& report) {
    std::ostringstream out;
    char line[96];
    if (report.moment) {
        const auto& m = *report.moment;
        out << "moment retrieval (" << m.queries << " queries)\n";
        for (std::size_t i = 0; i < m.r1_at.size(); ++i) {
            std::snprintf(line, sizeof line, "  R1@%s  %7.4f    R5@%s  %7.4f\n", threshold_key(m.r1_at[i].first).c_str(),
                          m.r1_at[i].second, threshold_key(m.r5_at[i].first).c_str(), m.r5_at[i].second);
            out << line;
        }
        for (const auto& [t, v] : m.map_at) {
            std::snprintf(line, sizeof line, "  mAP@%s %7.4f\n", threshold_key(t).c_str(), v);
            out << line;
        }
        std::snprintf(line, sizeof line, "  mAP avg  %7.4f\n", m.map_avg);
        out << line;
    }
    if (report.highlight) {
        const auto& h = *report.highlight;
        out << "highlight detection (" << h.videos << " videos)\n";
        std::snprintf(line, sizeof line, "  mAP      %7.4f\n  HIT@1    %7.4f\n  top5 mAP %7.4f\n", h.hd_map,
                      h.hit_at_1, h.top5_map);
        out << line;
    }
    return out.str();
}

}  // namespace umt
