#pragma once

// Independent reference implementations used by the tests. Everything here is
// written with plain loops over std::vector and shares no code with the
// library beyond reading parameter values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "umt/attention.hpp"
#include "umt/metrics.hpp"
#include "umt/rng.hpp"
#include "umt/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline umt::Tensor random_tensor(umt::Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0,
                                 double hi = 2.0, bool requires_grad = false) {
    std::vector<double> v(rows * cols);
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return umt::Tensor::from({rows, cols}, std::move(v), requires_grad);
}

inline Matrix to_matrix(const umt::Tensor& t) {
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) {
            m[r][c] = t.at(r, c);
        }
    }
    return m;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    for (std::size_t r = 0; r < a.size(); ++r) {
        for (std::size_t c = 0; c < a[r].size(); ++c) {
            out[r][c] += b[r][c];
        }
    }
    return out;
}

inline Matrix first_rows(const Matrix& m, std::size_t n) { return Matrix(m.begin(), m.begin() + static_cast<long>(n)); }

/// y = x W (+ b) with W stored in x out, one output element at a time.
inline std::vector<double> linear_row(const std::vector<double>& x, const umt::Linear& layer) {
    const std::size_t in = layer.in_features();
    const std::size_t out = layer.out_features();
    std::vector<double> y(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        double acc = layer.bias.defined() ? layer.bias.at(o) : 0.0;
        for (std::size_t k = 0; k < in; ++k) {
            acc += x[k] * layer.weight.at(k * out + o);
        }
        y[o] = acc;
    }
    return y;
}

/// Row-wise (x - mean) / sqrt(var + 1e-5) * gain + bias.
inline Matrix layer_norm(const Matrix& x, const umt::LayerNorm& norm) {
    Matrix out = x;
    for (std::size_t r = 0; r < x.size(); ++r) {
        const double n = static_cast<double>(x[r].size());
        double mean = 0.0;
        for (double v : x[r]) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : x[r]) {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        for (std::size_t c = 0; c < x[r].size(); ++c) {
            out[r][c] = (x[r][c] - mean) / std::sqrt(var + 1e-5) * norm.gain.at(c) + norm.bias.at(c);
        }
    }
    return out;
}

/// sum_j softmax_j(q_i . k_j / scale) v_j per head, projected by the output
/// weights. Pure double loops over the attention formula.
inline Matrix attention(const Matrix& query_in, const Matrix& key_in, const Matrix& value_in,
                        const umt::AttentionParams& p) {
    const std::size_t d = p.model_dim();
    const std::size_t hd = d / p.heads;
    Matrix q, k, v;
    for (const auto& row : query_in) {
        q.push_back(linear_row(row, p.query));
    }
    for (const auto& row : key_in) {
        k.push_back(linear_row(row, p.key));
    }
    for (const auto& row : value_in) {
        v.push_back(linear_row(row, p.value));
    }
    const double scale = p.scaled ? std::sqrt(static_cast<double>(hd)) : 1.0;
    Matrix out;
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<double> mixed(d, 0.0);
        for (std::size_t h = 0; h < p.heads; ++h) {
            std::vector<double> score(k.size());
            for (std::size_t j = 0; j < k.size(); ++j) {
                double dot = 0.0;
                for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) {
                    dot += q[i][c] * k[j][c];
                }
                score[j] = dot / scale;
            }
            double denom = 0.0;
            for (std::size_t m = 0; m < k.size(); ++m) {
                denom += std::exp(score[m]);
            }
            for (std::size_t j = 0; j < k.size(); ++j) {
                const double weight = std::exp(score[j]) / denom;
                for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) {
                    mixed[c] += weight * v[j][c];
                }
            }
        }
        out.push_back(linear_row(mixed, p.output));
    }
    return out;
}

inline Matrix linear(const Matrix& x, const umt::Linear& layer) {
    Matrix out;
    for (const auto& row : x) {
        out.push_back(linear_row(row, layer));
    }
    return out;
}

/// Pre-norm residual blocks built from the loop primitives above.
inline Matrix self_attention_block(const Matrix& x, const umt::AttentionParams& p, const Matrix& pos,
                                   const umt::LayerNorm& norm) {
    const auto h = layer_norm(x, norm);
    const auto qk = add(h, first_rows(pos, x.size()));
    return add(x, attention(qk, qk, h, p));
}

inline Matrix compress_block(const Matrix& x, const Matrix& z, const umt::AttentionParams& p, const Matrix& pos,
                             const umt::LayerNorm& token_norm, const umt::LayerNorm& clip_norm) {
    const auto hz = layer_norm(z, token_norm);
    const auto hx = layer_norm(x, clip_norm);
    return add(z, attention(hz, add(hx, first_rows(pos, x.size())), hx, p));
}

inline Matrix expand_block(const Matrix& x, const Matrix& z, const umt::AttentionParams& p, const Matrix& pos,
                           const umt::LayerNorm& clip_norm, const umt::LayerNorm& token_norm) {
    const auto hx = layer_norm(x, clip_norm);
    const auto hz = layer_norm(z, token_norm);
    return add(x, attention(add(hx, first_rows(pos, x.size())), hz, hz, p));
}

inline Matrix feed_forward_block(const Matrix& x, const umt::FeedForwardParams& p, const umt::LayerNorm& norm) {
    auto hidden = linear(layer_norm(x, norm), p.expand);
    for (auto& row : hidden) {
        for (double& v : row) {
            v = std::max(v, 0.0);
        }
    }
    return add(x, linear(hidden, p.contract));
}

inline double max_abs_diff(const Matrix& a, const umt::Tensor& b) {
    double worst = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        for (std::size_t c = 0; c < a[r].size(); ++c) {
            worst = std::max(worst, std::abs(a[r][c] - b.at(r, c)));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Metric oracles.

inline double iou(double s1, double e1, double s2, double e2) {
    if (e1 <= s1 || e2 <= s2) {
        return 0.0;
    }
    const double lo = std::max(s1, s2);
    const double hi = std::min(e1, e2);
    if (hi <= lo) {
        return 0.0;
    }
    return (hi - lo) / (std::max(e1, e2) - std::min(s1, s2));
}

/// Indices of predictions in rank order by an O(n^2) selection sort.
inline std::vector<std::size_t> rank_order(const std::vector<umt::MomentPrediction>& preds) {
    std::vector<std::size_t> order;
    std::vector<bool> used(preds.size(), false);
    for (std::size_t step = 0; step < preds.size(); ++step) {
        std::size_t best = preds.size();
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (used[i]) {
                continue;
            }
            if (best == preds.size()) {
                best = i;
                continue;
            }
            const auto& a = preds[i];
            const auto& b = preds[best];
            const bool better = a.confidence > b.confidence || (a.confidence == b.confidence && a.start < b.start);
            if (better) {
                best = i;
            }
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

/// Interpolated AP: for every recall step, the best precision at any rank
/// achieving at least that recall.
inline double interpolated_ap(const std::vector<int>& tp_flags, std::size_t relevant) {
    if (relevant == 0) {
        return 0.0;
    }
    std::vector<double> precision, recall;
    int hits = 0;
    for (std::size_t i = 0; i < tp_flags.size(); ++i) {
        hits += tp_flags[i];
        precision.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
        recall.push_back(static_cast<double>(hits) / static_cast<double>(relevant));
    }
    double ap = 0.0;
    double previous_recall = 0.0;
    for (std::size_t i = 0; i < tp_flags.size(); ++i) {
        if (!tp_flags[i]) {
            continue;
        }
        double best = 0.0;
        for (std::size_t j = i; j < tp_flags.size(); ++j) {
            best = std::max(best, precision[j]);
        }
        ap += (recall[i] - previous_recall) * best;
        previous_recall = recall[i];
    }
    return ap;
}

inline double average_precision(const umt::QueryResult& q, double threshold) {
    const auto order = rank_order(q.predictions);
    std::vector<bool> taken(q.ground_truth.size(), false);
    std::vector<int> flags;
    for (std::size_t idx : order) {
        const auto& p = q.predictions[idx];
        int chosen = -1;
        double chosen_iou = 0.0;
        for (std::size_t g = 0; g < q.ground_truth.size(); ++g) {
            const double v = iou(p.start, p.end, q.ground_truth[g].start, q.ground_truth[g].end);
            if (!taken[g] && v >= threshold && (chosen < 0 || v > chosen_iou)) {
                chosen = static_cast<int>(g);
                chosen_iou = v;
            }
        }
        if (chosen >= 0) {
            taken[static_cast<std::size_t>(chosen)] = true;
        }
        flags.push_back(chosen >= 0 ? 1 : 0);
    }
    return interpolated_ap(flags, q.ground_truth.size());
}

inline double recall_at_k(const std::vector<umt::QueryResult>& queries, std::size_t k, double threshold) {
    int counted = 0;
    int hits = 0;
    for (const auto& q : queries) {
        if (q.ground_truth.empty()) {
            continue;
        }
        ++counted;
        const auto order = rank_order(q.predictions);
        bool hit = false;
        for (std::size_t r = 0; r < order.size() && r < k; ++r) {
            for (const auto& g : q.ground_truth) {
                const auto& p = q.predictions[order[r]];
                hit = hit || iou(p.start, p.end, g.start, g.end) >= threshold;
            }
        }
        hits += hit ? 1 : 0;
    }
    return counted == 0 ? 0.0 : static_cast<double>(hits) / counted;
}

/// Clip indices by descending score, ties by lower index, via selection.
inline std::vector<std::size_t> clip_order(const std::vector<double>& scores) {
    std::vector<std::size_t> order;
    std::vector<bool> used(scores.size(), false);
    for (std::size_t step = 0; step < scores.size(); ++step) {
        std::size_t best = scores.size();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (!used[i] && (best == scores.size() || scores[i] > scores[best])) {
                best = i;
            }
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

inline double highlight_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                           std::size_t depth) {
    const auto order = clip_order(scores);
    std::size_t positives = 0;
    for (auto l : labels) {
        positives += l ? 1 : 0;
    }
    std::vector<int> flags;
    for (std::size_t r = 0; r < order.size() && r < depth; ++r) {
        flags.push_back(labels[order[r]] ? 1 : 0);
    }
    return interpolated_ap(flags, std::min(positives, flags.size()));
}

}  // namespace oracle
