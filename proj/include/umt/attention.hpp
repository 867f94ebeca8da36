#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "umt/parameters.hpp"
#include "umt/rng.hpp"
#include "umt/tensor.hpp"

namespace umt {

/// Training flag and random source threaded through a forward pass.
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;

    /// ops::dropout with this context's mode; requires `rng` in training mode.
    Tensor dropout(const Tensor& x, double rate) const;
};

/// y = x W + b, W stored as in x out.
struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when the layer has no bias

    Tensor operator()(const Tensor& x) const;
    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }
};

/// Weights (and bias) uniform in [-1/sqrt(in), 1/sqrt(in)].
Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool with_bias = true);

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    Tensor operator()(const Tensor& x) const;
};

LayerNorm make_layer_norm(ParameterSet& params, const std::string& name, std::size_t dim);

/// Multi-head attention projections. The query/key/value/output transforms
/// carry no bias, matching the residual attention update
///   x_i' = x_i + W_z sum_j softmax_j(W_q x_i . W_k y_j) W_v y_j.
struct AttentionParams {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;
    /// Scale scores by 1/sqrt(head_dim). Disable for the literal unscaled form.
    bool scaled = true;
    double dropout = 0.0;

    std::size_t model_dim() const { return query.in_features(); }
    std::size_t head_dim() const { return model_dim() / heads; }
};

AttentionParams make_attention(ParameterSet& params, const std::string& name, std::size_t model_dim,
                               std::size_t heads, Rng& rng, bool scaled = true, double dropout = 0.0);

/// Learnable table of max_length x model_dim position vectors.
struct PositionalEncoding {
    Tensor table;
    double dropout = 0.0;

    std::size_t max_length() const { return table.shape()[0]; }
    /// First `length` rows (with dropout in training). Longer sequences are
    /// rejected with ShapeError.
    Tensor rows(std::size_t length, const ForwardContext& ctx) const;
};

PositionalEncoding make_positional_encoding(ParameterSet& params, const std::string& name, std::size_t max_length,
                                            std::size_t model_dim, Rng& rng, double dropout = 0.0);

/// N_b x model_dim learnable tokens that carry all cross-modal information.
struct BottleneckTokens {
    Tensor tokens;

    std::size_t count() const { return tokens.shape()[0]; }
};

BottleneckTokens make_bottleneck_tokens(ParameterSet& params, const std::string& name, std::size_t count,
                                        std::size_t model_dim, Rng& rng);

/// Two-layer position-wise MLP (Linear -> ReLU -> Dropout -> Linear) with 4x
/// hidden expansion.
struct FeedForwardParams {
    Linear expand;
    Linear contract;
    double dropout = 0.0;
};

FeedForwardParams make_feed_forward(ParameterSet& params, const std::string& name, std::size_t model_dim,
                                    Rng& rng, double dropout = 0.0);

/// Optional pre-normalisation for the two inputs of an attention block:
/// `query` normalises the updated stream, `memory` the attended stream.
struct PreNorm {
    const LayerNorm* query = nullptr;
    const LayerNorm* memory = nullptr;
};

/// Multi-head attention without the residual: W_z concat_h(softmax(Q_h K_h^T) V_h),
/// followed by output dropout.
Tensor attend(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in, const AttentionParams& params,
              const ForwardContext& ctx);

/// Residual self-attention. Positional encodings (when given) are added to the
/// query and key inputs only.
Tensor self_attention(const Tensor& x, const AttentionParams& params, const PositionalEncoding* pos,
                      const ForwardContext& ctx, const LayerNorm* norm = nullptr);

/// Aggregates a clip sequence into the bottleneck tokens `z`. Positional
/// encodings are added to the keys only. Returns the updated N_b x d tokens.
Tensor compress(const Tensor& x, const Tensor& z, const AttentionParams& params, const PositionalEncoding* pos,
                const ForwardContext& ctx, PreNorm norms = {});

/// Propagates bottleneck tokens back into a clip sequence. Positional
/// encodings are added to the queries only. Output has x's shape.
Tensor expand(const Tensor& x, const Tensor& z, const AttentionParams& params, const PositionalEncoding* pos,
              const ForwardContext& ctx, PreNorm norms = {});

/// Residual clip-to-clip cross-attention of x over memory (full quadratic
/// fusion). Positional encodings go on both queries and keys.
Tensor cross_attention(const Tensor& x, const Tensor& memory, const AttentionParams& params,
                       const PositionalEncoding* pos, const ForwardContext& ctx, PreNorm norms = {});

/// Residual feed-forward block.
Tensor feed_forward(const Tensor& x, const FeedForwardParams& params, const ForwardContext& ctx,
                    const LayerNorm* norm = nullptr);

/// Multiply-accumulate counts of one fusion step over `clips` clips.
struct FusionCost {
    std::uint64_t bottleneck = 0;  // compress then expand through the tokens
    std::uint64_t full = 0;        // clip-to-clip cross-attention
};

/// Runs both fusion variants on zero inputs with fresh weights and counts
/// their multiply-accumulates.
FusionCost measure_fusion_cost(std::size_t model_dim, std::size_t heads, std::size_t bottleneck_tokens,
                               std::size_t clips);

}  // namespace umt
