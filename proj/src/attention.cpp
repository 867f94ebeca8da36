#include "umt/attention.hpp"

#include <cmath>
#include <vector>

#include "umt/error.hpp"
#include "umt/ops.hpp"

namespace umt {

namespace {

Tensor normalized(const Tensor& x, const LayerNorm* norm) { return norm ? (*norm)(x) : x; }

Tensor with_positions(const Tensor& x, const PositionalEncoding* pos, const ForwardContext& ctx) {
    return pos ? ops::add(x, pos->rows(x.rows(), ctx)) : x;
}

void require_width(const Tensor& x, std::size_t width, const char* what) {
    if (x.ndim() != 2 || x.shape()[1] != width) {
        throw ShapeError(std::string(what) + ": expected rows of width " + std::to_string(width) + ", got shape " +
                         shape_string(x.shape()));
    }
}

}  // namespace

Tensor ForwardContext::dropout(const Tensor& x, double rate) const {
    if (!training || rate == 0.0) {
        return x;
    }
    if (rng == nullptr) {
        throw StateError("training-mode dropout requires a random source");
    }
    return ops::dropout(x, rate, *rng, true);
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = ops::matmul(x, weight);
    return bias.defined() ? ops::add_row(y, bias) : y;
}

Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear layer;
    layer.weight = params.add_uniform(name + ".weight", {in, out}, bound, rng);
    if (with_bias) {
        layer.bias = params.add_uniform(name + ".bias", {out}, bound, rng);
    }
    return layer;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias); }

LayerNorm make_layer_norm(ParameterSet& params, const std::string& name, std::size_t dim) {
    return {params.add_constant(name + ".gain", {dim}, 1.0), params.add_constant(name + ".bias", {dim}, 0.0)};
}

AttentionParams make_attention(ParameterSet& params, const std::string& name, std::size_t model_dim,
                               std::size_t heads, Rng& rng, bool scaled, double dropout) {
    if (heads == 0 || model_dim % heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    AttentionParams a;
    a.query = make_linear(params, name + ".w_q", model_dim, model_dim, rng, false);
    a.key = make_linear(params, name + ".w_k", model_dim, model_dim, rng, false);
    a.value = make_linear(params, name + ".w_v", model_dim, model_dim, rng, false);
    a.output = make_linear(params, name + ".w_z", model_dim, model_dim, rng, false);
    a.heads = heads;
    a.scaled = scaled;
    a.dropout = dropout;
    return a;
}

Tensor PositionalEncoding::rows(std::size_t length, const ForwardContext& ctx) const {
    if (length > max_length()) {
        throw ShapeError("sequence of length " + std::to_string(length) + " exceeds the positional table (" +
                         std::to_string(max_length()) + " rows)");
    }
    return ctx.dropout(ops::slice_rows(table, 0, length), dropout);
}

PositionalEncoding make_positional_encoding(ParameterSet& params, const std::string& name, std::size_t max_length,
                                            std::size_t model_dim, Rng& rng, double dropout) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(model_dim));
    return {params.add_uniform(name + ".table", {max_length, model_dim}, bound, rng), dropout};
}

BottleneckTokens make_bottleneck_tokens(ParameterSet& params, const std::string& name, std::size_t count,
                                        std::size_t model_dim, Rng& rng) {
    if (count == 0) {
        throw ConfigError("at least one bottleneck token is required");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(model_dim));
    return {params.add_uniform(name, {count, model_dim}, bound, rng)};
}

FeedForwardParams make_feed_forward(ParameterSet& params, const std::string& name, std::size_t model_dim, Rng& rng,
                                    double dropout) {
    FeedForwardParams f;
    f.expand = make_linear(params, name + ".linear1", model_dim, 4 * model_dim, rng);
    f.contract = make_linear(params, name + ".linear2", 4 * model_dim, model_dim, rng);
    f.dropout = dropout;
    return f;
}

Tensor attend(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in, const AttentionParams& params,
              const ForwardContext& ctx) {
    const std::size_t d = params.model_dim();
    require_width(query_in, d, "attention query");
    require_width(key_in, d, "attention key");
    require_width(value_in, d, "attention value");
    if (key_in.rows() != value_in.rows() || key_in.rows() == 0) {
        throw ShapeError("attention keys " + shape_string(key_in.shape()) + " and values " +
                         shape_string(value_in.shape()) + " must be non-empty and aligned");
    }
    const Tensor q = params.query(query_in);
    const Tensor k = params.key(key_in);
    const Tensor v = params.value(value_in);
    const std::size_t hd = params.head_dim();
    const double factor = params.scaled ? 1.0 / std::sqrt(static_cast<double>(hd)) : 1.0;
    std::vector<Tensor> heads;
    heads.reserve(params.heads);
    for (std::size_t h = 0; h < params.heads; ++h) {
        const Tensor qh = ops::slice_cols(q, h * hd, hd);
        const Tensor kh = ops::slice_cols(k, h * hd, hd);
        const Tensor vh = ops::slice_cols(v, h * hd, hd);
        Tensor scores = ops::matmul(qh, ops::transpose(kh));
        if (factor != 1.0) {
            scores = ops::scale(scores, factor);
        }
        heads.push_back(ops::matmul(ops::softmax(scores, 1), vh));
    }
    const Tensor merged = params.heads == 1 ? heads.front() : ops::concat_cols(heads);
    return ctx.dropout(params.output(merged), params.dropout);
}

Tensor self_attention(const Tensor& x, const AttentionParams& params, const PositionalEncoding* pos,
                      const ForwardContext& ctx, const LayerNorm* norm) {
    const Tensor h = normalized(x, norm);
    const Tensor qk = with_positions(h, pos, ctx);
    return ops::add(x, attend(qk, qk, h, params, ctx));
}

Tensor compress(const Tensor& x, const Tensor& z, const AttentionParams& params, const PositionalEncoding* pos,
                const ForwardContext& ctx, PreNorm norms) {
    if (x.rows() == 0) {
        throw ShapeError("compress: empty clip sequence");
    }
    const Tensor hz = normalized(z, norms.query);
    const Tensor hx = normalized(x, norms.memory);
    return ops::add(z, attend(hz, with_positions(hx, pos, ctx), hx, params, ctx));
}

Tensor expand(const Tensor& x, const Tensor& z, const AttentionParams& params, const PositionalEncoding* pos,
              const ForwardContext& ctx, PreNorm norms) {
    const Tensor hx = normalized(x, norms.query);
    const Tensor hz = normalized(z, norms.memory);
    return ops::add(x, attend(with_positions(hx, pos, ctx), hz, hz, params, ctx));
}

Tensor cross_attention(const Tensor& x, const Tensor& memory, const AttentionParams& params,
                       const PositionalEncoding* pos, const ForwardContext& ctx, PreNorm norms) {
    const Tensor hx = normalized(x, norms.query);
    const Tensor hm = normalized(memory, norms.memory);
    return ops::add(x, attend(with_positions(hx, pos, ctx), with_positions(hm, pos, ctx), hm, params, ctx));
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& params, const ForwardContext& ctx,
                    const LayerNorm* norm) {
    const Tensor h = normalized(x, norm);
    const Tensor hidden = ctx.dropout(ops::relu(params.expand(h)), params.dropout);
    return ops::add(x, ctx.dropout(params.contract(hidden), params.dropout));
}

FusionCost measure_fusion_cost(std::size_t model_dim, std::size_t heads, std::size_t bottleneck_tokens,
                               std::size_t clips) {
    ParameterSet params;
    Rng rng(0);
    const AttentionParams att = make_attention(params, "fusion", model_dim, heads, rng);
    const ForwardContext ctx{false, nullptr};
    const NoGradGuard guard;
    const Tensor x = Tensor::zeros({clips, model_dim});
    const Tensor z = Tensor::zeros({bottleneck_tokens, model_dim});
    FusionCost cost;
    reset_mac_count();
    (void)expand(x, compress(x, z, att, nullptr, ctx), att, nullptr, ctx);
    cost.bottleneck = mac_count();
    reset_mac_count();
    (void)cross_attention(x, x, att, nullptr, ctx);
    cost.full = mac_count();
    reset_mac_count();
    return cost;
}

}  // namespace umt
