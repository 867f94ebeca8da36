#include "umt/model.hpp"

#include "umt/error.hpp"
#include "umt/ops.hpp"

namespace umt {

namespace {

UmtModel::EncoderLayer make_encoder_layer(ParameterSet& p, const std::string& name, const ModelConfig& c,
                                          Rng& rng) {
    return {make_layer_norm(p, name + ".attention_norm", c.model_dim),
            make_attention(p, name + ".attention", c.model_dim, c.heads, rng, c.scale_scores, c.dropout),
            make_layer_norm(p, name + ".ffn_norm", c.model_dim),
            make_feed_forward(p, name + ".ffn", c.model_dim, rng, c.dropout)};
}

UmtModel::UniModalEncoder make_uni_encoder(ParameterSet& p, const std::string& name, std::size_t input_dim,
                                           const ModelConfig& c, Rng& rng) {
    UmtModel::UniModalEncoder e;
    e.input = make_linear(p, name + ".input", input_dim, c.model_dim, rng);
    e.pos = make_positional_encoding(p, name + ".pos", c.max_length, c.model_dim, rng, c.dropout);
    for (std::size_t l = 0; l < c.uni_layers; ++l) {
        e.layers.push_back(make_encoder_layer(p, name + ".layer" + std::to_string(l), c, rng));
    }
    if (!c.two_modalities()) {
        e.output_norm = make_layer_norm(p, name + ".output_norm", c.model_dim);
    }
    return e;
}

UmtModel::CrossModalLayer make_cross_layer(ParameterSet& p, const std::string& name, const ModelConfig& c,
                                           Rng& rng) {
    auto attention = [&](const std::string& n) {
        return make_attention(p, name + "." + n, c.model_dim, c.heads, rng, c.scale_scores, c.dropout);
    };
    auto norm = [&](const std::string& n) { return make_layer_norm(p, name + "." + n, c.model_dim); };
    UmtModel::CrossModalLayer l;
    l.compress_visual = attention("compress_visual");
    l.compress_audio = c.share_compress_weights ? l.compress_visual : attention("compress_audio");
    l.compress_token_norm = norm("compress_token_norm");
    l.compress_visual_norm = norm("compress_visual_norm");
    l.compress_audio_norm = norm("compress_audio_norm");
    l.token_ffn_norm = norm("token_ffn_norm");
    l.token_ffn = make_feed_forward(p, name + ".token_ffn", c.model_dim, rng, c.dropout);
    l.expand_visual = attention("expand_visual");
    l.expand_audio = attention("expand_audio");
    l.expand_token_norm = norm("expand_token_norm");
    l.expand_visual_norm = norm("expand_visual_norm");
    l.expand_audio_norm = norm("expand_audio_norm");
    l.visual_ffn_norm = norm("visual_ffn_norm");
    l.visual_ffn = make_feed_forward(p, name + ".visual_ffn", c.model_dim, rng, c.dropout);
    l.audio_ffn_norm = norm("audio_ffn_norm");
    l.audio_ffn = make_feed_forward(p, name + ".audio_ffn", c.model_dim, rng, c.dropout);
    return l;
}

Tensor require_input(const Tensor& t, bool enabled, const char* modality, std::size_t dim) {
    if (!enabled) {
        return {};
    }
    if (!t.defined()) {
        throw ModalityError(std::string(modality) + " features are enabled in the model but absent");
    }
    if (t.ndim() != 2 || t.shape()[1] != dim) {
        throw ShapeError(std::string(modality) + " features have shape " + shape_string(t.shape()) +
                         ", model expects width " + std::to_string(dim));
    }
    return t;
}

}  // namespace

std::string fusion_merge_name(FusionMerge merge) {
    switch (merge) {
        case FusionMerge::sum:
            return "sum";
        case FusionMerge::concat:
            return "concat";
        case FusionMerge::mean:
            return "mean";
    }
    return "sum";
}

FusionMerge parse_fusion_merge(const std::string& name) {
    if (name == "sum") {
        return FusionMerge::sum;
    }
    if (name == "concat") {
        return FusionMerge::concat;
    }
    if (name == "mean") {
        return FusionMerge::mean;
    }
    throw ConfigError("unknown fusion merge '" + name + "' (expected sum, concat or mean)");
}

void ModelConfig::validate() const {
    if (!use_visual && !use_audio) {
        throw ConfigError("at least one of use_visual / use_audio must be enabled");
    }
    if (model_dim == 0 || heads == 0 || model_dim % heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) + " must be a positive multiple of heads " +
                          std::to_string(heads));
    }
    if (bottleneck_tokens == 0) {
        throw ConfigError("bottleneck_tokens must be at least 1");
    }
    if (max_length == 0) {
        throw ConfigError("max_length must be positive");
    }
    for (double rate : {dropout, pre_dropout_av, pre_dropout_text}) {
        if (!(rate >= 0.0 && rate < 1.0)) {
            throw ConfigError("dropout rates must lie in [0, 1)");
        }
    }
    if ((use_visual && visual_dim == 0) || (use_audio && audio_dim == 0) || (use_text && text_dim == 0)) {
        throw ConfigError("input widths must be set for every enabled modality");
    }
    if (use_text && generator_layers == 0) {
        throw ConfigError("generator_layers must be at least 1 when text is enabled");
    }
}

UmtModel::UmtModel(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)), init_seed_(init_seed) {
    config_.validate();
    const ModelConfig& c = config_;
    Rng rng(init_seed);
    if (c.use_visual) {
        visual_encoder_ = make_uni_encoder(params_, "visual_encoder", c.visual_dim, c, rng);
    }
    if (c.use_audio) {
        audio_encoder_ = make_uni_encoder(params_, "audio_encoder", c.audio_dim, c, rng);
    }
    if (c.two_modalities()) {
        CrossModalEncoder x;
        x.tokens = make_bottleneck_tokens(params_, "cross_encoder.tokens", c.bottleneck_tokens, c.model_dim, rng);
        x.pos = make_positional_encoding(params_, "cross_encoder.pos", c.max_length, c.model_dim, rng, c.dropout);
        for (std::size_t l = 0; l < c.cross_layers; ++l) {
            x.layers.push_back(make_cross_layer(params_, "cross_encoder.layer" + std::to_string(l), c, rng));
        }
        x.visual_output_norm = make_layer_norm(params_, "cross_encoder.visual_output_norm", c.model_dim);
        x.audio_output_norm = make_layer_norm(params_, "cross_encoder.audio_output_norm", c.model_dim);
        if (c.merge == FusionMerge::concat) {
            x.concat_projection = make_linear(params_, "cross_encoder.concat_projection", 2 * c.model_dim,
                                              c.model_dim, rng);
        }
        cross_encoder_ = std::move(x);
    }
    if (c.use_text) {
        generator_.text_input = make_linear(params_, "query_generator.text_input", c.text_dim, c.model_dim, rng);
        for (std::size_t l = 0; l < c.generator_layers; ++l) {
            const std::string name = "query_generator.layer" + std::to_string(l);
            generator_.layers.push_back({make_layer_norm(params_, name + ".query_norm", c.model_dim),
                                         make_layer_norm(params_, name + ".text_norm", c.model_dim),
                                         make_attention(params_, name + ".attention", c.model_dim, c.heads, rng,
                                                        c.scale_scores, c.dropout)});
        }
    } else {
        generator_.fallback_pos =
            make_positional_encoding(params_, "query_generator.pos", c.max_length, c.model_dim, rng, c.dropout);
    }
    decoder_.query_pos = make_positional_encoding(params_, "decoder.query_pos", c.max_length, c.model_dim, rng,
                                                  c.dropout);
    decoder_.key_pos = make_positional_encoding(params_, "decoder.key_pos", c.max_length, c.model_dim, rng,
                                                c.dropout);
    for (std::size_t l = 0; l < c.decoder_layers; ++l) {
        const std::string name = "decoder.layer" + std::to_string(l);
        DecoderLayer layer;
        layer.self_norm = make_layer_norm(params_, name + ".self_norm", c.model_dim);
        layer.self_attention =
            make_attention(params_, name + ".self_attention", c.model_dim, c.heads, rng, c.scale_scores, c.dropout);
        layer.cross_norm = make_layer_norm(params_, name + ".cross_norm", c.model_dim);
        layer.cross_attention = make_attention(params_, name + ".cross_attention", c.model_dim, c.heads, rng,
                                               c.scale_scores, c.dropout);
        layer.ffn_norm = make_layer_norm(params_, name + ".ffn_norm", c.model_dim);
        layer.ffn = make_feed_forward(params_, name + ".ffn", c.model_dim, rng, c.dropout);
        decoder_.layers.push_back(std::move(layer));
    }
    decoder_.output_norm = make_layer_norm(params_, "decoder.output_norm", c.model_dim);
    decoder_.saliency_head = make_linear(params_, "heads.saliency", c.model_dim, 1, rng);
    decoder_.center_head = make_linear(params_, "heads.center", c.model_dim, 1, rng);
    decoder_.window_head = make_linear(params_, "heads.window", c.model_dim, 1, rng);
    decoder_.offset_head = make_linear(params_, "heads.offset", c.model_dim, 1, rng);
}

ModalityInputs UmtModel::inputs_for(const VideoSample& sample) const {
    auto take = [&](const std::optional<FeatureSequence>& seq, bool enabled, const char* name) -> Tensor {
        if (!enabled) {
            return {};
        }
        if (!seq) {
            throw ModalityError("sample '" + sample.id + "' has no " + name + " features but the model uses them");
        }
        return seq->to_tensor();
    };
    ModalityInputs inputs;
    inputs.visual = take(sample.visual, config_.use_visual, "visual");
    inputs.audio = take(sample.audio, config_.use_audio, "audio");
    inputs.text = take(sample.text, config_.use_text, "text");
    return inputs;
}

Tensor UmtModel::encode_modality(const UniModalEncoder& encoder, const Tensor& input,
                                 const ForwardContext& ctx) const {
    Tensor x = encoder.input(ctx.dropout(input, config_.pre_dropout_av));
    for (const EncoderLayer& layer : encoder.layers) {
        x = self_attention(x, layer.attention, &encoder.pos, ctx, &layer.attention_norm);
        x = feed_forward(x, layer.ffn, ctx, &layer.ffn_norm);
    }
    return encoder.output_norm ? (*encoder.output_norm)(x) : x;
}

JointRepresentation UmtModel::encode(const ModalityInputs& inputs, const ForwardContext& ctx) const {
    const Tensor visual = require_input(inputs.visual, config_.use_visual, "visual", config_.visual_dim);
    const Tensor audio = require_input(inputs.audio, config_.use_audio, "audio", config_.audio_dim);
    if (!config_.two_modalities()) {
        return {config_.use_visual ? encode_modality(*visual_encoder_, visual, ctx)
                                   : encode_modality(*audio_encoder_, audio, ctx)};
    }
    if (visual.rows() != audio.rows()) {
        throw ShapeError("visual (" + std::to_string(visual.rows()) + " clips) and audio (" +
                         std::to_string(audio.rows()) + " clips) are not aligned");
    }
    const CrossModalEncoder& x = *cross_encoder_;
    if (x.tokens.count() > visual.rows()) {
        throw DataError("video has " + std::to_string(visual.rows()) + " clips, fewer than the " +
                        std::to_string(x.tokens.count()) + " bottleneck tokens");
    }
    Tensor v = encode_modality(*visual_encoder_, visual, ctx);
    Tensor a = encode_modality(*audio_encoder_, audio, ctx);
    Tensor z = x.tokens.tokens;
    for (const CrossModalLayer& l : x.layers) {
        z = compress(v, z, l.compress_visual, &x.pos, ctx, {&l.compress_token_norm, &l.compress_visual_norm});
        z = compress(a, z, l.compress_audio, &x.pos, ctx, {&l.compress_token_norm, &l.compress_audio_norm});
        z = feed_forward(z, l.token_ffn, ctx, &l.token_ffn_norm);
        v = expand(v, z, l.expand_visual, &x.pos, ctx, {&l.expand_visual_norm, &l.expand_token_norm});
        a = expand(a, z, l.expand_audio, &x.pos, ctx, {&l.expand_audio_norm, &l.expand_token_norm});
        v = feed_forward(v, l.visual_ffn, ctx, &l.visual_ffn_norm);
        a = feed_forward(a, l.audio_ffn, ctx, &l.audio_ffn_norm);
    }
    v = x.visual_output_norm(v);
    a = x.audio_output_norm(a);
    switch (config_.merge) {
        case FusionMerge::sum:
            return {ops::add(v, a)};
        case FusionMerge::mean:
            return {ops::scale(ops::add(v, a), 0.5)};
        case FusionMerge::concat:
            return {(*x.concat_projection)(ops::concat_cols({v, a}))};
    }
    return {ops::add(v, a)};
}

MomentQueries UmtModel::generate_queries(const JointRepresentation& joint, const Tensor& text,
                                         const ForwardContext& ctx) const {
    if (!config_.use_text) {
        return {ops::add(joint.values, generator_.fallback_pos->rows(joint.values.rows(), ctx))};
    }
    const Tensor raw = require_input(text, true, "text", config_.text_dim);
    const Tensor t = (*generator_.text_input)(ctx.dropout(raw, config_.pre_dropout_text));
    Tensor q = joint.values;
    for (const GeneratorLayer& layer : generator_.layers) {
        const Tensor kv = layer.text_norm(t);
        q = ops::add(q, attend(layer.query_norm(q), kv, kv, layer.attention, ctx));
    }
    return {q};
}

RawPredictions UmtModel::decode(const JointRepresentation& joint, const MomentQueries& queries,
                                const ForwardContext& ctx) const {
    const Tensor& memory = joint.values;
    Tensor q = queries.values;
    if (q.shape() != memory.shape()) {
        throw ShapeError("queries " + shape_string(q.shape()) + " and joint representation " +
                         shape_string(memory.shape()) + " are not aligned");
    }
    const std::size_t n = q.rows();
    const Tensor pos_q = decoder_.query_pos.rows(n, ctx);
    const Tensor pos_k = decoder_.key_pos.rows(n, ctx);
    const Tensor memory_keys = ops::add(memory, pos_k);
    for (const DecoderLayer& layer : decoder_.layers) {
        const Tensor h = layer.self_norm(q);
        q = ops::add(q, attend(ops::add(h, pos_q), ops::add(h, pos_k), h, layer.self_attention, ctx));
        const Tensor hc = layer.cross_norm(q);
        q = ops::add(q, attend(ops::add(hc, pos_q), memory_keys, memory, layer.cross_attention, ctx));
        q = feed_forward(q, layer.ffn, ctx, &layer.ffn_norm);
    }
    const Tensor d = decoder_.output_norm(q);
    RawPredictions out;
    out.saliency = ops::sigmoid(decoder_.saliency_head(d));
    out.heatmap = ops::sigmoid(decoder_.center_head(d));
    const Tensor window = decoder_.window_head(d);
    out.window = config_.positive_window ? ops::softplus(window) : window;
    out.offset = decoder_.offset_head(d);
    return out;
}

RawPredictions UmtModel::forward(const ModalityInputs& inputs, const ForwardContext& ctx) const {
    const JointRepresentation joint = encode(inputs, ctx);
    const MomentQueries queries = generate_queries(joint, config_.use_text ? inputs.text : Tensor{}, ctx);
    return decode(joint, queries, ctx);
}

RawPredictions UmtModel::forward(const VideoSample& sample, const ForwardContext& ctx) const {
    return forward(inputs_for(sample), ctx);
}

}  // namespace umt
