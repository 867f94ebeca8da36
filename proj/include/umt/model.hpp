#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "umt/attention.hpp"
#include "umt/features.hpp"
#include "umt/parameters.hpp"
#include "umt/tensor.hpp"

namespace umt {

/// How the two expanded modality streams merge into the joint representation.
enum class FusionMerge { sum, concat, mean };

std::string fusion_merge_name(FusionMerge merge);
FusionMerge parse_fusion_merge(const std::string& name);

struct ModelConfig {
    std::size_t model_dim = 256;
    std::size_t heads = 8;
    std::size_t uni_layers = 1;
    std::size_t cross_layers = 1;
    std::size_t decoder_layers = 3;
    std::size_t generator_layers = 1;
    std::size_t bottleneck_tokens = 4;
    std::size_t max_length = 512;
    double dropout = 0.1;
    double pre_dropout_av = 0.5;
    double pre_dropout_text = 0.3;
    bool use_visual = true;
    bool use_audio = true;
    bool use_text = true;
    // Raw feature widths of the inputs.
    std::size_t visual_dim = 0;
    std::size_t audio_dim = 0;
    std::size_t text_dim = 0;
    bool scale_scores = true;
    /// Softplus on the window head so predicted durations stay positive.
    bool positive_window = true;
    FusionMerge merge = FusionMerge::sum;
    bool share_compress_weights = false;

    bool two_modalities() const { return use_visual && use_audio; }
    void validate() const;
};

/// Input tensors for one forward pass; undefined tensors mean "absent".
struct ModalityInputs {
    Tensor visual;
    Tensor audio;
    Tensor text;
};

/// N_v x model_dim fused visual-audio sequence.
struct JointRepresentation {
    Tensor values;
};

/// N_v x model_dim clip-aligned decoder queries.
struct MomentQueries {
    Tensor values;
};

/// Per-clip head outputs, each an N_v x 1 column.
struct RawPredictions {
    Tensor saliency;  // sigmoid
    Tensor heatmap;   // sigmoid
    Tensor window;    // clips
    Tensor offset;    // clips

    std::size_t num_clips() const { return saliency.rows(); }
};

class UmtModel {
public:
    /// Builds every parameter of the enabled sub-networks from `init_seed`.
    UmtModel(ModelConfig config, std::uint64_t init_seed);

    const ModelConfig& config() const { return config_; }
    std::uint64_t init_seed() const { return init_seed_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    /// Inputs for the enabled modalities of `sample`. Throws ModalityError
    /// when an enabled modality is missing; disabled ones are never read.
    ModalityInputs inputs_for(const VideoSample& sample) const;

    JointRepresentation encode(const ModalityInputs& inputs, const ForwardContext& ctx) const;
    MomentQueries generate_queries(const JointRepresentation& joint, const Tensor& text,
                                   const ForwardContext& ctx) const;
    RawPredictions decode(const JointRepresentation& joint, const MomentQueries& queries,
                          const ForwardContext& ctx) const;

    RawPredictions forward(const ModalityInputs& inputs, const ForwardContext& ctx) const;
    RawPredictions forward(const VideoSample& sample, const ForwardContext& ctx) const;

    struct EncoderLayer {
        LayerNorm attention_norm;
        AttentionParams attention;
        LayerNorm ffn_norm;
        FeedForwardParams ffn;
    };

    struct UniModalEncoder {
        Linear input;
        PositionalEncoding pos;
        std::vector<EncoderLayer> layers;
        std::optional<LayerNorm> output_norm;  // only without the cross-modal encoder
    };

    struct CrossModalLayer {
        AttentionParams compress_visual;
        AttentionParams compress_audio;
        LayerNorm compress_token_norm;
        LayerNorm compress_visual_norm;
        LayerNorm compress_audio_norm;
        LayerNorm token_ffn_norm;
        FeedForwardParams token_ffn;
        AttentionParams expand_visual;
        AttentionParams expand_audio;
        LayerNorm expand_token_norm;
        LayerNorm expand_visual_norm;
        LayerNorm expand_audio_norm;
        LayerNorm visual_ffn_norm;
        FeedForwardParams visual_ffn;
        LayerNorm audio_ffn_norm;
        FeedForwardParams audio_ffn;
    };

    struct CrossModalEncoder {
        BottleneckTokens tokens;
        PositionalEncoding pos;
        std::vector<CrossModalLayer> layers;
        LayerNorm visual_output_norm;
        LayerNorm audio_output_norm;
        std::optional<Linear> concat_projection;
    };

    struct GeneratorLayer {
        LayerNorm query_norm;
        LayerNorm text_norm;
        AttentionParams attention;
    };

    struct QueryGenerator {
        std::optional<Linear> text_input;
        std::vector<GeneratorLayer> layers;
        std::optional<PositionalEncoding> fallback_pos;  // no-text mode
    };

    struct DecoderLayer {
        LayerNorm self_norm;
        AttentionParams self_attention;
        LayerNorm cross_norm;
        AttentionParams cross_attention;
        LayerNorm ffn_norm;
        FeedForwardParams ffn;
    };

    struct QueryDecoder {
        PositionalEncoding query_pos;
        PositionalEncoding key_pos;
        std::vector<DecoderLayer> layers;
        LayerNorm output_norm;
        Linear saliency_head;
        Linear center_head;
        Linear window_head;
        Linear offset_head;
    };

    const std::optional<UniModalEncoder>& visual_encoder() const { return visual_encoder_; }
    const std::optional<UniModalEncoder>& audio_encoder() const { return audio_encoder_; }
    const std::optional<CrossModalEncoder>& cross_encoder() const { return cross_encoder_; }
    const QueryGenerator& query_generator() const { return generator_; }
    const QueryDecoder& query_decoder() const { return decoder_; }

    /// Uni-modal stage alone: projection, pre-dropout, encoder layers and
    /// (single-modality mode) the output norm.
    Tensor encode_modality(const UniModalEncoder& encoder, const Tensor& input, const ForwardContext& ctx) const;

private:
    ModelConfig config_;
    std::uint64_t init_seed_ = 0;
    ParameterSet params_;
    std::optional<UniModalEncoder> visual_encoder_;
    std::optional<UniModalEncoder> audio_encoder_;
    std::optional<CrossModalEncoder> cross_encoder_;
    QueryGenerator generator_;
    QueryDecoder decoder_;
};

}  // namespace umt
