#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "umt/error.hpp"
#include "umt/gradcheck.hpp"
#include "umt/losses.hpp"
#include "umt/model.hpp"
#include "umt/ops.hpp"

using namespace umt;

namespace {

const ForwardContext kEval{false, nullptr};

ModelConfig small_config() {
    ModelConfig c;
    c.model_dim = 8;
    c.heads = 2;
    c.decoder_layers = 2;
    c.bottleneck_tokens = 2;
    c.max_length = 80;
    c.visual_dim = 5;
    c.audio_dim = 3;
    c.text_dim = 4;
    return c;
}

VideoSample random_sample(Rng& rng, std::size_t clips, std::size_t tokens = 3) {
    VideoSample s;
    s.id = "v";
    auto seq = [&](Modality m, std::size_t n, std::size_t dim) {
        FeatureSequence f{m, n, dim, {}};
        for (std::size_t i = 0; i < n * dim; ++i) {
            f.values.push_back(rng.uniform(-1.0, 1.0));
        }
        return f;
    };
    s.visual = seq(Modality::visual, clips, 5);
    s.audio = seq(Modality::audio, clips, 3);
    s.text = seq(Modality::text, tokens, 4);
    s.saliency.assign(clips, 0.0);
    s.positives.assign(clips, 0);
    s.moments = {{static_cast<double>(clips) / 2.0, 2.0}};
    return s;
}

bool bit_identical(const RawPredictions& a, const RawPredictions& b) {
    return a.saliency.values() == b.saliency.values() && a.heatmap.values() == b.heatmap.values() &&
           a.window.values() == b.window.values() && a.offset.values() == b.offset.values();
}

bool has_prefix(const ParameterSet& p, const std::string& prefix) {
    for (const auto& entry : p.entries()) {
        if (entry.first.rfind(prefix, 0) == 0) {
            return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("defaults follow the reference configuration") {
    const ModelConfig c;
    CHECK(c.model_dim == 256);
    CHECK(c.heads == 8);
    CHECK(c.uni_layers == 1);
    CHECK(c.cross_layers == 1);
    CHECK(c.bottleneck_tokens == 4);
    CHECK(c.dropout == 0.1);
    CHECK(c.pre_dropout_av == 0.5);
    CHECK(c.pre_dropout_text == 0.3);
    CHECK(c.merge == FusionMerge::sum);
}

TEST_CASE("config validation") {
    ModelConfig c = small_config();
    c.use_visual = false;
    c.use_audio = false;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(parse_fusion_merge("product"), ConfigError);
    CHECK(parse_fusion_merge("concat") == FusionMerge::concat);
}

TEST_CASE("joint representation and predictions have N_v rows") {
    const UmtModel model(small_config(), 1);
    Rng rng(2);
    for (std::size_t n : {4, 16, 75}) {
        const VideoSample s = random_sample(rng, n);
        const ModalityInputs in = model.inputs_for(s);
        const JointRepresentation joint = model.encode(in, kEval);
        CHECK(joint.values.shape() == Shape{n, 8});
        const RawPredictions p = model.forward(s, kEval);
        CHECK(p.num_clips() == n);
        for (const Tensor* t : {&p.saliency, &p.heatmap, &p.window, &p.offset}) {
            CHECK(t->shape() == Shape{n, 1});
        }
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(p.saliency.at(i) > 0.0);
            CHECK(p.saliency.at(i) < 1.0);
            CHECK(p.heatmap.at(i) > 0.0);
            CHECK(p.heatmap.at(i) < 1.0);
            CHECK(p.window.at(i) > 0.0);
        }
    }
}

TEST_CASE("two-modality encode equals step-by-step block composition") {
    ModelConfig c = small_config();
    c.cross_layers = 2;
    const UmtModel model(c, 3);
    Rng rng(4);
    const VideoSample s = random_sample(rng, 6);
    const ModalityInputs in = model.inputs_for(s);
    const Tensor joint = model.encode(in, kEval).values;

    using oracle::Matrix;
    auto uni = [&](const UmtModel::UniModalEncoder& e, const Tensor& input) {
        Matrix h = oracle::linear(oracle::to_matrix(input), e.input);
        const Matrix pos = oracle::to_matrix(e.pos.table);
        for (const auto& layer : e.layers) {
            h = oracle::self_attention_block(h, layer.attention, pos, layer.attention_norm);
            h = oracle::feed_forward_block(h, layer.ffn, layer.ffn_norm);
        }
        return h;
    };
    CHECK_FALSE(model.visual_encoder()->output_norm.has_value());
    Matrix v = uni(*model.visual_encoder(), in.visual);
    Matrix a = uni(*model.audio_encoder(), in.audio);
    const auto& x = *model.cross_encoder();
    const Matrix pos = oracle::to_matrix(x.pos.table);
    Matrix z = oracle::to_matrix(x.tokens.tokens);
    for (const auto& l : x.layers) {
        z = oracle::compress_block(v, z, l.compress_visual, pos, l.compress_token_norm, l.compress_visual_norm);
        z = oracle::compress_block(a, z, l.compress_audio, pos, l.compress_token_norm, l.compress_audio_norm);
        z = oracle::feed_forward_block(z, l.token_ffn, l.token_ffn_norm);
        v = oracle::expand_block(v, z, l.expand_visual, pos, l.expand_visual_norm, l.expand_token_norm);
        a = oracle::expand_block(a, z, l.expand_audio, pos, l.expand_audio_norm, l.expand_token_norm);
        v = oracle::feed_forward_block(v, l.visual_ffn, l.visual_ffn_norm);
        a = oracle::feed_forward_block(a, l.audio_ffn, l.audio_ffn_norm);
    }
    const Matrix expected =
        oracle::add(oracle::layer_norm(v, x.visual_output_norm), oracle::layer_norm(a, x.audio_output_norm));
    CHECK(oracle::max_abs_diff(expected, joint) < 1e-10);
}

TEST_CASE("merge variants keep model_dim") {
    Rng rng(5);
    const VideoSample s = random_sample(rng, 5);
    for (FusionMerge m : {FusionMerge::concat, FusionMerge::mean}) {
        ModelConfig c = small_config();
        c.merge = m;
        const UmtModel model(c, 6);
        CHECK(model.encode(model.inputs_for(s), kEval).values.shape() == Shape{5, 8});
    }
    ModelConfig c = small_config();
    c.share_compress_weights = true;
    const UmtModel shared(c, 6);
    CHECK_FALSE(has_prefix(shared.parameters(), "cross_encoder.layer0.compress_audio."));
    CHECK(shared.forward(s, kEval).num_clips() == 5);
}

TEST_CASE("audio-only model ignores visual features bit for bit") {
    ModelConfig c = small_config();
    c.use_visual = false;
    const UmtModel model(c, 7);
    CHECK_FALSE(has_prefix(model.parameters(), "visual_encoder"));
    CHECK_FALSE(has_prefix(model.parameters(), "cross_encoder"));
    CHECK(model.audio_encoder()->output_norm.has_value());
    Rng rng(8);
    VideoSample s = random_sample(rng, 6);
    const RawPredictions before = model.forward(s, kEval);
    for (double& v : s.visual->values) {
        v += rng.normal();
    }
    CHECK(bit_identical(before, model.forward(s, kEval)));
    s.visual.reset();
    CHECK(bit_identical(before, model.forward(s, kEval)));
}

TEST_CASE("disabled modalities cost no parameters and no multiply-accumulates") {
    ModelConfig both = small_config();
    ModelConfig video_only = small_config();
    video_only.use_audio = false;
    const UmtModel full(both, 9);
    const UmtModel solo(video_only, 9);
    CHECK(solo.parameters().numel() < full.parameters().numel());
    CHECK_FALSE(has_prefix(solo.parameters(), "audio_encoder"));
    Rng rng(10);
    VideoSample s = random_sample(rng, 6);
    reset_mac_count();
    (void)solo.forward(s, kEval);
    const auto with_audio_present = mac_count();
    s.audio.reset();
    reset_mac_count();
    (void)solo.forward(s, kEval);
    CHECK(mac_count() == with_audio_present);
    reset_mac_count();
    (void)full.forward(random_sample(rng, 6), kEval);
    CHECK(mac_count() > with_audio_present);
}

TEST_CASE("no-text queries are joint plus positional rows") {
    ModelConfig c = small_config();
    c.use_text = false;
    const UmtModel model(c, 11);
    CHECK_FALSE(has_prefix(model.parameters(), "query_generator.text_input"));
    Rng rng(12);
    VideoSample s = random_sample(rng, 5);
    const JointRepresentation joint = model.encode(model.inputs_for(s), kEval);
    const MomentQueries q = model.generate_queries(joint, Tensor{}, kEval);
    const Tensor& table = model.query_generator().fallback_pos->table;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t k = 0; k < 8; ++k) {
            CHECK(q.values.at(i, k) == joint.values.at(i, k) + table.at(i, k));
        }
    }
    const RawPredictions before = model.forward(s, kEval);
    for (double& v : s.text->values) {
        v = 100.0;
    }
    CHECK(bit_identical(before, model.forward(s, kEval)));
}

TEST_CASE("single text token receives all attention weight") {
    const UmtModel model(small_config(), 13);
    Rng rng(14);
    const VideoSample s = random_sample(rng, 4, 1);
    const JointRepresentation joint = model.encode(model.inputs_for(s), kEval);
    const Tensor text = s.text->to_tensor();
    const MomentQueries q = model.generate_queries(joint, text, kEval);
    const auto& gen = model.query_generator();
    const auto& layer = gen.layers.front();
    const auto t = oracle::layer_norm(oracle::to_matrix((*gen.text_input)(text)), layer.text_norm);
    const auto shift = oracle::linear_row(oracle::linear_row(t[0], layer.attention.value), layer.attention.output);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t k = 0; k < 8; ++k) {
            CHECK(std::abs(q.values.at(i, k) - (joint.values.at(i, k) + shift[k])) < 1e-12);
        }
    }
}

TEST_CASE("query generator matches a naive cross-attention oracle") {
    ModelConfig c = small_config();
    c.bottleneck_tokens = 1;
    const UmtModel model(c, 15);
    Rng rng(16);
    const VideoSample s = random_sample(rng, 2, 2);
    const JointRepresentation joint = model.encode(model.inputs_for(s), kEval);
    const Tensor text = s.text->to_tensor();
    const MomentQueries q = model.generate_queries(joint, text, kEval);
    const auto& gen = model.query_generator();
    const auto& layer = gen.layers.front();
    const auto t = oracle::layer_norm(oracle::to_matrix((*gen.text_input)(text)), layer.text_norm);
    const auto r = oracle::to_matrix(joint.values);
    const auto expected = oracle::add(r, oracle::attention(oracle::layer_norm(r, layer.query_norm), t, t, layer.attention));
    CHECK(oracle::max_abs_diff(expected, q.values) < 1e-10);
}

TEST_CASE("decoder uses independent query and key positional tables") {
    const UmtModel model(small_config(), 17);
    const auto& dec = model.query_decoder();
    CHECK(dec.query_pos.table.node() != dec.key_pos.table.node());
    CHECK(dec.query_pos.table.values() != dec.key_pos.table.values());
    CHECK(dec.layers.size() == 2);
}

TEST_CASE("gradients reach text features from every head") {
    const UmtModel model(small_config(), 18);
    Rng rng(19);
    const VideoSample s = random_sample(rng, 5);
    ModalityInputs in = model.inputs_for(s);
    for (int head = 0; head < 4; ++head) {
        Tensor text = Tensor::from(in.text.shape(), in.text.values(), true);
        ModalityInputs local = in;
        local.text = text;
        const RawPredictions p = model.forward(local, kEval);
        const Tensor* outputs[] = {&p.saliency, &p.heatmap, &p.window, &p.offset};
        backward(ops::sum(*outputs[head]));
        double norm = 0.0;
        for (double g : text.grad()) {
            norm += g * g;
        }
        CHECK(norm > 0.0);
    }
}

TEST_CASE("missing modalities and too few clips are reported") {
    const UmtModel model(small_config(), 20);
    Rng rng(21);
    VideoSample s = random_sample(rng, 5);
    s.text.reset();
    CHECK_THROWS_AS(model.forward(s, kEval), ModalityError);
    s = random_sample(rng, 1);
    CHECK_THROWS_AS(model.forward(s, kEval), DataError);  // 1 clip < 2 bottleneck tokens
    ModalityInputs in = model.inputs_for(random_sample(rng, 5));
    in.audio = Tensor::zeros({4, 3});
    CHECK_THROWS_AS(model.encode(in, kEval), ShapeError);
}

TEST_CASE("evaluation forward is deterministic and training forward uses dropout") {
    const UmtModel model(small_config(), 22);
    Rng rng(23);
    const VideoSample s = random_sample(rng, 6);
    CHECK(bit_identical(model.forward(s, kEval), model.forward(s, kEval)));
    Rng d1(5);
    Rng d2(5);
    const RawPredictions t1 = model.forward(s, ForwardContext{true, &d1});
    const RawPredictions t2 = model.forward(s, ForwardContext{true, &d2});
    CHECK(bit_identical(t1, t2));
    CHECK_FALSE(bit_identical(t1, model.forward(s, kEval)));
}

TEST_CASE("same init seed gives identical parameters") {
    const UmtModel a(small_config(), 24);
    const UmtModel b(small_config(), 24);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters().entries()[i].first == b.parameters().entries()[i].first);
        CHECK(a.parameters().entries()[i].second.values() == b.parameters().entries()[i].second.values());
    }
}

TEST_CASE("full model loss passes gradcheck on sampled parameters") {
    ModelConfig c = small_config();
    c.decoder_layers = 1;
    UmtModel model(c, 25);
    Rng rng(26);
    VideoSample s = random_sample(rng, 4);
    s.saliency = {0.0, 0.7, 0.9, 0.0};
    s.moments = {{1.6, 2.0}};
    const LossWeights weights;
    const TargetSet targets = build_targets(s.moments, s.saliency, 4, weights);
    auto loss = [&] { return compute_losses(model.forward(s, kEval), targets, weights).total; };
    for (const auto& entry : model.parameters().entries()) {
        Tensor t = entry.second;
        t.set_requires_grad(true);
    }
    backward(loss());
    std::vector<GradProbe> probes;
    for (int i = 0; i < 60; ++i) {
        const auto& entry = model.parameters().entries()[rng.uniform_index(model.parameters().size())];
        probes.push_back({entry.first, entry.second, rng.uniform_index(entry.second.size())});
    }
    const auto report = compare_gradients(probes, [&] {
        const NoGradGuard guard;
        return loss().item();
    });
    CHECK(report.max_relative_error < 1e-4);
}
