#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "umt/attention.hpp"
#include "umt/error.hpp"
#include "umt/gradcheck.hpp"
#include "umt/ops.hpp"

using namespace umt;

namespace {

const ForwardContext kEval{false, nullptr};

struct Fixture {
    ParameterSet params;
    Rng rng{99};
    AttentionParams attention;
    PositionalEncoding pos;
    LayerNorm norm_a;
    LayerNorm norm_b;

    Fixture(std::size_t dim, std::size_t heads, bool scaled = true) {
        attention = make_attention(params, "att", dim, heads, rng, scaled);
        pos = make_positional_encoding(params, "pos", 16, dim, rng);
        norm_a = make_layer_norm(params, "norm_a", dim);
        norm_b = make_layer_norm(params, "norm_b", dim);
        // Non-trivial affine parameters so the oracle exercises them.
        for (Tensor t : {norm_a.gain, norm_a.bias, norm_b.gain, norm_b.bias}) {
            for (double& v : t.mutable_data()) {
                v += rng.uniform(-0.5, 0.5);
            }
        }
    }
};

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) { return ops::gather_rows(x, perm); }

}  // namespace

TEST_CASE("self attention matches the loop oracle on random instances") {
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t heads = 1 + trial % 2;
        const bool scaled = trial % 3 != 0;
        Fixture f(4, heads, scaled);
        const std::size_t n = 1 + rng.uniform_index(8);
        const Tensor x = oracle::random_tensor(rng, n, 4);
        const Tensor out = self_attention(x, f.attention, &f.pos, kEval, &f.norm_a);

        const auto h = oracle::layer_norm(oracle::to_matrix(x), f.norm_a);
        const auto qk = oracle::add(h, oracle::first_rows(oracle::to_matrix(f.pos.table), n));
        const auto expected = oracle::add(oracle::to_matrix(x), oracle::attention(qk, qk, h, f.attention));
        CHECK(oracle::max_abs_diff(expected, out) < 1e-10);
    }
}

TEST_CASE("compress matches the loop oracle with positions on keys only") {
    Rng rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        Fixture f(4, 1 + trial % 2, trial % 2 == 0);
        const std::size_t n = 1 + rng.uniform_index(8);
        const std::size_t nb = 1 + rng.uniform_index(4);
        const Tensor x = oracle::random_tensor(rng, n, 4);
        const Tensor z = oracle::random_tensor(rng, nb, 4);
        const Tensor out = compress(x, z, f.attention, &f.pos, kEval, {&f.norm_a, &f.norm_b});

        const auto hz = oracle::layer_norm(oracle::to_matrix(z), f.norm_a);
        const auto hx = oracle::layer_norm(oracle::to_matrix(x), f.norm_b);
        const auto keys = oracle::add(hx, oracle::first_rows(oracle::to_matrix(f.pos.table), n));
        const auto expected = oracle::add(oracle::to_matrix(z), oracle::attention(hz, keys, hx, f.attention));
        CHECK(out.shape() == Shape{nb, 4});
        CHECK(oracle::max_abs_diff(expected, out) < 1e-10);
    }
}

TEST_CASE("expand matches the loop oracle with positions on queries only") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        Fixture f(4, 1 + trial % 2);
        const std::size_t n = 1 + rng.uniform_index(8);
        const std::size_t nb = 1 + rng.uniform_index(4);
        const Tensor x = oracle::random_tensor(rng, n, 4);
        const Tensor z = oracle::random_tensor(rng, nb, 4);
        const Tensor out = expand(x, z, f.attention, &f.pos, kEval, {&f.norm_a, &f.norm_b});

        const auto hx = oracle::layer_norm(oracle::to_matrix(x), f.norm_a);
        const auto hz = oracle::layer_norm(oracle::to_matrix(z), f.norm_b);
        const auto queries = oracle::add(hx, oracle::first_rows(oracle::to_matrix(f.pos.table), n));
        const auto expected = oracle::add(oracle::to_matrix(x), oracle::attention(queries, hz, hz, f.attention));
        CHECK(out.shape() == x.shape());
        CHECK(oracle::max_abs_diff(expected, out) < 1e-10);
    }
}

TEST_CASE("single clip self attention is x + Wz Wv x") {
    Fixture f(4, 2);
    Rng rng(4);
    const Tensor x = oracle::random_tensor(rng, 1, 4);
    const Tensor out = self_attention(x, f.attention, nullptr, kEval);
    const auto v = oracle::linear_row(oracle::to_matrix(x)[0], f.attention.value);
    const auto y = oracle::linear_row(v, f.attention.output);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(out.at(0, c) == doctest::Approx(x.at(0, c) + y[c]).epsilon(1e-13));
    }
}

TEST_CASE("self attention without positions is permutation equivariant") {
    Fixture f(6, 2);
    Rng rng(5);
    const Tensor x = oracle::random_tensor(rng, 5, 6);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const Tensor a = permute_rows(self_attention(x, f.attention, nullptr, kEval, &f.norm_a), perm);
    const Tensor b = self_attention(permute_rows(x, perm), f.attention, nullptr, kEval, &f.norm_a);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-13));
    }
    const Tensor z = oracle::random_tensor(rng, 2, 6);
    const Tensor e1 = permute_rows(expand(x, z, f.attention, nullptr, kEval), perm);
    const Tensor e2 = expand(permute_rows(x, perm), z, f.attention, nullptr, kEval);
    for (std::size_t i = 0; i < e1.size(); ++i) {
        CHECK(e1.at(i) == doctest::Approx(e2.at(i)).epsilon(1e-13));
    }
}

TEST_CASE("compress over identical clips adds Wz Wv c to every token") {
    Fixture f(4, 2);
    Rng rng(6);
    const std::vector<double> c = {0.3, -1.2, 0.8, 2.0};
    std::vector<double> rows;
    for (int i = 0; i < 5; ++i) {
        rows.insert(rows.end(), c.begin(), c.end());
    }
    const Tensor x = Tensor::from({5, 4}, rows);
    const Tensor z = oracle::random_tensor(rng, 3, 4);
    const Tensor out = compress(x, z, f.attention, nullptr, kEval);
    const auto shift = oracle::linear_row(oracle::linear_row(c, f.attention.value), f.attention.output);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(out.at(i, k) == doctest::Approx(z.at(i, k) + shift[k]).epsilon(1e-13));
        }
    }
}

TEST_CASE("compress with one token and two clips matches hand evaluation") {
    ParameterSet params;
    AttentionParams p;
    p.heads = 1;
    p.scaled = false;
    p.query.weight = Tensor::from({2, 2}, {1, 0, 0, 1});
    p.key.weight = Tensor::from({2, 2}, {1, 0, 0, 1});
    p.value.weight = Tensor::from({2, 2}, {2, 0, 0, 2});
    p.output.weight = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor z = Tensor::from({1, 2}, {1, 0});
    const Tensor x = Tensor::from({2, 2}, {1, 0, 0, 1});
    // scores: z.x0 = 1, z.x1 = 0 -> weights e/(e+1), 1/(e+1)
    const double w0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
    const double w1 = 1.0 / (std::exp(1.0) + 1.0);
    const Tensor out = compress(x, z, p, nullptr, kEval);
    CHECK(std::abs(out.at(0, 0) - (1.0 + 2.0 * w0)) < 1e-10);
    CHECK(std::abs(out.at(0, 1) - (0.0 + 2.0 * w1)) < 1e-10);
}

TEST_CASE("compress visual then audio accumulates both") {
    Fixture f(4, 1);
    Rng rng(7);
    const Tensor v = oracle::random_tensor(rng, 4, 4);
    const Tensor a = oracle::random_tensor(rng, 4, 4);
    const Tensor z = oracle::random_tensor(rng, 2, 4);
    const Tensor z1 = compress(v, z, f.attention, nullptr, kEval);
    const Tensor z2 = compress(a, z1, f.attention, nullptr, kEval);
    const auto step1 = oracle::add(oracle::to_matrix(z), oracle::attention(oracle::to_matrix(z), oracle::to_matrix(v),
                                                                           oracle::to_matrix(v), f.attention));
    const auto step2 =
        oracle::add(step1, oracle::attention(step1, oracle::to_matrix(a), oracle::to_matrix(a), f.attention));
    CHECK(oracle::max_abs_diff(step2, z2) < 1e-10);
}

TEST_CASE("expand with one token gives every clip x + Wz Wv z") {
    Fixture f(4, 2);
    Rng rng(8);
    const Tensor x = oracle::random_tensor(rng, 6, 4);
    const Tensor z = oracle::random_tensor(rng, 1, 4);
    const Tensor out = expand(x, z, f.attention, &f.pos, kEval);
    const auto shift = oracle::linear_row(oracle::linear_row(oracle::to_matrix(z)[0], f.attention.value),
                                          f.attention.output);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(out.at(i, k) == doctest::Approx(x.at(i, k) + shift[k]).epsilon(1e-13));
        }
    }
}

TEST_CASE("zero output projection makes expand the identity") {
    Fixture f(4, 2);
    for (double& w : f.attention.output.weight.mutable_data()) {
        w = 0.0;
    }
    Rng rng(9);
    const Tensor x = oracle::random_tensor(rng, 3, 4);
    const Tensor z = oracle::random_tensor(rng, 2, 4);
    CHECK(expand(x, z, f.attention, &f.pos, kEval).values() == x.values());
}

TEST_CASE("expand two clips two tokens against oracle") {
    Fixture f(4, 2);
    Rng rng(10);
    const Tensor x = oracle::random_tensor(rng, 2, 4);
    const Tensor z = oracle::random_tensor(rng, 2, 4);
    const auto expected =
        oracle::add(oracle::to_matrix(x), oracle::attention(oracle::to_matrix(x), oracle::to_matrix(z),
                                                            oracle::to_matrix(z), f.attention));
    CHECK(oracle::max_abs_diff(expected, expand(x, z, f.attention, nullptr, kEval)) < 1e-10);
}

TEST_CASE("feed forward residual, hand case and positionwise behaviour") {
    ParameterSet params;
    Rng rng(11);
    FeedForwardParams ffn = make_feed_forward(params, "ffn", 2, rng);
    CHECK(ffn.expand.out_features() == 8);
    CHECK(ffn.contract.in_features() == 8);

    const Tensor x = oracle::random_tensor(rng, 3, 2);
    FeedForwardParams silent = ffn;
    silent.contract.weight = Tensor::zeros({8, 2});
    silent.contract.bias = Tensor::zeros({2});
    CHECK(feed_forward(x, silent, kEval).values() == x.values());

    // Hand case: one position, known weights.
    FeedForwardParams hand;
    hand.expand.weight = Tensor::from({2, 8}, {1, -1, 0, 0, 0, 0, 0, 0, 0, 0, 1, -1, 0, 0, 0, 0});
    hand.expand.bias = Tensor::zeros({8});
    hand.contract.weight = Tensor::from({8, 2}, {1, 0, 0, 1, 2, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0});
    hand.contract.bias = Tensor::from({2}, {0.5, -0.5});
    const Tensor point = Tensor::from({1, 2}, {0.75, -2.0});
    // hidden = relu([0.75, -0.75, -2, 2, 0...]) = [0.75, 0, 0, 2, 0...]
    // contract: 0.75 * [1, 0] + 2 * [0, 2] + [0.5, -0.5] = [1.25, 3.5]
    const Tensor y = feed_forward(point, hand, kEval);
    CHECK(std::abs(y.at(0, 0) - (0.75 + 0.75 + 0.5)) < 1e-12);
    CHECK(std::abs(y.at(0, 1) - (-2.0 + 4.0 - 0.5)) < 1e-12);

    const std::vector<std::size_t> perm = {2, 0, 1};
    const Tensor a = permute_rows(feed_forward(x, ffn, kEval), perm);
    const Tensor b = feed_forward(permute_rows(x, perm), ffn, kEval);
    CHECK(a.values() == b.values());
}

TEST_CASE("positional encodings reject sequences longer than the table") {
    ParameterSet params;
    Rng rng(12);
    const PositionalEncoding pos = make_positional_encoding(params, "pos", 4, 2, rng);
    CHECK(pos.rows(4, kEval).shape() == Shape{4, 2});
    CHECK_THROWS_AS(pos.rows(5, kEval), ShapeError);
    const AttentionParams att = make_attention(params, "att", 2, 1, rng);
    CHECK_THROWS_AS(self_attention(Tensor::zeros({5, 2}), att, &pos, kEval), ShapeError);
}

TEST_CASE("attention configuration invariants") {
    ParameterSet params;
    Rng rng(13);
    CHECK_THROWS_AS(make_attention(params, "bad", 6, 4, rng), ConfigError);
    const AttentionParams att = make_attention(params, "good", 6, 3, rng);
    CHECK(att.head_dim() == 2);
    CHECK_FALSE(att.query.bias.defined());
    CHECK_THROWS_AS(compress(Tensor::zeros({0, 6}), Tensor::zeros({1, 6}), att, nullptr, kEval), ShapeError);
    CHECK_THROWS_AS(attend(Tensor::zeros({2, 5}), Tensor::zeros({2, 6}), Tensor::zeros({2, 6}), att, kEval),
                    ShapeError);
}

TEST_CASE("linear init is bounded by one over sqrt fan in") {
    ParameterSet params;
    Rng rng(14);
    const Linear l = make_linear(params, "l", 16, 8, rng);
    for (double w : l.weight.data()) {
        CHECK(std::abs(w) <= 0.25);
    }
}

TEST_CASE("training-mode dropout requires an rng") {
    Fixture f(4, 1);
    const Tensor x = Tensor::zeros({2, 4});
    const ForwardContext broken{true, nullptr};
    CHECK_THROWS_AS(broken.dropout(x, 0.1), StateError);
}

TEST_CASE("attention blocks pass gradcheck") {
    Fixture f(4, 2);
    Rng rng(15);
    Tensor x = oracle::random_tensor(rng, 3, 4, -2, 2, true);
    Tensor z = oracle::random_tensor(rng, 2, 4, -2, 2, true);
    const Tensor w = oracle::random_tensor(rng, 3, 4);
    auto loss = [&] {
        const Tensor zc = compress(x, z, f.attention, &f.pos, kEval, {&f.norm_a, &f.norm_b});
        const Tensor y = expand(self_attention(x, f.attention, &f.pos, kEval, &f.norm_a), zc, f.attention, &f.pos,
                                kEval, {&f.norm_b, &f.norm_a});
        return ops::sum(ops::mul(y, w));
    };
    for (auto& entry : f.params.entries()) {
        Tensor t = entry.second;
        t.set_requires_grad(true);
    }
    backward(loss());
    std::vector<GradProbe> probes;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probes.push_back({"x", x, i});
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
        probes.push_back({"z", z, i});
    }
    for (const auto& [name, t] : f.params.entries()) {
        if (name == "pos.table") {
            for (std::size_t i = 0; i < 12; ++i) {
                probes.push_back({name, t, i});
            }
        } else {
            for (std::size_t i = 0; i < t.size(); i += 3) {
                probes.push_back({name, t, i});
            }
        }
    }
    const auto report = compare_gradients(probes, [&] {
        const NoGradGuard guard;
        return loss().item();
    });
    CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("bottleneck cost grows linearly while full cross attention grows quadratically") {
    ParameterSet params;
    Rng rng(16);
    const std::size_t d = 4;
    const AttentionParams att = make_attention(params, "att", d, 1, rng);
    auto bottleneck_macs = [&](std::size_t n) {
        const Tensor x = Tensor::zeros({n, d});
        const Tensor z = Tensor::zeros({4, d});
        reset_mac_count();
        const Tensor zc = compress(x, z, att, nullptr, kEval);
        (void)expand(x, zc, att, nullptr, kEval);
        return static_cast<double>(mac_count());
    };
    auto full_macs = [&](std::size_t n) {
        const Tensor x = Tensor::zeros({n, d});
        reset_mac_count();
        (void)cross_attention(x, x, att, nullptr, kEval);
        return static_cast<double>(mac_count());
    };
    const double bottleneck_ratio = bottleneck_macs(128) / bottleneck_macs(64);
    const double full_ratio = full_macs(128) / full_macs(64);
    CHECK(std::abs(bottleneck_ratio - 2.0) <= 0.2);
    CHECK(std::abs(full_ratio - 4.0) <= 0.4);
}
