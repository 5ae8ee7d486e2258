#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "afs/blocks.hpp"
#include "afs/error.hpp"
#include "afs/ops.hpp"

using namespace afs;

namespace {

Tensor rand_t(Shape s, Rng& rng, float scl = 0.8f) {
    Tensor t(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scl * rng.normal();
    return t;
}

BlockConfig toy_cfg(std::int64_t d = 8) {
    BlockConfig cfg;
    cfg.d = d;
    cfg.shift = video_shift_default(d);
    cfg.se_reduction = 4;
    cfg.mlp_expansion = 2;
    return cfg;
}

void zero_all(ParamStore& store) {
    for (const auto& p : store.all()) p->value.fill(0.f);
}

}  // namespace

TEST_CASE("variant rows set the documented flag patterns") {
    BlockConfig base = toy_cfg();
    auto r1 = make_variant(VariantRow::R1, base);
    CHECK_FALSE(r1.use_scale);
    CHECK_FALSE(r1.use_bias);
    auto r2 = make_variant(VariantRow::R2, base);
    CHECK_FALSE(r2.use_scale);
    CHECK(r2.use_bias);
    auto r3 = make_variant(VariantRow::R3, base);
    CHECK(r3.use_scale);
    CHECK_FALSE(r3.use_bias);
    auto r4 = make_variant(VariantRow::R4, base);
    CHECK(r4.use_scale);
    CHECK(r4.use_bias);
    CHECK_FALSE(r4.extra_mlp_shift);
    CHECK_FALSE(r4.only_shift);
    auto r5 = make_variant(VariantRow::R5, base);
    CHECK(r5.use_scale);
    CHECK(r5.use_bias);
    CHECK(r5.extra_mlp_shift);
    auto r6 = make_variant(VariantRow::R6, base);
    CHECK(r6.only_shift);
    CHECK_FALSE(r6.use_scale);
    CHECK_THROWS_AS(variant_row_from_string("R7"), ConfigError);
}

TEST_CASE("config validation") {
    BlockConfig bad = toy_cfg(6);  // 6 not divisible by 4
    CHECK_THROWS_AS(validate_block_config(bad), ConfigError);
    BlockConfig only = make_variant(VariantRow::R6, toy_cfg());
    only.use_scale = true;
    CHECK_THROWS_AS(validate_block_config(only), ConfigError);
    BlockConfig dp = toy_cfg();
    dp.drop_path_rate = 1.5f;
    CHECK_THROWS_AS(validate_block_config(dp), ConfigError);
}

TEST_CASE("value projection with identity weight is layer norm") {
    Rng rng(1);
    BlockConfig cfg = toy_cfg();
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    p.w_v->value.fill(0.f);
    for (std::int64_t i = 0; i < 8; ++i) p.w_v->value[i * 8 + i] = 1.f;
    Tensor x = rand_t({1, 2, 2, 2, 8}, rng);
    Tape t;
    VarId xid = t.leaf(x);
    const Tensor& got = t.val(value_projection(t, xid, p));
    const Tensor& want =
        t.val(layer_norm(t, xid, t.leaf(p.ln1_g->value), t.leaf(p.ln1_b->value)));
    for (std::int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("mixer with zero SE weights gates by one half") {
    Rng rng(2);
    BlockConfig cfg = make_variant(VariantRow::R3, toy_cfg());  // scale on, bias off
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    p.se_w1->value.fill(0.f);
    p.se_b1->value.fill(0.f);
    p.se_w2->value.fill(0.f);
    p.se_b2->value.fill(0.f);
    Tensor v = rand_t({1, 2, 3, 3, 8}, rng);
    Tape t;
    const Tensor& got = t.val(affine_shift_mixer(t, t.leaf(v), cfg, p));
    Tensor shifted = shift_forward(v, cfg.shift);
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(0.5f * shifted[i]).epsilon(1e-6));
    }
}

TEST_CASE("mixer with delta kernel doubles the shifted signal") {
    Rng rng(3);
    BlockConfig cfg = make_variant(VariantRow::R2, toy_cfg());  // scale off, bias on
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    p.dw_k->value.fill(0.f);
    for (std::int64_t c = 0; c < 8; ++c) p.dw_k->value[(1 * 3 + 1) * 8 + c] = 1.f;
    p.dw_b->value.fill(0.f);
    Tensor v = rand_t({1, 2, 3, 3, 8}, rng);
    Tape t;
    const Tensor& got = t.val(affine_shift_mixer(t, t.leaf(v), cfg, p));
    Tensor shifted = shift_forward(v, cfg.shift);
    for (std::int64_t i = 0; i < v.numel(); ++i) CHECK(got[i] == shifted[i] + shifted[i]);
}

TEST_CASE("branch-free mixer output is bit-identical to the bare shift") {
    Rng rng(4);
    BlockConfig cfg = make_variant(VariantRow::R1, toy_cfg());
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    Tensor v = rand_t({2, 2, 4, 4, 8}, rng);
    Tape t;
    const Tensor& got = t.val(affine_shift_mixer(t, t.leaf(v), cfg, p));
    Tensor want = shift_forward(v, cfg.shift);
    for (std::int64_t i = 0; i < v.numel(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("channel gate lies strictly inside (0,1)") {
    Rng rng(5);
    BlockConfig cfg = make_variant(VariantRow::R3, toy_cfg());
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    Tensor v = rand_t({1, 2, 3, 3, 8}, rng);
    Tape t;
    const Tensor& got = t.val(affine_shift_mixer(t, t.leaf(v), cfg, p));
    Tensor shifted = shift_forward(v, cfg.shift);
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        if (shifted[i] == 0.f) continue;
        const float ratio = got[i] / shifted[i];
        CHECK(ratio > 0.f);
        CHECK(ratio < 1.f);
    }
}

TEST_CASE("zero-weight layer is a fixed point") {
    Rng rng(6);
    BlockConfig cfg = toy_cfg();
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    zero_all(store);
    p.ln1_g->value.fill(1.f);
    p.ln2_g->value.fill(1.f);
    Tensor x = rand_t({1, 2, 3, 3, 8}, rng);
    Tape t;
    const Tensor& y = t.val(affine_shift_layer(t, t.leaf(x), cfg, p));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("layers preserve shape at every stage width") {
    Rng rng(7);
    for (std::int64_t d : {64, 128, 320, 512}) {
        BlockConfig cfg = toy_cfg(d);
        cfg.mlp_expansion = 2;
        ParamStore store;
        BlockParams p = make_block_params(store, "b", cfg, rng);
        Tensor x = rand_t({1, 2, 2, 2, d}, rng);
        Tape t;
        CHECK(t.val(affine_shift_layer(t, t.leaf(x), cfg, p)).shape() == x.shape());
    }
}

TEST_CASE("drop path gates only the MLP branch") {
    Rng rng(8);
    BlockConfig cfg = toy_cfg();
    cfg.drop_path_rate = 1.f;  // degenerate: MLP branch always dropped
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);

    // Reference: same weights, rate 0, but MLP output forced to zero.
    BlockConfig ref_cfg = toy_cfg();
    Rng rng_ref(8);
    ParamStore ref_store;
    BlockParams rp = make_block_params(ref_store, "b", ref_cfg, rng_ref);
    rp.mlp_w2->value.fill(0.f);
    rp.mlp_b2->value.fill(0.f);

    Tensor x = rand_t({2, 2, 3, 3, 8}, rng);
    Rng dp_rng(0);
    Tape t1, t2;
    const Tensor& dropped = t1.val(affine_shift_layer(t1, t1.leaf(x), cfg, p, &dp_rng, true));
    const Tensor& mixer_only = t2.val(affine_shift_layer(t2, t2.leaf(x), ref_cfg, rp));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(dropped[i] == mixer_only[i]);

    // The mixer branch survived: output differs from plain input.
    bool differs = false;
    for (std::int64_t i = 0; i < x.numel(); ++i) differs = differs || dropped[i] != x[i];
    CHECK(differs);
}

TEST_CASE("attention with a single token reduces to projection") {
    Rng rng(9);
    BlockConfig cfg = toy_cfg();
    cfg.use_mhsa = true;
    cfg.mhsa.heads = 2;
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    Tensor x = rand_t({2, 1, 8}, rng);
    Tape t;
    VarId xid = t.leaf(x);
    const Tensor& got = t.val(mhsa_reference(t, xid, cfg.mhsa, p, 8));
    // With S = 1 the attention weight is exactly one, so the output is
    // x W_v W_h + b regardless of q/k.
    VarId v = linear(t, xid, t.leaf(p.w_v->value));
    const Tensor& want =
        t.val(linear(t, v, t.leaf(p.w_h->value), t.leaf(p.w_h_b->value)));
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
}

TEST_CASE("attention with zero q and k averages the values") {
    Rng rng(10);
    BlockConfig cfg = toy_cfg();
    cfg.use_mhsa = true;
    cfg.mhsa.heads = 2;
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    p.w_q->value.fill(0.f);
    p.w_k->value.fill(0.f);
    const std::int64_t S = 5;
    Tensor x = rand_t({1, S, 8}, rng);
    Tape t;
    VarId xid = t.leaf(x);
    const Tensor& got = t.val(mhsa_reference(t, xid, cfg.mhsa, p, 8));
    // Uniform attention: every token becomes the mean value vector.
    VarId v = linear(t, xid, t.leaf(p.w_v->value));
    const Tensor& vv = t.val(v);
    Tensor mean({1, S, 8});
    for (std::int64_t c = 0; c < 8; ++c) {
        double acc = 0.0;
        for (std::int64_t s = 0; s < S; ++s) acc += vv[s * 8 + c];
        for (std::int64_t s = 0; s < S; ++s) mean[s * 8 + c] = static_cast<float>(acc / S);
    }
    Tape t2;
    const Tensor& want = t2.val(
        linear(t2, t2.leaf(mean), t2.leaf(p.w_h->value), t2.leaf(p.w_h_b->value)));
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
    }
}

TEST_CASE("attention matches a direct quadratic-loop oracle") {
    Rng rng(11);
    BlockConfig cfg = toy_cfg();
    cfg.use_mhsa = true;
    cfg.mhsa.heads = 2;
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    const std::int64_t S = 4, d = 8, H = 2, dh = 4;
    Tensor x = rand_t({1, S, d}, rng);
    Tape t;
    const Tensor& got = t.val(mhsa_reference(t, t.leaf(x), cfg.mhsa, p, d));

    auto proj = [&](const Parameter& w, std::int64_t s, std::int64_t c) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < d; ++i) acc += (double)x[s * d + i] * w.value[i * d + c];
        return acc;
    };
    Tensor concat({1, S, d});
    for (std::int64_t h = 0; h < H; ++h) {
        for (std::int64_t s = 0; s < S; ++s) {
            std::vector<double> att(S);
            double m = -1e300;
            for (std::int64_t s2 = 0; s2 < S; ++s2) {
                double logit = 0.0;
                for (std::int64_t c = 0; c < dh; ++c) {
                    logit += proj(*p.w_q, s, h * dh + c) * proj(*p.w_k, s2, h * dh + c);
                }
                logit /= std::sqrt((double)dh);
                att[(std::size_t)s2] = logit;
                m = std::max(m, logit);
            }
            double z = 0.0;
            for (double& a : att) {
                a = std::exp(a - m);
                z += a;
            }
            for (std::int64_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::int64_t s2 = 0; s2 < S; ++s2) {
                    acc += att[(std::size_t)s2] / z * proj(*p.w_v, s2, h * dh + c);
                }
                concat[s * d + h * dh + c] = static_cast<float>(acc);
            }
        }
    }
    Tape t2;
    const Tensor& want = t2.val(
        linear(t2, t2.leaf(concat), t2.leaf(p.w_h->value), t2.leaf(p.w_h_b->value)));
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
    }
}

TEST_CASE("only-shift layers carry fewer parameters than full layers") {
    Rng rng(12);
    ParamStore full_store, bare_store;
    make_block_params(full_store, "b", make_variant(VariantRow::R4, toy_cfg()), rng);
    make_block_params(bare_store, "b", make_variant(VariantRow::R6, toy_cfg()), rng);
    CHECK(bare_store.total_params() < full_store.total_params());
}

TEST_CASE("only-shift layer mixes without projections") {
    Rng rng(13);
    BlockConfig cfg = make_variant(VariantRow::R6, toy_cfg());
    ParamStore store;
    BlockParams p = make_block_params(store, "b", cfg, rng);
    CHECK(store.find("b.w_v") == nullptr);
    CHECK(store.find("b.ln1.gamma") == nullptr);
    zero_all(store);
    p.ln2_g->value.fill(1.f);
    Tensor x = rand_t({1, 2, 3, 3, 8}, rng);
    Tape t;
    const Tensor& y = t.val(affine_shift_layer(t, t.leaf(x), cfg, p));
    Tensor want = shift_forward(x, cfg.shift);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i] + want[i]);
}

TEST_CASE("same seed builds bitwise-identical layers") {
    Rng rng_a(99), rng_b(99);
    BlockConfig cfg = toy_cfg();
    ParamStore sa, sb;
    BlockParams pa = make_block_params(sa, "b", cfg, rng_a);
    BlockParams pb = make_block_params(sb, "b", cfg, rng_b);
    Rng data_rng(1);
    Tensor x = rand_t({1, 2, 3, 3, 8}, data_rng);
    Tape ta, tb;
    const Tensor& ya = ta.val(affine_shift_layer(ta, ta.leaf(x), cfg, pa));
    const Tensor& yb = tb.val(affine_shift_layer(tb, tb.leaf(x), cfg, pb));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(ya[i] == yb[i]);
}
