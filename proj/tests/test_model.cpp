#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "afs/error.hpp"
#include "afs/model.hpp"
#include "afs/ops.hpp"

using namespace afs;

namespace {

Tensor rand_t(Shape s, Rng& rng, float scl = 0.5f) {
    Tensor t(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scl * rng.normal();
    return t;
}

ModelSpec micro_spec(StemKind stem, ShiftSpec shift, std::int64_t frames = 4,
                     std::int64_t hw = 16) {
    ModelSpec s;
    s.variant = Variant::Micro;
    s.stem = stem;
    s.frames = frames;
    s.height = s.width = hw;
    s.num_classes = 3;
    s.shift = std::move(shift);
    return s;
}

bool same_params(const Model& a, const Model& b) {
    const auto& pa = a.params.all();
    const auto& pb = b.params.all();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->name != pb[i]->name) return false;
        if (pa[i]->value.shape() != pb[i]->value.shape()) return false;
        if (std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                        sizeof(float) * static_cast<std::size_t>(pa[i]->value.numel())) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("stage tables") {
    auto tiny = stages_for(Variant::Tiny);
    REQUIRE(tiny.size() == 4);
    const std::int64_t channels[] = {64, 128, 320, 512};
    const std::int64_t depths[] = {3, 4, 8, 3};
    const std::int64_t exps[] = {8, 8, 4, 4};
    for (int i = 0; i < 4; ++i) {
        CHECK(tiny[i].channels == channels[i]);
        CHECK(tiny[i].depth == depths[i]);
        CHECK(tiny[i].expansion == exps[i]);
    }
    auto small = stages_for(Variant::Small);
    CHECK(small[2].depth == 22);
    auto medium = stages_for(Variant::Medium);
    CHECK(medium[1].depth == 8);
    CHECK(medium[2].depth == 33);
    CHECK_THROWS_AS(variant_from_string("huge"), ConfigError);
}

TEST_CASE("spec validation") {
    ModelSpec s = micro_spec(StemKind::S2D, image_shift_default());
    s.height = 13;
    CHECK_THROWS_AS(validate_model_spec(s), ConfigError);
    ModelSpec t = micro_spec(StemKind::S3D, video_shift_default(), 5);
    CHECK_THROWS_AS(validate_model_spec(t), ConfigError);  // odd frames with 3D stem
    ModelSpec tiny;
    tiny.variant = Variant::Tiny;
    tiny.height = tiny.width = 224;
    validate_model_spec(tiny);
    tiny.height = 220;  // not divisible by 32
    CHECK_THROWS_AS(validate_model_spec(tiny), ConfigError);
}

TEST_CASE("same seed gives bitwise-identical builds") {
    ModelSpec s = micro_spec(StemKind::S3D, video_shift_default());
    Model a = build_model(s, 11);
    Model b = build_model(s, 11);
    CHECK(same_params(a, b));
    Model c = build_model(s, 12);
    CHECK_FALSE(same_params(a, c));
}

TEST_CASE("3D stem halves the frame count and quarters space") {
    ModelSpec s = micro_spec(StemKind::S3D, video_shift_default(), 8, 32);
    Model m = build_model(s, 1);
    Rng rng(2);
    Tape t;
    VarId out = stem_forward(t, t.leaf(rand_t({1, 8, 32, 32, 3}, rng)), m);
    CHECK(t.val(out).shape() == Shape{1, 4, 8, 8, 32});
}

TEST_CASE("2D stem quarters space and keeps frames") {
    ModelSpec s = micro_spec(StemKind::S2D, image_shift_default(), 2, 64);
    Model m = build_model(s, 1);
    Rng rng(3);
    Tape t;
    VarId out = stem_forward(t, t.leaf(rand_t({1, 2, 64, 64, 3}, rng)), m);
    CHECK(t.val(out).shape() == Shape{1, 2, 16, 16, 32});
}

TEST_CASE("downsample halves space and rejects odd extents") {
    ParamStore store;
    Model::Downsample d;
    d.k = &store.create("k", {2, 2, 4, 8});
    d.b = &store.create("b", {8});
    d.ln_g = &store.create("g", {8});
    d.ln_g->value.fill(1.f);
    d.ln_b = &store.create("lb", {8});
    Rng rng(4);
    fill_trunc_normal(d.k->value, 0.2f, rng);
    Tape t;
    VarId out = downsample_forward(t, t.leaf(rand_t({1, 2, 6, 6, 4}, rng)), d);
    CHECK(t.val(out).shape() == Shape{1, 2, 3, 3, 8});
    Tape t2;
    CHECK_THROWS_AS(downsample_forward(t2, t2.leaf(rand_t({1, 1, 5, 6, 4}, rng)), d), ShapeError);
}

TEST_CASE("head is mean pooling plus linear, invariant to token order") {
    ModelSpec s = micro_spec(StemKind::S2D, image_shift_default());
    s.num_classes = 4;
    Model m = build_model(s, 5);
    // Constant features: logits equal the weight column sums scaled by v.
    Tensor f = Tensor::full({1, 2, 3, 3, 32}, 0.5f);
    Tape t;
    const Tensor& logits = t.val(head_forward(t, t.leaf(f), m));
    CHECK(logits.shape() == Shape{1, 4});
    for (std::int64_t k = 0; k < 4; ++k) {
        float acc = m.head_b->value[k];
        for (std::int64_t c = 0; c < 32; ++c) acc += 0.5f * m.head_w->value[c * 4 + k];
        CHECK(logits[k] == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("forward produces logits of the requested arity") {
    ModelSpec s = micro_spec(StemKind::S3D, video_shift_default(), 8, 16);
    s.num_classes = 10;
    Model m = build_model(s, 6);
    Rng rng(7);
    Tensor logits = m.forward_eval(rand_t({2, 8, 16, 16, 3}, rng));
    CHECK(logits.shape() == Shape{2, 10});
    Tape t;
    CHECK_THROWS_AS(m.forward(t, t.leaf(rand_t({1, 4, 16, 16, 3}, rng))), ShapeError);
}

TEST_CASE("eval forward is pure") {
    ModelSpec s = micro_spec(StemKind::S2D, image_shift_default());
    Model m = build_model(s, 8);
    Rng rng(9);
    Tensor x = rand_t({1, 4, 16, 16, 3}, rng);
    Tensor a = m.forward_eval(x);
    Tensor b = m.forward_eval(x);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("single-frame video model equals a weight-shared 2D model") {
    // Same weights, but the second spec re-expresses the time-shift groups as
    // height shifts whose offset exceeds the feature height, so it never
    // references the time axis at all. At T=1 both zero the same channels.
    ModelSpec va = micro_spec(StemKind::S2D, video_shift_default(), 1, 16);
    const std::int64_t feat_h = 4;  // 16 / 4 after the stem
    ShiftSpec flat;
    flat.channels = 32;
    auto groups = partition_channels(video_shift_default(32));
    for (ChannelGroup& g : groups) {
        if (g.axis == ShiftAxis::Time) {
            g.axis = ShiftAxis::Height;
            g.offset = g.offset < 0 ? -(feat_h + 1) : feat_h + 1;
        }
    }
    flat.explicit_groups = groups;
    ModelSpec vb = micro_spec(StemKind::S2D, flat, 1, 16);

    Model a = build_model(va, 21);
    Model b = build_model(vb, 21);
    CHECK(same_params(a, b));
    Rng rng(22);
    Tensor x = rand_t({2, 1, 16, 16, 3}, rng);
    Tensor la = a.forward_eval(x);
    Tensor lb = b.forward_eval(x);
    for (std::int64_t i = 0; i < la.numel(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("without a temporal path the logits are frame-permutation invariant") {
    ModelSpec s = micro_spec(StemKind::S2D, image_shift_default(), 4, 16);
    Model m = build_model(s, 30);
    Rng rng(31);
    Tensor x = rand_t({2, 4, 16, 16, 3}, rng);
    const std::int64_t fn = 16 * 16 * 3;
    const int perm[4] = {2, 0, 3, 1};
    Tensor xp({2, 4, 16, 16, 3});
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t f = 0; f < 4; ++f) {
            std::memcpy(xp.data() + (n * 4 + perm[f]) * fn, x.data() + (n * 4 + f) * fn,
                        sizeof(float) * static_cast<std::size_t>(fn));
        }
    Tensor la = m.forward_eval(x);
    Tensor lb = m.forward_eval(xp);
    for (std::int64_t i = 0; i < la.numel(); ++i) CHECK(la[i] == lb[i]);

    // With temporal shift enabled the same permutation changes the output.
    ModelSpec st = micro_spec(StemKind::S2D, video_shift_default(), 4, 16);
    Model mt = build_model(st, 30);
    Tensor ta = mt.forward_eval(x);
    Tensor tb = mt.forward_eval(xp);
    bool differs = false;
    for (std::int64_t i = 0; i < ta.numel(); ++i) differs = differs || ta[i] != tb[i];
    CHECK(differs);
}
