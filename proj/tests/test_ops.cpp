#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "afs/error.hpp"
#include "afs/ops.hpp"
#include "afs/tensor.hpp"

using namespace afs;

namespace {

Tensor rand_t(Shape s, Rng& rng, float scl = 1.f) {
    Tensor t(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scl * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("add and mul elementwise with shape enforcement") {
    Rng rng(1);
    Tensor a = rand_t({2, 3}, rng), b = rand_t({2, 3}, rng);
    Tape t;
    VarId s = add(t, t.leaf(a), t.leaf(b));
    VarId p = mul(t, t.leaf(a), t.leaf(b));
    for (std::int64_t i = 0; i < 6; ++i) {
        CHECK(t.val(s)[i] == a[i] + b[i]);
        CHECK(t.val(p)[i] == a[i] * b[i]);
    }
    Tape t2;
    CHECK_THROWS_AS(add(t2, t2.leaf(a), t2.leaf(rand_t({3, 2}, rng))), ShapeError);
}

TEST_CASE("linear matches triple-loop oracle exactly") {
    Rng rng(2);
    Tensor x = rand_t({4, 3}, rng), w = rand_t({3, 2}, rng);
    Tape t;
    const Tensor& y = t.val(linear(t, t.leaf(x), t.leaf(w)));
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t o = 0; o < 2; ++o) {
            float acc = 0.f;
            for (std::int64_t i = 0; i < 3; ++i) acc += x[r * 3 + i] * w[i * 2 + o];
            CHECK(y[r * 2 + o] == acc);
        }
}

TEST_CASE("linear with bias matches oracle (bias accumulated first)") {
    Rng rng(3);
    Tensor x = rand_t({5, 4}, rng), w = rand_t({4, 3}, rng), b = rand_t({3}, rng);
    Tape t;
    const Tensor& y = t.val(linear(t, t.leaf(x), t.leaf(w), t.leaf(b)));
    for (std::int64_t r = 0; r < 5; ++r)
        for (std::int64_t o = 0; o < 3; ++o) {
            float acc = b[o];
            for (std::int64_t i = 0; i < 4; ++i) acc += x[r * 4 + i] * w[i * 3 + o];
            CHECK(y[r * 3 + o] == acc);
        }
    Tape t2;
    CHECK_THROWS_AS(linear(t2, t2.leaf(x), t2.leaf(rand_t({5, 3}, rng))), ShapeError);
}

TEST_CASE("bmm variants match naive loops") {
    Rng rng(4);
    Tensor a = rand_t({2, 3, 4}, rng), b = rand_t({2, 4, 5}, rng), bt = rand_t({2, 5, 4}, rng);
    Tape t;
    const Tensor& y = t.val(bmm(t, t.leaf(a), t.leaf(b)));
    const Tensor& ynt = t.val(bmm_nt(t, t.leaf(a), t.leaf(bt)));
    for (std::int64_t bb = 0; bb < 2; ++bb)
        for (std::int64_t m = 0; m < 3; ++m)
            for (std::int64_t n = 0; n < 5; ++n) {
                float acc = 0.f, accnt = 0.f;
                for (std::int64_t k = 0; k < 4; ++k) {
                    acc += a[(bb * 3 + m) * 4 + k] * b[(bb * 4 + k) * 5 + n];
                    accnt += a[(bb * 3 + m) * 4 + k] * bt[(bb * 5 + n) * 4 + k];
                }
                CHECK(y[(bb * 3 + m) * 5 + n] == acc);
                CHECK(ynt[(bb * 3 + m) * 5 + n] == accnt);
            }
}

TEST_CASE("layer_norm analytic cases") {
    Tape t;
    // Constant rows normalize to zero, leaving beta.
    Tensor x = Tensor::full({2, 4}, 3.f);
    Tensor gamma = Tensor::full({4}, 2.f);
    Tensor beta = Tensor::full({4}, 0.5f);
    const Tensor& y = t.val(layer_norm(t, t.leaf(x), t.leaf(gamma), t.leaf(beta)));
    for (std::int64_t i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(0.5f).epsilon(1e-5));

    // Normalized output has zero mean, unit variance per row.
    Rng rng(5);
    Tensor x2 = rand_t({3, 16}, rng, 2.f);
    Tensor g1 = Tensor::full({16}, 1.f), b0({16});
    Tape t2;
    const Tensor& y2 = t2.val(layer_norm(t2, t2.leaf(x2), t2.leaf(g1), t2.leaf(b0)));
    for (std::int64_t r = 0; r < 3; ++r) {
        double m = 0, v = 0;
        for (std::int64_t j = 0; j < 16; ++j) m += y2[r * 16 + j];
        m /= 16;
        for (std::int64_t j = 0; j < 16; ++j) v += (y2[r * 16 + j] - m) * (y2[r * 16 + j] - m);
        v /= 16;
        CHECK(std::fabs(m) < 1e-5);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("layer_norm rejects non-finite input naming the token") {
    Tensor x({2, 3});
    x[4] = std::numeric_limits<float>::quiet_NaN();
    Tensor g = Tensor::full({3}, 1.f), b({3});
    Tape t;
    CHECK_THROWS_WITH_AS(layer_norm(t, t.leaf(x), t.leaf(g), t.leaf(b)),
                         doctest::Contains("token 1"), NumericError);
}

TEST_CASE("activation values") {
    Tape t;
    Tensor x({5});
    x[0] = 0.f;
    x[1] = 1.f;
    x[2] = -1.f;
    x[3] = 3.f;
    x[4] = -3.f;
    const Tensor& g = t.val(gelu(t, t.leaf(x)));
    CHECK(g[0] == 0.f);
    CHECK(g[1] == doctest::Approx(0.841192f).epsilon(1e-5));  // tanh approximation
    CHECK(g[2] == doctest::Approx(-0.158808f).epsilon(1e-4));
    CHECK(g[3] > 2.99f);
    CHECK(g[4] > -0.02f);
    const Tensor& s = t.val(sigmoid(t, t.leaf(x)));
    CHECK(s[0] == 0.5f);
    CHECK(s[1] == doctest::Approx(0.731059f).epsilon(1e-5));
}

TEST_CASE("softmax rows sum to one and match naive computation") {
    Rng rng(6);
    Tensor x = rand_t({2, 5, 3}, rng, 2.f);
    Tape t;
    const Tensor& y = t.val(softmax(t, t.leaf(x), 1));
    for (std::int64_t o = 0; o < 2; ++o)
        for (std::int64_t in = 0; in < 3; ++in) {
            double sum = 0.0, esum = 0.0;
            float m = -1e30f;
            for (std::int64_t k = 0; k < 5; ++k) m = std::max(m, x[(o * 5 + k) * 3 + in]);
            for (std::int64_t k = 0; k < 5; ++k) esum += std::exp(x[(o * 5 + k) * 3 + in] - m);
            for (std::int64_t k = 0; k < 5; ++k) {
                const float expect =
                    static_cast<float>(std::exp(x[(o * 5 + k) * 3 + in] - m) / esum);
                CHECK(y[(o * 5 + k) * 3 + in] == doctest::Approx(expect).epsilon(1e-5));
                sum += y[(o * 5 + k) * 3 + in];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
}

TEST_CASE("channel_gate broadcasts over positions") {
    Rng rng(7);
    Tensor x = rand_t({2, 2, 3, 3, 4}, rng);
    Tensor g = rand_t({2, 1, 1, 1, 4}, rng);
    Tape t;
    const Tensor& y = t.val(channel_gate(t, t.leaf(x), t.leaf(g)));
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t p = 0; p < 18; ++p)
            for (std::int64_t c = 0; c < 4; ++c) {
                CHECK(y[(n * 18 + p) * 4 + c] == x[(n * 18 + p) * 4 + c] * g[n * 4 + c]);
            }
}

TEST_CASE("pooling matches mean oracle and is frame-permutation invariant bitwise") {
    Rng rng(8);
    Tensor x = rand_t({2, 4, 3, 3, 5}, rng);
    Tape t;
    const Tensor& pooled = t.val(global_avg_pool(t, t.leaf(x)));
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 5; ++c) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < 36; ++p) acc += x[(n * 36 + p) * 5 + c];
            CHECK(pooled[n * 5 + c] == doctest::Approx(acc / 36).epsilon(1e-6));
        }

    // Reverse the frame order: pooled result must be bit-identical.
    Tensor xr({2, 4, 3, 3, 5});
    const std::int64_t fn = 3 * 3 * 5;
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t f = 0; f < 4; ++f)
            for (std::int64_t j = 0; j < fn; ++j) {
                xr[(n * 4 + (3 - f)) * fn + j] = x[(n * 4 + f) * fn + j];
            }
    Tape t2;
    const Tensor& pooled_r = t2.val(global_avg_pool(t2, t2.leaf(xr)));
    for (std::int64_t i = 0; i < pooled.numel(); ++i) CHECK(pooled[i] == pooled_r[i]);

    Tape t3, t4;
    const Tensor& m1 = t3.val(mean_tokens(t3, t3.leaf(x)));
    const Tensor& m2 = t4.val(mean_tokens(t4, t4.leaf(xr)));
    for (std::int64_t i = 0; i < m1.numel(); ++i) CHECK(m1[i] == m2[i]);
}

TEST_CASE("depthwise conv with delta kernel is identity") {
    Rng rng(9);
    Tensor x = rand_t({1, 2, 4, 4, 3}, rng);
    Tensor k({3, 3, 3});
    for (std::int64_t c = 0; c < 3; ++c) k[(1 * 3 + 1) * 3 + c] = 1.f;  // center taps
    Tensor b({3});
    Tape t;
    const Tensor& y = t.val(depthwise_conv2d(t, t.leaf(x), t.leaf(k), t.leaf(b)));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d matches naive cross-correlation oracle") {
    Rng rng(10);
    Tensor x = rand_t({1, 2, 5, 5, 2}, rng);
    Tensor k = rand_t({3, 3, 2, 3}, rng);
    Tensor b = rand_t({3}, rng);
    const int stride = 2, pad = 1;
    Tape t;
    const Tensor& y = t.val(conv2d(t, t.leaf(x), t.leaf(k), t.leaf(b), stride, pad));
    CHECK(y.shape() == Shape{1, 2, 3, 3, 3});
    for (std::int64_t tt = 0; tt < 2; ++tt)
        for (std::int64_t ho = 0; ho < 3; ++ho)
            for (std::int64_t wo = 0; wo < 3; ++wo)
                for (std::int64_t co = 0; co < 3; ++co) {
                    float acc = b[co];
                    for (std::int64_t a = 0; a < 3; ++a)
                        for (std::int64_t bb = 0; bb < 3; ++bb)
                            for (std::int64_t ci = 0; ci < 2; ++ci) {
                                const std::int64_t hi = ho * stride - pad + a;
                                const std::int64_t wi = wo * stride - pad + bb;
                                if (hi < 0 || hi >= 5 || wi < 0 || wi >= 5) continue;
                                acc += x[((tt * 5 + hi) * 5 + wi) * 2 + ci] *
                                       k[((a * 3 + bb) * 2 + ci) * 3 + co];
                            }
                    CHECK(y[((tt * 3 + ho) * 3 + wo) * 3 + co] == doctest::Approx(acc).epsilon(1e-6));
                }
}

TEST_CASE("1x1 conv on a single pixel is one multiply") {
    Tensor x = Tensor::full({1, 1, 1, 1, 1}, 3.f);
    Tensor k = Tensor::full({1, 1, 1, 1}, 2.f);
    Tape t;
    const Tensor& y = t.val(conv2d(t, t.leaf(x), t.leaf(k), std::nullopt, 1, 0));
    CHECK(y.numel() == 1);
    CHECK(y[0] == 6.f);
}

TEST_CASE("conv3d halves time with stride-2 temporal kernel") {
    Rng rng(11);
    Tensor x = rand_t({1, 8, 8, 8, 2}, rng);
    Tensor k = rand_t({3, 7, 7, 2, 4}, rng);
    Tensor b({4});
    Tape t;
    const Tensor& y = t.val(conv3d(t, t.leaf(x), t.leaf(k), t.leaf(b), {2, 4, 4}, {1, 3, 3}));
    CHECK(y.shape() == Shape{1, 4, 2, 2, 4});

    // Single output spot-check against the naive sum.
    float acc = b[1];
    for (std::int64_t c3 = 0; c3 < 3; ++c3)
        for (std::int64_t a = 0; a < 7; ++a)
            for (std::int64_t bb = 0; bb < 7; ++bb)
                for (std::int64_t ci = 0; ci < 2; ++ci) {
                    const std::int64_t ti = 1 * 2 - 1 + c3, hi = 1 * 4 - 3 + a, wi = 0 * 4 - 3 + bb;
                    if (ti < 0 || ti >= 8 || hi < 0 || hi >= 8 || wi < 0 || wi >= 8) continue;
                    acc += x[((ti * 8 + hi) * 8 + wi) * 2 + ci] *
                           k[(((c3 * 7 + a) * 7 + bb) * 2 + ci) * 4 + 1];
                }
    CHECK(y[((1 * 2 + 1) * 2 + 0) * 4 + 1] == doctest::Approx(acc).epsilon(1e-5));
}

TEST_CASE("drop_path semantics") {
    Rng rng(12);
    Tensor x = rand_t({4, 2, 3}, rng);
    Tape t;
    VarId xv = t.leaf(x);
    // Eval mode and zero rate are the identity (same node).
    CHECK(drop_path(t, xv, 0.5f, &rng, false) == xv);
    CHECK(drop_path(t, xv, 0.f, &rng, true) == xv);
    // Rate >= 1 zeroes the branch.
    const Tensor& z = t.val(drop_path(t, xv, 1.f, &rng, true));
    for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.f);
    // Kept samples are rescaled by 1/(1-rate); dropped are zero, per sample.
    const Tensor& y = t.val(drop_path(t, xv, 0.5f, &rng, true));
    for (std::int64_t n = 0; n < 4; ++n) {
        const bool kept = y[n * 6] != 0.f;
        for (std::int64_t j = 0; j < 6; ++j) {
            if (kept) {
                CHECK(y[n * 6 + j] == doctest::Approx(2.f * x[n * 6 + j]));
            } else {
                CHECK(y[n * 6 + j] == 0.f);
            }
        }
    }
}

TEST_CASE("cross_entropy against logsumexp oracle") {
    Rng rng(13);
    Tensor logits = rand_t({3, 4}, rng, 2.f);
    std::vector<int> labels = {2, 0, 3};
    Tape t;
    const Tensor& loss = t.val(cross_entropy(t, t.leaf(logits), labels));
    double expect = 0.0;
    for (std::int64_t n = 0; n < 3; ++n) {
        double m = logits[n * 4];
        for (std::int64_t k = 1; k < 4; ++k) m = std::max(m, (double)logits[n * 4 + k]);
        double s = 0.0;
        for (std::int64_t k = 0; k < 4; ++k) s += std::exp(logits[n * 4 + k] - m);
        expect += m + std::log(s) - logits[n * 4 + labels[(std::size_t)n]];
    }
    CHECK(loss[0] == doctest::Approx(expect / 3).epsilon(1e-5));
    CHECK_THROWS_AS(cross_entropy(t, t.leaf(logits), {0, 1}), ShapeError);
    CHECK_THROWS_AS(cross_entropy(t, t.leaf(logits), {0, 9, 1}), UsageError);
}

TEST_CASE("permute round-trips through its inverse") {
    Rng rng(14);
    Tensor x = rand_t({2, 3, 4, 5}, rng);
    Tape t;
    VarId p = permute(t, t.leaf(x), {2, 0, 3, 1});
    CHECK(t.val(p).shape() == Shape{4, 2, 5, 3});
    VarId back = permute(t, p, {1, 3, 0, 2});
    const Tensor& y = t.val(back);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}
