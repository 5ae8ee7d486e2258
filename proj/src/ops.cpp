#include "afs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "afs/error.hpp"

namespace afs {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    for (std::int64_t i = 0; i < src.numel(); ++i) dst[i] += src[i];
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] =
            st[static_cast<std::size_t>(i + 1)] * s[static_cast<std::size_t>(i + 1)];
    }
    return st;
}

}  // namespace

VarId add(Tape& tape, VarId a, VarId b) {
    const Tensor& av = tape.val(a);
    const Tensor& bv = tape.val(b);
    check_same_shape(av, bv, "add");
    Tensor y(av.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] + bv[i];
    return tape.emit(std::move(y), {a, b}, [a, b](Tape& t, VarId self) {
        accumulate(t.grad(a), t.grad(self));
        accumulate(t.grad(b), t.grad(self));
    });
}

VarId mul(Tape& tape, VarId a, VarId b) {
    const Tensor& av = tape.val(a);
    const Tensor& bv = tape.val(b);
    check_same_shape(av, bv, "mul");
    Tensor y(av.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
    return tape.emit(std::move(y), {a, b}, [a, b](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& av2 = t.val(a);
        const Tensor& bv2 = t.val(b);
        Tensor& ga = t.grad(a);
        Tensor& gb = t.grad(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * bv2[i];
            gb[i] += g[i] * av2[i];
        }
    });
}

VarId scale(Tape& tape, VarId a, float c) {
    const Tensor& av = tape.val(a);
    Tensor y(av.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] * c;
    return tape.emit(std::move(y), {a}, [a, c](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
    });
}

VarId channel_gate(Tape& tape, VarId x, VarId gate) {
    const Tensor& xv = tape.val(x);
    const Tensor& gv = tape.val(gate);
    if (xv.rank() != 5 || gv.rank() != 5) throw ShapeError("channel_gate expects rank-5 tensors");
    const std::int64_t N = xv.extent(0), C = xv.extent(4);
    if (gv.extent(0) != N || gv.extent(1) != 1 || gv.extent(2) != 1 || gv.extent(3) != 1 ||
        gv.extent(4) != C) {
        throw ShapeError("channel_gate: gate shape " + shape_str(gv.shape()) +
                         " incompatible with input " + shape_str(xv.shape()));
    }
    const std::int64_t P = xv.numel() / (N * C);  // positions per sample
    Tensor y(xv.shape());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < P; ++p)
            for (std::int64_t c = 0; c < C; ++c) {
                const std::int64_t i = (n * P + p) * C + c;
                y[i] = xv[i] * gv[n * C + c];
            }
    return tape.emit(std::move(y), {x, gate}, [x, gate, N, P, C](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv2 = t.val(x);
        const Tensor& gv2 = t.val(gate);
        Tensor& gx = t.grad(x);
        Tensor& gg = t.grad(gate);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < P; ++p)
                for (std::int64_t c = 0; c < C; ++c) {
                    const std::int64_t i = (n * P + p) * C + c;
                    gx[i] += g[i] * gv2[n * C + c];
                    gg[n * C + c] += g[i] * xv2[i];
                }
    });
}

// --------------------------------------------------------------------------

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;
}  // namespace

VarId gelu(Tape& tape, VarId x) {
    const Tensor& xv = tape.val(x);
    Tensor y(xv.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        const float v = xv[i];
        y[i] = 0.5f * v * (1.f + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return tape.emit(std::move(y), {x}, [x](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv2 = t.val(x);
        Tensor& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const float v = xv2[i];
            const float u = kGeluC * (v + kGeluA * v * v * v);
            const float th = std::tanh(u);
            const float du = kGeluC * (1.f + 3.f * kGeluA * v * v);
            gx[i] += g[i] * (0.5f * (1.f + th) + 0.5f * v * (1.f - th * th) * du);
        }
    });
}

VarId sigmoid(Tape& tape, VarId x) {
    const Tensor& xv = tape.val(x);
    Tensor y(xv.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = 1.f / (1.f + std::exp(-xv[i]));
    return tape.emit(std::move(y), {x}, [x](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& yv = t.val(self);
        Tensor& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * yv[i] * (1.f - yv[i]);
    });
}

VarId softmax(Tape& tape, VarId x, int axis) {
    const Tensor& xv = tape.val(x);
    if (axis < 0) axis += xv.rank();
    if (axis < 0 || axis >= xv.rank()) throw ShapeError("softmax: invalid axis");
    const Shape& s = xv.shape();
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < xv.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
    const std::int64_t len = s[static_cast<std::size_t>(axis)];

    Tensor y(xv.shape());
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            float m = xv[base];
            for (std::int64_t k = 1; k < len; ++k) m = std::max(m, xv[base + k * inner]);
            double sum = 0.0;
            for (std::int64_t k = 0; k < len; ++k) {
                const float e = std::exp(xv[base + k * inner] - m);
                y[base + k * inner] = e;
                sum += e;
            }
            const float inv = static_cast<float>(1.0 / sum);
            for (std::int64_t k = 0; k < len; ++k) y[base + k * inner] *= inv;
        }
    return tape.emit(std::move(y), {x}, [x, outer, inner, len](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& yv = t.val(self);
        Tensor& gx = t.grad(x);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::int64_t k = 0; k < len; ++k)
                    dot += static_cast<double>(g[base + k * inner]) * yv[base + k * inner];
                for (std::int64_t k = 0; k < len; ++k) {
                    const std::int64_t i = base + k * inner;
                    gx[i] += yv[i] * (g[i] - static_cast<float>(dot));
                }
            }
    });
}

// --------------------------------------------------------------------------

VarId linear(Tape& tape, VarId x, VarId w, std::optional<VarId> b) {
    const Tensor& xv = tape.val(x);
    const Tensor& wv = tape.val(w);
    if (wv.rank() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_str(wv.shape()));
    const std::int64_t di = wv.extent(0), dout = wv.extent(1);
    if (xv.rank() < 1 || xv.extent(xv.rank() - 1) != di) {
        throw ShapeError("linear: input " + shape_str(xv.shape()) + " incompatible with weight " +
                         shape_str(wv.shape()));
    }
    if (b && tape.val(*b).numel() != dout) {
        throw ShapeError("linear: bias " + shape_str(tape.val(*b).shape()) + " vs d_out " +
                         std::to_string(dout));
    }
    const std::int64_t rows = xv.numel() / di;
    Shape out_shape = xv.shape();
    out_shape.back() = dout;
    Tensor y(out_shape);
    if (b) {
        const Tensor& bv = tape.val(*b);
        for (std::int64_t r = 0; r < rows; ++r)
            std::memcpy(y.data() + r * dout, bv.data(), static_cast<std::size_t>(dout) * sizeof(float));
    }
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xr = xv.data() + r * di;
        float* yr = y.data() + r * dout;
        for (std::int64_t i = 0; i < di; ++i) {
            const float a = xr[i];
            const float* wr = wv.data() + i * dout;
            for (std::int64_t o = 0; o < dout; ++o) yr[o] += a * wr[o];
        }
    }
    std::vector<VarId> parents = {x, w};
    if (b) parents.push_back(*b);
    return tape.emit(std::move(y), std::move(parents), [x, w, b, rows, di, dout](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv2 = t.val(x);
        const Tensor& wv2 = t.val(w);
        Tensor& gx = t.grad(x);
        Tensor& gw = t.grad(w);
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* gr = g.data() + r * dout;
            const float* xr = xv2.data() + r * di;
            float* gxr = gx.data() + r * di;
            for (std::int64_t i = 0; i < di; ++i) {
                const float* wr = wv2.data() + i * dout;
                float* gwr = gw.data() + i * dout;
                float acc = 0.f;
                const float a = xr[i];
                for (std::int64_t o = 0; o < dout; ++o) {
                    acc += gr[o] * wr[o];
                    gwr[o] += a * gr[o];
                }
                gxr[i] += acc;
            }
        }
        if (b) {
            Tensor& gb = t.grad(*b);
            for (std::int64_t r = 0; r < rows; ++r) {
                const float* gr = g.data() + r * dout;
                for (std::int64_t o = 0; o < dout; ++o) gb[o] += gr[o];
            }
        }
    });
}

namespace {

VarId bmm_impl(Tape& tape, VarId a, VarId b, bool transpose_b) {
    const Tensor& av = tape.val(a);
    const Tensor& bv = tape.val(b);
    if (av.rank() != 3 || bv.rank() != 3) throw ShapeError("bmm expects rank-3 inputs");
    const std::int64_t B = av.extent(0), M = av.extent(1), K = av.extent(2);
    const std::int64_t N = transpose_b ? bv.extent(1) : bv.extent(2);
    const std::int64_t Kb = transpose_b ? bv.extent(2) : bv.extent(1);
    if (bv.extent(0) != B || Kb != K) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
    }
    Tensor y({B, M, N});
    for (std::int64_t bb = 0; bb < B; ++bb)
        for (std::int64_t m = 0; m < M; ++m)
            for (std::int64_t n = 0; n < N; ++n) {
                float acc = 0.f;
                const float* ar = av.data() + (bb * M + m) * K;
                if (transpose_b) {
                    const float* br = bv.data() + (bb * N + n) * K;
                    for (std::int64_t k = 0; k < K; ++k) acc += ar[k] * br[k];
                } else {
                    const float* bbase = bv.data() + bb * K * N;
                    for (std::int64_t k = 0; k < K; ++k) acc += ar[k] * bbase[k * N + n];
                }
                y[(bb * M + m) * N + n] = acc;
            }
    return tape.emit(std::move(y), {a, b}, [a, b, B, M, N, K, transpose_b](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        const Tensor& av2 = t.val(a);
        const Tensor& bv2 = t.val(b);
        Tensor& ga = t.grad(a);
        Tensor& gb = t.grad(b);
        for (std::int64_t bb = 0; bb < B; ++bb)
            for (std::int64_t m = 0; m < M; ++m)
                for (std::int64_t n = 0; n < N; ++n) {
                    const float gv = g[(bb * M + m) * N + n];
                    float* gar = ga.data() + (bb * M + m) * K;
                    const float* ar = av2.data() + (bb * M + m) * K;
                    if (transpose_b) {
                        const float* br = bv2.data() + (bb * N + n) * K;
                        float* gbr = gb.data() + (bb * N + n) * K;
                        for (std::int64_t k = 0; k < K; ++k) {
                            gar[k] += gv * br[k];
                            gbr[k] += gv * ar[k];
                        }
                    } else {
                        const float* bbase = bv2.data() + bb * K * N;
                        float* gbase = gb.data() + bb * K * N;
                        for (std::int64_t k = 0; k < K; ++k) {
                            gar[k] += gv * bbase[k * N + n];
                            gbase[k * N + n] += gv * ar[k];
                        }
                    }
                }
    });
}

}  // namespace

VarId bmm(Tape& tape, VarId a, VarId b) { return bmm_impl(tape, a, b, false); }
VarId bmm_nt(Tape& tape, VarId a, VarId b) { return bmm_impl(tape, a, b, true); }

// --------------------------------------------------------------------------

VarId layer_norm(Tape& tape, VarId x, VarId gamma, VarId beta, float eps) {
    const Tensor& xv = tape.val(x);
    const Tensor& gv = tape.val(gamma);
    const Tensor& bv = tape.val(beta);
    const std::int64_t d = xv.extent(xv.rank() - 1);
    if (d < 1 || gv.numel() != d || bv.numel() != d) {
        throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) + " entries");
    }
    if (!(eps > 0.f)) throw ConfigError("layer_norm: eps must be positive");
    const std::int64_t rows = xv.numel() / d;
    Tensor y(xv.shape());
    std::vector<float> mean(static_cast<std::size_t>(rows));
    std::vector<float> rstd(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xr = xv.data() + r * d;
        double m = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            if (!std::isfinite(xr[j])) {
                throw NumericError("layer_norm: non-finite input at token " + std::to_string(r) +
                                   ", channel " + std::to_string(j));
            }
            m += xr[j];
        }
        m /= d;
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double dv = xr[j] - m;
            var += dv * dv;
        }
        var /= d;
        const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
        mean[static_cast<std::size_t>(r)] = static_cast<float>(m);
        rstd[static_cast<std::size_t>(r)] = rs;
        float* yr = y.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) {
            yr[j] = (xr[j] - static_cast<float>(m)) * rs * gv[j] + bv[j];
        }
    }
    return tape.emit(std::move(y), {x, gamma, beta},
                     [x, gamma, beta, rows, d, mean = std::move(mean),
                      rstd = std::move(rstd)](Tape& t, VarId self) {
                         const Tensor& g = t.grad(self);
                         const Tensor& xv2 = t.val(x);
                         const Tensor& gv2 = t.val(gamma);
                         Tensor& gx = t.grad(x);
                         Tensor& gg = t.grad(gamma);
                         Tensor& gb = t.grad(beta);
                         for (std::int64_t r = 0; r < rows; ++r) {
                             const float* xr = xv2.data() + r * d;
                             const float* gr = g.data() + r * d;
                             const float m = mean[static_cast<std::size_t>(r)];
                             const float rs = rstd[static_cast<std::size_t>(r)];
                             double s1 = 0.0, s2 = 0.0;
                             for (std::int64_t j = 0; j < d; ++j) {
                                 const float xh = (xr[j] - m) * rs;
                                 const float dxh = gr[j] * gv2[j];
                                 s1 += dxh;
                                 s2 += static_cast<double>(dxh) * xh;
                                 gg[j] += gr[j] * xh;
                                 gb[j] += gr[j];
                             }
                             const float m1 = static_cast<float>(s1 / d);
                             const float m2 = static_cast<float>(s2 / d);
                             for (std::int64_t j = 0; j < d; ++j) {
                                 const float xh = (xr[j] - m) * rs;
                                 const float dxh = gr[j] * gv2[j];
                                 gx[r * d + j] += rs * (dxh - m1 - xh * m2);
                             }
                         }
                     });
}

// --------------------------------------------------------------------------

VarId reshape(Tape& tape, VarId x, Shape new_shape) {
    Tensor y = tape.val(x).reshaped(std::move(new_shape));
    Shape old_shape = tape.val(x).shape();
    return tape.emit(std::move(y), {x}, [x, old_shape](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

VarId permute(Tape& tape, VarId x, std::vector<int> perm) {
    const Tensor& xv = tape.val(x);
    const int r = xv.rank();
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: axis list length mismatch");
    Shape out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = xv.extent(perm[static_cast<std::size_t>(i)]);
    const auto in_strides = row_major_strides(xv.shape());
    const auto out_strides = row_major_strides(out_shape);
    Tensor y(out_shape);
    const std::int64_t n = xv.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t rem = i, src = 0;
        for (int a = 0; a < r; ++a) {
            const std::int64_t idx = rem / out_strides[static_cast<std::size_t>(a)];
            rem %= out_strides[static_cast<std::size_t>(a)];
            src += idx * in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
        }
        y[i] = xv[src];
    }
    return tape.emit(std::move(y), {x}, [x, perm, in_strides, out_strides, r](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            std::int64_t rem = i, src = 0;
            for (int a = 0; a < r; ++a) {
                const std::int64_t idx = rem / out_strides[static_cast<std::size_t>(a)];
                rem %= out_strides[static_cast<std::size_t>(a)];
                src += idx * in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
            }
            gx[src] += g[i];
        }
    });
}

namespace {

// Mean over all positions, channel-wise, with the reduction made canonical
// across the leading position axis: per-slice partial sums are accumulated in
// storage order, then the slice partials are sorted by value before the final
// sum. The result is therefore bit-identical under any permutation of the
// slices (frames), which the no-temporal-mixing invariance tests rely on.
void pooled_means(const Tensor& x, std::int64_t N, std::int64_t slices, std::int64_t per_slice,
                  std::int64_t C, float* out) {
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(slices),
                                             std::vector<double>(static_cast<std::size_t>(C)));
    const std::int64_t P = slices * per_slice;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t s = 0; s < slices; ++s) {
            auto& acc = partial[static_cast<std::size_t>(s)];
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::int64_t p = 0; p < per_slice; ++p) {
                const float* row = x.data() + ((n * slices + s) * per_slice + p) * C;
                for (std::int64_t c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += row[c];
            }
        }
        std::vector<double> col(static_cast<std::size_t>(slices));
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t s = 0; s < slices; ++s) {
                col[static_cast<std::size_t>(s)] = partial[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)];
            }
            std::sort(col.begin(), col.end());
            double total = 0.0;
            for (double v : col) total += v;
            out[n * C + c] = static_cast<float>(total / P);
        }
    }
}

}  // namespace

VarId global_avg_pool(Tape& tape, VarId x) {
    const Tensor& xv = tape.val(x);
    if (xv.rank() != 5) throw ShapeError("global_avg_pool expects rank-5 input");
    const std::int64_t N = xv.extent(0), T = xv.extent(1), C = xv.extent(4);
    const std::int64_t P = xv.numel() / (N * C);
    Tensor y({N, 1, 1, 1, C});
    pooled_means(xv, N, T, P / T, C, y.data());
    return tape.emit(std::move(y), {x}, [x, N, P, C](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        const float inv = 1.f / static_cast<float>(P);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < P; ++p)
                for (std::int64_t c = 0; c < C; ++c) gx[(n * P + p) * C + c] += g[n * C + c] * inv;
    });
}

VarId mean_tokens(Tape& tape, VarId x) {
    const Tensor& xv = tape.val(x);
    if (xv.rank() < 2) throw ShapeError("mean_tokens expects rank >= 2");
    const std::int64_t N = xv.extent(0), C = xv.extent(xv.rank() - 1);
    const std::int64_t P = xv.numel() / (N * C);
    const std::int64_t slices = xv.rank() >= 3 ? xv.extent(1) : 1;
    Tensor y({N, C});
    pooled_means(xv, N, slices, P / slices, C, y.data());
    return tape.emit(std::move(y), {x}, [x, N, P, C](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        const float inv = 1.f / static_cast<float>(P);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < P; ++p)
                for (std::int64_t c = 0; c < C; ++c) gx[(n * P + p) * C + c] += g[n * C + c] * inv;
    });
}

VarId sum_all(Tape& tape, VarId x) {
    const Tensor& xv = tape.val(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    Tensor y({1});
    y[0] = static_cast<float>(acc);
    return tape.emit(std::move(y), {x}, [x](Tape& t, VarId self) {
        const float g = t.grad(self)[0];
        Tensor& gx = t.grad(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

// --------------------------------------------------------------------------

VarId depthwise_conv2d(Tape& tape, VarId x, VarId k, VarId bias) {
    const Tensor& xv = tape.val(x);
    const Tensor& kv = tape.val(k);
    const Tensor& bv = tape.val(bias);
    if (xv.rank() != 5) throw ShapeError("depthwise_conv2d expects [N,T,H,W,C] input");
    if (kv.rank() != 3 || kv.extent(0) != kv.extent(1)) {
        throw ConfigError("depthwise_conv2d: kernel must be [k,k,C], got " + shape_str(kv.shape()));
    }
    const std::int64_t N = xv.extent(0), T = xv.extent(1), H = xv.extent(2), W = xv.extent(3),
                       C = xv.extent(4);
    const std::int64_t ks = kv.extent(0);
    if (ks % 2 == 0) throw ConfigError("depthwise_conv2d: kernel size must be odd");
    if (kv.extent(2) != C || bv.numel() != C) {
        throw ShapeError("depthwise_conv2d: kernel/bias channels do not match input C=" +
                         std::to_string(C));
    }
    const std::int64_t pad = (ks - 1) / 2;
    Tensor y(xv.shape());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w) {
                    float* yr = y.data() + (((n * T + t) * H + h) * W + w) * C;
                    for (std::int64_t c = 0; c < C; ++c) yr[c] = bv[c];
                    for (std::int64_t kh = 0; kh < ks; ++kh) {
                        const std::int64_t hi = h + kh - pad;
                        if (hi < 0 || hi >= H) continue;
                        for (std::int64_t kw = 0; kw < ks; ++kw) {
                            const std::int64_t wi = w + kw - pad;
                            if (wi < 0 || wi >= W) continue;
                            const float* xr = xv.data() + (((n * T + t) * H + hi) * W + wi) * C;
                            const float* kr = kv.data() + (kh * ks + kw) * C;
                            for (std::int64_t c = 0; c < C; ++c) yr[c] += xr[c] * kr[c];
                        }
                    }
                }
    return tape.emit(std::move(y), {x, k, bias},
                     [x, k, bias, N, T, H, W, C, ks, pad](Tape& t2, VarId self) {
                         const Tensor& g = t2.grad(self);
                         const Tensor& xv2 = t2.val(x);
                         const Tensor& kv2 = t2.val(k);
                         Tensor& gx = t2.grad(x);
                         Tensor& gk = t2.grad(k);
                         Tensor& gb = t2.grad(bias);
                         for (std::int64_t n = 0; n < N; ++n)
                             for (std::int64_t t = 0; t < T; ++t)
                                 for (std::int64_t h = 0; h < H; ++h)
                                     for (std::int64_t w = 0; w < W; ++w) {
                                         const float* gr =
                                             g.data() + (((n * T + t) * H + h) * W + w) * C;
                                         for (std::int64_t c = 0; c < C; ++c) gb[c] += gr[c];
                                         for (std::int64_t kh = 0; kh < ks; ++kh) {
                                             const std::int64_t hi = h + kh - pad;
                                             if (hi < 0 || hi >= H) continue;
                                             for (std::int64_t kw = 0; kw < ks; ++kw) {
                                                 const std::int64_t wi = w + kw - pad;
                                                 if (wi < 0 || wi >= W) continue;
                                                 const std::int64_t src =
                                                     (((n * T + t) * H + hi) * W + wi) * C;
                                                 const float* kr = kv2.data() + (kh * ks + kw) * C;
                                                 float* gkr = gk.data() + (kh * ks + kw) * C;
                                                 for (std::int64_t c = 0; c < C; ++c) {
                                                     gx[src + c] += gr[c] * kr[c];
                                                     gkr[c] += gr[c] * xv2[src + c];
                                                 }
                                             }
                                         }
                                     }
                     });
}

VarId conv2d(Tape& tape, VarId x, VarId k, std::optional<VarId> bias, int stride, int pad) {
    const Tensor& xv = tape.val(x);
    const Tensor& kv = tape.val(k);
    if (xv.rank() != 5) throw ShapeError("conv2d expects [N,T,H,W,C] input");
    if (kv.rank() != 4) throw ShapeError("conv2d: kernel must be [kh,kw,Ci,Co]");
    const std::int64_t N = xv.extent(0), T = xv.extent(1), H = xv.extent(2), W = xv.extent(3),
                       Ci = xv.extent(4);
    const std::int64_t kh = kv.extent(0), kw = kv.extent(1), Co = kv.extent(3);
    if (kv.extent(2) != Ci) {
        throw ShapeError("conv2d: kernel input channels " + std::to_string(kv.extent(2)) +
                         " vs input C=" + std::to_string(Ci));
    }
    const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) {
        throw ShapeError("conv2d: degenerate output extent for input " + shape_str(xv.shape()));
    }
    Tensor y({N, T, Ho, Wo, Co});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t ho = 0; ho < Ho; ++ho)
                for (std::int64_t wo = 0; wo < Wo; ++wo) {
                    float* yr = y.data() + (((n * T + t) * Ho + ho) * Wo + wo) * Co;
                    if (bias) {
                        const Tensor& bv = tape.val(*bias);
                        for (std::int64_t co = 0; co < Co; ++co) yr[co] = bv[co];
                    }
                    for (std::int64_t a = 0; a < kh; ++a) {
                        const std::int64_t hi = ho * stride - pad + a;
                        if (hi < 0 || hi >= H) continue;
                        for (std::int64_t b = 0; b < kw; ++b) {
                            const std::int64_t wi = wo * stride - pad + b;
                            if (wi < 0 || wi >= W) continue;
                            const float* xr = xv.data() + (((n * T + t) * H + hi) * W + wi) * Ci;
                            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                const float a_v = xr[ci];
                                const float* krr = kv.data() + ((a * kw + b) * Ci + ci) * Co;
                                for (std::int64_t co = 0; co < Co; ++co) yr[co] += a_v * krr[co];
                            }
                        }
                    }
                }
    std::vector<VarId> parents = {x, k};
    if (bias) parents.push_back(*bias);
    return tape.emit(
        std::move(y), std::move(parents),
        [x, k, bias, N, T, H, W, Ci, kh, kw, Co, Ho, Wo, stride, pad](Tape& t2, VarId self) {
            const Tensor& g = t2.grad(self);
            const Tensor& xv2 = t2.val(x);
            const Tensor& kv2 = t2.val(k);
            Tensor& gx = t2.grad(x);
            Tensor& gk = t2.grad(k);
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t t = 0; t < T; ++t)
                    for (std::int64_t ho = 0; ho < Ho; ++ho)
                        for (std::int64_t wo = 0; wo < Wo; ++wo) {
                            const float* gr = g.data() + (((n * T + t) * Ho + ho) * Wo + wo) * Co;
                            for (std::int64_t a = 0; a < kh; ++a) {
                                const std::int64_t hi = ho * stride - pad + a;
                                if (hi < 0 || hi >= H) continue;
                                for (std::int64_t b = 0; b < kw; ++b) {
                                    const std::int64_t wi = wo * stride - pad + b;
                                    if (wi < 0 || wi >= W) continue;
                                    const std::int64_t src = (((n * T + t) * H + hi) * W + wi) * Ci;
                                    for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                        const float* krr = kv2.data() + ((a * kw + b) * Ci + ci) * Co;
                                        float* gkr = gk.data() + ((a * kw + b) * Ci + ci) * Co;
                                        float acc = 0.f;
                                        const float xvv = xv2[src + ci];
                                        for (std::int64_t co = 0; co < Co; ++co) {
                                            acc += gr[co] * krr[co];
                                            gkr[co] += xvv * gr[co];
                                        }
                                        gx[src + ci] += acc;
                                    }
                                }
                            }
                        }
            if (bias) {
                Tensor& gb = t2.grad(*bias);
                const std::int64_t rows = N * T * Ho * Wo;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const float* gr = g.data() + r * Co;
                    for (std::int64_t co = 0; co < Co; ++co) gb[co] += gr[co];
                }
            }
        });
}

VarId conv3d(Tape& tape, VarId x, VarId k, std::optional<VarId> bias, std::array<int, 3> stride,
             std::array<int, 3> pad) {
    const Tensor& xv = tape.val(x);
    const Tensor& kv = tape.val(k);
    if (xv.rank() != 5) throw ShapeError("conv3d expects [N,T,H,W,C] input");
    if (kv.rank() != 5) throw ShapeError("conv3d: kernel must be [kt,kh,kw,Ci,Co]");
    const std::int64_t N = xv.extent(0), T = xv.extent(1), H = xv.extent(2), W = xv.extent(3),
                       Ci = xv.extent(4);
    const std::int64_t kt = kv.extent(0), kh = kv.extent(1), kw = kv.extent(2), Co = kv.extent(4);
    if (kv.extent(3) != Ci) throw ShapeError("conv3d: kernel input channels mismatch");
    const std::int64_t To = (T + 2 * pad[0] - kt) / stride[0] + 1;
    const std::int64_t Ho = (H + 2 * pad[1] - kh) / stride[1] + 1;
    const std::int64_t Wo = (W + 2 * pad[2] - kw) / stride[2] + 1;
    if (To < 1 || Ho < 1 || Wo < 1) throw ShapeError("conv3d: degenerate output extent");
    Tensor y({N, To, Ho, Wo, Co});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t to = 0; to < To; ++to)
            for (std::int64_t ho = 0; ho < Ho; ++ho)
                for (std::int64_t wo = 0; wo < Wo; ++wo) {
                    float* yr = y.data() + (((n * To + to) * Ho + ho) * Wo + wo) * Co;
                    if (bias) {
                        const Tensor& bv = tape.val(*bias);
                        for (std::int64_t co = 0; co < Co; ++co) yr[co] = bv[co];
                    }
                    for (std::int64_t c3 = 0; c3 < kt; ++c3) {
                        const std::int64_t ti = to * stride[0] - pad[0] + c3;
                        if (ti < 0 || ti >= T) continue;
                        for (std::int64_t a = 0; a < kh; ++a) {
                            const std::int64_t hi = ho * stride[1] - pad[1] + a;
                            if (hi < 0 || hi >= H) continue;
                            for (std::int64_t b = 0; b < kw; ++b) {
                                const std::int64_t wi = wo * stride[2] - pad[2] + b;
                                if (wi < 0 || wi >= W) continue;
                                const float* xr =
                                    xv.data() + (((n * T + ti) * H + hi) * W + wi) * Ci;
                                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                    const float a_v = xr[ci];
                                    const float* krr =
                                        kv.data() + (((c3 * kh + a) * kw + b) * Ci + ci) * Co;
                                    for (std::int64_t co = 0; co < Co; ++co) yr[co] += a_v * krr[co];
                                }
                            }
                        }
                    }
                }
    std::vector<VarId> parents = {x, k};
    if (bias) parents.push_back(*bias);
    return tape.emit(
        std::move(y), std::move(parents),
        [x, k, bias, N, T, H, W, Ci, kt, kh, kw, Co, To, Ho, Wo, stride, pad](Tape& t2, VarId self) {
            const Tensor& g = t2.grad(self);
            const Tensor& xv2 = t2.val(x);
            const Tensor& kv2 = t2.val(k);
            Tensor& gx = t2.grad(x);
            Tensor& gk = t2.grad(k);
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t to = 0; to < To; ++to)
                    for (std::int64_t ho = 0; ho < Ho; ++ho)
                        for (std::int64_t wo = 0; wo < Wo; ++wo) {
                            const float* gr = g.data() + (((n * To + to) * Ho + ho) * Wo + wo) * Co;
                            for (std::int64_t c3 = 0; c3 < kt; ++c3) {
                                const std::int64_t ti = to * stride[0] - pad[0] + c3;
                                if (ti < 0 || ti >= T) continue;
                                for (std::int64_t a = 0; a < kh; ++a) {
                                    const std::int64_t hi = ho * stride[1] - pad[1] + a;
                                    if (hi < 0 || hi >= H) continue;
                                    for (std::int64_t b = 0; b < kw; ++b) {
                                        const std::int64_t wi = wo * stride[2] - pad[2] + b;
                                        if (wi < 0 || wi >= W) continue;
                                        const std::int64_t src =
                                            (((n * T + ti) * H + hi) * W + wi) * Ci;
                                        for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                            const std::int64_t koff =
                                                (((c3 * kh + a) * kw + b) * Ci + ci) * Co;
                                            float acc = 0.f;
                                            const float xvv = xv2[src + ci];
                                            for (std::int64_t co = 0; co < Co; ++co) {
                                                acc += gr[co] * kv2[koff + co];
                                                gk[koff + co] += xvv * gr[co];
                                            }
                                            gx[src + ci] += acc;
                                        }
                                    }
                                }
                            }
                        }
            if (bias) {
                Tensor& gb = t2.grad(*bias);
                const std::int64_t rows = N * To * Ho * Wo;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const float* gr = g.data() + r * Co;
                    for (std::int64_t co = 0; co < Co; ++co) gb[co] += gr[co];
                }
            }
        });
}

// --------------------------------------------------------------------------

VarId drop_path(Tape& tape, VarId branch, float rate, Rng* rng, bool training) {
    if (!training || rate <= 0.f) return branch;
    const Tensor& xv = tape.val(branch);
    const std::int64_t N = xv.extent(0);
    const std::int64_t P = xv.numel() / N;
    std::vector<float> mask(static_cast<std::size_t>(N), 0.f);
    if (rate < 1.f) {
        const float keep_scale = 1.f / (1.f - rate);
        for (std::int64_t n = 0; n < N; ++n) {
            const float u = rng ? rng->uniform() : 0.f;
            mask[static_cast<std::size_t>(n)] = (u >= rate) ? keep_scale : 0.f;
        }
    }
    Tensor y(xv.shape());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < P; ++p) y[n * P + p] = xv[n * P + p] * mask[static_cast<std::size_t>(n)];
    return tape.emit(std::move(y), {branch}, [branch, N, P, mask = std::move(mask)](Tape& t, VarId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(branch);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < P; ++p) gx[n * P + p] += g[n * P + p] * mask[static_cast<std::size_t>(n)];
    });
}

VarId cross_entropy(Tape& tape, VarId logits, const std::vector<int>& labels) {
    const Tensor& lv = tape.val(logits);
    if (lv.rank() != 2) throw ShapeError("cross_entropy expects [N,K] logits");
    const std::int64_t N = lv.extent(0), K = lv.extent(1);
    if (static_cast<std::int64_t>(labels.size()) != N) {
        throw ShapeError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " vs batch " + std::to_string(N));
    }
    std::vector<float> lse(static_cast<std::size_t>(N));
    double loss = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
        const int y = labels[static_cast<std::size_t>(n)];
        if (y < 0 || y >= K) throw UsageError("cross_entropy: label out of range");
        const float* row = lv.data() + n * K;
        float m = row[0];
        for (std::int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
        double s = 0.0;
        for (std::int64_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(row[k]) - m);
        const float l = m + static_cast<float>(std::log(s));
        lse[static_cast<std::size_t>(n)] = l;
        loss += static_cast<double>(l) - row[y];
    }
    Tensor out({1});
    out[0] = static_cast<float>(loss / N);
    return tape.emit(std::move(out), {logits},
                     [logits, labels, N, K, lse = std::move(lse)](Tape& t, VarId self) {
                         const float g = t.grad(self)[0] / static_cast<float>(N);
                         const Tensor& lv2 = t.val(logits);
                         Tensor& gl = t.grad(logits);
                         for (std::int64_t n = 0; n < N; ++n) {
                             const float* row = lv2.data() + n * K;
                             const float l = lse[static_cast<std::size_t>(n)];
                             for (std::int64_t k = 0; k < K; ++k) {
                                 float p = std::exp(row[k] - l);
                                 if (k == labels[static_cast<std::size_t>(n)]) p -= 1.f;
                                 gl[n * K + k] += g * p;
                             }
                         }
                     });
}

}  // namespace afs
