#pragma once

#include <array>
#include <optional>
#include <vector>

#include "afs/tape.hpp"
#include "afs/tensor.hpp"

namespace afs {

// Elementwise / arithmetic -------------------------------------------------

VarId add(Tape& tape, VarId a, VarId b);        // same shape
VarId mul(Tape& tape, VarId a, VarId b);        // Hadamard, same shape
VarId scale(Tape& tape, VarId a, float c);
// x: [N,T,H,W,C], gate: [N,1,1,1,C]; broadcasts the gate over all positions.
VarId channel_gate(Tape& tape, VarId x, VarId gate);

// Activations --------------------------------------------------------------

VarId gelu(Tape& tape, VarId x);                // tanh approximation
VarId sigmoid(Tape& tape, VarId x);
VarId softmax(Tape& tape, VarId x, int axis);

// Linear algebra -----------------------------------------------------------

// x: [..., d_in] treated as rows; w: [d_in, d_out]; optional bias [d_out].
VarId linear(Tape& tape, VarId x, VarId w, std::optional<VarId> b = std::nullopt);
// a: [B,M,K], b: [B,K,N] -> [B,M,N]
VarId bmm(Tape& tape, VarId a, VarId b);
// a: [B,M,K], b: [B,N,K] -> [B,M,N]  (b transposed)
VarId bmm_nt(Tape& tape, VarId a, VarId b);

// Normalization ------------------------------------------------------------

// Normalizes over the trailing axis; gamma/beta: [d].
VarId layer_norm(Tape& tape, VarId x, VarId gamma, VarId beta, float eps = 1e-6f);

// Reductions / views -------------------------------------------------------

VarId reshape(Tape& tape, VarId x, Shape new_shape);
VarId permute(Tape& tape, VarId x, std::vector<int> perm);
VarId global_avg_pool(Tape& tape, VarId x);     // [N,T,H,W,C] -> [N,1,1,1,C]
VarId mean_tokens(Tape& tape, VarId x);         // [N,...,C] -> [N,C]
VarId sum_all(Tape& tape, VarId x);             // -> [1]

// Convolutions (channels-last; the T axis is a plain batch axis for 2D) -----

// x: [N,T,H,W,C], k: [kh,kw,C], bias: [C]; stride 1, zero padding (kh-1)/2.
VarId depthwise_conv2d(Tape& tape, VarId x, VarId k, VarId bias);
// x: [N,T,H,W,Ci], k: [kh,kw,Ci,Co], per-frame cross-correlation.
VarId conv2d(Tape& tape, VarId x, VarId k, std::optional<VarId> bias, int stride, int pad);
// x: [N,T,H,W,Ci], k: [kt,kh,kw,Ci,Co].
VarId conv3d(Tape& tape, VarId x, VarId k, std::optional<VarId> bias, std::array<int, 3> stride,
             std::array<int, 3> pad);

// Training utilities -------------------------------------------------------

// Per-sample stochastic depth on the residual branch. rate >= 1 zeroes the
// branch; eval mode (training=false) is the identity.
VarId drop_path(Tape& tape, VarId branch, float rate, Rng* rng, bool training);

// logits: [N,K]; mean negative log-likelihood.
VarId cross_entropy(Tape& tape, VarId logits, const std::vector<int>& labels);

}  // namespace afs
