#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "afs/ops.hpp"
#include "afs/shift.hpp"
#include "afs/tape.hpp"

namespace afs {

struct MHSAConfig {
    std::int64_t heads = 4;
};

// Settings for one transformer layer, covering the ablation rows R1..R6 and
// the attention reference.
struct BlockConfig {
    std::int64_t d = 0;
    ShiftSpec shift;
    std::int64_t se_reduction = 4;
    int dwconv_kernel = 3;
    bool use_scale = true;
    bool use_bias = true;
    bool extra_mlp_shift = false;
    bool only_shift = false;
    bool use_mhsa = false;
    MHSAConfig mhsa;
    std::int64_t mlp_expansion = 4;
    float drop_path_rate = 0.f;
    float ln_eps = 1e-6f;
};

enum class VariantRow { R1 = 1, R2, R3, R4, R5, R6 };

VariantRow variant_row_from_string(const std::string& s);
const char* variant_row_name(VariantRow row);

// Applies a Table-row flag pattern on top of base settings.
BlockConfig make_variant(VariantRow row, BlockConfig base);

void validate_block_config(const BlockConfig& cfg);

// Ordered, name-addressable parameter container. Creation order defines the
// serialization order.
class ParamStore {
  public:
    Parameter& create(std::string name, Shape shape);
    Parameter* find(const std::string& name);
    Parameter& at(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
    std::int64_t total_params() const;
    void zero_grad();

  private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Pointers into a ParamStore for one layer; unused branches stay null.
struct BlockParams {
    Parameter* ln1_g = nullptr;
    Parameter* ln1_b = nullptr;
    Parameter* w_v = nullptr;
    Parameter* w_h = nullptr;
    Parameter* w_h_b = nullptr;
    Parameter* se_w1 = nullptr;
    Parameter* se_b1 = nullptr;
    Parameter* se_w2 = nullptr;
    Parameter* se_b2 = nullptr;
    Parameter* dw_k = nullptr;
    Parameter* dw_b = nullptr;
    Parameter* w_q = nullptr;
    Parameter* w_k = nullptr;
    Parameter* ln2_g = nullptr;
    Parameter* ln2_b = nullptr;
    Parameter* mlp_w1 = nullptr;
    Parameter* mlp_b1 = nullptr;
    Parameter* mlp_w2 = nullptr;
    Parameter* mlp_b2 = nullptr;
};

// Creates and initializes every parameter the configured layer needs, under
// names "<prefix>.ln1.gamma", "<prefix>.w_v", ... Weight matrices use
// truncated-normal init (std 0.02); norms start at identity, biases at zero.
BlockParams make_block_params(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                              Rng& rng);

// V = LN(x) . W_v, normalizing over the trailing channel axis.
VarId value_projection(Tape& tape, VarId x, const BlockParams& p, float eps = 1e-6f);

// Z = shift(v); optional per-channel sigmoid gate from pooled Z; optional
// depthwise-conv term. Input and output are [N,T,H,W,C].
VarId affine_shift_mixer(Tape& tape, VarId v, const BlockConfig& cfg, const BlockParams& p);

// LN -> linear(d -> E.d) -> GELU -> linear(E.d -> d), plus residual; with
// extra_mlp_shift the LN output is shifted first. Drop-path gates only this
// branch.
VarId mlp_block(Tape& tape, VarId y, const BlockConfig& cfg, const BlockParams& p, Rng* rng,
                bool training);

// Softmax attention over tokens; x is [N,S,d].
VarId mhsa_reference(Tape& tape, VarId x, const MHSAConfig& mcfg, const BlockParams& p,
                     std::int64_t d);

// Full layer: mixer branch with plain residual (never dropped), then the MLP
// block. Input is [N,T,H,W,C].
VarId affine_shift_layer(Tape& tape, VarId x, const BlockConfig& cfg, const BlockParams& p,
                         Rng* rng = nullptr, bool training = false);

}  // namespace afs
