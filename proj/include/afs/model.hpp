#pragma once

#include <string>
#include <vector>

#include "afs/blocks.hpp"
#include "afs/shift.hpp"

namespace afs {

enum class Variant { Tiny, Small, Medium, Micro };
enum class StemKind { S2D, S3D };

Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);

struct StageSpec {
    std::int64_t channels = 0;
    std::int64_t depth = 0;
    std::int64_t expansion = 0;
};

// Table of stage layouts. Tiny/Small/Medium are the four-stage pyramids;
// Micro is a single-stage toy model for gradient checks and the harness.
std::vector<StageSpec> stages_for(Variant v);

struct ModelSpec {
    Variant variant = Variant::Tiny;
    StemKind stem = StemKind::S2D;
    std::int64_t frames = 1;
    std::int64_t height = 224;
    std::int64_t width = 224;
    std::int64_t in_channels = 3;
    std::int64_t num_classes = 1000;
    // Base shift layout; channel counts are filled per stage. Empty axes mean
    // "domain default": {h,w} 1/3 for single-frame input, {t,h,w} 1/2 otherwise.
    ShiftSpec shift;
    VariantRow block_row = VariantRow::R4;
    bool use_mhsa = false;
    std::int64_t mhsa_heads = 4;
    std::int64_t se_reduction = 4;
    float drop_path_rate = 0.f;  // peak rate; ramped linearly across depth

    ShiftSpec resolved_shift() const;
    bool is_video() const { return frames > 1 || stem == StemKind::S3D; }
};

void validate_model_spec(const ModelSpec& spec);

struct Model {
    ModelSpec spec;
    ParamStore params;
    std::vector<StageSpec> stages;
    std::vector<std::vector<BlockConfig>> block_cfgs;    // [stage][block]
    std::vector<std::vector<BlockParams>> block_params;  // [stage][block]

    Parameter* stem_k = nullptr;
    Parameter* stem_b = nullptr;
    Parameter* stem_ln_g = nullptr;
    Parameter* stem_ln_b = nullptr;
    struct Downsample {
        Parameter* k = nullptr;
        Parameter* b = nullptr;
        Parameter* ln_g = nullptr;
        Parameter* ln_b = nullptr;
    };
    std::vector<Downsample> downs;  // one per stage transition
    Parameter* final_ln_g = nullptr;
    Parameter* final_ln_b = nullptr;
    Parameter* head_w = nullptr;
    Parameter* head_b = nullptr;

    // x: [N,T,H,W,C_in] -> logits [N,num_classes].
    VarId forward(Tape& tape, VarId x, Rng* rng = nullptr, bool training = false);
    Tensor forward_eval(const Tensor& x);
};

Model build_model(const ModelSpec& spec, std::uint64_t seed);

// Stem-only and stage-plumbing pieces, exposed for testing.
VarId stem_forward(Tape& tape, VarId x, const Model& m);
VarId downsample_forward(Tape& tape, VarId x, const Model::Downsample& d, float eps = 1e-6f);
VarId head_forward(Tape& tape, VarId features, const Model& m);

}  // namespace afs
