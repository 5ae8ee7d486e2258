#include "afs/model.hpp"

#include "afs/error.hpp"
#include "afs/ops.hpp"

namespace afs {

Variant variant_from_string(const std::string& s) {
    if (s == "tiny") return Variant::Tiny;
    if (s == "small") return Variant::Small;
    if (s == "medium") return Variant::Medium;
    if (s == "micro") return Variant::Micro;
    throw ConfigError("unknown model variant '" + s + "' (expected tiny/small/medium/micro)");
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Tiny: return "tiny";
        case Variant::Small: return "small";
        case Variant::Medium: return "medium";
        case Variant::Micro: return "micro";
    }
    return "?";
}

std::vector<StageSpec> stages_for(Variant v) {
    switch (v) {
        case Variant::Tiny: return {{64, 3, 8}, {128, 4, 8}, {320, 8, 4}, {512, 3, 4}};
        case Variant::Small: return {{64, 3, 8}, {128, 4, 8}, {320, 22, 4}, {512, 3, 4}};
        case Variant::Medium: return {{64, 3, 8}, {128, 8, 8}, {320, 33, 4}, {512, 3, 4}};
        case Variant::Micro: return {{32, 4, 2}};
    }
    throw ConfigError("unknown model variant");
}

ShiftSpec ModelSpec::resolved_shift() const {
    if (!shift.axes.empty() || shift.explicit_groups) return shift;
    return is_video() ? video_shift_default() : image_shift_default();
}

void validate_model_spec(const ModelSpec& spec) {
    if (spec.frames < 1) throw ConfigError("frames must be >= 1");
    if (spec.in_channels < 1) throw ConfigError("input channels must be >= 1");
    if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (spec.drop_path_rate < 0.f || spec.drop_path_rate >= 1.f) {
        throw ConfigError("drop_path_rate must lie in [0,1)");
    }
    const std::int64_t div = spec.variant == Variant::Micro ? 4 : 32;
    if (spec.height <= 0 || spec.width <= 0 || spec.height % div != 0 || spec.width % div != 0) {
        throw ConfigError("input " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                          " must be divisible by " + std::to_string(div));
    }
    if (spec.stem == StemKind::S3D && spec.frames % 2 != 0) {
        throw ConfigError("3D stem requires an even frame count");
    }
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    validate_model_spec(spec);
    Model m;
    m.spec = spec;
    m.stages = stages_for(spec.variant);
    Rng rng(seed);

    const std::int64_t c1 = m.stages.front().channels;
    if (spec.stem == StemKind::S3D) {
        m.stem_k = &m.params.create("stem.kernel", {3, 7, 7, spec.in_channels, c1});
    } else {
        m.stem_k = &m.params.create("stem.kernel", {7, 7, spec.in_channels, c1});
    }
    fill_trunc_normal(m.stem_k->value, 0.02f, rng);
    m.stem_b = &m.params.create("stem.bias", {c1});
    m.stem_ln_g = &m.params.create("stem.ln.gamma", {c1});
    m.stem_ln_g->value.fill(1.f);
    m.stem_ln_b = &m.params.create("stem.ln.beta", {c1});

    std::int64_t total_blocks = 0;
    for (const StageSpec& s : m.stages) total_blocks += s.depth;
    std::int64_t block_index = 0;

    const ShiftSpec base_shift = spec.resolved_shift();
    for (std::size_t si = 0; si < m.stages.size(); ++si) {
        const StageSpec& st = m.stages[si];
        if (si > 0) {
            const std::int64_t ci = m.stages[si - 1].channels;
            const std::string dn = "down" + std::to_string(si + 1);
            Model::Downsample d;
            d.k = &m.params.create(dn + ".kernel", {2, 2, ci, st.channels});
            fill_trunc_normal(d.k->value, 0.02f, rng);
            d.b = &m.params.create(dn + ".bias", {st.channels});
            d.ln_g = &m.params.create(dn + ".ln.gamma", {st.channels});
            d.ln_g->value.fill(1.f);
            d.ln_b = &m.params.create(dn + ".ln.beta", {st.channels});
            m.downs.push_back(d);
        }
        std::vector<BlockConfig> cfgs;
        std::vector<BlockParams> ps;
        for (std::int64_t b = 0; b < st.depth; ++b) {
            BlockConfig base;
            base.d = st.channels;
            base.shift = base_shift.with_channels(st.channels);
            base.se_reduction = spec.se_reduction;
            base.mlp_expansion = st.expansion;
            base.mhsa.heads = spec.mhsa_heads;
            BlockConfig cfg = make_variant(spec.block_row, base);
            cfg.use_mhsa = spec.use_mhsa;
            if (spec.use_mhsa) {
                cfg.use_scale = false;
                cfg.use_bias = false;
                cfg.only_shift = false;
            }
            if (total_blocks > 1) {
                cfg.drop_path_rate = spec.drop_path_rate * static_cast<float>(block_index) /
                                     static_cast<float>(total_blocks - 1);
            }
            validate_block_config(cfg);
            const std::string prefix =
                "stage" + std::to_string(si + 1) + ".block" + std::to_string(b);
            ps.push_back(make_block_params(m.params, prefix, cfg, rng));
            cfgs.push_back(cfg);
            ++block_index;
        }
        m.block_cfgs.push_back(std::move(cfgs));
        m.block_params.push_back(std::move(ps));
    }

    const std::int64_t cl = m.stages.back().channels;
    m.final_ln_g = &m.params.create("final_ln.gamma", {cl});
    m.final_ln_g->value.fill(1.f);
    m.final_ln_b = &m.params.create("final_ln.beta", {cl});
    m.head_w = &m.params.create("head.w", {cl, spec.num_classes});
    fill_trunc_normal(m.head_w->value, 0.02f, rng);
    m.head_b = &m.params.create("head.bias", {spec.num_classes});
    return m;
}

VarId stem_forward(Tape& tape, VarId x, const Model& m) {
    const Tensor& xv = tape.val(x);
    if (xv.rank() != 5 || xv.extent(1) != m.spec.frames || xv.extent(2) != m.spec.height ||
        xv.extent(3) != m.spec.width || xv.extent(4) != m.spec.in_channels) {
        throw ShapeError("model input " + shape_str(xv.shape()) + " does not match spec [N," +
                         std::to_string(m.spec.frames) + "," + std::to_string(m.spec.height) + "," +
                         std::to_string(m.spec.width) + "," + std::to_string(m.spec.in_channels) +
                         "]");
    }
    VarId h;
    if (m.spec.stem == StemKind::S3D) {
        h = conv3d(tape, x, tape.leaf(*m.stem_k), tape.leaf(*m.stem_b), {2, 4, 4}, {1, 3, 3});
    } else {
        h = conv2d(tape, x, tape.leaf(*m.stem_k), tape.leaf(*m.stem_b), 4, 3);
    }
    return layer_norm(tape, h, tape.leaf(*m.stem_ln_g), tape.leaf(*m.stem_ln_b));
}

VarId downsample_forward(Tape& tape, VarId x, const Model::Downsample& d, float eps) {
    const Tensor& xv = tape.val(x);
    if (xv.extent(2) % 2 != 0 || xv.extent(3) % 2 != 0) {
        throw ShapeError("downsample needs even spatial extents, got " + shape_str(xv.shape()));
    }
    VarId h = conv2d(tape, x, tape.leaf(*d.k), tape.leaf(*d.b), 2, 0);
    return layer_norm(tape, h, tape.leaf(*d.ln_g), tape.leaf(*d.ln_b), eps);
}

VarId head_forward(Tape& tape, VarId features, const Model& m) {
    VarId pooled = mean_tokens(tape, features);
    return linear(tape, pooled, tape.leaf(*m.head_w), tape.leaf(*m.head_b));
}

VarId Model::forward(Tape& tape, VarId x, Rng* rng, bool training) {
    VarId h = stem_forward(tape, x, *this);
    for (std::size_t si = 0; si < stages.size(); ++si) {
        if (si > 0) h = downsample_forward(tape, h, downs[si - 1]);
        for (std::size_t b = 0; b < block_cfgs[si].size(); ++b) {
            h = affine_shift_layer(tape, h, block_cfgs[si][b], block_params[si][b], rng, training);
        }
    }
    h = layer_norm(tape, h, tape.leaf(*final_ln_g), tape.leaf(*final_ln_b));
    return head_forward(tape, h, *this);
}

Tensor Model::forward_eval(const Tensor& x) {
    Tape tape;
    VarId logits = forward(tape, tape.leaf(x));
    return tape.val(logits);
}

}  // namespace afs
