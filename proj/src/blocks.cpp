#include "afs/blocks.hpp"

#include <cmath>

#include "afs/error.hpp"

namespace afs {

VariantRow variant_row_from_string(const std::string& s) {
    if (s == "R1") return VariantRow::R1;
    if (s == "R2") return VariantRow::R2;
    if (s == "R3") return VariantRow::R3;
    if (s == "R4") return VariantRow::R4;
    if (s == "R5") return VariantRow::R5;
    if (s == "R6") return VariantRow::R6;
    throw ConfigError("unknown block variant '" + s + "' (expected R1..R6)");
}

const char* variant_row_name(VariantRow row) {
    switch (row) {
        case VariantRow::R1: return "R1";
        case VariantRow::R2: return "R2";
        case VariantRow::R3: return "R3";
        case VariantRow::R4: return "R4";
        case VariantRow::R5: return "R5";
        case VariantRow::R6: return "R6";
    }
    return "?";
}

BlockConfig make_variant(VariantRow row, BlockConfig base) {
    base.use_scale = true;
    base.use_bias = true;
    base.extra_mlp_shift = false;
    base.only_shift = false;
    base.use_mhsa = false;
    switch (row) {
        case VariantRow::R1: base.use_scale = false; base.use_bias = false; break;
        case VariantRow::R2: base.use_scale = false; break;
        case VariantRow::R3: base.use_bias = false; break;
        case VariantRow::R4: break;
        case VariantRow::R5: base.extra_mlp_shift = true; break;
        case VariantRow::R6:
            base.use_scale = false;
            base.use_bias = false;
            base.only_shift = true;
            break;
    }
    return base;
}

void validate_block_config(const BlockConfig& cfg) {
    if (cfg.d <= 0) throw ConfigError("block dim must be positive");
    if (cfg.se_reduction <= 0 || cfg.d % cfg.se_reduction != 0) {
        throw ConfigError("block dim " + std::to_string(cfg.d) + " not divisible by SE reduction " +
                          std::to_string(cfg.se_reduction));
    }
    if (cfg.dwconv_kernel <= 0 || cfg.dwconv_kernel % 2 == 0) {
        throw ConfigError("DWConv kernel must be odd and positive");
    }
    if (cfg.mlp_expansion <= 0) throw ConfigError("MLP expansion must be positive");
    // Rate 1 is a degenerate setting used to prove branch placement.
    if (cfg.drop_path_rate < 0.f || cfg.drop_path_rate > 1.f) {
        throw ConfigError("drop_path_rate must lie in [0,1]");
    }
    if (cfg.only_shift && (cfg.use_scale || cfg.use_bias || cfg.extra_mlp_shift || cfg.use_mhsa)) {
        throw ConfigError("only_shift excludes every other mixer flag");
    }
    if (cfg.use_mhsa) {
        if (cfg.mhsa.heads <= 0 || cfg.d % cfg.mhsa.heads != 0) {
            throw ConfigError("block dim " + std::to_string(cfg.d) + " not divisible by " +
                              std::to_string(cfg.mhsa.heads) + " heads");
        }
    }
}

// --------------------------------------------------------------------------

Parameter& ParamStore::create(std::string name, Shape shape) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Parameter>(name, Tensor(std::move(shape))));
    index_.emplace(std::move(name), params_.size() - 1);
    return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamStore::at(const std::string& name) {
    Parameter* p = find(name);
    if (p == nullptr) throw ConfigError("unknown parameter '" + name + "'");
    return *p;
}

std::int64_t ParamStore::total_params() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

// --------------------------------------------------------------------------

namespace {

Parameter& weight(ParamStore& store, const std::string& name, Shape shape, Rng& rng) {
    Parameter& p = store.create(name, std::move(shape));
    fill_trunc_normal(p.value, 0.02f, rng);
    return p;
}

Parameter& ones_param(ParamStore& store, const std::string& name, Shape shape) {
    Parameter& p = store.create(name, std::move(shape));
    p.value.fill(1.f);
    return p;
}

}  // namespace

BlockParams make_block_params(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                              Rng& rng) {
    validate_block_config(cfg);
    BlockParams p;
    const std::int64_t d = cfg.d;
    if (!cfg.only_shift) {
        p.ln1_g = &ones_param(store, prefix + ".ln1.gamma", {d});
        p.ln1_b = &store.create(prefix + ".ln1.beta", {d});
        if (cfg.use_mhsa) {
            p.w_q = &weight(store, prefix + ".w_q", {d, d}, rng);
            p.w_k = &weight(store, prefix + ".w_k", {d, d}, rng);
        }
        p.w_v = &weight(store, prefix + ".w_v", {d, d}, rng);
        if (!cfg.use_mhsa) {
            if (cfg.use_scale) {
                const std::int64_t dr = d / cfg.se_reduction;
                p.se_w1 = &weight(store, prefix + ".se.w1", {d, dr}, rng);
                p.se_b1 = &store.create(prefix + ".se.b1", {dr});
                p.se_w2 = &weight(store, prefix + ".se.w2", {dr, d}, rng);
                p.se_b2 = &store.create(prefix + ".se.b2", {d});
            }
            if (cfg.use_bias) {
                const std::int64_t k = cfg.dwconv_kernel;
                p.dw_k = &weight(store, prefix + ".dw.kernel", {k, k, d}, rng);
                p.dw_b = &store.create(prefix + ".dw.bias", {d});
            }
        }
        p.w_h = &weight(store, prefix + ".w_h", {d, d}, rng);
        p.w_h_b = &store.create(prefix + ".w_h.bias", {d});
    }
    p.ln2_g = &ones_param(store, prefix + ".ln2.gamma", {d});
    p.ln2_b = &store.create(prefix + ".ln2.beta", {d});
    const std::int64_t hidden = cfg.mlp_expansion * d;
    p.mlp_w1 = &weight(store, prefix + ".mlp.w1", {d, hidden}, rng);
    p.mlp_b1 = &store.create(prefix + ".mlp.b1", {hidden});
    p.mlp_w2 = &weight(store, prefix + ".mlp.w2", {hidden, d}, rng);
    p.mlp_b2 = &store.create(prefix + ".mlp.b2", {d});
    return p;
}

// --------------------------------------------------------------------------

VarId value_projection(Tape& tape, VarId x, const BlockParams& p, float eps) {
    if (p.ln1_g == nullptr || p.w_v == nullptr) {
        throw ConfigError("value projection requires ln1 and w_v parameters");
    }
    VarId ln = layer_norm(tape, x, tape.leaf(*p.ln1_g), tape.leaf(*p.ln1_b), eps);
    return linear(tape, ln, tape.leaf(*p.w_v));
}

VarId affine_shift_mixer(Tape& tape, VarId v, const BlockConfig& cfg, const BlockParams& p) {
    VarId z = shift(tape, v, cfg.shift.with_channels(cfg.d));
    VarId out = z;
    if (cfg.use_scale) {
        if (p.se_w1 == nullptr || p.se_w2 == nullptr) {
            throw ConfigError("scale branch enabled but SE-MLP parameters are missing");
        }
        VarId pooled = global_avg_pool(tape, z);
        VarId h = linear(tape, pooled, tape.leaf(*p.se_w1), tape.leaf(*p.se_b1));
        h = gelu(tape, h);
        h = linear(tape, h, tape.leaf(*p.se_w2), tape.leaf(*p.se_b2));
        VarId gate = sigmoid(tape, h);
        out = channel_gate(tape, z, gate);
    }
    if (cfg.use_bias) {
        if (p.dw_k == nullptr || p.dw_b == nullptr) {
            throw ConfigError("bias branch enabled but DWConv parameters are missing");
        }
        VarId conv = depthwise_conv2d(tape, z, tape.leaf(*p.dw_k), tape.leaf(*p.dw_b));
        out = add(tape, out, conv);
    }
    return out;
}

VarId mlp_block(Tape& tape, VarId y, const BlockConfig& cfg, const BlockParams& p, Rng* rng,
                bool training) {
    VarId h = layer_norm(tape, y, tape.leaf(*p.ln2_g), tape.leaf(*p.ln2_b), cfg.ln_eps);
    if (cfg.extra_mlp_shift) h = shift(tape, h, cfg.shift.with_channels(cfg.d));
    h = linear(tape, h, tape.leaf(*p.mlp_w1), tape.leaf(*p.mlp_b1));
    h = gelu(tape, h);
    h = linear(tape, h, tape.leaf(*p.mlp_w2), tape.leaf(*p.mlp_b2));
    h = drop_path(tape, h, cfg.drop_path_rate, rng, training);
    return add(tape, y, h);
}

VarId mhsa_reference(Tape& tape, VarId x, const MHSAConfig& mcfg, const BlockParams& p,
                     std::int64_t d) {
    const Tensor& xv = tape.val(x);
    if (xv.rank() != 3) throw ShapeError("mhsa expects [N,S,d] input");
    if (mcfg.heads <= 0 || d % mcfg.heads != 0) {
        throw ConfigError("mhsa: d=" + std::to_string(d) + " not divisible by heads=" +
                          std::to_string(mcfg.heads));
    }
    const std::int64_t N = xv.extent(0), S = xv.extent(1);
    const std::int64_t H = mcfg.heads, dh = d / H;
    auto split_heads = [&](VarId t) {
        VarId r = reshape(tape, t, {N, S, H, dh});
        r = permute(tape, r, {0, 2, 1, 3});  // [N,H,S,dh]
        return reshape(tape, r, {N * H, S, dh});
    };
    VarId q = split_heads(linear(tape, x, tape.leaf(*p.w_q)));
    VarId k = split_heads(linear(tape, x, tape.leaf(*p.w_k)));
    VarId v = split_heads(linear(tape, x, tape.leaf(*p.w_v)));
    VarId att = scale(tape, bmm_nt(tape, q, k), 1.f / std::sqrt(static_cast<float>(dh)));
    att = softmax(tape, att, 2);
    VarId out = bmm(tape, att, v);  // [N*H,S,dh]
    out = reshape(tape, out, {N, H, S, dh});
    out = permute(tape, out, {0, 2, 1, 3});
    out = reshape(tape, out, {N, S, d});
    return linear(tape, out, tape.leaf(*p.w_h), tape.leaf(*p.w_h_b));
}

VarId affine_shift_layer(Tape& tape, VarId x, const BlockConfig& cfg, const BlockParams& p,
                         Rng* rng, bool training) {
    validate_block_config(cfg);
    VarId y;
    if (cfg.only_shift) {
        y = add(tape, x, shift(tape, x, cfg.shift.with_channels(cfg.d)));
    } else if (cfg.use_mhsa) {
        const Tensor& xv = tape.val(x);
        const std::int64_t N = xv.extent(0), C = xv.extent(4);
        const std::int64_t S = xv.numel() / (N * C);
        VarId tokens = reshape(tape, x, {N, S, C});
        VarId ln = layer_norm(tape, tokens, tape.leaf(*p.ln1_g), tape.leaf(*p.ln1_b), cfg.ln_eps);
        VarId att = mhsa_reference(tape, ln, cfg.mhsa, p, cfg.d);
        y = reshape(tape, add(tape, tokens, att), xv.shape());
    } else {
        VarId v = value_projection(tape, x, p, cfg.ln_eps);
        VarId zh = affine_shift_mixer(tape, v, cfg, p);
        VarId proj = linear(tape, zh, tape.leaf(*p.w_h), tape.leaf(*p.w_h_b));
        y = add(tape, x, proj);
    }
    return mlp_block(tape, y, cfg, p, rng, training);
}

}  // namespace afs
