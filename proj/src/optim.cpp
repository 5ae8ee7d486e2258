#include "afs/optim.hpp"

#include <cmath>

#include "afs/error.hpp"

namespace afs {

namespace {

void validate(const AdamWConfig& cfg) {
    if (cfg.lr < 0.f) throw ConfigError("learning rate must be non-negative");
    if (cfg.beta1 < 0.f || cfg.beta1 >= 1.f || cfg.beta2 < 0.f || cfg.beta2 >= 1.f) {
        throw ConfigError("Adam betas must lie in [0,1)");
    }
    if (cfg.eps <= 0.f) throw ConfigError("Adam eps must be positive");
    if (cfg.weight_decay < 0.f) throw ConfigError("weight decay must be non-negative");
}

}  // namespace

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    validate(cfg_);
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

AdamW::AdamW(ParamStore& store, AdamWConfig cfg) : cfg_(cfg) {
    validate(cfg_);
    for (const auto& p : store.all()) params_.push_back(p.get());
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void AdamW::step() {
    ++t_;
    const float bc1 = 1.f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < p.value.numel(); ++j) {
            const float g = p.grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.f - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.f - cfg_.beta2) * g * g;
            const float mhat = m[j] / bc1;
            const float vhat = v[j] / bc2;
            p.value[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                     cfg_.weight_decay * p.value[j]);
        }
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void AdamW::set_lr(float lr) {
    if (lr < 0.f) throw ConfigError("learning rate must be non-negative");
    cfg_.lr = lr;
}

float cosine_warmup_lr(float base_lr, std::int64_t step, std::int64_t warmup_steps,
                       std::int64_t total_steps) {
    if (total_steps <= 0) throw ConfigError("total steps must be positive");
    if (warmup_steps < 0 || warmup_steps > total_steps) {
        throw ConfigError("warmup must lie within total steps");
    }
    if (step < warmup_steps) {
        return base_lr * static_cast<float>(step + 1) / static_cast<float>(warmup_steps);
    }
    if (total_steps == warmup_steps) return base_lr;
    const float progress = static_cast<float>(step - warmup_steps) /
                           static_cast<float>(total_steps - warmup_steps);
    return base_lr * 0.5f * (1.f + std::cos(3.14159265358979323846f * progress));
}

}  // namespace afs
