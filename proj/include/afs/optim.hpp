#pragma once

#include <vector>

#include "afs/blocks.hpp"
#include "afs/tape.hpp"

namespace afs {

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.f;  // decoupled
};

// Adam with decoupled weight decay. Gradients are read from each Parameter's
// grad buffer; call zero_grad between steps.
class AdamW {
  public:
    AdamW(std::vector<Parameter*> params, AdamWConfig cfg);
    AdamW(ParamStore& store, AdamWConfig cfg);

    void step();
    void zero_grad();
    void set_lr(float lr);
    float lr() const { return cfg_.lr; }
    std::int64_t steps_taken() const { return t_; }

  private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
};

// Linear warmup to base_lr, then cosine decay to zero at total_steps.
float cosine_warmup_lr(float base_lr, std::int64_t step, std::int64_t warmup_steps,
                       std::int64_t total_steps);

}  // namespace afs
