#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "afs/tensor.hpp"

namespace afs {

// Learnable tensor with persistent gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value, zeroed until backward runs

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.f); }
};

using VarId = std::int32_t;

// Reverse-mode tape. Nodes are appended in execution order, so parents always
// precede their consumers and one reverse sweep visits each node once.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, VarId)>;

    VarId leaf(Tensor value);
    VarId leaf(Parameter& p);
    VarId emit(Tensor value, std::vector<VarId> parents, BackwardFn fn);

    const Tensor& val(VarId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& grad(VarId id);
    bool has_grad(VarId id) const { return nodes_[static_cast<std::size_t>(id)].grad.numel() > 0; }

    // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse and accumulates
    // into every bound Parameter's grad. Repeated calls accumulate again.
    void backward(VarId loss);

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        std::vector<VarId> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    // Deque keeps references from val() stable while later ops are recorded.
    std::deque<Node> nodes_;
};

}  // namespace afs
