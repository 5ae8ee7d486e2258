#include "afs/tape.hpp"

#include "afs/error.hpp"

namespace afs {

VarId Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::emit(Tensor value, std::vector<VarId> parents, BackwardFn fn) {
    const VarId self = static_cast<VarId>(nodes_.size());
    for (VarId p : parents) {
        if (p < 0 || p >= self) throw UsageError("tape parent out of order");
    }
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return self;
}

Tensor& Tape::grad(VarId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(VarId loss) {
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
        throw UsageError("backward: unknown tape node");
    }
    if (nodes_[static_cast<std::size_t>(loss)].value.numel() != 1) {
        throw UsageError("backward: loss must be a scalar, got shape " +
                         shape_str(nodes_[static_cast<std::size_t>(loss)].value.shape()));
    }
    // Fresh sweep each call; parameter grads accumulate across calls.
    for (Node& n : nodes_) {
        if (n.grad.numel() > 0) n.grad.fill(0.f);
    }
    grad(loss)[0] = 1.f;
    for (std::int64_t i = loss; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.backward && n.grad.numel() > 0) n.backward(*this, static_cast<VarId>(i));
    }
    for (Node& n : nodes_) {
        if (n.param != nullptr && n.grad.numel() > 0) {
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) n.param->grad[i] += n.grad[i];
        }
    }
}

}  // namespace afs
