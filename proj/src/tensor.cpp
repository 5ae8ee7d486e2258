#include "afs/tensor.hpp"

#include <numeric>
#include <sstream>

namespace afs {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

static void validate_shape(const Shape& shape) {
    if (shape.size() > static_cast<std::size_t>(kMaxRank)) {
        throw ShapeError("tensor rank " + std::to_string(shape.size()) + " exceeds max rank " +
                         std::to_string(kMaxRank));
    }
    for (std::int64_t e : shape) {
        if (e < 1) throw ShapeError("tensor extent must be >= 1, got shape " + shape_str(shape));
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
}

Tensor Tensor::full(Shape shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    validate_shape(new_shape);
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("reshape from " + shape_str(shape_) + " to " + shape_str(new_shape) +
                         " changes element count");
    }
    return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(float value) {
    std::fill(data_.begin(), data_.end(), value);
}

void fill_trunc_normal(Tensor& t, float std_dev, Rng& rng) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        float z = rng.normal();
        while (z < -2.f || z > 2.f) z = rng.normal();
        t[i] = z * std_dev;
    }
}

}  // namespace afs
