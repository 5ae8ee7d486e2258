#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "afs/error.hpp"

namespace afs {

using Shape = std::vector<std::int64_t>;

inline constexpr int kMaxRank = 5;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 tensor, rank <= 5, all extents >= 1.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);              // zero-initialized
    Tensor(Shape shape, std::vector<float> data);

    static Tensor full(Shape shape, float value);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Metadata-only reinterpretation; element count must match.
    Tensor reshaped(Shape new_shape) const;

    void fill(float value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  private:
    Shape shape_;
    std::vector<float> data_;
};

// Deterministic RNG used for initialization, data generation and drop-path.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    float uniform() { return std::uniform_real_distribution<float>(0.f, 1.f)(gen_); }
    float normal() { return std::normal_distribution<float>(0.f, 1.f)(gen_); }
    std::uint64_t next_u64() { return gen_(); }
    std::int64_t index(std::int64_t n) {
        return std::uniform_int_distribution<std::int64_t>(0, n - 1)(gen_);
    }
    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

// Values are resampled until |z| <= 2 before scaling by std.
void fill_trunc_normal(Tensor& t, float std_dev, Rng& rng);

}  // namespace afs
