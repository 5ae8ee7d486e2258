#pragma once

#include <functional>
#include <string>
#include <vector>

#include "afs/tensor.hpp"

namespace afs {

// A differentiable scalar function of several free tensors, with its own
// analytic gradient. The finite-difference runner never looks inside; it only
// compares the two closures.
struct FdProblem {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<float(const std::vector<Tensor>&)> loss;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&)> grad;
};

struct GradCheckOptions {
    // Step size balances O(h^2) truncation against f32 forward-rounding noise
    // of order eps/h; 5e-3 keeps both comfortably under the tolerance even for
    // deep accumulations like conv3d.
    float h = 5e-3f;

    float tol = 1e-3f;         // relative-error threshold
    int samples_per_tensor = 6;   // sampled entries for large tensors
    std::int64_t full_sweep_below = 33;  // tensors smaller than this get every entry
    bool corrupt = false;      // negative control: falsifies one analytic entry
};

struct CheckResult {
    std::string name;
    float max_rel_err = 0.f;
    bool pass = false;
};

// Central differences at sampled entries; relative error uses a 0.2 floor in
// the denominator so near-zero gradients are compared absolutely.
CheckResult run_fd(const FdProblem& problem, const GradCheckOptions& opts, Rng& rng);

std::vector<FdProblem> op_problems(std::uint64_t seed);
std::vector<FdProblem> block_problems(std::uint64_t seed);
std::vector<FdProblem> model_problems(std::uint64_t seed);

// scope: "ops", "blocks" or "model".
std::vector<CheckResult> run_gradcheck(const std::string& scope, std::uint64_t seed,
                                       const GradCheckOptions& opts);

std::string format_results(const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

}  // namespace afs
