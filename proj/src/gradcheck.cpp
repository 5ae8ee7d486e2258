#include "afs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "afs/blocks.hpp"
#include "afs/error.hpp"
#include "afs/model.hpp"
#include "afs/ops.hpp"
#include "afs/shift.hpp"

namespace afs {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, float scl = 0.8f) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scl * rng.normal();
    return t;
}

float dot_probe(const Tensor& w, const Tensor& y) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += static_cast<double>(w[i]) * y[i];
    return static_cast<float>(acc);
}

// Random probe direction scaled so the loss stays O(1); distinct weights per
// entry keep sum-structured outputs (softmax rows, means) informative.
Tensor make_probe(const Shape& out_shape, Rng& rng) {
    Tensor w(out_shape);
    const float s = 2.f / static_cast<float>(std::sqrt(static_cast<double>(w.numel())));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = s * (2.f * rng.uniform() - 1.f);
    return w;
}

using GraphFn = std::function<VarId(Tape&, const std::vector<VarId>&)>;

// Problem whose free variables all enter the tape as plain leaves.
FdProblem make_tape_problem(std::string name, std::vector<Tensor> inputs, GraphFn build, Rng& rng) {
    Shape out_shape;
    {
        Tape t;
        std::vector<VarId> ids;
        for (const Tensor& in : inputs) ids.push_back(t.leaf(in));
        out_shape = t.val(build(t, ids)).shape();
    }
    auto probe = std::make_shared<Tensor>(make_probe(out_shape, rng));
    FdProblem p;
    p.name = std::move(name);
    p.inputs = std::move(inputs);
    p.loss = [build, probe](const std::vector<Tensor>& in) {
        Tape t;
        std::vector<VarId> ids;
        for (const Tensor& x : in) ids.push_back(t.leaf(x));
        return dot_probe(*probe, t.val(build(t, ids)));
    };
    p.grad = [build, probe](const std::vector<Tensor>& in) {
        Tape t;
        std::vector<VarId> ids;
        for (const Tensor& x : in) ids.push_back(t.leaf(x));
        VarId out = build(t, ids);
        VarId loss = sum_all(t, mul(t, out, t.leaf(*probe)));
        t.backward(loss);
        std::vector<Tensor> grads;
        for (VarId id : ids) grads.push_back(t.grad(id));
        return grads;
    };
    return p;
}

// Problem over a parameterized module: inputs are [x, param_0, param_1, ...]
// where the parameter list mirrors a ParamStore's creation order.
struct ParamSetup {
    ParamStore store;
    std::vector<Parameter*> plist;
    std::function<VarId(Tape&, VarId)> forward;  // x id -> output id
};

FdProblem make_param_problem(std::string name, Tensor x, std::shared_ptr<ParamSetup> setup,
                             Rng& rng) {
    for (const auto& p : setup->store.all()) setup->plist.push_back(p.get());
    Shape out_shape;
    {
        Tape t;
        out_shape = t.val(setup->forward(t, t.leaf(x))).shape();
    }
    auto probe = std::make_shared<Tensor>(make_probe(out_shape, rng));
    FdProblem p;
    p.name = std::move(name);
    p.inputs.push_back(std::move(x));
    for (Parameter* par : setup->plist) p.inputs.push_back(par->value);
    auto assign = [setup](const std::vector<Tensor>& in) {
        for (std::size_t k = 0; k < setup->plist.size(); ++k) {
            setup->plist[k]->value = in[k + 1];
        }
    };
    p.loss = [setup, probe, assign](const std::vector<Tensor>& in) {
        assign(in);
        Tape t;
        return dot_probe(*probe, t.val(setup->forward(t, t.leaf(in[0]))));
    };
    p.grad = [setup, probe, assign](const std::vector<Tensor>& in) {
        assign(in);
        setup->store.zero_grad();
        Tape t;
        VarId x_id = t.leaf(in[0]);
        VarId out = setup->forward(t, x_id);
        VarId loss = sum_all(t, mul(t, out, t.leaf(*probe)));
        t.backward(loss);
        std::vector<Tensor> grads;
        grads.push_back(t.grad(x_id));
        for (Parameter* par : setup->plist) grads.push_back(par->grad);
        return grads;
    };
    return p;
}

}  // namespace

CheckResult run_fd(const FdProblem& problem, const GradCheckOptions& opts, Rng& rng) {
    CheckResult res;
    res.name = problem.name;
    std::vector<Tensor> analytic = problem.grad(problem.inputs);
    if (opts.corrupt && !analytic.empty() && analytic[0].numel() > 0) analytic[0][0] += 1.f;
    float max_rel = 0.f;
    std::vector<Tensor> work = problem.inputs;
    for (std::size_t i = 0; i < problem.inputs.size(); ++i) {
        const std::int64_t n = problem.inputs[i].numel();
        std::vector<std::int64_t> idx;
        if (n < opts.full_sweep_below) {
            for (std::int64_t k = 0; k < n; ++k) idx.push_back(k);
        } else {
            idx.push_back(0);
            for (int k = 1; k < opts.samples_per_tensor; ++k) idx.push_back(rng.index(n));
        }
        for (std::int64_t j : idx) {
            const float orig = work[i][j];
            work[i][j] = orig + opts.h;
            const float fp = problem.loss(work);
            work[i][j] = orig - opts.h;
            const float fm = problem.loss(work);
            work[i][j] = orig;
            const float numeric = (fp - fm) / (2.f * opts.h);
            const float a = analytic[i][j];
            const float denom = std::max({std::fabs(a), std::fabs(numeric), 0.2f});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    res.max_rel_err = max_rel;
    res.pass = max_rel < opts.tol;
    return res;
}

// --------------------------------------------------------------------------

std::vector<FdProblem> op_problems(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FdProblem> out;
    auto rt = [&](Shape s) { return random_tensor(std::move(s), rng); };

    out.push_back(make_tape_problem(
        "add", {rt({2, 3, 4}), rt({2, 3, 4})},
        [](Tape& t, const std::vector<VarId>& v) { return add(t, v[0], v[1]); }, rng));
    out.push_back(make_tape_problem(
        "mul", {rt({2, 3, 4}), rt({2, 3, 4})},
        [](Tape& t, const std::vector<VarId>& v) { return mul(t, v[0], v[1]); }, rng));
    out.push_back(make_tape_problem(
        "scale", {rt({3, 5})},
        [](Tape& t, const std::vector<VarId>& v) { return scale(t, v[0], 1.7f); }, rng));
    out.push_back(make_tape_problem(
        "channel_gate", {rt({2, 2, 3, 3, 4}), rt({2, 1, 1, 1, 4})},
        [](Tape& t, const std::vector<VarId>& v) { return channel_gate(t, v[0], v[1]); }, rng));
    out.push_back(make_tape_problem(
        "gelu", {rt({3, 7})}, [](Tape& t, const std::vector<VarId>& v) { return gelu(t, v[0]); },
        rng));
    out.push_back(make_tape_problem(
        "sigmoid", {rt({3, 7})},
        [](Tape& t, const std::vector<VarId>& v) { return sigmoid(t, v[0]); }, rng));
    out.push_back(make_tape_problem(
        "softmax_axis1", {rt({2, 5, 3})},
        [](Tape& t, const std::vector<VarId>& v) { return softmax(t, v[0], 1); }, rng));
    out.push_back(make_tape_problem(
        "softmax_last", {rt({4, 6})},
        [](Tape& t, const std::vector<VarId>& v) { return softmax(t, v[0], -1); }, rng));
    out.push_back(make_tape_problem(
        "linear_bias", {rt({2, 3, 4}), rt({4, 6}), rt({6})},
        [](Tape& t, const std::vector<VarId>& v) { return linear(t, v[0], v[1], v[2]); }, rng));
    out.push_back(make_tape_problem(
        "linear_nobias", {rt({5, 4}), rt({4, 3})},
        [](Tape& t, const std::vector<VarId>& v) { return linear(t, v[0], v[1]); }, rng));
    out.push_back(make_tape_problem(
        "bmm", {rt({2, 3, 4}), rt({2, 4, 5})},
        [](Tape& t, const std::vector<VarId>& v) { return bmm(t, v[0], v[1]); }, rng));
    out.push_back(make_tape_problem(
        "bmm_nt", {rt({2, 3, 4}), rt({2, 5, 4})},
        [](Tape& t, const std::vector<VarId>& v) { return bmm_nt(t, v[0], v[1]); }, rng));
    out.push_back(make_tape_problem(
        "layer_norm", {rt({2, 3, 8}), rt({8}), rt({8})},
        [](Tape& t, const std::vector<VarId>& v) { return layer_norm(t, v[0], v[1], v[2]); }, rng));
    out.push_back(make_tape_problem(
        "reshape_permute", {rt({2, 3, 4, 5})},
        [](Tape& t, const std::vector<VarId>& v) {
            VarId p = permute(t, v[0], {2, 0, 3, 1});
            return reshape(t, p, {4, 2, 5, 3});
        },
        rng));
    out.push_back(make_tape_problem(
        "global_avg_pool", {rt({2, 2, 3, 3, 4})},
        [](Tape& t, const std::vector<VarId>& v) { return global_avg_pool(t, v[0]); }, rng));
    out.push_back(make_tape_problem(
        "mean_tokens", {rt({2, 3, 4, 5})},
        [](Tape& t, const std::vector<VarId>& v) { return mean_tokens(t, v[0]); }, rng));
    out.push_back(make_tape_problem(
        "sum_all", {rt({3, 4})},
        [](Tape& t, const std::vector<VarId>& v) { return sum_all(t, v[0]); }, rng));
    out.push_back(make_tape_problem(
        "depthwise_conv2d", {rt({1, 2, 5, 5, 3}), rt({3, 3, 3}), rt({3})},
        [](Tape& t, const std::vector<VarId>& v) { return depthwise_conv2d(t, v[0], v[1], v[2]); },
        rng));
    out.push_back(make_tape_problem(
        "conv2d", {rt({1, 2, 6, 6, 3}), rt({3, 3, 3, 4}), rt({4})},
        [](Tape& t, const std::vector<VarId>& v) { return conv2d(t, v[0], v[1], v[2], 2, 1); },
        rng));
    out.push_back(make_tape_problem(
        "conv3d", {rt({1, 4, 6, 6, 2}), rt({3, 3, 3, 2, 3}), rt({3})},
        [](Tape& t, const std::vector<VarId>& v) {
            return conv3d(t, v[0], v[1], v[2], {2, 2, 2}, {1, 1, 1});
        },
        rng));
    {
        ShiftSpec vs = video_shift_default(12);
        out.push_back(make_tape_problem(
            "shift_video", {rt({2, 4, 4, 4, 12})},
            [vs](Tape& t, const std::vector<VarId>& v) { return shift(t, v[0], vs); }, rng));
        ShiftSpec is = image_shift_default(12);
        out.push_back(make_tape_problem(
            "shift_image", {rt({1, 1, 5, 5, 12})},
            [is](Tape& t, const std::vector<VarId>& v) { return shift(t, v[0], is); }, rng));
    }
    {
        std::vector<int> labels = {0, 3, 1, 4};
        out.push_back(make_tape_problem(
            "cross_entropy", {rt({4, 5})},
            [labels](Tape& t, const std::vector<VarId>& v) {
                return cross_entropy(t, v[0], labels);
            },
            rng));
    }
    return out;
}

std::vector<FdProblem> block_problems(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FdProblem> out;
    const Shape grid = {2, 2, 4, 4, 8};

    auto base_cfg = [] {
        BlockConfig cfg;
        cfg.d = 8;
        cfg.shift = video_shift_default(8);
        cfg.se_reduction = 4;
        cfg.mlp_expansion = 2;
        return cfg;
    };

    for (int row = 1; row <= 6; ++row) {
        BlockConfig cfg = make_variant(static_cast<VariantRow>(row), base_cfg());
        auto setup = std::make_shared<ParamSetup>();
        BlockParams bp = make_block_params(setup->store, "blk", cfg, rng);
        setup->forward = [cfg, bp](Tape& t, VarId x) {
            return affine_shift_layer(t, x, cfg, bp);
        };
        out.push_back(make_param_problem(std::string("layer_") + variant_row_name(
                                             static_cast<VariantRow>(row)),
                                         random_tensor(grid, rng), setup, rng));
    }
    {
        BlockConfig cfg = base_cfg();
        cfg.use_mhsa = true;
        cfg.use_scale = false;
        cfg.use_bias = false;
        cfg.mhsa.heads = 2;
        auto setup = std::make_shared<ParamSetup>();
        BlockParams bp = make_block_params(setup->store, "blk", cfg, rng);
        setup->forward = [cfg, bp](Tape& t, VarId x) {
            return affine_shift_layer(t, x, cfg, bp);
        };
        out.push_back(make_param_problem("layer_mhsa", random_tensor(grid, rng), setup, rng));
    }
    {
        BlockConfig cfg = base_cfg();
        auto setup = std::make_shared<ParamSetup>();
        BlockParams bp = make_block_params(setup->store, "blk", cfg, rng);
        setup->forward = [bp](Tape& t, VarId x) { return value_projection(t, x, bp); };
        out.push_back(make_param_problem("value_projection", random_tensor(grid, rng), setup, rng));
    }
    {
        BlockConfig cfg = base_cfg();
        auto setup = std::make_shared<ParamSetup>();
        BlockParams bp = make_block_params(setup->store, "blk", cfg, rng);
        setup->forward = [cfg, bp](Tape& t, VarId x) {
            return affine_shift_mixer(t, x, cfg, bp);
        };
        out.push_back(make_param_problem("mixer_full", random_tensor(grid, rng), setup, rng));
    }
    return out;
}

std::vector<FdProblem> model_problems(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FdProblem> out;
    ModelSpec spec;
    spec.variant = Variant::Micro;
    spec.stem = StemKind::S2D;
    spec.frames = 2;
    spec.height = 8;
    spec.width = 8;
    spec.num_classes = 4;
    spec.shift = video_shift_default();
    auto setup = std::make_shared<ParamSetup>();
    auto model = std::make_shared<Model>(build_model(spec, seed ^ 0x9e3779b9u));
    // The problem owns the parameter copies; route them through the model's
    // own store.
    for (const auto& p : model->params.all()) setup->plist.push_back(p.get());
    setup->forward = [model](Tape& t, VarId x) { return model->forward(t, x); };
    Tensor x = random_tensor({2, 2, 8, 8, 3}, rng);
    Shape out_shape;
    {
        Tape t;
        out_shape = t.val(setup->forward(t, t.leaf(x))).shape();
    }
    auto probe = std::make_shared<Tensor>(make_probe(out_shape, rng));
    FdProblem p;
    p.name = "micro_model";
    p.inputs.push_back(std::move(x));
    for (Parameter* par : setup->plist) p.inputs.push_back(par->value);
    auto assign = [setup](const std::vector<Tensor>& in) {
        for (std::size_t k = 0; k < setup->plist.size(); ++k) setup->plist[k]->value = in[k + 1];
    };
    p.loss = [setup, probe, assign](const std::vector<Tensor>& in) {
        assign(in);
        Tape t;
        return dot_probe(*probe, t.val(setup->forward(t, t.leaf(in[0]))));
    };
    p.grad = [setup, probe, assign, model](const std::vector<Tensor>& in) {
        assign(in);
        model->params.zero_grad();
        Tape t;
        VarId x_id = t.leaf(in[0]);
        VarId loss = sum_all(t, mul(t, setup->forward(t, x_id), t.leaf(*probe)));
        t.backward(loss);
        std::vector<Tensor> grads;
        grads.push_back(t.grad(x_id));
        for (Parameter* par : setup->plist) grads.push_back(par->grad);
        return grads;
    };
    out.push_back(std::move(p));
    return out;
}

std::vector<CheckResult> run_gradcheck(const std::string& scope, std::uint64_t seed,
                                       const GradCheckOptions& opts) {
    std::vector<FdProblem> problems;
    if (scope == "ops") {
        problems = op_problems(seed);
    } else if (scope == "blocks") {
        problems = block_problems(seed);
    } else if (scope == "model") {
        problems = model_problems(seed);
    } else {
        throw ConfigError("unknown gradcheck scope '" + scope + "' (expected ops/blocks/model)");
    }
    Rng rng(seed ^ 0xc0ffee);
    std::vector<CheckResult> results;
    for (const FdProblem& p : problems) results.push_back(run_fd(p, opts, rng));
    return results;
}

std::string format_results(const std::vector<CheckResult>& results) {
    std::ostringstream os;
    for (const CheckResult& r : results) {
        os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_err=" << r.max_rel_err
           << "\n";
    }
    return os.str();
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results) {
        if (!r.pass) return false;
    }
    return true;
}

}  // namespace afs
