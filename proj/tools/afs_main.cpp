#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "afs/analysis.hpp"
#include "afs/config.hpp"
#include "afs/error.hpp"
#include "afs/gradcheck.hpp"
#include "afs/harness.hpp"
#include "afs/model.hpp"
#include "afs/serialize.hpp"

namespace {

afs::ModelConfig resolve_config(const std::string& preset, const std::string& config_path) {
    if (!config_path.empty()) return afs::load_config(config_path);
    if (!preset.empty()) return afs::preset_config(preset);
    throw afs::ConfigError("need --model <preset> or --config <file>");
}

std::string sibling_json(const std::string& path) {
    std::filesystem::path p(path);
    p.replace_extension(".json");
    return p.string();
}

int cmd_describe(const std::string& preset, const std::string& config_path, std::int64_t frames,
                 std::int64_t resolution, std::int64_t views, bool double_flops,
                 const std::string& format) {
    afs::ModelConfig cfg = resolve_config(preset, config_path);
    if (frames > 0) cfg.spec.frames = frames;
    if (resolution > 0) cfg.spec.height = cfg.spec.width = resolution;
    afs::validate_model_spec(cfg.spec);
    afs::ComputeStats stats = afs::analyze(cfg.spec, double_flops);
    if (views > 1) {
        for (afs::LayerRow& r : stats.rows) r.macs *= views;
    }
    std::cout << afs::report(stats, format);
    return 0;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, int seeds, bool corrupt) {
    afs::GradCheckOptions opts;
    opts.corrupt = corrupt;
    std::vector<std::string> scopes;
    if (scope == "all") {
        scopes = {"ops", "blocks", "model"};
    } else {
        scopes = {scope};
    }
    bool ok = true;
    for (int s = 0; s < seeds; ++s) {
        for (const std::string& sc : scopes) {
            auto results = afs::run_gradcheck(sc, seed + static_cast<std::uint64_t>(s), opts);
            std::cout << "# scope=" << sc << " seed=" << seed + static_cast<std::uint64_t>(s)
                      << "\n"
                      << afs::format_results(results);
            ok = ok && afs::all_passed(results);
        }
    }
    return ok ? 0 : 1;
}

int cmd_train_toy(const std::string& task_name, const std::string& config_path,
                  const std::string& out_prefix, const afs::TrainConfig& tc,
                  std::int64_t samples) {
    afs::ModelConfig cfg =
        config_path.empty() ? afs::preset_config("micro") : afs::load_config(config_path);
    afs::ToyTask task;
    task.kind = afs::task_from_string(task_name);
    task.frames = cfg.spec.frames;
    task.height = cfg.spec.height;
    task.width = cfg.spec.width;
    task.channels = cfg.spec.in_channels;
    task.num_classes = cfg.spec.num_classes;
    task.samples = samples;
    task.seed = tc.seed;

    afs::ToyDataset data = afs::gen_toy_dataset(task);
    afs::Model model = afs::build_model(cfg.spec, cfg.seed);
    std::vector<afs::EpochLog> log = afs::train(model, data, tc);

    afs::save_params(out_prefix + ".tnsr", model.params);
    afs::save_config(out_prefix + ".json", cfg);
    std::ofstream csv(out_prefix + ".log.csv");
    if (!csv) throw afs::IoError("cannot write '" + out_prefix + ".log.csv'");
    csv << afs::log_to_csv(log);

    const afs::EpochLog& last = log.back();
    std::cout << "final train_acc=" << last.train_acc << " val_acc=" << last.val_acc << "\n";
    return 0;
}

int cmd_infer(const std::string& model_file, const std::string& input_file) {
    afs::ModelConfig cfg = afs::load_config(sibling_json(model_file));
    afs::Model model = afs::build_model(cfg.spec, cfg.seed);
    afs::load_params(model_file, model.params);
    afs::Tensor x = afs::load_tensor(input_file);
    if (x.rank() == 4) {
        afs::Shape s = x.shape();
        s.insert(s.begin(), 1);
        x = x.reshaped(s);
    }
    const afs::Shape expect = {x.rank() == 5 ? x.extent(0) : 1, cfg.spec.frames, cfg.spec.height,
                               cfg.spec.width, cfg.spec.in_channels};
    if (x.rank() != 5 || x.extent(1) != cfg.spec.frames || x.extent(2) != cfg.spec.height ||
        x.extent(3) != cfg.spec.width || x.extent(4) != cfg.spec.in_channels) {
        throw afs::ShapeError("input tensor shape " + afs::shape_str(x.shape()) +
                              " does not match model input " + afs::shape_str(expect));
    }
    afs::Tensor logits = model.forward_eval(x);
    nlohmann::json j;
    j["logits"] = nlohmann::json::array();
    for (std::int64_t n = 0; n < logits.extent(0); ++n) {
        nlohmann::json row = nlohmann::json::array();
        std::int64_t best = 0;
        for (std::int64_t k = 0; k < logits.extent(1); ++k) {
            row.push_back(logits[n * logits.extent(1) + k]);
            if (logits[n * logits.extent(1) + k] > logits[n * logits.extent(1) + best]) best = k;
        }
        j["logits"].push_back(row);
        j["argmax"].push_back(best);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affine-shift transformer toolkit"};
    app.require_subcommand(1);

    auto* describe = app.add_subcommand("describe", "Static parameter/MAC analysis");
    std::string d_preset, d_config, d_format = "table";
    std::int64_t d_frames = 0, d_resolution = 0, d_views = 1;
    bool d_double = false;
    describe->add_option("--model", d_preset, "Preset: ast-ti/ast-s/ast-m/vast-ti/vast-s/vast-m/micro");
    describe->add_option("--config", d_config, "Model config JSON file");
    describe->add_option("--frames", d_frames, "Override frame count");
    describe->add_option("--resolution", d_resolution, "Override square input resolution");
    describe->add_option("--views", d_views, "Multiply MACs by this view count");
    describe->add_option("--format", d_format, "json, csv or table");
    describe->add_flag("--double-flops", d_double, "Count 2 FLOPs per multiply-accumulate");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    std::string g_scope = "all";
    std::uint64_t g_seed = 1;
    int g_seeds = 1;
    bool g_corrupt = false;
    gradcheck->add_option("--scope", g_scope, "ops, blocks, model or all");
    gradcheck->add_option("--seed", g_seed, "Base RNG seed");
    gradcheck->add_option("--seeds", g_seeds, "Number of consecutive seeds to run");
    gradcheck->add_flag("--corrupt", g_corrupt, "Negative-control fixture: falsify one gradient")
        ->group("");  // hidden

    auto* train = app.add_subcommand("train-toy", "Train on a synthetic task");
    std::string t_task = "temporal-order", t_config, t_out = "toy_model";
    afs::TrainConfig tc;
    std::int64_t t_samples = 640;
    train->add_option("--task", t_task, "temporal-order or static-pattern");
    train->add_option("--config", t_config, "Model config JSON (default: micro preset)");
    train->add_option("--out", t_out, "Output prefix for .tnsr/.json/.log.csv");
    train->add_option("--lr", tc.lr, "Base learning rate");
    train->add_option("--epochs", tc.epochs, "Epochs");
    train->add_option("--batch", tc.batch_size, "Batch size");
    train->add_option("--wd", tc.weight_decay, "Weight decay");
    train->add_option("--warmup", tc.warmup_steps, "Warmup steps");
    train->add_option("--samples", t_samples, "Dataset size");
    train->add_option("--seed", tc.seed, "Data/training seed");

    auto* infer = app.add_subcommand("infer", "Run a checkpoint on a TNSR input");
    std::string i_model, i_input;
    infer->add_option("--model-file", i_model, "Checkpoint .tnsr (config read from sibling .json)")
        ->required();
    infer->add_option("--input-tensor", i_input, "Input tensor file")->required();

    try {
        app.parse(argc, argv);
        if (*describe) {
            return cmd_describe(d_preset, d_config, d_frames, d_resolution, d_views, d_double,
                                d_format);
        }
        if (*gradcheck) return cmd_gradcheck(g_scope, g_seed, g_seeds, g_corrupt);
        if (*train) return cmd_train_toy(t_task, t_config, t_out, tc, t_samples);
        if (*infer) return cmd_infer(i_model, i_input);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const afs::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const afs::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const afs::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const afs::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const afs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
