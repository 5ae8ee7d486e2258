#pragma once

#include <string>
#include <vector>

#include "afs/model.hpp"
#include "afs/optim.hpp"

namespace afs {

enum class TaskKind { TemporalOrder, StaticPattern };

TaskKind task_from_string(const std::string& s);
const char* task_name(TaskKind k);

// Synthetic classification tasks. temporal-order hides the label purely in
// frame ordering: each sample is a random spatial pattern with a linear
// brightness ramp across frames whose sign is the class, so reversing the
// frames flips the label and the per-frame content carries no class signal.
// static-pattern is its control: the label is readable from any single frame.
struct ToyTask {
    TaskKind kind = TaskKind::TemporalOrder;
    std::int64_t frames = 8;
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t channels = 3;
    std::int64_t num_classes = 2;
    std::int64_t samples = 640;
    std::uint64_t seed = 0;
    float ramp = 0.4f;  // brightness ramp amplitude (temporal-order)
};

struct Split {
    Tensor x;  // [N,T,H,W,C]
    std::vector<int> y;
};

struct ToyDataset {
    Split train;
    Split val;
};

// Deterministic from the task seed; classes balanced within one sample;
// 80/20 train/val split.
ToyDataset gen_toy_dataset(const ToyTask& task);

struct TrainConfig {
    float lr = 1e-3f;
    std::int64_t warmup_steps = 20;
    std::int64_t epochs = 20;
    std::int64_t batch_size = 16;
    float weight_decay = 0.05f;
    std::uint64_t seed = 0;
};

struct EpochLog {
    std::int64_t epoch = 0;
    float train_loss = 0.f;
    float train_acc = 0.f;
    float val_loss = 0.f;
    float val_acc = 0.f;
};

struct EvalResult {
    float accuracy = 0.f;
    float loss = 0.f;
    std::vector<std::int64_t> confusion;  // K*K, row = true class
};

// AdamW + cosine schedule with linear warmup. Aborts with a NumericError
// naming the step index if the loss turns non-finite.
std::vector<EpochLog> train(Model& model, const ToyDataset& data, const TrainConfig& cfg);

EvalResult evaluate(Model& model, const Split& split, std::int64_t batch_size = 16);

// CSV rows: epoch,split,loss,acc
std::string log_to_csv(const std::vector<EpochLog>& log);

// Copies the given sample rows into a batch tensor.
Tensor gather_batch(const Tensor& x, const std::vector<std::int64_t>& rows);

}  // namespace afs
