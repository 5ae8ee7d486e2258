#include "afs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "afs/error.hpp"
#include "afs/ops.hpp"

namespace afs {

TaskKind task_from_string(const std::string& s) {
    if (s == "temporal-order") return TaskKind::TemporalOrder;
    if (s == "static-pattern") return TaskKind::StaticPattern;
    throw ConfigError("unknown task '" + s + "' (expected temporal-order/static-pattern)");
}

const char* task_name(TaskKind k) {
    return k == TaskKind::TemporalOrder ? "temporal-order" : "static-pattern";
}

namespace {

void write_sample(Tensor& dst, std::int64_t row, const Tensor& sample) {
    const std::int64_t n = sample.numel();
    std::memcpy(dst.data() + row * n, sample.data(), static_cast<std::size_t>(n) * sizeof(float));
}

}  // namespace

ToyDataset gen_toy_dataset(const ToyTask& task) {
    if (task.num_classes < 2) throw ConfigError("toy task needs at least 2 classes");
    if (task.samples < task.num_classes) throw ConfigError("fewer samples than classes");
    if (task.kind == TaskKind::TemporalOrder && task.num_classes != 2) {
        throw ConfigError("temporal-order task is binary");
    }
    const std::int64_t T = task.frames, H = task.height, W = task.width, C = task.channels;
    Rng rng(task.seed);

    std::vector<Tensor> templates;  // static-pattern class prototypes
    if (task.kind == TaskKind::StaticPattern) {
        for (std::int64_t k = 0; k < task.num_classes; ++k) {
            Tensor t({H, W, C});
            for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
            templates.push_back(std::move(t));
        }
    }

    Tensor all({task.samples, T, H, W, C});
    std::vector<int> labels(static_cast<std::size_t>(task.samples));
    for (std::int64_t i = 0; i < task.samples; ++i) {
        const int label = static_cast<int>(i % task.num_classes);  // balanced by construction
        labels[static_cast<std::size_t>(i)] = label;
        Tensor sample({T, H, W, C});
        if (task.kind == TaskKind::TemporalOrder) {
            Tensor pattern({H, W, C});
            for (std::int64_t j = 0; j < pattern.numel(); ++j) pattern[j] = rng.uniform();
            const float sign = label == 0 ? 1.f : -1.f;
            for (std::int64_t f = 0; f < T; ++f) {
                const float ramp = sign * task.ramp *
                                   (static_cast<float>(f) - 0.5f * static_cast<float>(T - 1)) /
                                   static_cast<float>(T);
                for (std::int64_t j = 0; j < pattern.numel(); ++j) {
                    sample[f * pattern.numel() + j] = pattern[j] + ramp;
                }
            }
        } else {
            const Tensor& proto = templates[static_cast<std::size_t>(label)];
            Tensor frame({H, W, C});
            for (std::int64_t j = 0; j < frame.numel(); ++j) {
                frame[j] = proto[j] + 0.1f * rng.normal();
            }
            for (std::int64_t f = 0; f < T; ++f) {
                std::memcpy(sample.data() + f * frame.numel(), frame.data(),
                            static_cast<std::size_t>(frame.numel()) * sizeof(float));
            }
        }
        write_sample(all, i, sample);
    }

    // Deterministic shuffled split: permute, take first 80% for training.
    std::vector<std::int64_t> order(static_cast<std::size_t>(task.samples));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    const std::int64_t n_train = (task.samples * 4) / 5;

    ToyDataset ds;
    ds.train.x = Tensor({n_train, T, H, W, C});
    ds.val.x = Tensor({task.samples - n_train, T, H, W, C});
    const std::int64_t sn = T * H * W * C;
    for (std::int64_t i = 0; i < task.samples; ++i) {
        const std::int64_t src = order[static_cast<std::size_t>(i)];
        Split& split = i < n_train ? ds.train : ds.val;
        const std::int64_t row = i < n_train ? i : i - n_train;
        std::memcpy(split.x.data() + row * sn, all.data() + src * sn,
                    static_cast<std::size_t>(sn) * sizeof(float));
        split.y.push_back(labels[static_cast<std::size_t>(src)]);
    }
    return ds;
}

Tensor gather_batch(const Tensor& x, const std::vector<std::int64_t>& rows) {
    Shape s = x.shape();
    const std::int64_t sn = x.numel() / s[0];
    s[0] = static_cast<std::int64_t>(rows.size());
    Tensor out(s);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(out.data() + static_cast<std::int64_t>(i) * sn, x.data() + rows[i] * sn,
                    static_cast<std::size_t>(sn) * sizeof(float));
    }
    return out;
}

namespace {

std::int64_t argmax_row(const Tensor& logits, std::int64_t row) {
    const std::int64_t k = logits.extent(1);
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < k; ++j) {
        if (logits[row * k + j] > logits[row * k + best]) best = j;
    }
    return best;
}

}  // namespace

std::vector<EpochLog> train(Model& model, const ToyDataset& data, const TrainConfig& cfg) {
    if (cfg.batch_size <= 0 || cfg.epochs <= 0) throw ConfigError("batch size and epochs must be positive");
    const std::int64_t n = data.train.x.extent(0);
    const std::int64_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = batches * cfg.epochs;
    if (cfg.warmup_steps > total_steps) throw ConfigError("warmup exceeds total steps");

    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    AdamW opt(model.params, ocfg);
    Rng rng(cfg.seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochLog> log;
    std::int64_t step = 0;
    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::int64_t b = 0; b < batches; ++b) {
            std::vector<std::int64_t> rows(
                order.begin() + b * cfg.batch_size,
                order.begin() + std::min(n, (b + 1) * cfg.batch_size));
            std::vector<int> labels;
            for (std::int64_t r : rows) labels.push_back(data.train.y[static_cast<std::size_t>(r)]);

            Tape tape;
            VarId x = tape.leaf(gather_batch(data.train.x, rows));
            VarId logits = model.forward(tape, x, &rng, true);
            VarId loss = cross_entropy(tape, logits, labels);
            const float loss_val = tape.val(loss)[0];
            if (!std::isfinite(loss_val)) {
                throw NumericError("non-finite loss at step " + std::to_string(step));
            }
            loss_sum += static_cast<double>(loss_val) * static_cast<double>(rows.size());
            const Tensor& lv = tape.val(logits);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (argmax_row(lv, static_cast<std::int64_t>(i)) == labels[i]) ++correct;
            }

            opt.zero_grad();
            tape.backward(loss);
            opt.set_lr(cosine_warmup_lr(cfg.lr, step, cfg.warmup_steps, total_steps));
            opt.step();
            ++step;
        }
        EpochLog e;
        e.epoch = epoch;
        e.train_loss = static_cast<float>(loss_sum / n);
        e.train_acc = static_cast<float>(correct) / static_cast<float>(n);
        if (data.val.x.numel() > 0) {
            EvalResult ev = evaluate(model, data.val, cfg.batch_size);
            e.val_loss = ev.loss;
            e.val_acc = ev.accuracy;
        }
        log.push_back(e);
    }
    return log;
}

EvalResult evaluate(Model& model, const Split& split, std::int64_t batch_size) {
    const std::int64_t n = split.x.extent(0);
    const std::int64_t k = model.spec.num_classes;
    EvalResult res;
    res.confusion.assign(static_cast<std::size_t>(k * k), 0);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::int64_t b = 0; b < n; b += batch_size) {
        std::vector<std::int64_t> rows;
        std::vector<int> labels;
        for (std::int64_t r = b; r < std::min(n, b + batch_size); ++r) {
            rows.push_back(r);
            labels.push_back(split.y[static_cast<std::size_t>(r)]);
        }
        Tape tape;
        VarId logits = model.forward(tape, tape.leaf(gather_batch(split.x, rows)));
        VarId loss = cross_entropy(tape, logits, labels);
        loss_sum += static_cast<double>(tape.val(loss)[0]) * static_cast<double>(rows.size());
        const Tensor& lv = tape.val(logits);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::int64_t pred = argmax_row(lv, static_cast<std::int64_t>(i));
            if (pred == labels[i]) ++correct;
            ++res.confusion[static_cast<std::size_t>(labels[i] * k + pred)];
        }
    }
    res.loss = static_cast<float>(loss_sum / n);
    res.accuracy = static_cast<float>(correct) / static_cast<float>(n);
    return res;
}

std::string log_to_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << "epoch,split,loss,acc\n";
    for (const EpochLog& e : log) {
        os << e.epoch << ",train," << e.train_loss << "," << e.train_acc << "\n";
        os << e.epoch << ",val," << e.val_loss << "," << e.val_acc << "\n";
    }
    return os.str();
}

}  // namespace afs
