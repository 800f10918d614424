#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/matrix.hpp"
#include "disc/model.hpp"
#include "disc/optim.hpp"

namespace disc {

struct EpochLoss {
    std::size_t epoch = 0;  // 1-based
    double rec = 0.0;
    double fut = 0.0;
    double lr = 0.0;
};

struct PretrainOptions {
    std::size_t batch_size = 256;
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t decay_epoch = 70;  // epochs run at lr before decaying
    double decay_factor = 0.1;
    std::uint64_t seed = 0;
    std::function<void(const EpochLoss&)> on_epoch;
};

struct PretrainResult {
    std::vector<EpochLoss> history;
    bool diverged = false;
    std::string message;
};

/// Learning rate for a 0-based epoch index: lr for the first decay_epoch
/// epochs, then lr * decay_factor.
inline double scheduled_lr(const PretrainOptions& opts, std::size_t epoch) {
    return epoch < opts.decay_epoch ? opts.lr : opts.lr * opts.decay_factor;
}

/// Shuffled mini-batches over [0, n). A trailing single-sample batch is folded
/// into its predecessor since train-mode batch norm needs two samples.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

/// Autoencoder pretraining with Adam. On a numeric failure the model is
/// rolled back to the end of the last completed epoch and `diverged` is set.
inline PretrainResult pretrain(DiscModel& model, const std::vector<SampleTriple>& triples, const PretrainOptions& opts) {
    if (triples.size() < 2) throw ConfigError("pretraining needs at least 2 windows");
    if (opts.batch_size < 2) throw ConfigError("batch_size must be >= 2");
    std::mt19937_64 rng(opts.seed);
    Adam adam(model.parameter_tensors(), AdamOptions{.lr = opts.lr});
    model.set_mode(NormMode::train);
    PretrainResult result;
    ModelSnapshot good = snapshot(model);
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        const double lr = scheduled_lr(opts, epoch);
        adam.set_lr(lr);
        double rec_sum = 0.0, fut_sum = 0.0;
        std::size_t seen = 0;
        try {
            for (const auto& idx : make_batches(triples.size(), opts.batch_size, rng)) {
                Batch batch = make_batch(triples, idx, model.config().channels);
                adam.zero_grad();
                AeLoss loss = model.ae_loss(batch);
                backward(loss.total);
                adam.step();
                rec_sum += loss.rec.item() * static_cast<double>(idx.size());
                fut_sum += loss.fut.item() * static_cast<double>(idx.size());
                seen += idx.size();
            }
        } catch (const NumericError& e) {
            restore(model, good);
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
            return result;
        }
        EpochLoss el{epoch + 1, rec_sum / static_cast<double>(seen), fut_sum / static_cast<double>(seen), lr};
        result.history.push_back(el);
        if (opts.on_epoch) opts.on_epoch(el);
        good = snapshot(model);
    }
    return result;
}

/// Eval-mode embeddings of every triple, in order: [count x d].
inline Matrix encode_all(DiscModel& model, const std::vector<SampleTriple>& triples, std::size_t batch_size = 256) {
    NoGradGuard no_grad;
    struct ModeRestore {
        DiscModel& model;
        NormMode previous;
        ~ModeRestore() { model.set_mode(previous); }
    } restore_mode{model, model.mode()};
    model.set_mode(NormMode::eval);
    const std::size_t d = model.config().embedding_dim;
    Matrix z(triples.size(), d);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < triples.size(); start += batch_size) {
        const std::size_t end = std::min(triples.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        Batch batch = make_batch(triples, idx, model.config().channels);
        Tensor out = model.encode(batch.input);
        std::copy(out.data().begin(), out.data().end(), z.values.begin() + static_cast<std::ptrdiff_t>(start * d));
    }
    return z;
}

}  // namespace disc
