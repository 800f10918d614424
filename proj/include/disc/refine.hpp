#pragma once

// Joint refinement: gamma * KL(P || Q) + L_AE over encoder, decoders and
// centroids. P is rebuilt once per epoch from the full-dataset Q and held
// fixed inside the epoch. Training stops when the fraction of windows whose
// hard assignment changed between consecutive epochs drops below tolerance.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "disc/cluster.hpp"
#include "disc/data.hpp"
#include "disc/error.hpp"
#include "disc/matrix.hpp"
#include "disc/model.hpp"
#include "disc/optim.hpp"
#include "disc/train.hpp"

namespace disc {

struct RefineEpoch {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // gamma * L_C + L_AE, sample-weighted mean over batches
    double clustering = 0.0;
    double autoencoder = 0.0;
    double changed_fraction = 0.0;
};

struct RefineOptions {
    double gamma = 0.1;
    double lr = 1e-3;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 200;
    double tolerance = 0.001;
    std::uint64_t seed = 0;
    std::function<void(const RefineEpoch&)> on_epoch;
};

struct RefineResult {
    std::vector<RefineEpoch> history;
    std::vector<int> labels;  // argmax_j q_ij after the last epoch
    bool converged = false;
};

/// Eval-mode soft assignments of an embedding matrix.
inline Matrix soft_assign_matrix(const ClusterHead& head, const Matrix& z) {
    NoGradGuard no_grad;
    return Matrix::from_tensor(soft_assign(head, z.to_tensor()));
}

inline double changed_fraction(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("label vectors differ in length");
    std::size_t changed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) changed += a[i] != b[i];
    return static_cast<double>(changed) / static_cast<double>(a.size());
}

/// The clustering term uses the per-sample mean of the KL rows so that
/// gamma weighs it against the per-element MSE independently of batch size.
inline RefineResult refine(DiscModel& model, ClusterHead& head, const std::vector<SampleTriple>& triples,
                           const RefineOptions& opts) {
    head.gamma = opts.gamma;
    head.validate();
    if (head.dim() != model.config().embedding_dim) throw ShapeError("centroid dimension does not match the embedding");
    if (triples.size() < 2) throw ConfigError("refinement needs at least 2 windows");
    if (opts.batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (opts.max_epochs == 0) throw ConfigError("max_epochs must be >= 1");

    std::vector<Tensor> params = model.parameter_tensors();
    params.push_back(head.centroids);
    Adam adam(params, AdamOptions{.lr = opts.lr});
    std::mt19937_64 rng(opts.seed);

    Matrix q = soft_assign_matrix(head, encode_all(model, triples));
    std::vector<int> previous = hard_labels(q);
    Matrix p = target_distribution(q);

    RefineResult result;
    for (std::size_t epoch = 0; epoch < opts.max_epochs; ++epoch) {
        model.set_mode(NormMode::train);
        double loss_sum = 0.0, lc_sum = 0.0, ae_sum = 0.0;
        std::size_t seen = 0;
        for (const auto& idx : make_batches(triples.size(), opts.batch_size, rng)) {
            Batch batch = make_batch(triples, idx, model.config().channels);
            Matrix p_batch(idx.size(), head.k());
            for (std::size_t r = 0; r < idx.size(); ++r) {
                auto src = p.row(idx[r]);
                std::copy(src.begin(), src.end(), p_batch.row(r).begin());
            }
            adam.zero_grad();
            auto [ae, z] = model.ae_loss_with_embedding(batch);
            Tensor q_batch = soft_assign(head, z);
            Tensor lc = scale(kl_loss(p_batch, q_batch), 1.0 / static_cast<double>(idx.size()));
            Tensor total = joint_loss(lc, ae.total, opts.gamma);
            backward(total);
            adam.step();
            const double w = static_cast<double>(idx.size());
            loss_sum += total.item() * w;
            lc_sum += lc.item() * w;
            ae_sum += ae.total.item() * w;
            seen += idx.size();
        }

        q = soft_assign_matrix(head, encode_all(model, triples));
        std::vector<int> current = hard_labels(q);
        RefineEpoch e;
        e.epoch = epoch + 1;
        e.loss = loss_sum / static_cast<double>(seen);
        e.clustering = lc_sum / static_cast<double>(seen);
        e.autoencoder = ae_sum / static_cast<double>(seen);
        e.changed_fraction = changed_fraction(previous, current);
        result.history.push_back(e);
        if (opts.on_epoch) opts.on_epoch(e);
        previous = std::move(current);
        if (e.changed_fraction < opts.tolerance) {
            result.converged = true;
            break;
        }
        p = target_distribution(q);
    }
    result.labels = previous;
    return result;
}

}  // namespace disc
