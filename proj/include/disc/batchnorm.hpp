#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "disc/error.hpp"
#include "disc/tensor.hpp"

namespace disc {

enum class NormMode { train, eval };

/// Per-feature batch normalization over a [batch x features] input.
/// Train mode standardizes with the (biased) batch statistics and folds them
/// into the running estimates; eval mode uses the running estimates only.
struct BatchNorm {
    Tensor scale;
    Tensor shift;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    NormMode mode = NormMode::train;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t features, double momentum_ = 0.1, double epsilon_ = 1e-5)
        : scale(Tensor::full({features}, 1.0, true)),
          shift(Tensor::zeros({features}, true)),
          running_mean(features, 0.0),
          running_var(features, 1.0),
          momentum(momentum_),
          epsilon(epsilon_) {}

    std::size_t features() const { return running_mean.size(); }

    Tensor forward(const Tensor& input) {
        if (input.rank() != 2 || input.dim(1) != features()) {
            throw ShapeError("batchnorm: expected [batch x " + std::to_string(features()) + "], got " +
                             shape_str(input.shape()));
        }
        const std::size_t batch = input.dim(0), f = features();
        if (mode == NormMode::train && batch < 2) throw ShapeError("batchnorm: train mode needs batch >= 2");

        auto x = input.data();
        std::vector<double> mu(f, 0.0), inv_std(f, 0.0);
        if (mode == NormMode::train) {
            std::vector<double> var(f, 0.0);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < f; ++j) mu[j] += x[b * f + j];
            for (auto& v : mu) v /= static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < f; ++j) {
                    const double d = x[b * f + j] - mu[j];
                    var[j] += d * d;
                }
            for (std::size_t j = 0; j < f; ++j) {
                const double biased = var[j] / static_cast<double>(batch);
                const double unbiased = var[j] / static_cast<double>(batch - 1);
                inv_std[j] = 1.0 / std::sqrt(biased + epsilon);
                running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mu[j];
                running_var[j] = (1.0 - momentum) * running_var[j] + momentum * unbiased;
            }
        } else {
            for (std::size_t j = 0; j < f; ++j) {
                mu[j] = running_mean[j];
                inv_std[j] = 1.0 / std::sqrt(running_var[j] + epsilon);
            }
        }

        std::vector<double> xhat(batch * f), out(batch * f);
        auto g = scale.data(), s = shift.data();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < f; ++j) {
                const std::size_t i = b * f + j;
                xhat[i] = (x[i] - mu[j]) * inv_std[j];
                out[i] = xhat[i] * g[j] + s[j];
            }

        const bool batch_stats = mode == NormMode::train;
        return detail::make_result(
            {batch, f}, std::move(out), {input, scale, shift},
            [batch, f, batch_stats, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                auto& pin = *self.parents[0];
                auto& pscale = *self.parents[1];
                auto& pshift = *self.parents[2];
                const double* go = self.grad.data();
                std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < f; ++j) {
                        sum_g[j] += go[b * f + j];
                        sum_gx[j] += go[b * f + j] * xhat[b * f + j];
                    }
                if (pscale.requires_grad) {
                    auto& gs = pscale.grad_buffer();
                    for (std::size_t j = 0; j < f; ++j) gs[j] += sum_gx[j];
                }
                if (pshift.requires_grad) {
                    auto& gb = pshift.grad_buffer();
                    for (std::size_t j = 0; j < f; ++j) gb[j] += sum_g[j];
                }
                if (pin.requires_grad) {
                    auto& gi = pin.grad_buffer();
                    const double n = static_cast<double>(batch);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t j = 0; j < f; ++j) {
                            const std::size_t i = b * f + j;
                            const double gamma = pscale.value[j];
                            if (batch_stats) {
                                gi[i] += gamma * inv_std[j] / n * (n * go[i] - sum_g[j] - xhat[i] * sum_gx[j]);
                            } else {
                                gi[i] += gamma * inv_std[j] * go[i];
                            }
                        }
                }
            },
            "batchnorm");
    }
};

/// Free-function form of BatchNorm::forward.
inline Tensor batchnorm(const Tensor& input, BatchNorm& state) { return state.forward(input); }

}  // namespace disc
