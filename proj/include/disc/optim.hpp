#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "disc/error.hpp"
#include "disc/tensor.hpp"

namespace disc {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed list of parameter tensors.
class Adam {
   public:
    Adam(std::vector<Tensor> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
        validate(opts_);
        for (const auto& p : params_) {
            if (!p.requires_grad()) throw ConfigError("Adam: parameter does not require grad");
            first_.emplace_back(p.size(), 0.0);
            second_.emplace_back(p.size(), 0.0);
        }
    }

    void set_lr(double lr) {
        AdamOptions o = opts_;
        o.lr = lr;
        validate(o);
        opts_.lr = lr;
    }
    double lr() const { return opts_.lr; }
    std::uint64_t step_count() const { return steps_; }
    const std::vector<std::vector<double>>& first_moments() const { return first_; }
    const std::vector<std::vector<double>>& second_moments() const { return second_; }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++steps_;
        const double t = static_cast<double>(steps_);
        const double c1 = 1.0 - std::pow(opts_.beta1, t);
        const double c2 = 1.0 - std::pow(opts_.beta2, t);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            auto w = p.mutable_data();
            auto g = p.grad();
            if (g.empty()) continue;
            auto& m = first_[k];
            auto& v = second_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
                v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                w[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.epsilon);
            }
        }
    }

   private:
    static void validate(const AdamOptions& o) {
        if (!(o.lr > 0.0)) throw ConfigError("Adam: learning rate must be > 0");
        if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
            throw ConfigError("Adam: betas must lie in [0, 1)");
        }
        if (!(o.epsilon > 0.0)) throw ConfigError("Adam: epsilon must be > 0");
    }

    std::vector<Tensor> params_;
    AdamOptions opts_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::uint64_t steps_ = 0;
};

}  // namespace disc
