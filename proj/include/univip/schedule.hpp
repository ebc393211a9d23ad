#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "univip/common.hpp"
#include "univip/tensor.hpp"

// Optimization schedule pieces: linear warm-up into cosine decay for the
// learning rate, and plain SGD with momentum plus L2 weight decay folded
// into the gradient. Momentum for the target network lives in model.hpp.

namespace univip {

// lr(s) ramps linearly over the warm-up (reaching base_lr at the last
// warm-up step), then follows a half cosine down to 0 at total_steps.
inline double lr_schedule(long step, long total_steps, long warmup_steps, double base_lr) {
    if (total_steps <= 0) throw UsageError("lr_schedule: total_steps must be positive");
    if (step < 0 || step >= total_steps) {
        throw UsageError("lr_schedule: step outside [0, total_steps)");
    }
    if (warmup_steps < 0 || warmup_steps > total_steps) {
        throw UsageError("lr_schedule: warmup_steps outside [0, total_steps]");
    }
    if (!(base_lr > 0.0)) throw UsageError("lr_schedule: base_lr must be positive");
    if (step < warmup_steps) {
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    if (total_steps == warmup_steps) return base_lr;
    double t = static_cast<double>(step - warmup_steps) /
               static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (std::cos(M_PI * t) + 1.0);
}

// v <- momentum*v + g + wd*theta; theta <- theta - lr*v. Velocities start at
// zero and live here, so one Sgd instance must persist across steps.
template <typename T>
class SgdT {
  public:
    SgdT(std::vector<TensorT<T>> params, double momentum, double weight_decay)
        : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
        if (momentum_ < 0.0 || momentum_ >= 1.0) {
            throw UsageError("sgd: momentum outside [0, 1)");
        }
        if (weight_decay_ < 0.0) throw UsageError("sgd: negative weight decay");
        velocity_.reserve(params_.size());
        for (auto& p : params_) velocity_.emplace_back(p.size(), 0.0);
    }

    void step(double lr) {
        if (!(lr >= 0.0)) throw UsageError("sgd: negative learning rate");
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& theta = params_[pi].node()->data;
            const std::vector<T> g = params_[pi].grad();
            auto& v = velocity_[pi];
            for (std::size_t i = 0; i < theta.size(); ++i) {
                double vi = momentum_ * v[i] + static_cast<double>(g[i]) +
                            weight_decay_ * static_cast<double>(theta[i]);
                v[i] = vi;
                theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * vi);
            }
        }
    }

    std::size_t param_count() const { return params_.size(); }

  private:
    std::vector<TensorT<T>> params_;
    double momentum_ = 0.0;
    double weight_decay_ = 0.0;
    std::vector<std::vector<double>> velocity_; // double state even in f32 training
};

using Sgd = SgdT<double>;
using SgdF = SgdT<float>;

} // namespace univip
