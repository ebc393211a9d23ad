#pragma once

// The three-level objective: scene similarity across views, fused-instance
// to scene affinity, and transport-weighted instance discrimination, summed
// with equal weights. Components stay separate graph scalars so ablations
// and metrics read the exact values that were optimized.

#include <vector>

#include "univip/tensor.hpp"

namespace univip {

template <typename T>
struct SceneFeatures {
    TensorT<T> f_o1, f_o2;  // online post-predictor scene vectors
    TensorT<T> f_t1, f_t2;  // target post-projection scene vectors
};

struct LossSwitches {
    bool scene = true;
    bool scene_instance = true;
    bool instance = true;
};

template <typename T>
struct LossBreakdown {
    TensorT<T> scene;
    TensorT<T> scene_instance;
    TensorT<T> instance;
    TensorT<T> total;
};

template <typename T>
TensorT<T> neg_cosine(const TensorT<T>& p, const TensorT<T>& z) {
    return neg(cosine_similarity(p, z));
}

// symmetric cross-view similarity: each online prediction against the other
// view's target projection
template <typename T>
TensorT<T> scene_loss(const SceneFeatures<T>& f) {
    return add(neg_cosine(f.f_o1, f.f_t2), neg_cosine(f.f_o2, f.f_t1));
}

// fused instance representation against both target scene projections
template <typename T>
TensorT<T> affinity_loss(const TensorT<T>& fused, const SceneFeatures<T>& f) {
    return add(neg_cosine(fused, f.f_t1), neg_cosine(fused, f.f_t2));
}

// fixed summation order (scene + scene_instance) + instance; disabled terms
// enter as exact zeros so the breakdown stays additive
template <typename T>
LossBreakdown<T> assemble_total(TensorT<T> scene, TensorT<T> scene_instance, TensorT<T> instance,
                                const LossSwitches& sw) {
    if (!sw.scene && !sw.scene_instance && !sw.instance) {
        throw UsageError("assemble_total: every loss term is disabled");
    }
    LossBreakdown<T> out;
    out.scene = sw.scene ? std::move(scene) : TensorT<T>::scalar(T(0));
    out.scene_instance =
        sw.scene_instance ? std::move(scene_instance) : TensorT<T>::scalar(T(0));
    out.instance = sw.instance ? std::move(instance) : TensorT<T>::scalar(T(0));
    out.total = add(add(out.scene, out.scene_instance), out.instance);
    return out;
}

template <typename T>
TensorT<T> batch_mean(const std::vector<TensorT<T>>& totals) {
    if (totals.empty()) throw UsageError("batch_mean: empty batch");
    TensorT<T> sum = totals[0];
    for (size_t i = 1; i < totals.size(); ++i) sum = add(sum, totals[i]);
    return scale(sum, T(1) / static_cast<T>(totals.size()));
}

} // namespace univip
