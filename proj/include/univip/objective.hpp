#pragma once

// Wires one training sample through the siamese model into the full loss:
// scene forwards, instance forwards, fusion, entropic transport on detached
// features, and the three-term breakdown.

#include <vector>

#include "univip/losses.hpp"
#include "univip/model.hpp"
#include "univip/sinkhorn.hpp"
#include "univip/views.hpp"

namespace univip {

struct TransportStats {
    bool converged = false;
    int iterations = 0;
};

template <typename T>
struct SampleForward {
    SceneFeatures<T> scenes;
    std::vector<TensorT<T>> online_inst;  // post-predictor
    std::vector<TensorT<T>> target_inst;  // post-projection
};

template <typename T>
SampleForward<T> forward_sample(ModelT<T>& model, const TrainingSample<T>& sample) {
    SampleForward<T> fw;
    fw.scenes.f_o1 = model.online_forward(sample.scene1);
    fw.scenes.f_o2 = model.online_forward(sample.scene2);
    fw.scenes.f_t1 = model.target_forward(sample.scene1);
    fw.scenes.f_t2 = model.target_forward(sample.scene2);
    for (const auto& inst : sample.instances) {
        fw.online_inst.push_back(model.online_forward(inst));
        fw.target_inst.push_back(model.target_forward(inst));
    }
    return fw;
}

// the transported matching for this sample, solved on detached values; the
// supplier weights come from online instances against the mean target scene,
// demander weights the reverse
template <typename T>
TransportPlan solve_transport(const SampleForward<T>& fw, const SinkhornParams& sk,
                              TransportStats* stats = nullptr) {
    CostMatrix cost = cost_matrix_values(fw.online_inst, fw.target_inst);
    std::vector<std::vector<double>> o_vals, t_vals;
    for (const auto& v : fw.online_inst) o_vals.push_back(feature_values(v));
    for (const auto& v : fw.target_inst) t_vals.push_back(feature_values(v));
    Marginals marg = marginal_weights(o_vals, t_vals, feature_values(fw.scenes.f_o1),
                                      feature_values(fw.scenes.f_o2),
                                      feature_values(fw.scenes.f_t1),
                                      feature_values(fw.scenes.f_t2));
    TransportPlan plan = sinkhorn(cost, marg, sk);
    if (stats) {
        stats->converged = plan.converged;
        stats->iterations = plan.iterations;
    }
    return plan;
}

// loss with a caller-supplied plan; lets verification hold the matching fixed
// while parameters move
template <typename T>
LossBreakdown<T> sample_objective_with_plan(ModelT<T>& model, const SampleForward<T>& fw,
                                            const TransportPlan& plan, const LossSwitches& sw) {
    TensorT<T> scene = sw.scene ? scene_loss(fw.scenes) : TensorT<T>::scalar(T(0));
    TensorT<T> scene_inst = TensorT<T>::scalar(T(0));
    if (sw.scene_instance) {
        TensorT<T> fused = model.fuse_instances(fw.online_inst);
        scene_inst = affinity_loss(fused, fw.scenes);
    }
    TensorT<T> inst = sw.instance ? instance_loss(fw.online_inst, fw.target_inst, plan)
                                  : TensorT<T>::scalar(T(0));
    return assemble_total(std::move(scene), std::move(scene_inst), std::move(inst), sw);
}

template <typename T>
LossBreakdown<T> sample_objective(ModelT<T>& model, const TrainingSample<T>& sample,
                                  const SinkhornParams& sk, const LossSwitches& sw,
                                  TransportStats* stats = nullptr) {
    SampleForward<T> fw = forward_sample(model, sample);
    TransportPlan plan;
    if (sw.instance) {
        plan = solve_transport(fw, sk, stats);
    } else {
        plan.k = static_cast<int>(fw.online_inst.size());
        plan.y.assign(static_cast<size_t>(plan.k) * plan.k, 0.0);
        plan.converged = true;
    }
    return sample_objective_with_plan(model, fw, plan, sw);
}

} // namespace univip
