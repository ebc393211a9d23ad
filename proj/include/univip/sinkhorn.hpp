#pragma once

// Entropic optimal transport between the online and target instance feature
// sets: cosine cost matrix, feature-derived marginal weights, a log-domain
// Sinkhorn solver, and the transport-weighted similarity loss. The solver
// works on plain doubles; only the final loss builds autodiff graph.

#include <vector>

#include "univip/tensor.hpp"

namespace univip {

struct CostMatrix {
    int k = 0;
    std::vector<double> c;  // row-major k*k, entries in [0,2]

    double at(int m, int n) const { return c[static_cast<size_t>(m) * k + n]; }
};

struct Marginals {
    std::vector<double> b;  // supplier weights (rows), sum 1
    std::vector<double> a;  // demander weights (cols), sum 1
};

struct TransportPlan {
    int k = 0;
    std::vector<double> y;  // row-major k*k, nonnegative
    bool converged = false;
    int iterations = 0;

    double at(int m, int n) const { return y[static_cast<size_t>(m) * k + n]; }
};

struct SinkhornParams {
    double epsilon = 0.05;
    int max_iter = 5000;
    double tol = 1e-6;
    std::vector<double>* dual_trace = nullptr;  // appended per half-update when set
};

// plan = diag(u) exp(-C/eps) diag(v), solved by alternating log-domain
// potential updates until row/col sums match b/a within tol
TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& marg, const SinkhornParams& p);

// entropic dual value for potentials f (rows) and g (cols); the solver's
// alternating updates are block coordinate ascent on this
double sinkhorn_dual(const CostMatrix& cost, const Marginals& marg, const std::vector<double>& f,
                     const std::vector<double>& g, double epsilon);

// raw weights b_m = max(o_m . (f_t1+f_t2)/2, 0), a_n = max(t_n . (f_o1+f_o2)/2, 0),
// each vector rescaled to sum 1 (uniform when all-zero)
Marginals marginal_weights(const std::vector<std::vector<double>>& o_feats,
                           const std::vector<std::vector<double>>& t_feats,
                           const std::vector<double>& f_o1, const std::vector<double>& f_o2,
                           const std::vector<double>& f_t1, const std::vector<double>& f_t2);

// ============================================================================
// graph-facing pieces
// ============================================================================

template <typename T>
std::vector<double> feature_values(const TensorT<T>& t) {
    std::vector<double> out(t.data().begin(), t.data().end());
    return out;
}

// c_mn = 1 - cos(o_m, t_n) on detached values, clamped into [0,2]
template <typename T>
CostMatrix cost_matrix_values(const std::vector<TensorT<T>>& online,
                              const std::vector<TensorT<T>>& target, double eps = 1e-12) {
    if (online.empty() || online.size() != target.size()) {
        throw ShapeError("cost_matrix_values: need equal nonzero feature counts");
    }
    const int k = static_cast<int>(online.size());
    CostMatrix cm;
    cm.k = k;
    cm.c.resize(static_cast<size_t>(k) * k);
    for (int m = 0; m < k; ++m) {
        if (online[m].shape() != target[0].shape()) {
            throw ShapeError("cost_matrix_values: feature shape mismatch");
        }
        for (int n = 0; n < k; ++n) {
            const auto& o = online[m].data();
            const auto& t = target[n].data();
            if (o.size() != t.size()) throw ShapeError("cost_matrix_values: length mismatch");
            double dot = 0, no = 0, nt = 0;
            for (size_t i = 0; i < o.size(); ++i) {
                dot += static_cast<double>(o[i]) * t[i];
                no += static_cast<double>(o[i]) * o[i];
                nt += static_cast<double>(t[i]) * t[i];
            }
            no = std::sqrt(no);
            nt = std::sqrt(nt);
            if (no < eps || nt < eps) {
                throw NumericError("cost_matrix_values: zero-norm feature");
            }
            double cost = 1.0 - dot / (no * nt);
            cm.c[static_cast<size_t>(m) * k + n] = std::clamp(cost, 0.0, 2.0);
        }
    }
    return cm;
}

// L = -sum_mn plan_mn cos(o_m, t_n); the plan is a constant and target
// features are detached, so gradients reach the online features only
template <typename T>
TensorT<T> instance_loss(const std::vector<TensorT<T>>& online,
                         const std::vector<TensorT<T>>& target, const TransportPlan& plan) {
    const int k = plan.k;
    if (static_cast<int>(online.size()) != k || static_cast<int>(target.size()) != k) {
        throw ShapeError("instance_loss: plan size " + std::to_string(k) +
                         " does not match feature count");
    }
    TensorT<T> acc = TensorT<T>::scalar(T(0));
    for (int m = 0; m < k; ++m) {
        for (int n = 0; n < k; ++n) {
            TensorT<T> cs = cosine_similarity(online[m], detach(target[n]));
            acc = add(acc, scale(cs, static_cast<T>(-plan.at(m, n))));
        }
    }
    return acc;
}

} // namespace univip
