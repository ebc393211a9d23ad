#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <unordered_set>
#include <vector>

#include "univip/rng.hpp"
#include "univip/tensor.hpp"

// Finite-difference gradient verification, double precision only. The loss
// builder is re-invoked after every parameter nudge, so it must rebuild the
// graph from the parameters' current values and must be deterministic; the
// check refuses to run otherwise.
//
// ReLU makes the loss piecewise linear in any one parameter, so a stencil of
// width 2h occasionally straddles a kink and the central difference measures
// a chord slope, not the derivative. Entries that fail at the primary step
// are re-measured at h/16: if the difference quotient collapses onto the
// analytic value, the stencil was contaminated and the entry passes on the
// refined evidence. A wrong analytic gradient cannot sneak through, because
// the quotient converges to the true derivative and the error would plateau
// at the discrepancy instead of collapsing.

namespace univip {

struct GradCheckReport {
    double max_err = 0.0;        // worst relative (or small-magnitude absolute) error
    std::size_t worst_param = 0; // index into the params vector
    std::size_t worst_entry = 0; // flat index within that parameter
    double analytic = 0.0;       // gradient pair at the worst entry
    double numeric = 0.0;
    std::size_t probes = 0;
    std::size_t kink_hits = 0;   // entries that only passed after step refinement
    bool ok = false;
};

// Error metric: relative against max(|analytic|, |numeric|), falling back to
// absolute difference when both magnitudes are tiny (below 1e-6), where the
// relative form would just amplify roundoff.
inline double gradcheck_error(double analytic, double numeric) {
    double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom <= 1e-6) return std::abs(analytic - numeric);
    return std::abs(analytic - numeric) / denom;
}

// `params` are the leaves to perturb (must require grad and feed the loss).
// `max_probes_per_param` = 0 checks every entry; a positive value samples
// that many distinct entries per parameter with a seeded RNG, which keeps
// full-model checks inside their time budget without biasing which weights
// get looked at.
inline GradCheckReport check_gradients(std::vector<Tensor>& params,
                                       const std::function<Tensor()>& build_loss,
                                       double h = 1e-5, double tol = 1e-4,
                                       std::size_t max_probes_per_param = 0,
                                       uint64_t probe_seed = 0x5eed) {
    // Double evaluation guards against a stochastic builder, which would
    // make the finite differences meaningless.
    double v1 = build_loss().item();
    double v2 = build_loss().item();
    if (!(v1 == v2)) {
        throw NumericError("check_gradients: loss builder is not deterministic");
    }

    for (auto& p : params) p.zero_grad();
    Tensor loss = build_loss();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.grad());

    GradCheckReport rep;
    rep.ok = true;
    Rng rng(probe_seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].data();
        std::vector<std::size_t> probes;
        if (max_probes_per_param == 0 || vals.size() <= max_probes_per_param) {
            probes.resize(vals.size());
            for (std::size_t i = 0; i < vals.size(); ++i) probes[i] = i;
        } else {
            std::unordered_set<std::size_t> seen;
            while (seen.size() < max_probes_per_param) {
                seen.insert(static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(vals.size()) - 1)));
            }
            probes.assign(seen.begin(), seen.end());
            std::sort(probes.begin(), probes.end());
        }
        for (std::size_t i : probes) {
            double x0 = vals[i];
            auto numeric_at = [&](double step) {
                vals[i] = x0 + step;
                double lp = build_loss().item();
                vals[i] = x0 - step;
                double lm = build_loss().item();
                vals[i] = x0;
                return (lp - lm) / (2.0 * step);
            };
            double numeric = numeric_at(h);
            double err = gradcheck_error(analytic[pi][i], numeric);
            if (err >= tol) {
                // Possible kink inside the stencil; shrink it and demand the
                // quotient collapse onto the analytic value. A plateau (wrong
                // gradient) cannot shed 4x of its error by shrinking h.
                double refined = numeric_at(h / 16.0);
                double err_r = gradcheck_error(analytic[pi][i], refined);
                if (err_r < tol && err_r <= err / 4.0) {
                    numeric = refined;
                    err = err_r;
                    rep.kink_hits++;
                }
            }
            rep.probes++;
            if (err > rep.max_err) {
                rep.max_err = err;
                rep.worst_param = pi;
                rep.worst_entry = i;
                rep.analytic = analytic[pi][i];
                rep.numeric = numeric;
            }
        }
    }
    rep.ok = rep.max_err < tol;
    return rep;
}

} // namespace univip
