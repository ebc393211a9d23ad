#include "univip/sinkhorn.hpp"

#include <cmath>
#include <limits>

namespace univip {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// -inf-safe log-sum-exp; all-(-inf) input collapses to -inf
double lse(const std::vector<double>& v) {
    double mx = kNegInf;
    for (double x : v) mx = std::max(mx, x);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

void validate(const CostMatrix& cost, const Marginals& marg, const SinkhornParams& p) {
    if (cost.k < 1) throw ShapeError("sinkhorn: empty cost matrix");
    const size_t k = static_cast<size_t>(cost.k);
    if (cost.c.size() != k * k) throw ShapeError("sinkhorn: cost matrix size mismatch");
    if (marg.b.size() != k || marg.a.size() != k) {
        throw ShapeError("sinkhorn: marginal length mismatch");
    }
    if (p.epsilon <= 0.0) throw UsageError("sinkhorn: epsilon must be positive");
    if (p.tol <= 0.0) throw UsageError("sinkhorn: tol must be positive");
    if (p.max_iter < 1) throw UsageError("sinkhorn: max_iter must be >= 1");
    double sb = 0.0, sa = 0.0;
    for (double x : marg.b) {
        if (!std::isfinite(x) || x < 0.0) throw NumericError("sinkhorn: bad supplier weight");
        sb += x;
    }
    for (double x : marg.a) {
        if (!std::isfinite(x) || x < 0.0) throw NumericError("sinkhorn: bad demander weight");
        sa += x;
    }
    if (std::abs(sa - sb) > 1e-9) throw NumericError("sinkhorn: marginal totals differ");
    if (sb <= 0.0) throw NumericError("sinkhorn: zero-mass marginals");
    for (double x : cost.c) {
        if (!std::isfinite(x)) throw NumericError("sinkhorn: non-finite cost");
    }
}

} // namespace

double sinkhorn_dual(const CostMatrix& cost, const Marginals& marg, const std::vector<double>& f,
                     const std::vector<double>& g, double epsilon) {
    const int k = cost.k;
    double val = 0.0;
    for (int m = 0; m < k; ++m) {
        if (marg.b[m] > 0.0) val += f[m] * marg.b[m];
    }
    for (int n = 0; n < k; ++n) {
        if (marg.a[n] > 0.0) val += g[n] * marg.a[n];
    }
    for (int m = 0; m < k; ++m) {
        for (int n = 0; n < k; ++n) {
            double e = (f[m] + g[n] - cost.at(m, n)) / epsilon;
            if (e == kNegInf) continue;
            val -= epsilon * std::exp(e);
        }
    }
    return val;
}

TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& marg, const SinkhornParams& p) {
    validate(cost, marg, p);
    const int k = cost.k;
    const double eps = p.epsilon;

    std::vector<double> log_b(k), log_a(k);
    for (int i = 0; i < k; ++i) {
        log_b[i] = marg.b[i] > 0.0 ? std::log(marg.b[i]) : kNegInf;
        log_a[i] = marg.a[i] > 0.0 ? std::log(marg.a[i]) : kNegInf;
    }

    std::vector<double> f(k, 0.0), g(k, 0.0), terms(k);
    TransportPlan plan;
    plan.k = k;
    plan.y.assign(static_cast<size_t>(k) * k, 0.0);

    auto fill_plan = [&] {
        for (int m = 0; m < k; ++m) {
            for (int n = 0; n < k; ++n) {
                double e = (f[m] + g[n] - cost.at(m, n)) / eps;
                plan.y[static_cast<size_t>(m) * k + n] = e == kNegInf ? 0.0 : std::exp(e);
            }
        }
    };
    auto violation = [&] {
        double worst = 0.0;
        for (int m = 0; m < k; ++m) {
            double row = 0.0;
            for (int n = 0; n < k; ++n) row += plan.at(m, n);
            worst = std::max(worst, std::abs(row - marg.b[m]));
        }
        for (int n = 0; n < k; ++n) {
            double col = 0.0;
            for (int m = 0; m < k; ++m) col += plan.at(m, n);
            worst = std::max(worst, std::abs(col - marg.a[n]));
        }
        return worst;
    };

    for (int it = 0; it < p.max_iter; ++it) {
        // each half-update rescales one set of potentials so its marginal
        // matches exactly; block coordinate ascent on the entropic dual
        for (int m = 0; m < k; ++m) {
            if (log_b[m] == kNegInf) {
                f[m] = kNegInf;
                continue;
            }
            for (int n = 0; n < k; ++n) terms[n] = (g[n] - cost.at(m, n)) / eps;
            f[m] = eps * (log_b[m] - lse(terms));
        }
        if (p.dual_trace) p.dual_trace->push_back(sinkhorn_dual(cost, marg, f, g, eps));
        for (int n = 0; n < k; ++n) {
            if (log_a[n] == kNegInf) {
                g[n] = kNegInf;
                continue;
            }
            for (int m = 0; m < k; ++m) terms[m] = (f[m] - cost.at(m, n)) / eps;
            g[n] = eps * (log_a[n] - lse(terms));
        }
        if (p.dual_trace) p.dual_trace->push_back(sinkhorn_dual(cost, marg, f, g, eps));

        fill_plan();
        plan.iterations = it + 1;
        if (violation() < p.tol) {
            plan.converged = true;
            break;
        }
    }
    return plan;
}

Marginals marginal_weights(const std::vector<std::vector<double>>& o_feats,
                           const std::vector<std::vector<double>>& t_feats,
                           const std::vector<double>& f_o1, const std::vector<double>& f_o2,
                           const std::vector<double>& f_t1, const std::vector<double>& f_t2) {
    const size_t k = o_feats.size();
    if (k == 0 || t_feats.size() != k) {
        throw ShapeError("marginal_weights: need equal nonzero feature counts");
    }
    const size_t d = f_o1.size();
    if (f_o2.size() != d || f_t1.size() != d || f_t2.size() != d) {
        throw ShapeError("marginal_weights: scene feature length mismatch");
    }

    std::vector<double> mean_t(d), mean_o(d);
    for (size_t i = 0; i < d; ++i) {
        mean_t[i] = 0.5 * (f_t1[i] + f_t2[i]);
        mean_o[i] = 0.5 * (f_o1[i] + f_o2[i]);
    }

    auto raw = [&](const std::vector<std::vector<double>>& feats, const std::vector<double>& mean) {
        std::vector<double> w(k);
        for (size_t m = 0; m < k; ++m) {
            if (feats[m].size() != d) throw ShapeError("marginal_weights: feature length mismatch");
            double dot = 0.0;
            for (size_t i = 0; i < d; ++i) dot += feats[m][i] * mean[i];
            w[m] = std::max(dot, 0.0);
        }
        double s = 0.0;
        for (double x : w) s += x;
        if (s <= 0.0) {
            for (double& x : w) x = 1.0 / static_cast<double>(k);
        } else {
            for (double& x : w) x /= s;
        }
        return w;
    };

    Marginals marg;
    marg.b = raw(o_feats, mean_t);
    marg.a = raw(t_feats, mean_o);
    return marg;
}

} // namespace univip
