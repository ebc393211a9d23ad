#include "univip/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "univip/image.hpp"
#include "univip/synth.hpp"

namespace univip {

namespace {

std::vector<double> embed(ModelF& model, const Image& patch, int instance_size) {
    Image sized = resize_bilinear(patch, instance_size, instance_size);
    TensorF pooled = global_avg_pool(model.encoder_map(to_chw_tensor<float>(sized)));
    const auto& d = pooled.data();
    return std::vector<double>(d.begin(), d.end());
}

void validate_set(const FeatureSet& s, const char* who) {
    if (s.x.empty()) throw UsageError(std::string(who) + ": empty feature set");
    if (s.x.size() != s.y.size()) throw ShapeError(std::string(who) + ": feature/label count mismatch");
    if (s.classes < 2) throw UsageError(std::string(who) + ": needs at least 2 classes");
    size_t dim = s.x[0].size();
    for (const auto& row : s.x) {
        if (row.size() != dim) throw ShapeError(std::string(who) + ": ragged feature rows");
    }
    for (int label : s.y) {
        if (label < 0 || label >= s.classes) {
            throw DataError(std::string(who) + ": label " + std::to_string(label) +
                            " outside [0, " + std::to_string(s.classes) + ")");
        }
    }
}

} // namespace

EvalSplit extract_features(ModelF& model, const std::string& dataset_dir, int instance_size) {
    if (instance_size < 1) throw UsageError("extract_features: instance_size must be >= 1");
    DatasetManifest manifest = read_manifest(dataset_dir);
    EvalSplit out;
    out.train.classes = kNumShapeClasses;
    out.test.classes = kNumShapeClasses;
    for (size_t i = 0; i < manifest.image_files.size(); ++i) {
        DatasetSample s = load_sample(dataset_dir, manifest, i);
        FeatureSet& dst = (i % 5 == 4) ? out.test : out.train;
        for (const auto& lb : s.gt) {
            dst.x.push_back(embed(model, crop(s.image, lb.box), instance_size));
            dst.y.push_back(lb.label);
        }
    }
    if (out.train.x.empty() || out.test.x.empty()) {
        throw DataError("extract_features: need at least 5 scenes to populate both splits");
    }
    return out;
}

double linear_probe(const FeatureSet& train, const FeatureSet& test, const ProbeConfig& pc) {
    validate_set(train, "linear_probe(train)");
    validate_set(test, "linear_probe(test)");
    const size_t dim = train.x[0].size();
    if (test.x[0].size() != dim) throw ShapeError("linear_probe: train/test feature width differs");
    if (pc.iters < 1 || pc.lr <= 0.0 || pc.l2 < 0.0) {
        throw UsageError("linear_probe: bad probe hyperparameters");
    }
    const size_t n = train.x.size();
    const int C = train.classes;

    // standardize with train statistics; a constant column collapses to zero
    std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
    for (const auto& row : train.x) {
        for (size_t j = 0; j < dim; ++j) mu[j] += row[j];
    }
    for (size_t j = 0; j < dim; ++j) mu[j] /= static_cast<double>(n);
    for (const auto& row : train.x) {
        for (size_t j = 0; j < dim; ++j) sd[j] += (row[j] - mu[j]) * (row[j] - mu[j]);
    }
    for (size_t j = 0; j < dim; ++j) sd[j] = std::sqrt(sd[j] / static_cast<double>(n) + 1e-8);
    auto standardize = [&](const std::vector<double>& v) {
        std::vector<double> z(dim);
        for (size_t j = 0; j < dim; ++j) z[j] = (v[j] - mu[j]) / sd[j];
        return z;
    };
    std::vector<std::vector<double>> xs(n);
    for (size_t i = 0; i < n; ++i) xs[i] = standardize(train.x[i]);

    // weight layout: C rows of (dim coefficients + bias)
    const size_t stride = dim + 1;
    std::vector<double> w(static_cast<size_t>(C) * stride, 0.0);
    std::vector<double> g(w.size());
    std::vector<double> logits(static_cast<size_t>(C));
    for (int it = 0; it < pc.iters; ++it) {
        std::fill(g.begin(), g.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            const auto& x = xs[i];
            double hi = -1e300;
            for (int c = 0; c < C; ++c) {
                const double* wc = &w[static_cast<size_t>(c) * stride];
                double s = wc[dim];
                for (size_t j = 0; j < dim; ++j) s += wc[j] * x[j];
                logits[static_cast<size_t>(c)] = s;
                hi = std::max(hi, s);
            }
            double zsum = 0.0;
            for (int c = 0; c < C; ++c) {
                logits[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - hi);
                zsum += logits[static_cast<size_t>(c)];
            }
            for (int c = 0; c < C; ++c) {
                double p = logits[static_cast<size_t>(c)] / zsum;
                double delta = p - (c == train.y[i] ? 1.0 : 0.0);
                double* gc = &g[static_cast<size_t>(c) * stride];
                for (size_t j = 0; j < dim; ++j) gc[j] += delta * x[j];
                gc[dim] += delta;
            }
        }
        const double scale = pc.lr / static_cast<double>(n);
        for (int c = 0; c < C; ++c) {
            double* wc = &w[static_cast<size_t>(c) * stride];
            const double* gc = &g[static_cast<size_t>(c) * stride];
            for (size_t j = 0; j < dim; ++j) wc[j] -= scale * gc[j] + pc.lr * pc.l2 * wc[j];
            wc[dim] -= scale * gc[dim];
        }
    }

    size_t correct = 0;
    for (size_t i = 0; i < test.x.size(); ++i) {
        std::vector<double> x = standardize(test.x[i]);
        int best = 0;
        double best_s = -1e300;
        for (int c = 0; c < C; ++c) {
            const double* wc = &w[static_cast<size_t>(c) * stride];
            double s = wc[dim];
            for (size_t j = 0; j < dim; ++j) s += wc[j] * x[j];
            if (s > best_s) {
                best_s = s;
                best = c;
            }
        }
        if (best == test.y[i]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(test.x.size());
}

double knn_accuracy(const FeatureSet& reference, const FeatureSet& query, int k) {
    validate_set(reference, "knn(reference)");
    validate_set(query, "knn(query)");
    const size_t dim = reference.x[0].size();
    if (query.x[0].size() != dim) throw ShapeError("knn: reference/query feature width differs");
    if (k < 1) throw UsageError("knn: k must be >= 1");
    if (static_cast<size_t>(k) > reference.x.size()) {
        throw UsageError("knn: k = " + std::to_string(k) + " exceeds reference set of " +
                         std::to_string(reference.x.size()));
    }

    auto unit = [dim](const std::vector<double>& v) {
        double nrm = 0.0;
        for (size_t j = 0; j < dim; ++j) nrm += v[j] * v[j];
        nrm = std::sqrt(nrm);
        std::vector<double> u(dim, 0.0);
        if (nrm > 0.0) {
            for (size_t j = 0; j < dim; ++j) u[j] = v[j] / nrm;
        }
        return u;
    };
    std::vector<std::vector<double>> ref(reference.x.size());
    for (size_t i = 0; i < reference.x.size(); ++i) ref[i] = unit(reference.x[i]);

    size_t correct = 0;
    std::vector<size_t> idx(ref.size());
    std::vector<double> sim(ref.size());
    for (size_t qi = 0; qi < query.x.size(); ++qi) {
        std::vector<double> q = unit(query.x[qi]);
        for (size_t r = 0; r < ref.size(); ++r) {
            sim[r] = std::inner_product(q.begin(), q.end(), ref[r].begin(), 0.0);
        }
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](size_t a, size_t b) {
            if (sim[a] != sim[b]) return sim[a] > sim[b];
            return a < b; // stable under similarity ties
        });
        std::vector<int> votes(static_cast<size_t>(reference.classes), 0);
        std::vector<double> weight(static_cast<size_t>(reference.classes), 0.0);
        for (int t = 0; t < k; ++t) {
            int label = reference.y[idx[static_cast<size_t>(t)]];
            votes[static_cast<size_t>(label)]++;
            weight[static_cast<size_t>(label)] += sim[idx[static_cast<size_t>(t)]];
        }
        int best = 0;
        for (int c = 1; c < reference.classes; ++c) {
            auto cu = static_cast<size_t>(c), bu = static_cast<size_t>(best);
            if (votes[cu] > votes[bu] || (votes[cu] == votes[bu] && weight[cu] > weight[bu])) {
                best = c;
            }
        }
        if (best == query.y[qi]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(query.x.size());
}

} // namespace univip
