#pragma once

#include <string>
#include <vector>

#include "univip/model.hpp"

// Frozen-feature quality probes. Ground-truth instance crops are embedded by
// the online encoder (pooled last conv map, no heads), then either a linear
// classifier or a cosine k-NN votes on the shape class. The held-out split is
// by scene, not by crop, so near-identical instances never leak across.

namespace univip {

struct FeatureSet {
    std::vector<std::vector<double>> x; // one row per instance
    std::vector<int> y;                 // class id per row
    int classes = 0;                    // labels live in [0, classes)
};

struct EvalSplit {
    FeatureSet train;
    FeatureSet test;
};

// Embeds every gt box of every scene; scenes with index % 5 == 4 form the
// test split. Crops are resized to instance_size, never augmented.
EvalSplit extract_features(ModelF& model, const std::string& dataset_dir, int instance_size);

struct ProbeConfig {
    int iters = 300;   // full-batch gradient descent steps
    double lr = 0.5;
    double l2 = 1e-3;  // weight shrinkage, biases exempt
};

// Multinomial logistic regression on standardized frozen features, trained
// and evaluated in double. Returns accuracy on `test`.
double linear_probe(const FeatureSet& train, const FeatureSet& test, const ProbeConfig& pc = {});

// Cosine k-NN majority vote; ties break toward the larger summed similarity,
// then the smaller class id. UsageError when k exceeds the reference set.
double knn_accuracy(const FeatureSet& reference, const FeatureSet& query, int k);

} // namespace univip
