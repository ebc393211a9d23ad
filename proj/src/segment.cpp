#include "univip/segment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace univip {

namespace {

struct Edge {
    int a, b;
    float w;
};

// Union-find with rank; `threshold` carries int(C) + k/|C| per root.
class Forest {
public:
    explicit Forest(int n, float k) : parent_(n), rank_(n, 0), size_(n, 1), threshold_(n, k) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    int find(int x) {
        int root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) {
            int next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    int join(int a, int b) {
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        if (rank_[a] == rank_[b]) rank_[a]++;
        return a;
    }

    int size(int root) const { return size_[root]; }
    float threshold(int root) const { return threshold_[root]; }
    void set_threshold(int root, float t) { threshold_[root] = t; }

private:
    std::vector<int> parent_;
    std::vector<int> rank_;
    std::vector<int> size_;
    std::vector<float> threshold_;
};

inline float pixel_dist(const Image& img, int y1, int x1, int y2, int x2) {
    float dr = img.at(y1, x1, 0) - img.at(y2, x2, 0);
    float dg = img.at(y1, x1, 1) - img.at(y2, x2, 1);
    float db = img.at(y1, x1, 2) - img.at(y2, x2, 2);
    return std::sqrt(dr * dr + dg * dg + db * db);
}

} // namespace

Segmentation segment_image(const Image& img, const SegmentParams& params) {
    if (img.h < 1 || img.w < 1) throw UsageError("segment_image: empty image");
    if (params.k <= 0.0 || params.min_size < 1 || params.sigma < 0.0) {
        throw UsageError("segment_image: bad parameters");
    }

    Image smooth = img;
    if (params.sigma > 0.0) {
        int ks = static_cast<int>(std::ceil(params.sigma * 4.0)) | 1;
        if (ks < 3) ks = 3;
        smooth = gaussian_blur(img, params.sigma, ks);
    }

    int h = img.h, w = img.w, n = h * w;
    std::vector<Edge> edges;
    edges.reserve(static_cast<size_t>(2) * n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int p = y * w + x;
            if (x + 1 < w) edges.push_back({p, p + 1, pixel_dist(smooth, y, x, y, x + 1)});
            if (y + 1 < h) edges.push_back({p, p + w, pixel_dist(smooth, y, x, y + 1, x)});
        }
    }
    // stable: equal weights keep construction order, fixing the merge order
    std::stable_sort(edges.begin(), edges.end(),
                     [](const Edge& a, const Edge& b) { return a.w < b.w; });

    Forest forest(n, static_cast<float>(params.k));
    for (const Edge& e : edges) {
        int ra = forest.find(e.a);
        int rb = forest.find(e.b);
        if (ra == rb) continue;
        if (e.w <= forest.threshold(ra) && e.w <= forest.threshold(rb)) {
            int r = forest.join(ra, rb);
            forest.set_threshold(r, e.w + static_cast<float>(params.k) / forest.size(r));
        }
    }
    // absorb undersized components along the lightest boundaries first
    for (const Edge& e : edges) {
        int ra = forest.find(e.a);
        int rb = forest.find(e.b);
        if (ra != rb && (forest.size(ra) < params.min_size || forest.size(rb) < params.min_size)) {
            forest.join(ra, rb);
        }
    }

    Segmentation seg;
    seg.h = h;
    seg.w = w;
    seg.labels.resize(static_cast<size_t>(n));
    std::vector<int> compact(n, -1);
    int next = 0;
    for (int p = 0; p < n; ++p) {
        int r = forest.find(p);
        if (compact[r] < 0) compact[r] = next++;
        seg.labels[p] = compact[r];
    }
    seg.num_components = next;
    return seg;
}

} // namespace univip
