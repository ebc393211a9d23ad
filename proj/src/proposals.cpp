#include "univip/proposals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

namespace univip {

namespace {

constexpr int kBins = 8; // per channel

struct Region {
    int size = 0;
    Box bbox;
    std::array<double, 3 * kBins> hist{}; // each channel's slice sums to 1
    bool active = false;
};

int bin_of(float v) {
    int b = static_cast<int>(v * kBins);
    return std::min(b, kBins - 1);
}

// Color similarity in [0,1] (histogram intersection averaged over channels)
// plus a size term in [0,1] that prefers merging small regions first, so
// growth stays balanced instead of one blob swallowing the image.
double similarity(const Region& a, const Region& b, double total_px) {
    double inter = 0.0;
    for (int i = 0; i < 3 * kBins; ++i) inter += std::min(a.hist[i], b.hist[i]);
    double s_color = inter / 3.0;
    double s_size = 1.0 - (a.size + b.size) / total_px;
    return s_color + s_size;
}

// Candidate pair ordering: best similarity first, then smaller combined
// size, then lowest ids. Region records are immutable once created (merges
// append fresh regions), so a pair's key never goes stale.
struct PairKey {
    double neg_sim;
    int combined;
    int a, b;
    bool operator<(const PairKey& o) const {
        if (neg_sim != o.neg_sim) return neg_sim < o.neg_sim;
        if (combined != o.combined) return combined < o.combined;
        if (a != o.a) return a < o.a;
        return b < o.b;
    }
};

} // namespace

ProposalResult generate_proposals(const Image& img, const ProposalParams& params, uint64_t seed) {
    (void)seed;
    if (params.max_proposals < 1) throw UsageError("generate_proposals: max_proposals < 1");
    Segmentation seg = segment_image(img, params.segment);

    // initial regions
    std::vector<Region> regions(static_cast<size_t>(seg.num_components));
    for (auto& r : regions) {
        r.active = true;
        r.bbox = Box{img.w, img.h, 0, 0}; // sentinel corners, fixed below
    }
    std::vector<int> x1(seg.num_components, img.w), y1(seg.num_components, img.h);
    std::vector<int> x2(seg.num_components, -1), y2(seg.num_components, -1);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            int l = seg.labels[static_cast<size_t>(y) * img.w + x];
            Region& r = regions[l];
            r.size++;
            x1[l] = std::min(x1[l], x);
            y1[l] = std::min(y1[l], y);
            x2[l] = std::max(x2[l], x);
            y2[l] = std::max(y2[l], y);
            for (int c = 0; c < 3; ++c) r.hist[c * kBins + bin_of(img.at(y, x, c))] += 1.0;
        }
    }
    for (int l = 0; l < seg.num_components; ++l) {
        Region& r = regions[l];
        r.bbox = Box{x1[l], y1[l], x2[l] - x1[l] + 1, y2[l] - y1[l] + 1};
        for (int c = 0; c < 3; ++c) {
            for (int b = 0; b < kBins; ++b) r.hist[c * kBins + b] /= r.size;
        }
    }

    // adjacency from 4-neighbor label transitions
    std::vector<std::set<int>> nbrs(regions.size());
    auto connect = [&](int a, int b) {
        if (a == b) return;
        nbrs[a].insert(b);
        nbrs[b].insert(a);
    };
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            int l = seg.labels[static_cast<size_t>(y) * img.w + x];
            if (x + 1 < img.w) connect(l, seg.labels[static_cast<size_t>(y) * img.w + x + 1]);
            if (y + 1 < img.h) connect(l, seg.labels[static_cast<size_t>(y + 1) * img.w + x]);
        }
    }

    double total_px = static_cast<double>(img.h) * img.w;
    std::set<PairKey> queue;
    auto push_pair = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        double s = similarity(regions[a], regions[b], total_px);
        queue.insert(PairKey{-s, regions[a].size + regions[b].size, a, b});
    };
    for (size_t a = 0; a < nbrs.size(); ++a) {
        for (int b : nbrs[a]) {
            if (static_cast<int>(a) < b) push_pair(static_cast<int>(a), b);
        }
    }

    ProposalResult res;
    for (const auto& r : regions) res.raw_boxes.push_back(r.bbox);

    while (!queue.empty()) {
        PairKey top = *queue.begin();
        queue.erase(queue.begin());
        if (!regions[top.a].active || !regions[top.b].active) continue; // stale

        Region merged;
        const Region& ra = regions[top.a];
        const Region& rb = regions[top.b];
        merged.active = true;
        merged.size = ra.size + rb.size;
        merged.bbox = hull(ra.bbox, rb.bbox);
        for (int i = 0; i < 3 * kBins; ++i) {
            merged.hist[i] = (ra.hist[i] * ra.size + rb.hist[i] * rb.size) / merged.size;
        }
        int id = static_cast<int>(regions.size());
        regions[top.a].active = false;
        regions[top.b].active = false;
        regions.push_back(merged);
        res.raw_boxes.push_back(merged.bbox);
        res.merges.push_back({top.a, top.b, id, -top.neg_sim, merged.bbox});

        std::set<int> adjacent;
        for (int x : nbrs[top.a]) {
            if (regions[x].active) adjacent.insert(x);
        }
        for (int x : nbrs[top.b]) {
            if (regions[x].active) adjacent.insert(x);
        }
        nbrs.push_back(adjacent);
        for (int x : adjacent) {
            nbrs[x].erase(top.a);
            nbrs[x].erase(top.b);
            nbrs[x].insert(id);
            push_pair(x, id);
        }
    }

    // exact-duplicate removal, keeping first occurrence order
    {
        std::set<std::array<int, 4>> seen;
        std::vector<Box> unique;
        for (const Box& b : res.raw_boxes) {
            if (seen.insert({b.x, b.y, b.w, b.h}).second) unique.push_back(b);
        }
        res.raw_boxes = std::move(unique);
    }

    res.boxes = filter_proposals(res.raw_boxes, params.filter);
    if (res.boxes.size() > static_cast<size_t>(params.max_proposals)) {
        res.boxes.resize(static_cast<size_t>(params.max_proposals));
    }
    return res;
}

} // namespace univip
