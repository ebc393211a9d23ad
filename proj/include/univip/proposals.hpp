#pragma once

#include <cstdint>
#include <vector>

#include "univip/box.hpp"
#include "univip/image.hpp"
#include "univip/segment.hpp"

namespace univip {

// Unsupervised box proposals: segment the image, then greedily merge the
// most similar adjacent regions (color histogram intersection plus a
// small-regions-first size term), emitting the bounding box of every region
// and every merge along the way. The box list is then deduplicated, pushed
// through the geometric filter, and capped.

struct ProposalParams {
    SegmentParams segment;
    ProposalFilter filter;
    int max_proposals = 64;
};

struct MergeRecord {
    int a = 0;
    int b = 0;
    int into = 0; // id of the merged region
    double sim = 0.0;
    Box box;      // hull emitted by this merge
};

struct ProposalResult {
    std::vector<Box> boxes;          // filtered, area-descending, capped
    std::vector<Box> raw_boxes;      // deduplicated pre-filter pool
    std::vector<MergeRecord> merges; // grouping trace, for inspection
};

// The strategy is fully deterministic; `seed` is accepted so stochastic
// proposal schemes can slot in behind the same signature, and is unused.
ProposalResult generate_proposals(const Image& img, const ProposalParams& params,
                                  uint64_t seed = 0);

} // namespace univip
