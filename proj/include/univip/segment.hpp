#pragma once

#include <vector>

#include "univip/image.hpp"

namespace univip {

// Graph-based image segmentation over the 4-connected pixel grid with RGB
// Euclidean edge weights. A component pair merges while the connecting edge
// is no heavier than each side's internal variation plus a size-shrinking
// slack k/|C|; undersized components are absorbed afterwards.

struct SegmentParams {
    double sigma = 0.5;  // pre-smoothing; kernel size derived from it
    double k = 0.03;     // merge slack scale, in [0,1] color units
    int min_size = 8;    // post-merge floor on component pixel count
};

struct Segmentation {
    int h = 0;
    int w = 0;
    int num_components = 0;
    std::vector<int> labels; // h*w, values in [0, num_components)
};

Segmentation segment_image(const Image& img, const SegmentParams& params);

} // namespace univip
