#pragma once

#include <cstdint>
#include <vector>

#include "univip/augment.hpp"
#include "univip/box.hpp"
#include "univip/image.hpp"
#include "univip/proposals.hpp"
#include "univip/rng.hpp"
#include "univip/tensor.hpp"

namespace univip {

// Overlapping multi-instance view construction. Two random-resized crops of
// the scene are resampled until their intersection contains at least K of
// the scene's box proposals; the K largest become the instance set. If no
// attempt succeeds within the iteration budget, the best attempt is kept
// and topped up with randomly placed boxes inside the overlap.

struct ViewParams {
    int scene_size = 48;    // square view side after resize
    int instance_size = 24; // square instance side after resize
    int K = 4;              // instances per sample
    int iters = 20;         // resample budget before falling back
    int min_scale = 16;     // size floor for fallback boxes
    double area_min = 0.4;  // crop area fraction range
    double area_max = 1.0;
    double ratio_min = 3.0 / 4.0; // crop aspect ratio range
    double ratio_max = 4.0 / 3.0;
};

struct ViewPair {
    Box crop1, crop2;
    Box overlap;                // exactly intersect(crop1, crop2)
    std::vector<Box> instances; // K boxes in scene coordinates, inside overlap
    bool fallback_used = false;
    int iterations_used = 0;    // 1-based count of crop attempts consumed
};

// Random-resized-crop geometry: area fraction and log-uniform aspect ratio,
// ten placement attempts, then a centered square of the shorter side.
Box sample_crop_box(int scene_w, int scene_h, const ViewParams& p, Rng& rng);

// Fills `need` boxes inside `overlap`, each at least min_scale on a side,
// aspect ratio within [1/3, 3], overlapping every accepted and `existing`
// box by IoU at most 0.5. When rejection sampling exhausts its attempts the
// cap is relaxed in 0.1 steps up to 0.9; if a cap above 0.5 ended up used it
// is reported through cap_used (always written when non-null). Throws
// DataError when placement is impossible even at the loosest cap.
std::vector<Box> naive_boxes(const Box& overlap, int need, int min_scale,
                             const std::vector<Box>& existing, Rng& rng,
                             double* cap_used = nullptr);

ViewPair create_overlapping_views(int scene_w, int scene_h, const std::vector<Box>& proposals,
                                  const ViewParams& p, Rng& rng);

// --- tensor assembly -----------------------------------------------------------

template <typename T>
struct TrainingSample {
    TensorT<T> scene1, scene2;         // (3, S, S), augmented
    std::vector<TensorT<T>> instances; // K tensors (3, I, I), augmented once
    ViewPair geometry;
};

// Crops, resizes and augments. Instance crops are augmented with the
// view-1 recipe and shared by both network branches.
Image make_view_image(const Image& scene, const Box& crop_box, int out_size,
                      const AugmentParams& aug, Rng& rng);

template <typename T>
TrainingSample<T> build_training_sample(const Image& scene, const std::vector<Box>& proposals,
                                        const ViewParams& p, uint64_t seed) {
    Rng geo_rng(derive_seed(seed, 0));
    TrainingSample<T> s;
    s.geometry = create_overlapping_views(scene.w, scene.h, proposals, p, geo_rng);

    Rng aug1(derive_seed(seed, 1));
    Rng aug2(derive_seed(seed, 2));
    s.scene1 = to_chw_tensor<T>(
        make_view_image(scene, s.geometry.crop1, p.scene_size, view1_augment(), aug1));
    s.scene2 = to_chw_tensor<T>(
        make_view_image(scene, s.geometry.crop2, p.scene_size, view2_augment(), aug2));
    for (size_t k = 0; k < s.geometry.instances.size(); ++k) {
        Rng ar(derive_seed(seed, 3 + k));
        s.instances.push_back(to_chw_tensor<T>(make_view_image(
            scene, s.geometry.instances[k], p.instance_size, view1_augment(), ar)));
    }
    return s;
}

} // namespace univip
