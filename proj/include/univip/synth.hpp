#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "univip/box.hpp"
#include "univip/image.hpp"
#include "univip/rng.hpp"

namespace univip {

// Synthetic scene generator: a handful of saturated geometric shapes over a
// muted low-frequency background. Shape classes double as probe labels, and
// the analytic boxes double as detection ground truth. Pixels are quantized
// to the 8-bit grid before return so the PPM round trip is exact.

enum class ShapeClass : int { Circle = 0, Square = 1, Triangle = 2, Cross = 3 };
inline constexpr int kNumShapeClasses = 4;

struct SceneParams {
    int canvas = 64;
    int min_shapes = 2;
    int max_shapes = 4;
    int min_side = 16;       // bounding-square side of a shape
    int max_side = 32;
    double max_place_iou = 0.2; // between ground-truth boxes
    int supersample = 4;        // antialiasing grid per pixel axis
};

struct Scene {
    Image image;
    std::vector<LabeledBox> gt; // label = ShapeClass
};

// Deterministic in `seed`. Throws DataError when shapes cannot be placed
// under the overlap cap (canvas too small for the request).
Scene generate_scene(const SceneParams& params, uint64_t seed);

// --- on-disk dataset ----------------------------------------------------------
//
// A dataset directory holds scene_NNNNN.ppm / scene_NNNNN.txt pairs plus a
// manifest listing them with the generation parameters.

struct DatasetManifest {
    uint64_t seed = 0;
    SceneParams params;
    std::vector<std::string> image_files; // relative to the dataset dir
    std::vector<std::string> box_files;
};

// Generates `count` scenes (per-scene seed derived from `seed` and index)
// and writes them plus the manifest under dir. Returns the manifest.
DatasetManifest write_dataset(const std::string& dir, const SceneParams& params, uint64_t seed,
                              int count);

DatasetManifest read_manifest(const std::string& dir);

// Loads one sample from a dataset directory by index.
struct DatasetSample {
    Image image;
    std::vector<LabeledBox> gt;
};
DatasetSample load_sample(const std::string& dir, const DatasetManifest& m, size_t index);

} // namespace univip
