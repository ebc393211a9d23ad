#pragma once

#include "univip/image.hpp"
#include "univip/rng.hpp"

namespace univip {

// Photometric augmentation applied to a cropped-and-resized view. Stages run
// in a fixed order: flip, color jitter (brightness, contrast, saturation,
// hue), grayscale, blur, solarize; each stage fires independently with its
// configured probability and values are clamped to [0,1] after every stage.
// The two views of a pair use asymmetric blur/solarize probabilities.

struct AugmentParams {
    double flip_p = 0.5;
    double jitter_p = 0.8;
    double brightness = 0.4; // factor drawn from [1-s, 1+s]
    double contrast = 0.4;
    double saturation = 0.2;
    double hue = 0.1;        // shift drawn from [-s, s] turns
    double gray_p = 0.2;
    double blur_p = 1.0;     // sigma drawn from [0.1, 2.0]
    double solarize_p = 0.0; // v >= 0.5 maps to 1-v
};

inline AugmentParams view1_augment() {
    return AugmentParams{}; // blur always, never solarize
}

inline AugmentParams view2_augment() {
    AugmentParams p;
    p.blur_p = 0.1;
    p.solarize_p = 0.2;
    return p;
}

Image augment_image(const Image& img, const AugmentParams& params, Rng& rng);

// Blur kernel width for a view of the given shorter side: a tenth of it,
// rounded, forced odd, floored at 3.
int blur_kernel_size(int side);

} // namespace univip
