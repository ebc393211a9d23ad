#pragma once

#include <string>
#include <vector>

#include "univip/box.hpp"
#include "univip/common.hpp"
#include "univip/tensor.hpp"

namespace univip {

// Interleaved RGB, float components in [0,1]. Disk format is 8-bit binary
// PPM; images produced by the synthesizer are already quantized to the 8-bit
// grid so a write/read round trip is exact.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> px; // h * w * 3

    Image() = default;
    Image(int height, int width) : h(height), w(width), px(static_cast<size_t>(height) * width * 3, 0.f) {}

    float& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Box must lie inside the image bounds.
Image crop(const Image& img, const Box& b);

// Half-pixel-centered bilinear sampling, edge-clamped.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Separable Gaussian, clamp-to-edge. ksize must be odd.
Image gaussian_blur(const Image& img, double sigma, int ksize);

// (3, H, W) tensor, channel-planar, same value range as the image.
template <typename T>
TensorT<T> to_chw_tensor(const Image& img) {
    std::vector<T> d(static_cast<size_t>(3) * img.h * img.w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                d[(static_cast<size_t>(c) * img.h + y) * img.w + x] = static_cast<T>(img.at(y, x, c));
            }
        }
    }
    return TensorT<T>::from_data({3, static_cast<size_t>(img.h), static_cast<size_t>(img.w)},
                                 std::move(d));
}

} // namespace univip
