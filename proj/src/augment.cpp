#include "univip/augment.hpp"

#include <algorithm>
#include <cmath>

namespace univip {

namespace {

inline float luma(const float* px) {
    return 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
}

void clamp01(Image& img) {
    for (float& v : img.px) v = std::min(1.f, std::max(0.f, v));
}

void flip_horizontal(Image& img) {
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w / 2; ++x) {
            for (int c = 0; c < 3; ++c) {
                std::swap(img.at(y, x, c), img.at(y, img.w - 1 - x, c));
            }
        }
    }
}

void adjust_brightness(Image& img, float f) {
    for (float& v : img.px) v *= f;
}

// Blend toward the image's mean luma.
void adjust_contrast(Image& img, float f) {
    double mean = 0.0;
    for (size_t i = 0; i < img.px.size(); i += 3) mean += luma(&img.px[i]);
    float m = static_cast<float>(mean / (img.px.size() / 3));
    for (float& v : img.px) v = f * v + (1.f - f) * m;
}

// Blend toward the per-pixel luma.
void adjust_saturation(Image& img, float f) {
    for (size_t i = 0; i < img.px.size(); i += 3) {
        float g = luma(&img.px[i]);
        for (int c = 0; c < 3; ++c) img.px[i + c] = f * img.px[i + c] + (1.f - f) * g;
    }
}

// Hue rotation by `shift` turns via HSV.
void adjust_hue(Image& img, float shift) {
    for (size_t i = 0; i < img.px.size(); i += 3) {
        float r = img.px[i], g = img.px[i + 1], b = img.px[i + 2];
        float mx = std::max({r, g, b});
        float mn = std::min({r, g, b});
        float d = mx - mn;
        if (d <= 0.f) continue; // gray pixel has no hue
        float h;
        if (mx == r) {
            h = std::fmod((g - b) / d, 6.f);
        } else if (mx == g) {
            h = (b - r) / d + 2.f;
        } else {
            h = (r - g) / d + 4.f;
        }
        h /= 6.f;
        h += shift;
        h -= std::floor(h); // wrap to [0,1)
        float s = mx > 0.f ? d / mx : 0.f;
        float v = mx;

        float hh = h * 6.f;
        int sector = static_cast<int>(hh) % 6;
        float frac = hh - std::floor(hh);
        float p = v * (1.f - s);
        float q = v * (1.f - s * frac);
        float t = v * (1.f - s * (1.f - frac));
        float nr, ng, nb;
        switch (sector) {
            case 0: nr = v; ng = t; nb = p; break;
            case 1: nr = q; ng = v; nb = p; break;
            case 2: nr = p; ng = v; nb = t; break;
            case 3: nr = p; ng = q; nb = v; break;
            case 4: nr = t; ng = p; nb = v; break;
            default: nr = v; ng = p; nb = q; break;
        }
        img.px[i] = nr;
        img.px[i + 1] = ng;
        img.px[i + 2] = nb;
    }
}

void to_grayscale(Image& img) {
    for (size_t i = 0; i < img.px.size(); i += 3) {
        float g = luma(&img.px[i]);
        img.px[i] = img.px[i + 1] = img.px[i + 2] = g;
    }
}

void solarize(Image& img) {
    for (float& v : img.px) {
        if (v >= 0.5f) v = 1.f - v;
    }
}

} // namespace

int blur_kernel_size(int side) {
    int k = static_cast<int>(std::lround(side / 10.0));
    if (k % 2 == 0) k += 1;
    return std::max(k, 3);
}

Image augment_image(const Image& img, const AugmentParams& p, Rng& rng) {
    if (img.h < 1 || img.w < 1) throw UsageError("augment_image: empty image");
    Image out = img;

    if (rng.bernoulli(p.flip_p)) flip_horizontal(out);

    if (rng.bernoulli(p.jitter_p)) {
        adjust_brightness(out, static_cast<float>(rng.uniform(1.0 - p.brightness, 1.0 + p.brightness)));
        clamp01(out);
        adjust_contrast(out, static_cast<float>(rng.uniform(1.0 - p.contrast, 1.0 + p.contrast)));
        clamp01(out);
        adjust_saturation(out, static_cast<float>(rng.uniform(1.0 - p.saturation, 1.0 + p.saturation)));
        clamp01(out);
        adjust_hue(out, static_cast<float>(rng.uniform(-p.hue, p.hue)));
        clamp01(out);
    }

    if (rng.bernoulli(p.gray_p)) to_grayscale(out);

    if (rng.bernoulli(p.blur_p)) {
        double sigma = rng.uniform(0.1, 2.0);
        out = gaussian_blur(out, sigma, blur_kernel_size(std::min(out.h, out.w)));
    }

    if (rng.bernoulli(p.solarize_p)) solarize(out);

    clamp01(out);
    return out;
}

} // namespace univip
