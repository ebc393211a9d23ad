#include "univip/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace univip {

namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            break;
        }
    }
    while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
    if (tok.empty()) throw DataError(path + ": truncated PPM header");
    return tok;
}

int ppm_int(std::istream& in, const std::string& path, const char* what) {
    std::string tok = ppm_token(in, path);
    try {
        size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ": bad PPM " + what + " '" + tok + "'");
    }
}

} // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    std::string magic = ppm_token(in, path);
    if (magic != "P6") throw DataError(path + ": not a binary PPM (magic '" + magic + "')");
    int w = ppm_int(in, path, "width");
    int h = ppm_int(in, path, "height");
    int maxval = ppm_int(in, path, "maxval");
    if (w < 1 || h < 1) throw DataError(path + ": bad dimensions");
    if (maxval != 255) throw DataError(path + ": only maxval 255 supported, got " + std::to_string(maxval));
    // exactly one whitespace byte separates header and raster; ppm_int already consumed it
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
        throw DataError(path + ": truncated pixel data");
    }
    Image img(h, w);
    for (size_t i = 0; i < raw.size(); ++i) img.px[i] = static_cast<float>(raw[i]) / 255.f;
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.h < 1 || img.w < 1) throw UsageError("write_ppm: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> raw(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) {
        float v = std::min(1.f, std::max(0.f, img.px[i]));
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw DataError("write failed: " + path);
}

Image crop(const Image& img, const Box& b) {
    if (!valid(b) || b.x < 0 || b.y < 0 || b.x2() > img.w || b.y2() > img.h) {
        throw UsageError("crop: box outside image bounds");
    }
    Image out(b.h, b.w);
    for (int y = 0; y < b.h; ++y) {
        const float* src = img.px.data() + (static_cast<size_t>(b.y + y) * img.w + b.x) * 3;
        float* dst = out.px.data() + static_cast<size_t>(y) * b.w * 3;
        std::copy(src, src + static_cast<size_t>(b.w) * 3, dst);
    }
    return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw UsageError("resize_bilinear: empty output");
    if (img.h < 1 || img.w < 1) throw UsageError("resize_bilinear: empty input");
    Image out(out_h, out_w);
    double sy = static_cast<double>(img.h) / out_h;
    double sx = static_cast<double>(img.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(img.h - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, img.h - 1);
        float wy = static_cast<float>(fy - y0);
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(img.w - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, img.w - 1);
            float wx = static_cast<float>(fx - x0);
            for (int c = 0; c < 3; ++c) {
                float top = img.at(y0, x0, c) * (1.f - wx) + img.at(y0, x1, c) * wx;
                float bot = img.at(y1, x0, c) * (1.f - wx) + img.at(y1, x1, c) * wx;
                out.at(oy, ox, c) = top * (1.f - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image gaussian_blur(const Image& img, double sigma, int ksize) {
    if (ksize < 1 || ksize % 2 == 0) throw UsageError("gaussian_blur: kernel size must be odd");
    if (sigma <= 0.0) throw UsageError("gaussian_blur: sigma must be positive");
    int r = ksize / 2;
    std::vector<float> k(ksize);
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        double d = i - r;
        double v = std::exp(-d * d / (2.0 * sigma * sigma));
        k[i] = static_cast<float>(v);
        sum += v;
    }
    for (float& v : k) v = static_cast<float>(v / sum);

    Image tmp(img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            float acc[3] = {0, 0, 0};
            for (int i = -r; i <= r; ++i) {
                int xx = std::min(std::max(x + i, 0), img.w - 1);
                float kw = k[i + r];
                for (int c = 0; c < 3; ++c) acc[c] += kw * img.at(y, xx, c);
            }
            for (int c = 0; c < 3; ++c) tmp.at(y, x, c) = acc[c];
        }
    }
    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            float acc[3] = {0, 0, 0};
            for (int i = -r; i <= r; ++i) {
                int yy = std::min(std::max(y + i, 0), img.h - 1);
                float kw = k[i + r];
                for (int c = 0; c < 3; ++c) acc[c] += kw * tmp.at(yy, x, c);
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = acc[c];
        }
    }
    return out;
}

} // namespace univip
