#include "univip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace univip {

namespace {

// Membership test in local shape coordinates (u, v) within a side x side
// bounding square.
bool inside_shape(ShapeClass cls, double u, double v, double s) {
    switch (cls) {
        case ShapeClass::Circle: {
            double du = u - s / 2, dv = v - s / 2;
            return du * du + dv * dv <= (s / 2) * (s / 2);
        }
        case ShapeClass::Square:
            return true; // the bounding square itself
        case ShapeClass::Triangle:
            // apex at top-center, base along the bottom edge
            return std::abs(u - s / 2) <= (v / s) * (s / 2);
        case ShapeClass::Cross: {
            double t = s / 3.0;
            bool in_v = std::abs(u - s / 2) <= t / 2;
            bool in_h = std::abs(v - s / 2) <= t / 2;
            return in_v || in_h;
        }
    }
    return false;
}

// Per-pixel coverage of a shape over its bounding square, antialiased by
// subsampling. Returned row-major, side*side.
std::vector<float> render_coverage(ShapeClass cls, int side, int ss) {
    std::vector<float> cov(static_cast<size_t>(side) * side, 0.f);
    double step = 1.0 / ss;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            int hit = 0;
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    double u = x + (sx + 0.5) * step;
                    double v = y + (sy + 0.5) * step;
                    if (inside_shape(cls, u, v, side)) ++hit;
                }
            }
            cov[static_cast<size_t>(y) * side + x] = static_cast<float>(hit) / (ss * ss);
        }
    }
    return cov;
}

// Tight box over coverage >= 0.5, in scene coordinates. Empty optional when
// nothing reaches the threshold (cannot happen for the sizes we allow, but
// guarded anyway).
std::optional<Box> coverage_box(const std::vector<float>& cov, int side, int bx, int by) {
    int x1 = side, y1 = side, x2 = -1, y2 = -1;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            if (cov[static_cast<size_t>(y) * side + x] >= 0.5f) {
                x1 = std::min(x1, x);
                y1 = std::min(y1, y);
                x2 = std::max(x2, x);
                y2 = std::max(y2, y);
            }
        }
    }
    if (x2 < x1) return std::nullopt;
    return Box{bx + x1, by + y1, x2 - x1 + 1, y2 - y1 + 1};
}

// Muted low-frequency background: a coarse grid of soft colors upsampled.
Image make_background(int canvas, Rng& rng) {
    int cells = std::max(2, canvas / 16);
    Image coarse(cells, cells);
    for (int y = 0; y < cells; ++y) {
        for (int x = 0; x < cells; ++x) {
            for (int c = 0; c < 3; ++c) {
                coarse.at(y, x, c) = static_cast<float>(rng.uniform(0.35, 0.65));
            }
        }
    }
    return resize_bilinear(coarse, canvas, canvas);
}

struct Color {
    float r, g, b;
};

// Saturated color: one strong channel, one weak, one free, shuffled.
Color saturated_color(Rng& rng) {
    float vals[3] = {static_cast<float>(rng.uniform(0.75, 1.0)),
                     static_cast<float>(rng.uniform(0.0, 0.25)),
                     static_cast<float>(rng.uniform(0.0, 1.0))};
    int perm = static_cast<int>(rng.uniform_int(0, 5));
    static const int orders[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                     {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    return {vals[orders[perm][0]], vals[orders[perm][1]], vals[orders[perm][2]]};
}

Color region_mean(const Image& img, const Box& b) {
    double acc[3] = {0, 0, 0};
    for (int y = b.y; y < b.y2(); ++y) {
        for (int x = b.x; x < b.x2(); ++x) {
            for (int c = 0; c < 3; ++c) acc[c] += img.at(y, x, c);
        }
    }
    double n = static_cast<double>(area(b));
    return {static_cast<float>(acc[0] / n), static_cast<float>(acc[1] / n),
            static_cast<float>(acc[2] / n)};
}

double color_dist(const Color& a, const Color& b) {
    double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

// One full scene attempt; nullopt when some shape ran out of placements.
std::optional<Scene> try_scene(const SceneParams& p, Rng& rng) {
    Scene scene;
    scene.image = make_background(p.canvas, rng);
    int count = static_cast<int>(rng.uniform_int(p.min_shapes, p.max_shapes));
    for (int i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            ShapeClass cls = static_cast<ShapeClass>(rng.uniform_int(0, kNumShapeClasses - 1));
            int side = static_cast<int>(rng.uniform_int(p.min_side, p.max_side));
            if (side > p.canvas) continue;
            int bx = static_cast<int>(rng.uniform_int(0, p.canvas - side));
            int by = static_cast<int>(rng.uniform_int(0, p.canvas - side));
            auto cov = render_coverage(cls, side, p.supersample);
            auto gt = coverage_box(cov, side, bx, by);
            if (!gt) continue;
            bool clash = false;
            for (const auto& prev : scene.gt) {
                if (iou(*gt, prev.box) > p.max_place_iou) {
                    clash = true;
                    break;
                }
            }
            if (clash) continue;

            // pick a color with clear contrast against what it will cover
            Color bg = region_mean(scene.image, Box{bx, by, side, side});
            Color col = saturated_color(rng);
            for (int ca = 0; ca < 20 && color_dist(col, bg) < 0.35; ++ca) {
                col = saturated_color(rng);
            }

            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    float a = cov[static_cast<size_t>(y) * side + x];
                    if (a <= 0.f) continue;
                    float* px = &scene.image.at(by + y, bx + x, 0);
                    px[0] = a * col.r + (1 - a) * px[0];
                    px[1] = a * col.g + (1 - a) * px[1];
                    px[2] = a * col.b + (1 - a) * px[2];
                }
            }
            scene.gt.push_back({*gt, static_cast<int>(cls)});
            placed = true;
        }
        if (!placed) return std::nullopt;
    }
    // quantize to the 8-bit grid for an exact disk round trip
    for (float& v : scene.image.px) {
        v = static_cast<float>(std::lround(std::min(1.f, std::max(0.f, v)) * 255.f)) / 255.f;
    }
    return scene;
}

} // namespace

Scene generate_scene(const SceneParams& p, uint64_t seed) {
    if (p.canvas < p.min_side || p.min_side < 2 || p.min_shapes < 0 ||
        p.max_shapes < p.min_shapes || p.max_side < p.min_side || p.supersample < 1) {
        throw UsageError("generate_scene: inconsistent scene parameters");
    }
    for (int retry = 0; retry < 30; ++retry) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(retry)));
        if (auto s = try_scene(p, rng)) return std::move(*s);
    }
    throw DataError("generate_scene: could not place shapes under the overlap cap; "
                    "canvas too crowded for the requested configuration");
}

// --- dataset io -----------------------------------------------------------------

namespace {

std::string index_name(const char* stem, size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05zu.%s", stem, i, ext);
    return buf;
}

} // namespace

DatasetManifest write_dataset(const std::string& dir, const SceneParams& params, uint64_t seed,
                              int count) {
    if (count < 1) throw UsageError("write_dataset: count must be positive");
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.seed = seed;
    m.params = params;
    for (int i = 0; i < count; ++i) {
        Scene s = generate_scene(params, derive_seed(seed, static_cast<uint64_t>(i)));
        std::string img = index_name("scene", static_cast<size_t>(i), "ppm");
        std::string box = index_name("scene", static_cast<size_t>(i), "txt");
        write_ppm(dir + "/" + img, s.image);
        save_boxes(dir + "/" + box, s.gt);
        m.image_files.push_back(img);
        m.box_files.push_back(box);
    }
    std::ofstream out(dir + "/manifest.txt");
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << "univip-dataset v1\n";
    out << "seed " << m.seed << "\n";
    out << "count " << count << "\n";
    out << "canvas " << params.canvas << "\n";
    out << "shapes " << params.min_shapes << " " << params.max_shapes << "\n";
    out << "side " << params.min_side << " " << params.max_side << "\n";
    out << "place_iou " << params.max_place_iou << "\n";
    out << "supersample " << params.supersample << "\n";
    for (size_t i = 0; i < m.image_files.size(); ++i) {
        out << "item " << m.image_files[i] << " " << m.box_files[i] << "\n";
    }
    if (!out) throw DataError("manifest write failed in " + dir);
    return m;
}

DatasetManifest read_manifest(const std::string& dir) {
    std::string path = dir + "/manifest.txt";
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& why) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + why);
    };
    if (!std::getline(in, line)) fail("empty manifest");
    ++lineno;
    if (line != "univip-dataset v1") fail("unrecognized header '" + line + "'");

    DatasetManifest m;
    long declared_count = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "seed") {
            if (!(ls >> m.seed)) fail("bad seed");
        } else if (key == "count") {
            if (!(ls >> declared_count)) fail("bad count");
        } else if (key == "canvas") {
            if (!(ls >> m.params.canvas)) fail("bad canvas");
        } else if (key == "shapes") {
            if (!(ls >> m.params.min_shapes >> m.params.max_shapes)) fail("bad shapes");
        } else if (key == "side") {
            if (!(ls >> m.params.min_side >> m.params.max_side)) fail("bad side");
        } else if (key == "place_iou") {
            if (!(ls >> m.params.max_place_iou)) fail("bad place_iou");
        } else if (key == "supersample") {
            if (!(ls >> m.params.supersample)) fail("bad supersample");
        } else if (key == "item") {
            std::string img, box;
            if (!(ls >> img >> box)) fail("item needs image and box file");
            m.image_files.push_back(img);
            m.box_files.push_back(box);
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (declared_count < 0) fail("missing count");
    if (static_cast<size_t>(declared_count) != m.image_files.size()) {
        throw DataError(path + ": count " + std::to_string(declared_count) + " but " +
                        std::to_string(m.image_files.size()) + " items listed");
    }
    return m;
}

DatasetSample load_sample(const std::string& dir, const DatasetManifest& m, size_t index) {
    if (index >= m.image_files.size()) {
        throw UsageError("load_sample: index " + std::to_string(index) + " out of range");
    }
    DatasetSample s;
    s.image = read_ppm(dir + "/" + m.image_files[index]);
    auto boxes = load_boxes(dir + "/" + m.box_files[index]);
    for (const auto& lb : boxes) {
        if (lb.label < 0 || lb.label >= kNumShapeClasses) {
            throw DataError(dir + "/" + m.box_files[index] + ": label out of range");
        }
        if (lb.box.x < 0 || lb.box.y < 0 || lb.box.x2() > s.image.w || lb.box.y2() > s.image.h) {
            throw DataError(dir + "/" + m.box_files[index] + ": box outside image");
        }
    }
    s.gt = std::move(boxes);
    return s;
}

} // namespace univip
