#include "univip/views.hpp"

#include <algorithm>
#include <cmath>

namespace univip {

Box sample_crop_box(int scene_w, int scene_h, const ViewParams& p, Rng& rng) {
    double scene_area = static_cast<double>(scene_w) * scene_h;
    for (int attempt = 0; attempt < 10; ++attempt) {
        double target = rng.uniform(p.area_min, p.area_max) * scene_area;
        double ratio = std::exp(rng.uniform(std::log(p.ratio_min), std::log(p.ratio_max)));
        int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w < 1 || h < 1 || w > scene_w || h > scene_h) continue;
        int x = static_cast<int>(rng.uniform_int(0, scene_w - w));
        int y = static_cast<int>(rng.uniform_int(0, scene_h - h));
        return Box{x, y, w, h};
    }
    // centered square of the shorter side
    int side = std::min(scene_w, scene_h);
    return Box{(scene_w - side) / 2, (scene_h - side) / 2, side, side};
}

namespace {

// Each fallback box must fit the overlap, respect the size floor and keep
// its aspect ratio within [1/3, 3].
constexpr double kNaiveArMin = 1.0 / 3.0;
constexpr double kNaiveArMax = 3.0;

bool fits_under_cap(const Box& candidate, const std::vector<Box>& accepted,
                    const std::vector<Box>& existing, double cap) {
    for (const Box& b : accepted) {
        if (iou(candidate, b) > cap) return false;
    }
    for (const Box& b : existing) {
        if (iou(candidate, b) > cap) return false;
    }
    return true;
}

// Corner anchors, tried before random samples: with an overlap of at least
// 1.5x the size floor per axis they are pairwise compatible at any cap this
// module uses, which keeps the exhaustion path essentially theoretical.
std::vector<Box> corner_anchors(const Box& overlap, int m) {
    int dx = std::max(0, overlap.w - m);
    int dy = std::max(0, overlap.h - m);
    return {Box{overlap.x, overlap.y, m, m}, Box{overlap.x + dx, overlap.y + dy, m, m},
            Box{overlap.x + dx, overlap.y, m, m}, Box{overlap.x, overlap.y + dy, m, m}};
}

} // namespace

std::vector<Box> naive_boxes(const Box& overlap, int need, int min_scale,
                             const std::vector<Box>& existing, Rng& rng, double* cap_used) {
    if (need < 0 || min_scale < 1) throw UsageError("naive_boxes: bad request");
    if (cap_used) *cap_used = 0.5;
    if (need == 0) return {};
    if (overlap.w < min_scale || overlap.h < min_scale) {
        throw DataError("naive_boxes: overlap cannot host the size floor");
    }

    std::vector<Box> accepted;
    auto anchors = corner_anchors(overlap, min_scale);
    double cap = 0.5;
    while (static_cast<int>(accepted.size()) < need) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            Box cand;
            if (attempt < static_cast<int>(anchors.size())) {
                cand = anchors[attempt];
            } else {
                int w = static_cast<int>(rng.uniform_int(min_scale, overlap.w));
                int h_lo = std::max(min_scale,
                                    static_cast<int>(std::ceil(w / kNaiveArMax)));
                int h_hi = std::min(overlap.h,
                                    static_cast<int>(std::floor(w * kNaiveArMax)));
                (void)kNaiveArMin; // h bounds above encode both ratio limits
                if (h_lo > h_hi) continue;
                int h = static_cast<int>(rng.uniform_int(h_lo, h_hi));
                cand = Box{overlap.x + static_cast<int>(rng.uniform_int(0, overlap.w - w)),
                           overlap.y + static_cast<int>(rng.uniform_int(0, overlap.h - h)), w, h};
            }
            if (fits_under_cap(cand, accepted, existing, cap)) {
                accepted.push_back(cand);
                placed = true;
            }
        }
        if (!placed) {
            cap += 0.1;
            if (cap_used) *cap_used = cap;
            if (cap > 0.9 + 1e-9) {
                throw DataError("naive_boxes: could not place boxes even at the loosest cap");
            }
        }
    }
    return accepted;
}

ViewPair create_overlapping_views(int scene_w, int scene_h, const std::vector<Box>& proposals,
                                  const ViewParams& p, Rng& rng) {
    if (p.K < 1 || p.iters < 1 || p.min_scale < 1) {
        throw UsageError("create_overlapping_views: bad parameters");
    }
    if (scene_w < p.min_scale || scene_h < p.min_scale) {
        throw UsageError("create_overlapping_views: scene smaller than the size floor");
    }

    struct Attempt {
        Box crop1, crop2, overlap;
        bool has_overlap = false;
        std::vector<Box> contained;
    };

    auto contained_proposals = [&](const Box& t) {
        std::vector<Box> inside;
        for (const Box& b : proposals) {
            if (contains(t, b)) inside.push_back(b);
        }
        // largest first; stable so equal areas keep proposal order
        std::stable_sort(inside.begin(), inside.end(),
                         [](const Box& a, const Box& b) { return area(a) > area(b); });
        return inside;
    };

    std::vector<Attempt> attempts;
    attempts.reserve(static_cast<size_t>(p.iters));
    for (int it = 0; it < p.iters; ++it) {
        Attempt a;
        a.crop1 = sample_crop_box(scene_w, scene_h, p, rng);
        a.crop2 = sample_crop_box(scene_w, scene_h, p, rng);
        if (auto t = intersect(a.crop1, a.crop2)) {
            a.overlap = *t;
            a.has_overlap = true;
            a.contained = contained_proposals(*t);
            if (static_cast<int>(a.contained.size()) >= p.K) {
                ViewPair v;
                v.crop1 = a.crop1;
                v.crop2 = a.crop2;
                v.overlap = a.overlap;
                v.instances.assign(a.contained.begin(), a.contained.begin() + p.K);
                v.fallback_used = false;
                v.iterations_used = it + 1;
                return v;
            }
        }
        attempts.push_back(std::move(a));
    }

    // Fallback: the best attempt whose overlap can host fallback boxes
    // (most contained proposals, then larger overlap, then earliest).
    // Hostability needs margin beyond the bare floor so several boxes can
    // coexist under the pairwise cap.
    int host_w = p.min_scale + (p.K > 1 ? p.min_scale / 2 : 0);
    auto hostable = [&](const Attempt& a) {
        return a.has_overlap && a.overlap.w >= host_w && a.overlap.h >= host_w;
    };

    const Attempt* best = nullptr;
    for (const Attempt& a : attempts) {
        if (!hostable(a)) continue;
        if (!best || a.contained.size() > best->contained.size() ||
            (a.contained.size() == best->contained.size() &&
             area(a.overlap) > area(best->overlap))) {
            best = &a;
        }
    }
    Attempt resampled;
    if (!best) {
        // every attempt produced a sliver; draw fresh pairs until one can
        // host the fallback boxes
        for (int extra = 0; extra < 200 && !best; ++extra) {
            Attempt a;
            a.crop1 = sample_crop_box(scene_w, scene_h, p, rng);
            a.crop2 = sample_crop_box(scene_w, scene_h, p, rng);
            if (auto t = intersect(a.crop1, a.crop2)) {
                a.overlap = *t;
                a.has_overlap = true;
                if (hostable(a)) {
                    a.contained = contained_proposals(*t);
                    resampled = std::move(a);
                    best = &resampled;
                }
            }
        }
        if (!best) {
            throw DataError("create_overlapping_views: no crop pair with a usable overlap");
        }
    }

    ViewPair v;
    v.crop1 = best->crop1;
    v.crop2 = best->crop2;
    v.overlap = best->overlap;
    v.instances = best->contained;
    if (static_cast<int>(v.instances.size()) > p.K) v.instances.resize(static_cast<size_t>(p.K));
    int need = p.K - static_cast<int>(v.instances.size());
    auto filled = naive_boxes(v.overlap, need, p.min_scale, v.instances, rng);
    v.instances.insert(v.instances.end(), filled.begin(), filled.end());
    v.fallback_used = true;
    v.iterations_used = p.iters;
    return v;
}

Image make_view_image(const Image& scene, const Box& crop_box, int out_size,
                      const AugmentParams& aug, Rng& rng) {
    Image view = resize_bilinear(crop(scene, crop_box), out_size, out_size);
    return augment_image(view, aug, rng);
}

} // namespace univip
