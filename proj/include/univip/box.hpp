#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "univip/common.hpp"

namespace univip {

// Axis-aligned pixel box, half-open: covers columns [x, x+w) and rows
// [y, y+h). Width and height are at least 1 for any valid box; helpers that
// could produce an empty result return optional instead.
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int x2() const { return x + w; } // exclusive
    int y2() const { return y + h; } // exclusive

    bool operator==(const Box&) const = default;
};

inline int64_t area(const Box& b) {
    return static_cast<int64_t>(b.w) * static_cast<int64_t>(b.h);
}

inline bool valid(const Box& b) { return b.w >= 1 && b.h >= 1; }

std::optional<Box> intersect(const Box& a, const Box& b);

int64_t intersection_area(const Box& a, const Box& b);

// Intersection over union in [0, 1]; 0 when disjoint.
double iou(const Box& a, const Box& b);

// Borders inclusive: a box lying exactly on the outer edge still counts.
inline bool contains(const Box& outer, const Box& inner) {
    return inner.x >= outer.x && inner.y >= outer.y && inner.x2() <= outer.x2() &&
           inner.y2() <= outer.y2();
}

// Smallest box covering both.
inline Box hull(const Box& a, const Box& b) {
    int x1 = std::min(a.x, b.x);
    int y1 = std::min(a.y, b.y);
    int x2 = std::max(a.x2(), b.x2());
    int y2 = std::max(a.y2(), b.y2());
    return {x1, y1, x2 - x1, y2 - y1};
}

// Continuous-coordinate box, used when a pixel box is mapped into the
// raster of a resized view and lands between pixels.
struct BoxF {
    double x = 0, y = 0, w = 0, h = 0;
};

// Maps a scene-space box into the pixel space of `view` after the view is
// resized to out_w x out_h. The box is clipped to the view first; a box
// entirely outside the view is an error.
BoxF to_view_space(const Box& b, const Box& view, int out_w, int out_h);

struct ProposalFilter {
    int min_scale = 64;    // shorter side must reach this many pixels
    double ar_min = 1.0 / 3.0;
    double ar_max = 3.0;
    double max_iou = 0.5;  // against every already-kept box
};

// Greedy filter: sort by area (largest first, stable), keep a box when it
// passes the scale and aspect-ratio gates and overlaps every kept box by at
// most max_iou. Idempotent: filtering a filtered list is a no-op.
std::vector<Box> filter_proposals(const std::vector<Box>& boxes, const ProposalFilter& f);

// --- text serialization ------------------------------------------------------
//
// One box per line: "x y w h" with an optional integer class label as a
// fifth field. Blank lines are skipped.

struct LabeledBox {
    Box box;
    int label = -1; // -1 when the line had no label field
};

std::string box_line(const Box& b, int label = -1);

// `origin` names the source (file path) for diagnostics.
std::vector<LabeledBox> parse_boxes(std::istream& in, const std::string& origin);

std::vector<LabeledBox> load_boxes(const std::string& path);
void save_boxes(const std::string& path, const std::vector<LabeledBox>& boxes);

} // namespace univip
