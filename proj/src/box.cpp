#include "univip/box.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace univip {

std::optional<Box> intersect(const Box& a, const Box& b) {
    int x1 = std::max(a.x, b.x);
    int y1 = std::max(a.y, b.y);
    int x2 = std::min(a.x2(), b.x2());
    int y2 = std::min(a.y2(), b.y2());
    if (x2 - x1 < 1 || y2 - y1 < 1) return std::nullopt;
    return Box{x1, y1, x2 - x1, y2 - y1};
}

int64_t intersection_area(const Box& a, const Box& b) {
    auto i = intersect(a, b);
    return i ? area(*i) : 0;
}

double iou(const Box& a, const Box& b) {
    int64_t inter = intersection_area(a, b);
    if (inter == 0) return 0.0;
    int64_t uni = area(a) + area(b) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BoxF to_view_space(const Box& b, const Box& view, int out_w, int out_h) {
    if (!valid(view) || out_w < 1 || out_h < 1) {
        throw UsageError("to_view_space: degenerate view or output size");
    }
    auto clipped = intersect(b, view);
    if (!clipped) {
        throw DataError("to_view_space: box does not intersect the view");
    }
    double sx = static_cast<double>(out_w) / view.w;
    double sy = static_cast<double>(out_h) / view.h;
    return BoxF{(clipped->x - view.x) * sx, (clipped->y - view.y) * sy, clipped->w * sx,
                clipped->h * sy};
}

std::vector<Box> filter_proposals(const std::vector<Box>& boxes, const ProposalFilter& f) {
    std::vector<Box> sorted(boxes);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Box& a, const Box& b) { return area(a) > area(b); });
    std::vector<Box> kept;
    for (const Box& b : sorted) {
        if (std::min(b.w, b.h) < f.min_scale) continue;
        double ar = static_cast<double>(b.w) / static_cast<double>(b.h);
        if (ar < f.ar_min || ar > f.ar_max) continue;
        bool clashes = false;
        for (const Box& k : kept) {
            if (iou(b, k) > f.max_iou) {
                clashes = true;
                break;
            }
        }
        if (!clashes) kept.push_back(b);
    }
    return kept;
}

std::string box_line(const Box& b, int label) {
    std::ostringstream os;
    os << b.x << " " << b.y << " " << b.w << " " << b.h;
    if (label >= 0) os << " " << label;
    return os.str();
}

std::vector<LabeledBox> parse_boxes(std::istream& in, const std::string& origin) {
    std::vector<LabeledBox> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<long> fields;
        long v;
        while (ls >> v) fields.push_back(v);
        if (!ls.eof()) {
            // the stream stopped on a non-numeric token
            std::string tok;
            ls.clear();
            ls >> tok;
            throw DataError(origin + ":" + std::to_string(lineno) + ": expected integer, got '" +
                            tok + "'");
        }
        if (fields.empty()) continue; // blank line
        if (fields.size() != 4 && fields.size() != 5) {
            throw DataError(origin + ":" + std::to_string(lineno) + ": expected 4 or 5 fields, got " +
                            std::to_string(fields.size()));
        }
        LabeledBox lb;
        lb.box = Box{static_cast<int>(fields[0]), static_cast<int>(fields[1]),
                     static_cast<int>(fields[2]), static_cast<int>(fields[3])};
        if (!valid(lb.box)) {
            throw DataError(origin + ":" + std::to_string(lineno) + ": box has non-positive size");
        }
        if (fields.size() == 5) {
            if (fields[4] < 0) {
                throw DataError(origin + ":" + std::to_string(lineno) + ": negative label");
            }
            lb.label = static_cast<int>(fields[4]);
        }
        out.push_back(lb);
    }
    return out;
}

std::vector<LabeledBox> load_boxes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open box file: " + path);
    return parse_boxes(in, path);
}

void save_boxes(const std::string& path, const std::vector<LabeledBox>& boxes) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write box file: " + path);
    for (const auto& lb : boxes) out << box_line(lb.box, lb.label) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

} // namespace univip
