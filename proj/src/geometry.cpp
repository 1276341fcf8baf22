#include "decoy/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "decoy/error.hpp"

namespace decoy {

double image_dims::diagonal() const {
    return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

bool norm_box::valid() const {
    return x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 && x1 < x2 && y1 < y2;
}

double iou(const norm_box& a, const norm_box& b) {
    double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

namespace {

void require_same_space(const pixel_point& click, image_dims dims) {
    if (click.ref_width != dims.width || click.ref_height != dims.height)
        fail(errc::dimension_mismatch,
             "click references " + std::to_string(click.ref_width) + "x" +
                 std::to_string(click.ref_height) + " but image is " +
                 std::to_string(dims.width) + "x" + std::to_string(dims.height));
}

} // namespace

double norm_click_distance(const pixel_point& click, const norm_box& gt, image_dims dims) {
    require_same_space(click, dims);
    auto c = gt.center();
    double cx = c[0] * dims.width;
    double cy = c[1] * dims.height;
    return std::hypot(click.x - cx, click.y - cy) / dims.diagonal();
}

bool click_in_box(const pixel_point& click, const norm_box& box, image_dims dims) {
    require_same_space(click, dims);
    double x1 = box.x1 * dims.width;
    double x2 = box.x2 * dims.width;
    double y1 = box.y1 * dims.height;
    double y2 = box.y2 * dims.height;
    return click.x >= x1 && click.x <= x2 && click.y >= y1 && click.y <= y2;
}

success_flags_t success_flags(const pixel_point& click, const norm_box& gt,
                              const std::vector<norm_box>& injected, image_dims dims) {
    success_flags_t f;
    f.l1 = !click_in_box(click, gt, dims);
    if (f.l1) {
        for (const auto& box : injected) {
            if (click_in_box(click, box, dims)) {
                f.l2 = true;
                break;
            }
        }
    }
    return f;
}

std::vector<std::pair<std::string, norm_box>> adjacent_zones_t::present() const {
    std::vector<std::pair<std::string, norm_box>> out;
    if (left) out.emplace_back("LEFT", *left);
    if (right) out.emplace_back("RIGHT", *right);
    if (above) out.emplace_back("ABOVE", *above);
    if (below) out.emplace_back("BELOW", *below);
    return out;
}

adjacent_zones_t adjacent_zones(const norm_box& gt) {
    adjacent_zones_t z;
    auto keep = [](norm_box b) -> std::optional<norm_box> {
        b.x1 = std::clamp(b.x1, 0.0, 1.0);
        b.y1 = std::clamp(b.y1, 0.0, 1.0);
        b.x2 = std::clamp(b.x2, 0.0, 1.0);
        b.y2 = std::clamp(b.y2, 0.0, 1.0);
        if (b.x2 - b.x1 <= 0.0 || b.y2 - b.y1 <= 0.0) return std::nullopt;
        return b;
    };
    z.left = keep({0.0, gt.y1, gt.x1, gt.y2});
    z.right = keep({gt.x2, gt.y1, 1.0, gt.y2});
    z.above = keep({gt.x1, 0.0, gt.x2, gt.y1});
    z.below = keep({gt.x1, gt.y2, gt.x2, 1.0});
    if (!z.left && !z.right && !z.above && !z.below)
        fail(errc::degenerate_zone, "target spans the whole screen; no adjacent zones");
    return z;
}

pixel_rect to_pixel_rect(const norm_box& box, image_dims dims) {
    auto round_half_up = [](double v) { return static_cast<int>(std::floor(v + 0.5)); };
    pixel_rect r;
    r.x = round_half_up(box.x1 * dims.width);
    r.y = round_half_up(box.y1 * dims.height);
    r.w = round_half_up(box.x2 * dims.width) - r.x;
    r.h = round_half_up(box.y2 * dims.height) - r.y;
    return r;
}

} // namespace decoy
