#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace decoy {

struct image_dims {
    int width = 0;
    int height = 0;

    double diagonal() const;
    bool operator==(const image_dims&) const = default;
};

// Axis-aligned box in normalized [0,1] coordinates, corners inclusive.
// Pixel-space conversion multiplies by (width, height) and keeps floats;
// rounding happens only when a box is rasterized for compositing.
struct norm_box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    std::array<double, 2> center() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }

    // Well-formed: inside the unit square with positive area.
    bool valid() const;

    bool operator==(const norm_box&) const = default;
};

// Click in pixel coordinates, tagged with the dimensions of the image the
// coordinates refer to so cross-space comparisons fail loudly.
struct pixel_point {
    double x = 0.0;
    double y = 0.0;
    int ref_width = 0;
    int ref_height = 0;
};

struct success_flags_t {
    bool l1 = false; // click missed the ground-truth element
    bool l2 = false; // ...and landed on an injected icon
};

// Integer pixel rectangle produced by rasterizing a norm_box.
struct pixel_rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

double iou(const norm_box& a, const norm_box& b);

// Distance from click to the gt center, normalized by the image diagonal.
// Throws dimension-mismatch if the click references different dimensions.
double norm_click_distance(const pixel_point& click, const norm_box& gt, image_dims dims);

// Closed-boundary hit test in pixel space.
bool click_in_box(const pixel_point& click, const norm_box& box, image_dims dims);

success_flags_t success_flags(const pixel_point& click, const norm_box& gt,
                              const std::vector<norm_box>& injected, image_dims dims);

// Bands adjacent to gt: left/right share gt's vertical extent, above/below
// its horizontal extent, all clamped to the unit square. Zero-area bands are
// omitted; all four empty raises degenerate-zone.
struct adjacent_zones_t {
    std::optional<norm_box> left;
    std::optional<norm_box> right;
    std::optional<norm_box> above;
    std::optional<norm_box> below;

    std::vector<std::pair<std::string, norm_box>> present() const;
};

adjacent_zones_t adjacent_zones(const norm_box& gt);

// Round-half-up rasterization of box corners onto a pixel grid.
pixel_rect to_pixel_rect(const norm_box& box, image_dims dims);

} // namespace decoy
