#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "decoy/geometry.hpp"
#include "decoy/image.hpp"
#include "decoy/sample.hpp"

namespace decoy {

enum class coord_convention { fixed_display, relative_grid, smart_resize_absolute };
enum class response_format {
    single_line_object,
    tool_call_object,
    code_call,
    start_box_call,
    bare_pair,
};

const char* coord_convention_name(coord_convention c);
const char* response_format_name(response_format f);
coord_convention parse_coord_convention(const std::string& name);
response_format parse_response_format(const std::string& name);

// Fixed-canvas profiles submit every screenshot at an orientation-dependent
// target resolution.
struct display_spec {
    int landscape_w = 1280;
    int landscape_h = 720;
    int portrait_w = 720;
    int portrait_h = 1280;
};

// Aspect-preserving snap of both dimensions to multiples of `factor` inside
// a total-pixel budget. Zero bounds derive from the factor (4f^2 .. 1280f^2).
struct smart_resize_spec {
    int factor = 28;
    long long min_pixels = 0;
    long long max_pixels = 0;
};

image_dims smart_resize(image_dims in, const smart_resize_spec& spec);

struct victim_profile {
    std::string name;
    coord_convention convention = coord_convention::relative_grid;
    response_format format = response_format::bare_pair;
    std::string template_text;
    display_spec display; // fixed_display only
    int grid = 1000;      // relative_grid: cells 0..grid-1
    smart_resize_spec resize;
    // relative_grid profiles that smart-resize the submitted pixels while
    // keeping grid-based click inversion against the original image.
    bool presubmit_smart_resize = false;
    std::string endpoint = "mock";

    static victim_profile load(const std::filesystem::path& json_path);
};

// Everything needed to invert a native click exactly.
struct transform_record {
    image_dims original;
    image_dims submitted;
    coord_convention convention = coord_convention::relative_grid;
    int grid = 1000;
};

struct victim_input {
    screenshot image; // what the victim actually sees
    transform_record transform;
};

victim_input prepare_input(const screenshot& image, const victim_profile& profile);

// Substitutes the runtime placeholders ({instruction}, submitted
// {width}/{height}, display bounds); a known placeholder left over raises.
std::string render_victim_prompt(const victim_profile& profile, const transform_record& t,
                                 const std::string& instruction);

// Click in the victim's own coordinate space (grid cells or submitted px).
struct native_click {
    double x = 0.0;
    double y = 0.0;
};

// Extracts the first click matching the format; tolerant of surrounding
// reasoning text but never fires without the format's signature tokens.
native_click parse_response(const std::string& raw, response_format format);

// Exact inverse of the forward transform, clamped to [0,W]x[0,H].
pixel_point to_original_space(native_click c, const transform_record& t);
// Unclamped forward map; float-exact partner of to_original_space.
native_click to_native_space(const pixel_point& p, const transform_record& t);

// Raw text a model following `format` would emit for this click (coordinates
// rounded to integers); scripted victims reply through this so every test
// path exercises the parser.
std::string format_response(native_click c, response_format format);

// Oracle context for scripted victims: a real model reads this from pixels.
struct injected_icon_info {
    norm_box placement;
    double cosine_to_instruction = 0.0;
};

struct victim_query {
    const screenshot* image = nullptr; // submitted image
    std::string prompt;
    std::string instruction;
    transform_record transform;
    norm_box gt_box;
    std::vector<injected_icon_info> icons;
};

class victim_backend {
public:
    virtual ~victim_backend() = default;
    // Returns the raw response text; transport failures raise.
    virtual std::string complete(const victim_query& query) = 0;
};

struct victim_prediction {
    std::string raw_text;
    std::optional<native_click> native;
    std::optional<pixel_point> click; // original space, clamped
    bool parsed = false;
    std::string parse_error;
};

// prepare -> prompt -> backend -> parse -> invert. Parse failures come back
// as an unparsed prediction; transport errors propagate.
victim_prediction query_victim(const screenshot& image, const attack_sample& sample,
                               const std::vector<injected_icon_info>& icons,
                               const victim_profile& profile, victim_backend& backend);

struct eligibility {
    bool eligible = false;
    bool errored = false;
    std::string note;
};

// Clean-screenshot gate: eligible iff the victim's click lands inside
// gt_box; backend/parse failures mark the sample ineligible-with-error.
eligibility check_eligibility(const attack_sample& sample, const screenshot& clean,
                              const victim_profile& profile, victim_backend& backend);

} // namespace decoy
