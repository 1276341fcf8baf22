#include "decoy/victim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <json.hpp>

#include "decoy/error.hpp"

namespace decoy {

using nlohmann::json;

const char* coord_convention_name(coord_convention c) {
    switch (c) {
    case coord_convention::fixed_display:         return "fixed_display";
    case coord_convention::relative_grid:         return "relative_grid";
    case coord_convention::smart_resize_absolute: return "smart_resize_absolute";
    }
    return "unknown";
}

const char* response_format_name(response_format f) {
    switch (f) {
    case response_format::single_line_object: return "single_line_object";
    case response_format::tool_call_object:   return "tool_call_object";
    case response_format::code_call:          return "code_call";
    case response_format::start_box_call:     return "start_box_call";
    case response_format::bare_pair:          return "bare_pair";
    }
    return "unknown";
}

coord_convention parse_coord_convention(const std::string& name) {
    if (name == "fixed_display") return coord_convention::fixed_display;
    if (name == "relative_grid") return coord_convention::relative_grid;
    if (name == "smart_resize_absolute") return coord_convention::smart_resize_absolute;
    fail(errc::config, "unknown coordinate convention: " + name);
}

response_format parse_response_format(const std::string& name) {
    if (name == "single_line_object") return response_format::single_line_object;
    if (name == "tool_call_object") return response_format::tool_call_object;
    if (name == "code_call") return response_format::code_call;
    if (name == "start_box_call") return response_format::start_box_call;
    if (name == "bare_pair") return response_format::bare_pair;
    fail(errc::config, "unknown response format: " + name);
}

image_dims smart_resize(image_dims in, const smart_resize_spec& spec) {
    if (in.width <= 0 || in.height <= 0) fail(errc::config, "smart_resize on empty image");
    if (spec.factor < 1) fail(errc::config, "smart_resize factor must be positive");
    double f = spec.factor;
    long long minp = spec.min_pixels > 0 ? spec.min_pixels : 4LL * spec.factor * spec.factor;
    long long maxp = spec.max_pixels > 0 ? spec.max_pixels : 1280LL * spec.factor * spec.factor;
    auto snap = [&](long long v) { return std::max<long long>(v, spec.factor); };
    long long h = snap(std::llround(in.height / f) * spec.factor);
    long long w = snap(std::llround(in.width / f) * spec.factor);
    if (h * w > maxp) {
        double beta = std::sqrt(static_cast<double>(in.height) * in.width / static_cast<double>(maxp));
        h = snap(static_cast<long long>(std::floor(in.height / beta / f)) * spec.factor);
        w = snap(static_cast<long long>(std::floor(in.width / beta / f)) * spec.factor);
    } else if (h * w < minp) {
        double beta = std::sqrt(static_cast<double>(minp) / (static_cast<double>(in.height) * in.width));
        h = snap(static_cast<long long>(std::ceil(in.height * beta / f)) * spec.factor);
        w = snap(static_cast<long long>(std::ceil(in.width * beta / f)) * spec.factor);
    }
    return {static_cast<int>(w), static_cast<int>(h)};
}

victim_profile victim_profile::load(const std::filesystem::path& json_path) {
    json j;
    try {
        j = json::parse(read_text_file(json_path));
    } catch (const error& e) {
        fail(errc::config, std::string("victim profile: ") + e.what());
    } catch (const std::exception& e) {
        fail(errc::config, "victim profile " + json_path.string() + ": " + e.what());
    }

    victim_profile p;
    try {
        p.name = j.at("name").get<std::string>();
        p.convention = parse_coord_convention(j.at("convention").get<std::string>());
        p.format = parse_response_format(j.at("format").get<std::string>());
        auto template_path = json_path.parent_path() / j.at("template_path").get<std::string>();
        p.template_text = read_text_file(template_path);
        p.endpoint = j.value("endpoint", std::string("mock"));
        p.grid = j.value("grid", 1000);
        if (j.contains("factor")) p.resize.factor = j["factor"].get<int>();
        if (j.contains("min_pixels")) p.resize.min_pixels = j["min_pixels"].get<long long>();
        if (j.contains("max_pixels")) p.resize.max_pixels = j["max_pixels"].get<long long>();
        if (j.contains("presubmit_factor")) {
            p.presubmit_smart_resize = true;
            p.resize.factor = j["presubmit_factor"].get<int>();
        }
        if (j.contains("display")) {
            const json& d = j["display"];
            p.display.landscape_w = d.at("landscape").at(0).get<int>();
            p.display.landscape_h = d.at("landscape").at(1).get<int>();
            p.display.portrait_w = d.at("portrait").at(0).get<int>();
            p.display.portrait_h = d.at("portrait").at(1).get<int>();
        }
    } catch (const error&) {
        throw;
    } catch (const std::exception& e) {
        fail(errc::config, "victim profile " + json_path.string() + ": " + e.what());
    }
    if (p.grid < 2) fail(errc::config, "victim profile grid must be >= 2");
    return p;
}

victim_input prepare_input(const screenshot& image, const victim_profile& profile) {
    if (!image.valid()) fail(errc::config, "prepare_input on empty screenshot");
    victim_input out;
    out.transform.original = image.dims();
    out.transform.convention = profile.convention;
    out.transform.grid = profile.grid;
    switch (profile.convention) {
    case coord_convention::fixed_display: {
        bool landscape = image.width >= image.height;
        image_dims target{landscape ? profile.display.landscape_w : profile.display.portrait_w,
                          landscape ? profile.display.landscape_h : profile.display.portrait_h};
        out.image = resize_bilinear(image, target.width, target.height);
        out.transform.submitted = target;
        break;
    }
    case coord_convention::relative_grid: {
        if (profile.presubmit_smart_resize) {
            image_dims target = smart_resize(image.dims(), profile.resize);
            out.image = resize_bilinear(image, target.width, target.height);
            out.transform.submitted = target;
        } else {
            out.image = image;
            out.transform.submitted = image.dims();
        }
        break;
    }
    case coord_convention::smart_resize_absolute: {
        image_dims target = smart_resize(image.dims(), profile.resize);
        out.image = resize_bilinear(image, target.width, target.height);
        out.transform.submitted = target;
        break;
    }
    }
    return out;
}

namespace {

void substitute(std::string& text, const std::string& token, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), value);
        pos += value.size();
    }
}

} // namespace

std::string render_victim_prompt(const victim_profile& profile, const transform_record& t,
                                 const std::string& instruction) {
    std::string out = profile.template_text;
    substitute(out, "{instruction}", instruction);
    substitute(out, "{width}", std::to_string(t.submitted.width));
    substitute(out, "{height}", std::to_string(t.submitted.height));
    substitute(out, "{disp_w}", std::to_string(t.submitted.width));
    substitute(out, "{disp_h}", std::to_string(t.submitted.height));
    substitute(out, "{disp_w_max}", std::to_string(t.submitted.width - 1));
    substitute(out, "{disp_h_max}", std::to_string(t.submitted.height - 1));
    for (const char* name : {"{instruction}", "{width}", "{height}", "{disp_w}", "{disp_h}",
                             "{disp_w_max}", "{disp_h_max}"}) {
        if (out.find(name) != std::string::npos)
            fail(errc::template_unresolved, std::string("unresolved placeholder ") + name);
    }
    return out;
}

namespace {

bool scan_double(const std::string& s, std::size_t& pos, double& out) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos >= s.size()) return false;
    const char* start = s.c_str() + pos;
    char* end = nullptr;
    double v = std::strtod(start, &end);
    if (end == start) return false;
    pos += static_cast<std::size_t>(end - start);
    out = v;
    return true;
}

bool expect_char(const std::string& s, std::size_t& pos, char c) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
    }
    return false;
}

// First "[x, y]" starting at or after `from`.
std::optional<native_click> bracket_pair_after(const std::string& s, std::size_t from) {
    std::size_t lb = from;
    while ((lb = s.find('[', lb)) != std::string::npos) {
        std::size_t pos = lb + 1;
        native_click c;
        if (scan_double(s, pos, c.x) && expect_char(s, pos, ',') && scan_double(s, pos, c.y) &&
            expect_char(s, pos, ']'))
            return c;
        ++lb;
    }
    return std::nullopt;
}

} // namespace

native_click parse_response(const std::string& raw, response_format format) {
    switch (format) {
    case response_format::single_line_object: {
        if (raw.find("\"action\"") == std::string::npos)
            fail(errc::parse, "no action field in response");
        std::size_t c = raw.find("\"coordinate\"");
        if (c == std::string::npos) fail(errc::parse, "no coordinate field in response");
        auto p = bracket_pair_after(raw, c);
        if (!p) fail(errc::parse, "coordinate field is not an [x, y] pair");
        return *p;
    }
    case response_format::tool_call_object: {
        std::size_t tag = raw.find("<tool_call>");
        if (tag == std::string::npos) fail(errc::parse, "no <tool_call> block in response");
        std::size_t c = raw.find("\"coordinate\"", tag);
        if (c == std::string::npos) fail(errc::parse, "no coordinate field in tool call");
        auto p = bracket_pair_after(raw, c);
        if (!p) fail(errc::parse, "coordinate field is not an [x, y] pair");
        return *p;
    }
    case response_format::code_call: {
        std::size_t call = raw.find("pyautogui.click");
        if (call == std::string::npos) fail(errc::parse, "no pyautogui.click in response");
        std::size_t xp = raw.find("x=", call);
        if (xp == std::string::npos) fail(errc::parse, "pyautogui.click lacks x=");
        std::size_t pos = xp + 2;
        native_click c;
        if (!scan_double(raw, pos, c.x)) fail(errc::parse, "unreadable x coordinate");
        std::size_t yp = raw.find("y=", pos);
        if (yp == std::string::npos) fail(errc::parse, "pyautogui.click lacks y=");
        pos = yp + 2;
        if (!scan_double(raw, pos, c.y)) fail(errc::parse, "unreadable y coordinate");
        return c;
    }
    case response_format::start_box_call: {
        std::size_t call = raw.find("click(start_box=");
        if (call == std::string::npos) fail(errc::parse, "no click(start_box= in response");
        std::size_t stop = raw.find('\n', call);
        if (stop == std::string::npos) stop = raw.size();
        std::vector<double> nums;
        std::size_t pos = call;
        while (pos < stop && nums.size() < 4) {
            char ch = raw[pos];
            bool digit_start = std::isdigit(static_cast<unsigned char>(ch)) ||
                               (ch == '-' && pos + 1 < stop &&
                                std::isdigit(static_cast<unsigned char>(raw[pos + 1])));
            if (digit_start) {
                double v = 0.0;
                if (scan_double(raw, pos, v)) {
                    nums.push_back(v);
                    continue;
                }
            }
            ++pos;
        }
        if (nums.size() == 2) return {nums[0], nums[1]};
        if (nums.size() == 4) return {(nums[0] + nums[2]) / 2.0, (nums[1] + nums[3]) / 2.0};
        fail(errc::parse, "start_box holds neither a point nor a box");
    }
    case response_format::bare_pair: {
        auto p = bracket_pair_after(raw, 0);
        if (!p) fail(errc::parse, "no [x,y] pair in response");
        return *p;
    }
    }
    fail(errc::parse, "unknown response format");
}

pixel_point to_original_space(native_click c, const transform_record& t) {
    double x = 0.0, y = 0.0;
    if (t.convention == coord_convention::relative_grid) {
        x = (c.x + 0.5) / t.grid * t.original.width;
        y = (c.y + 0.5) / t.grid * t.original.height;
    } else {
        x = c.x * static_cast<double>(t.original.width) / t.submitted.width;
        y = c.y * static_cast<double>(t.original.height) / t.submitted.height;
    }
    x = std::clamp(x, 0.0, static_cast<double>(t.original.width));
    y = std::clamp(y, 0.0, static_cast<double>(t.original.height));
    return {x, y, t.original.width, t.original.height};
}

native_click to_native_space(const pixel_point& p, const transform_record& t) {
    if (p.ref_width != t.original.width || p.ref_height != t.original.height)
        fail(errc::dimension_mismatch, "click does not reference the original image");
    if (t.convention == coord_convention::relative_grid)
        return {p.x / t.original.width * t.grid - 0.5, p.y / t.original.height * t.grid - 0.5};
    return {p.x * t.submitted.width / static_cast<double>(t.original.width),
            p.y * t.submitted.height / static_cast<double>(t.original.height)};
}

std::string format_response(native_click c, response_format format) {
    long long x = std::llround(c.x);
    long long y = std::llround(c.y);
    std::string xs = std::to_string(x), ys = std::to_string(y);
    switch (format) {
    case response_format::single_line_object:
        return "{\"action\": \"left_click\", \"coordinate\": [" + xs + ", " + ys + "]}";
    case response_format::tool_call_object:
        return "I located the requested element on the screen.\n<tool_call>\n{\"name\": "
               "\"computer_use\", \"arguments\": {\"action\": \"left_click\", \"coordinate\": [" +
               xs + ", " + ys + "]}}\n</tool_call>";
    case response_format::code_call:
        return "Thought:\n  - The target element is visible on screen.\nAction:\n  Click the "
               "target element.\n```python\npyautogui.click(x=" +
               xs + ", y=" + ys + ")\n```";
    case response_format::start_box_call:
        return "Action: click(start_box='(" + xs + "," + ys + ")')";
    case response_format::bare_pair:
        return "[" + xs + "," + ys + "]";
    }
    fail(errc::config, "unknown response format");
}

victim_prediction query_victim(const screenshot& image, const attack_sample& sample,
                               const std::vector<injected_icon_info>& icons,
                               const victim_profile& profile, victim_backend& backend) {
    victim_input input = prepare_input(image, profile);
    victim_query q;
    q.image = &input.image;
    q.prompt = render_victim_prompt(profile, input.transform, sample.instruction);
    q.instruction = sample.instruction;
    q.transform = input.transform;
    q.gt_box = sample.gt_box;
    q.icons = icons;

    victim_prediction out;
    out.raw_text = backend.complete(q);
    try {
        native_click c = parse_response(out.raw_text, profile.format);
        out.native = c;
        out.click = to_original_space(c, input.transform);
        out.parsed = true;
    } catch (const error& e) {
        if (e.code() != errc::parse) throw;
        out.parse_error = e.what();
    }
    return out;
}

eligibility check_eligibility(const attack_sample& sample, const screenshot& clean,
                              const victim_profile& profile, victim_backend& backend) {
    eligibility out;
    try {
        victim_prediction pred = query_victim(clean, sample, {}, profile, backend);
        if (!pred.parsed) {
            out.errored = true;
            out.note = pred.parse_error;
            return out;
        }
        out.eligible = click_in_box(*pred.click, sample.gt_box, clean.dims());
    } catch (const error& e) {
        out.errored = true;
        out.note = e.what();
    }
    return out;
}

} // namespace decoy
