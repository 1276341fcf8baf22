#include "decoy/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "decoy/error.hpp"
#include "decoy/rng.hpp"

namespace decoy {

namespace {

pixel_point gt_center_px(const victim_query& q) {
    auto c = q.gt_box.center();
    return {c[0] * q.transform.original.width, c[1] * q.transform.original.height,
            q.transform.original.width, q.transform.original.height};
}

std::string emit_click(const victim_query& q, const pixel_point& p, response_format fmt) {
    return format_response(to_native_space(p, q.transform), fmt);
}

class gt_center_victim final : public victim_backend {
public:
    explicit gt_center_victim(response_format fmt) : fmt_(fmt) {}
    std::string complete(const victim_query& q) override {
        return emit_click(q, gt_center_px(q), fmt_);
    }

private:
    response_format fmt_;
};

class fixed_point_victim final : public victim_backend {
public:
    fixed_point_victim(double x, double y, response_format fmt) : x_(x), y_(y), fmt_(fmt) {}
    std::string complete(const victim_query& q) override {
        pixel_point p{x_, y_, q.transform.original.width, q.transform.original.height};
        return emit_click(q, p, fmt_);
    }

private:
    double x_, y_;
    response_format fmt_;
};

class nearest_injected_victim final : public victim_backend {
public:
    nearest_injected_victim(double cos_min, double radius, response_format fmt)
        : cos_min_(cos_min), radius_(radius), fmt_(fmt) {}

    std::string complete(const victim_query& q) override {
        const image_dims orig = q.transform.original;
        const double diag = orig.diagonal();
        const pixel_point gt_c = gt_center_px(q);

        const injected_icon_info* best = nullptr;
        double best_dist = radius_;
        for (const auto& icon : q.icons) {
            if (!(icon.cosine_to_instruction > cos_min_)) continue;
            auto c = icon.placement.center();
            double dx = c[0] * orig.width - gt_c.x;
            double dy = c[1] * orig.height - gt_c.y;
            double dist = std::hypot(dx, dy) / diag;
            if (dist <= best_dist) {
                best_dist = dist;
                best = &icon;
            }
        }

        pixel_point target = gt_c;
        if (best != nullptr) {
            auto c = best->placement.center();
            target = {c[0] * orig.width, c[1] * orig.height, orig.width, orig.height};
        }
        return emit_click(q, target, fmt_);
    }

private:
    double cos_min_, radius_;
    response_format fmt_;
};

class garbage_victim final : public victim_backend {
public:
    std::string complete(const victim_query&) override {
        return "I cannot locate any element matching that request.";
    }
};

class failing_victim final : public victim_backend {
public:
    std::string complete(const victim_query&) override {
        fail(errc::transport, "scripted victim endpoint unreachable");
    }
};

} // namespace

std::unique_ptr<victim_backend> make_scripted_victim(const std::string& behavior,
                                                     response_format format) {
    if (behavior == "always-gt-center" || behavior == "coordinate-locked")
        return std::make_unique<gt_center_victim>(format);
    if (behavior == "garbage") return std::make_unique<garbage_victim>();
    if (behavior == "failing") return std::make_unique<failing_victim>();

    double a = 0.0, b = 0.0;
    if (std::sscanf(behavior.c_str(), "fixed-point:%lf,%lf", &a, &b) == 2)
        return std::make_unique<fixed_point_victim>(a, b, format);
    if (std::sscanf(behavior.c_str(), "nearest-injected:cos=%lf,radius=%lf", &a, &b) == 2)
        return std::make_unique<nearest_injected_victim>(a, b, format);

    fail(errc::config, "unknown scripted victim behavior: " + behavior);
}

replay_editor::replay_editor(std::vector<std::string> script) : script_(std::move(script)) {
    if (script_.empty()) fail(errc::config, "replay editor needs at least one reply");
}

std::string replay_editor::propose(const prompt_bundle&, const editor_call_context&) {
    std::size_t i = std::min<std::size_t>(calls_, script_.size() - 1);
    ++calls_;
    if (script_[i] == "<<ERROR>>") fail(errc::transport, "scripted editor endpoint unreachable");
    return script_[i];
}

scripted_strategic_editor::scripted_strategic_editor(scripted_strategic_options opts)
    : opts_(std::move(opts)) {
    if (opts_.related_descs.empty())
        fail(errc::config, "scripted strategic editor needs related descriptions");
    if (opts_.edits_per_attempt < 1)
        fail(errc::config, "edits_per_attempt must be >= 1");
}

namespace {

// Center the box on (cx, cy) and clamp it into the unit square unchanged in
// size.
norm_box box_at(double cx, double cy, double half_w, double half_h) {
    double x1 = std::clamp(cx - half_w, 0.0, 1.0 - 2.0 * half_w);
    double y1 = std::clamp(cy - half_h, 0.0, 1.0 - 2.0 * half_h);
    return {x1, y1, x1 + 2.0 * half_w, y1 + 2.0 * half_h};
}

bool boxes_disjoint(const norm_box& a, const norm_box& b) {
    return a.x2 <= b.x1 || b.x2 <= a.x1 || a.y2 <= b.y1 || b.y2 <= a.y1;
}

} // namespace

std::string scripted_strategic_editor::propose(const prompt_bundle&,
                                               const editor_call_context& ctx) {
    if (ctx.sample == nullptr) fail(errc::config, "scripted editor called without a sample");
    const norm_box& gt = ctx.sample->gt_box;
    const image_dims dims = ctx.dims;
    const double diag = dims.diagonal();
    auto zones = adjacent_zones(gt).present();
    auto gc = gt.center();
    splitmix64 rng(ctx.seed);

    const double half_w = opts_.icon_side / 2.0;
    const double half_h = opts_.icon_side / 2.0;

    edit_proposal proposal;
    proposal.strategy_note =
        std::string("scripted strategic, zone rotation for pass ") + std::to_string(ctx.pass);

    for (int k = 0; k < opts_.edits_per_attempt; ++k) {
        std::size_t desc_idx = (static_cast<std::size_t>(ctx.depth - 1) * 7 +
                                static_cast<std::size_t>(ctx.pass - 1) * 3 +
                                static_cast<std::size_t>(k)) %
                               opts_.related_descs.size();
        const std::string& desc = opts_.related_descs[desc_idx];

        norm_box placed{};
        bool ok = false;
        for (std::size_t attempt = 0; attempt < zones.size() && !ok; ++attempt) {
            std::size_t zi = (static_cast<std::size_t>(ctx.pass - 1) +
                              static_cast<std::size_t>(k) + attempt) %
                             zones.size();
            const std::string& zone = zones[zi].first;
            double dir_x = zone == "LEFT" ? -1.0 : zone == "RIGHT" ? 1.0 : 0.0;
            double dir_y = zone == "ABOVE" ? -1.0 : zone == "BELOW" ? 1.0 : 0.0;

            // Clearance in pixels along the offset axis: half the target, half
            // the icon, plus a small margin. Never closer than target_delta.
            double gt_half_px = dir_x != 0.0 ? gt.width() / 2.0 * dims.width
                                             : gt.height() / 2.0 * dims.height;
            double icon_half_px = dir_x != 0.0 ? half_w * dims.width : half_h * dims.height;
            double offset_px = std::max(opts_.target_delta * diag,
                                        gt_half_px + icon_half_px + 2.0) +
                               rng.uniform(0.0, 0.01 * diag);

            double cx = gc[0] + dir_x * offset_px / dims.width;
            double cy = gc[1] + dir_y * offset_px / dims.height;
            // Lateral jitter decorrelates passes without leaving the zone.
            double lateral = rng.uniform(-0.02, 0.02);
            if (dir_x != 0.0) cy += lateral;
            else cx += lateral;

            placed = box_at(cx, cy, half_w, half_h);
            ok = placed.valid() && boxes_disjoint(placed, gt);
        }
        if (!ok) continue;
        proposal.edits.push_back({desc, placed});
    }

    if (proposal.edits.empty())
        fail(errc::placement_infeasible, "no free zone could host an icon next to the target");
    return render_edit_plan(proposal);
}

} // namespace decoy
