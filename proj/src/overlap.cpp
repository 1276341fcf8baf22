#include "decoy/overlap.hpp"

#include <cstdlib>

#include "decoy/error.hpp"

namespace decoy {

const char* gate_reject_name(gate_reject r) {
    switch (r) {
    case gate_reject::none:   return "none";
    case gate_reject::iou:    return "iou";
    case gate_reject::cosine: return "cosine";
    }
    return "unknown";
}

gate_outcome gate_decision(double iou_value, std::optional<double> cosine_value,
                           const gate_thresholds& th) {
    if (!(iou_value < th.tau_iou)) return {false, gate_reject::iou};
    if (cosine_value && !(*cosine_value < th.tau_cos)) return {false, gate_reject::cosine};
    return {true, gate_reject::none};
}

std::optional<std::int64_t> parse_icon_ref(const std::string& element_desc) {
    std::string_view prefix(k_icon_ref_prefix);
    if (element_desc.size() <= prefix.size() || element_desc.compare(0, prefix.size(), prefix) != 0)
        return std::nullopt;
    char* end = nullptr;
    long long id = std::strtoll(element_desc.c_str() + prefix.size(), &end, 10);
    if (end == nullptr || *end != '\0') return std::nullopt;
    return static_cast<std::int64_t>(id);
}

overlapper::overlapper(const pool_reader& pool, embedding_backend& embedder, gate_thresholds th)
    : pool_(pool), embedder_(embedder), thresholds_(th) {}

void overlapper::build_index() {
    icon_vecs_.clear();
    icon_vecs_.reserve(pool_.size());
    for (const auto& rec : pool_.records()) {
        embedding_vector v = embedder_.embed_image(pool_.get(rec.id));
        index_.add(rec.id, v);
        icon_vecs_.push_back(std::move(v));
    }
}

embedding_vector overlapper::embed_gt_crop(const screenshot& clean, const norm_box& gt) {
    screenshot patch = crop(clean, to_pixel_rect(gt, clean.dims()));
    return embedder_.embed_image(encode_png(patch));
}

applied_edit overlapper::resolve_and_gate(const proposed_edit& edit, const norm_box& gt,
                                          const embedding_vector& gt_crop_embedding,
                                          bool check_cosine) {
    applied_edit out;
    out.element_desc = edit.element_desc;
    out.placement = edit.bbox;
    out.iou_with_gt = iou(edit.bbox, gt);

    std::optional<double> gate_cosine;
    if (auto direct = parse_icon_ref(edit.element_desc)) {
        pool_.record(*direct); // not_found when the reference is stale
        out.icon_id = *direct;
        out.cosine_to_query = 1.0;
    } else {
        if (index_.size() == 0)
            fail(errc::not_found, "overlapper index not built");
        auto hits = index_.retrieve(embedder_.embed_text(edit.element_desc), 1);
        out.icon_id = hits[0].id;
        out.cosine_to_query = hits[0].score;
        if (check_cosine) {
            std::size_t pos = 0;
            const auto& recs = pool_.records();
            while (pos < recs.size() && recs[pos].id != out.icon_id) ++pos;
            out.cosine_to_gt_crop = cosine(icon_vecs_[pos], gt_crop_embedding);
            gate_cosine = out.cosine_to_gt_crop;
        }
    }

    gate_outcome g = gate_decision(out.iou_with_gt, gate_cosine, thresholds_);
    out.accepted = g.accepted;
    out.rejection = g.reason;
    return out;
}

const embedding_vector& overlapper::icon_embedding(std::int64_t icon_id) const {
    if (icon_vecs_.empty())
        fail(errc::not_found, "overlapper index not built");
    const auto& recs = pool_.records();
    for (std::size_t pos = 0; pos < recs.size(); ++pos)
        if (recs[pos].id == icon_id) return icon_vecs_[pos];
    fail(errc::not_found, "no pool icon with id " + std::to_string(icon_id));
}

screenshot overlapper::composite(const screenshot& base,
                                 const std::vector<applied_edit>& edits) const {
    screenshot out = base;
    for (const auto& e : edits) {
        if (!e.accepted) continue;
        pixel_rect r = to_pixel_rect(e.placement, base.dims());
        if (r.w <= 0 || r.h <= 0)
            fail(errc::degenerate_placement,
                 "placement rasterizes to zero pixels: " + e.element_desc);
        screenshot icon = decode_png(pool_.get(e.icon_id));
        screenshot sized = resize_bilinear(icon, r.w, r.h);
        blend_over(out, sized, r.x, r.y);
    }
    return out;
}

} // namespace decoy
