#pragma once

#include <optional>
#include <string>
#include <vector>

#include "decoy/embedding.hpp"
#include "decoy/geometry.hpp"
#include "decoy/image.hpp"
#include "decoy/pool.hpp"

namespace decoy {

struct gate_thresholds {
    double tau_iou = 0.10;
    double tau_cos = 0.60;
};

enum class gate_reject { none, iou, cosine };

const char* gate_reject_name(gate_reject r);

struct gate_outcome {
    bool accepted = false;
    gate_reject reason = gate_reject::none;
};

// Non-triviality gate. Accepts only edits that neither sit on the target
// (IoU) nor look like it (visual cosine); both inequalities are strict, and
// the IoU test runs first so a double violation reports as "iou". A missing
// cosine means the visual check was waived for this edit.
gate_outcome gate_decision(double iou_value, std::optional<double> cosine_value,
                           const gate_thresholds& th);

// Editor-proposed placement before grounding.
struct proposed_edit {
    std::string element_desc;
    norm_box bbox;
};

// An edit is marked with this prefix to name a pool icon directly, skipping
// retrieval and the visual-similarity check (the random baseline's path).
inline constexpr const char* k_icon_ref_prefix = "#icon:";

std::optional<std::int64_t> parse_icon_ref(const std::string& element_desc);

// Grounded + gated edit as recorded in attempt logs.
struct applied_edit {
    std::string element_desc;
    norm_box placement;
    std::int64_t icon_id = -1;
    double cosine_to_query = 0.0;                // description -> retrieved icon
    std::optional<double> cosine_to_gt_crop;     // icon -> target crop; drives the gate
    double iou_with_gt = 0.0;
    bool accepted = false;
    gate_reject rejection = gate_reject::none;
};

class overlapper {
public:
    overlapper(const pool_reader& pool, embedding_backend& embedder, gate_thresholds th);

    // Embeds every pool icon; must run before resolve_and_gate.
    void build_index();
    const cosine_index& index() const { return index_; }

    // Visual anchor for the gate: the target's pixels from the clean
    // screenshot, not from any edited frame.
    embedding_vector embed_gt_crop(const screenshot& clean, const norm_box& gt);

    // Retrieval (or direct icon reference) followed by the gate.
    // `check_cosine` is false for non-icon targets and icon references.
    applied_edit resolve_and_gate(const proposed_edit& edit, const norm_box& gt,
                                  const embedding_vector& gt_crop_embedding,
                                  bool check_cosine);

    // Source-over of every accepted edit onto a copy of base, in list order.
    // Placements that rasterize to zero pixels raise degenerate-placement.
    screenshot composite(const screenshot& base, const std::vector<applied_edit>& edits) const;

    const gate_thresholds& thresholds() const { return thresholds_; }
    embedding_backend& embedder() const { return embedder_; }
    const pool_reader& pool() const { return pool_; }

    // Embedding of a pool icon by id; not_found for stale ids, requires a
    // built index.
    const embedding_vector& icon_embedding(std::int64_t icon_id) const;

private:
    const pool_reader& pool_;
    embedding_backend& embedder_;
    gate_thresholds thresholds_;
    cosine_index index_;
    std::vector<embedding_vector> icon_vecs_; // by position in pool records
};

} // namespace decoy
