#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "decoy/geometry.hpp"
#include "decoy/image.hpp"
#include "decoy/overlap.hpp"
#include "decoy/sample.hpp"

namespace decoy {

// Failure-mode diagnosis over the attempt history, highest precedence first.
enum class diagnosis {
    super_stuck,           // >=3 attempts, victim never moved (max dist < 0.005)
    near_miss,             // best distance in [0.005, 0.05)
    trivial_filter,        // majority of proposals died on the cosine gate
    low_cosine,            // applied icons look nothing like the target
    high_cosine_no_effect, // similar icons, victim still unmoved, few attempts
    none,
};

const char* diagnosis_name(diagnosis d);

enum class strategy { A, B, C, D, E, F };

inline char strategy_letter(strategy s) { return static_cast<char>('A' + static_cast<int>(s)); }

struct diagnose_thresholds {
    double stuck_delta = 0.005;
    double near_miss_delta = 0.05;
    double low_cosine_mean = 0.25;
    int stuck_min_attempts = 3;
    double trivial_reject_share = 0.5;
};

// Condensed view of a finished attempt, the shape both the diagnoser and the
// prompt history renderer consume.
struct history_entry {
    int depth = 1;
    int pass = 1;
    int built_on_depth = 0; // 0 while at depth 1 (built on the clean image)
    int built_on_pass = 0;
    std::vector<applied_edit> edits;
    double delta = 0.0;
    success_flags_t flags;
};

diagnosis meta_diagnose(const std::vector<history_entry>& history,
                        const diagnose_thresholds& th = {});

// Diagnosis -> strategy overrides; undiagnosed attempts rotate by depth.
struct strategy_table {
    std::map<diagnosis, strategy> overrides = {
        {diagnosis::super_stuck, strategy::E},
        {diagnosis::near_miss, strategy::D},
        {diagnosis::trivial_filter, strategy::A},
        {diagnosis::low_cosine, strategy::A},
        {diagnosis::high_cosine_no_effect, strategy::F},
    };
    std::array<strategy, 6> rotation = {strategy::A, strategy::B, strategy::C,
                                        strategy::D, strategy::E, strategy::F};
};

strategy select_strategy(diagnosis diag, int depth, const strategy_table& table = {});

struct prompt_templates {
    std::string system_text;
    std::string user_text;

    static prompt_templates load(const std::filesystem::path& dir);
};

struct editor_options {
    bool include_history = true;  // off under the no-history ablation
    bool include_strategy = true; // off under either ablation
    int history_cap = 15;
    int overuse_threshold = 3;
    int max_edits = 3;
    double tau_iou = 0.10;
    double tau_cos = 0.60;
};

struct prompt_bundle {
    std::string system_text;
    std::string user_text;
    std::vector<std::uint8_t> image_png; // the carried screenshot
};

prompt_bundle build_prompt(const attack_sample& sample, const screenshot& carried,
                           const std::vector<history_entry>& history, strategy strat,
                           const std::string& diversity_token, int depth, int pass,
                           const prompt_templates& templates, const editor_options& opts);

// 8-char alphanumeric tag decorrelating parallel passes of the same depth.
std::string make_diversity_token(const std::string& sample_id, int depth, int pass,
                                 std::uint64_t key);

struct edit_proposal {
    std::string strategy_note;
    std::vector<proposed_edit> edits;
};

// Extracts the first BEGIN_EDIT_PLAN...END_EDIT_PLAN block, tolerating prose
// around it. Clamps to max_edits, drops malformed bboxes, and raises parse
// when no block or no usable edit survives.
edit_proposal parse_edit_plan(const std::string& raw, int max_edits);

// Inverse of parse_edit_plan for scripted editors and round-trip tests.
std::string render_edit_plan(const edit_proposal& proposal);

// Memoryless baseline: 1..max_edits icons drawn uniformly from the pool,
// uniform placement with side lengths in [0.03, 0.20], rejection-sampled to
// zero pixel overlap with gt. Descriptions are "#icon:<id>" references.
edit_proposal random_proposal(const norm_box& gt, image_dims dims,
                              const std::vector<std::int64_t>& pool_ids,
                              std::uint64_t seed, int max_edits);

// History renderer exposed for tests; most recent `cap` attempts.
std::string render_history_block(const std::vector<history_entry>& history, int cap);
std::vector<std::string> overused_descriptions(const std::vector<history_entry>& history,
                                               int threshold);

} // namespace decoy
