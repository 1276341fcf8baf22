#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "decoy/backends.hpp"
#include "decoy/editor.hpp"
#include "decoy/geometry.hpp"
#include "decoy/overlap.hpp"
#include "decoy/sample.hpp"
#include "decoy/victim.hpp"

namespace decoy {

enum class attack_kind { strategic, random };
enum class run_mode { early_stop, full };

const char* attack_kind_name(attack_kind k);
const char* run_mode_name(run_mode m);
attack_kind parse_attack_kind(const std::string& name);
run_mode parse_run_mode(const std::string& name);

// Coarse reward weights. Validity requires gamma1 > gamma2 + gamma3 + gamma4
// and gamma2 > gamma3 + gamma4, so a hit-injected attempt outranks any
// miss-only attempt and a miss outranks any number of mere placements.
struct score_weights {
    double gamma1 = 1000.0;
    double gamma2 = 100.0;
    double gamma3 = 10.0;
    double gamma4 = 1.0;
};

// Piecewise reward over the mean gate cosine of applied icons: full credit
// inside [sweet_lo, sweet_hi], a flat floor below ramp_lo and above sweet_hi
// (the gate caps values before 0.60), and a linear ramp between ramp_lo and
// sweet_lo.
struct cosine_quality_shape {
    double sweet_lo = 0.30;
    double sweet_hi = 0.57;
    double ramp_lo = 0.20;
    double floor_weight = 0.25;
};

struct search_config {
    int depth = 5;
    int passes = 3;
    int max_edits = 3;
    attack_kind attack = attack_kind::strategic;
    run_mode mode = run_mode::early_stop;
    score_weights weights;
    cosine_quality_shape quality;
    gate_thresholds thresholds;
    bool include_history = true;  // off under the no-history ablation
    bool include_strategy = true; // off under either ablation
    int pass_cap = 0;             // 0 = all passes, else only the first N' run
    int history_cap = 15;
    std::uint64_t seed = 0;
    std::filesystem::path save_composites_dir; // empty = keep composites in memory only

    int effective_passes() const;
    void validate() const; // config on any violated constraint
};

double coarse_score(const success_flags_t& flags, int applied_count, const score_weights& w);

// Mean of the per-edit weights; edits without a gate cosine are skipped, and
// no weighable edit at all scores zero.
double cosine_quality(const std::vector<double>& applied_cosines,
                      const cosine_quality_shape& shape);

// Compared lexicographically: coarse reward, victim displacement, cosine
// quality, applied count, then earliest pass. The last key is unique, so
// carry selection never ties.
struct attempt_score {
    double s = 0.0;
    double delta = 0.0;
    double cbar = 0.0;
    int applied = 0;
    int neg_pass = 0;
};

bool operator<(const attempt_score& a, const attempt_score& b);
bool operator==(const attempt_score& a, const attempt_score& b);

struct attempt_record {
    int depth = 1;
    int pass = 1;
    int built_on_depth = 0; // 0 at depth 1 (and always under the random attack)
    int built_on_pass = 0;
    std::string strategy_name;  // "A".."F", or "random"
    std::string diagnosis_name;
    std::vector<applied_edit> edits;
    bool errored = false; // editor or victim transport failure
    bool parsed = false;  // the victim reply yielded a click
    std::optional<pixel_point> click; // original space
    double delta = 0.0;
    success_flags_t flags; // judged against every icon on the shown canvas
    std::string composite_digest;
    std::string note;

    int accepted_count() const;
    history_entry to_history() const;
};

attempt_score score_attempt(const attempt_record& a, const search_config& cfg);

// Index of the carry winner among one depth's attempts; errored attempts
// never win, and nullopt means the whole depth errored.
std::optional<std::size_t> select_carry(const std::vector<attempt_record>& depth_attempts,
                                        const search_config& cfg);

struct sample_run_log {
    std::string sample_id;
    attack_kind attack = attack_kind::strategic;
    run_mode mode = run_mode::early_stop;
    int depth = 5;
    int passes = 3;
    std::uint64_t seed = 0; // per-sample derived seed
    image_dims dims;
    norm_box gt_box;
    bool eligible = true;
    bool eligibility_errored = false;
    std::string eligibility_note;
    std::vector<attempt_record> attempts;         // (depth, pass) order
    std::optional<std::pair<int, int>> first_l1;  // first miss with accepted icons
    std::vector<std::string> carried_digests;     // carry after each finished depth
    bool stopped_early = false;
};

std::uint64_t derive_sample_seed(std::uint64_t run_seed, const std::string& sample_id);
std::uint64_t derive_attempt_seed(std::uint64_t sample_seed, int depth, int pass);

// One sample through the search loop. Per depth: diagnose the history, pick
// a strategy, fan out `passes` proposals, gate each, composite onto the
// carried image (onto the clean one under the random attack) and query the
// victim. Early-stop mode stops at the first miss with accepted icons; full
// mode always carries the best-scoring pass and continues. Backend failures
// mark the attempt errored; a depth where every pass errored carries the
// previous image unchanged.
sample_run_log run_attack(const attack_sample& sample, const screenshot& clean,
                          const search_config& cfg, editor_backend& editor,
                          overlapper& overlap, const victim_profile& profile,
                          victim_backend& victim, const prompt_templates& templates);

} // namespace decoy
