#include "decoy/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "decoy/error.hpp"
#include "decoy/rng.hpp"

namespace decoy {

const char* attack_kind_name(attack_kind k) {
    return k == attack_kind::strategic ? "strategic" : "random";
}

const char* run_mode_name(run_mode m) { return m == run_mode::early_stop ? "early-stop" : "full"; }

attack_kind parse_attack_kind(const std::string& name) {
    if (name == "strategic") return attack_kind::strategic;
    if (name == "random") return attack_kind::random;
    fail(errc::config, "unknown attack kind: " + name);
}

run_mode parse_run_mode(const std::string& name) {
    if (name == "early-stop") return run_mode::early_stop;
    if (name == "full") return run_mode::full;
    fail(errc::config, "unknown run mode: " + name);
}

int search_config::effective_passes() const {
    return pass_cap > 0 ? std::min(pass_cap, passes) : passes;
}

void search_config::validate() const {
    if (depth < 1) fail(errc::config, "depth must be >= 1");
    if (passes < 1) fail(errc::config, "passes must be >= 1");
    if (max_edits < 1) fail(errc::config, "max_edits must be >= 1");
    if (pass_cap < 0) fail(errc::config, "pass_cap must be >= 0");
    if (history_cap < 1) fail(errc::config, "history_cap must be >= 1");
    if (weights.gamma1 <= 0 || weights.gamma2 <= 0 || weights.gamma3 <= 0 || weights.gamma4 <= 0)
        fail(errc::config, "score weights must be positive");
    if (!(weights.gamma1 > weights.gamma2 + weights.gamma3 + weights.gamma4))
        fail(errc::config, "gamma1 must dominate gamma2 + gamma3 + gamma4");
    if (!(weights.gamma2 > weights.gamma3 + weights.gamma4))
        fail(errc::config, "gamma2 must dominate gamma3 + gamma4");
    if (!(quality.ramp_lo >= 0.0 && quality.ramp_lo < quality.sweet_lo &&
          quality.sweet_lo < quality.sweet_hi && quality.sweet_hi <= 1.0))
        fail(errc::config, "cosine quality shape must order ramp_lo < sweet_lo < sweet_hi");
    if (!(quality.floor_weight > 0.0 && quality.floor_weight <= 1.0))
        fail(errc::config, "floor_weight must lie in (0, 1]");
    if (!(thresholds.tau_iou > 0.0 && thresholds.tau_iou <= 1.0))
        fail(errc::config, "tau_iou must lie in (0, 1]");
    if (!(thresholds.tau_cos > 0.0 && thresholds.tau_cos <= 1.0))
        fail(errc::config, "tau_cos must lie in (0, 1]");
}

double coarse_score(const success_flags_t& flags, int applied_count, const score_weights& w) {
    double s = 0.0;
    if (flags.l2) s += w.gamma1;
    if (flags.l1) s += w.gamma2;
    if (applied_count > 0) s += w.gamma3;
    else s -= w.gamma4;
    return s;
}

double cosine_quality(const std::vector<double>& applied_cosines,
                      const cosine_quality_shape& shape) {
    if (applied_cosines.empty()) return 0.0;
    double sum = 0.0;
    for (double c : applied_cosines) {
        double w;
        if (c < shape.ramp_lo) w = shape.floor_weight;
        else if (c < shape.sweet_lo)
            w = shape.floor_weight +
                (c - shape.ramp_lo) / (shape.sweet_lo - shape.ramp_lo) *
                    (1.0 - shape.floor_weight);
        else if (c <= shape.sweet_hi) w = 1.0;
        else w = shape.floor_weight;
        sum += w;
    }
    return sum / static_cast<double>(applied_cosines.size());
}

bool operator<(const attempt_score& a, const attempt_score& b) {
    if (a.s != b.s) return a.s < b.s;
    if (a.delta != b.delta) return a.delta < b.delta;
    if (a.cbar != b.cbar) return a.cbar < b.cbar;
    if (a.applied != b.applied) return a.applied < b.applied;
    return a.neg_pass < b.neg_pass;
}

bool operator==(const attempt_score& a, const attempt_score& b) {
    return a.s == b.s && a.delta == b.delta && a.cbar == b.cbar && a.applied == b.applied &&
           a.neg_pass == b.neg_pass;
}

int attempt_record::accepted_count() const {
    int n = 0;
    for (const auto& e : edits)
        if (e.accepted) ++n;
    return n;
}

history_entry attempt_record::to_history() const {
    return {depth, pass, built_on_depth, built_on_pass, edits, delta, flags};
}

attempt_score score_attempt(const attempt_record& a, const search_config& cfg) {
    std::vector<double> cosines;
    for (const auto& e : a.edits)
        if (e.accepted && e.cosine_to_gt_crop) cosines.push_back(*e.cosine_to_gt_crop);
    return {coarse_score(a.flags, a.accepted_count(), cfg.weights), a.delta,
            cosine_quality(cosines, cfg.quality), a.accepted_count(), -a.pass};
}

std::optional<std::size_t> select_carry(const std::vector<attempt_record>& depth_attempts,
                                        const search_config& cfg) {
    std::optional<std::size_t> best;
    attempt_score best_score;
    for (std::size_t i = 0; i < depth_attempts.size(); ++i) {
        if (depth_attempts[i].errored) continue;
        attempt_score s = score_attempt(depth_attempts[i], cfg);
        if (!best || best_score < s) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

std::uint64_t derive_sample_seed(std::uint64_t run_seed, const std::string& sample_id) {
    return mix64(run_seed, hash64(sample_id));
}

std::uint64_t derive_attempt_seed(std::uint64_t sample_seed, int depth, int pass) {
    return mix64(sample_seed, static_cast<std::uint64_t>(depth) * 1000003ull +
                                  static_cast<std::uint64_t>(pass));
}

sample_run_log run_attack(const attack_sample& sample, const screenshot& clean,
                          const search_config& cfg, editor_backend& editor,
                          overlapper& overlap, const victim_profile& profile,
                          victim_backend& victim, const prompt_templates& templates) {
    cfg.validate();
    if (!clean.valid()) fail(errc::config, "clean screenshot is not a valid raster");

    const image_dims dims = clean.dims();
    if (!cfg.save_composites_dir.empty())
        std::filesystem::create_directories(cfg.save_composites_dir);
    const bool random = cfg.attack == attack_kind::random;
    const bool check_cosine = sample.target_kind && *sample.target_kind == "icon";
    const std::uint64_t sample_seed = derive_sample_seed(cfg.seed, sample.id);
    const int n_eff = cfg.effective_passes();

    sample_run_log log;
    log.sample_id = sample.id;
    log.attack = cfg.attack;
    log.mode = cfg.mode;
    log.depth = cfg.depth;
    log.passes = n_eff;
    log.seed = sample_seed;
    log.dims = dims;
    log.gt_box = sample.gt_box;

    const embedding_vector gt_emb = overlap.embed_gt_crop(clean, sample.gt_box);
    const embedding_vector instr_emb = overlap.embedder().embed_text(sample.instruction);

    std::vector<std::int64_t> pool_ids;
    if (random)
        for (const auto& rec : overlap.pool().records()) pool_ids.push_back(rec.id);

    editor_options opts;
    opts.include_history = cfg.include_history;
    opts.include_strategy = cfg.include_strategy;
    opts.history_cap = cfg.history_cap;
    opts.max_edits = cfg.max_edits;
    opts.tau_iou = cfg.thresholds.tau_iou;
    opts.tau_cos = cfg.thresholds.tau_cos;

    screenshot carried = clean;
    std::vector<injected_icon_info> carried_icons;
    std::vector<history_entry> history;
    int prev_depth = 0, prev_pass = 0; // the carry point new attempts build on

    for (int d = 1; d <= cfg.depth; ++d) {
        // The no-history ablation makes the loop memoryless: nothing to
        // diagnose, so the strategy falls back to the depth rotation.
        diagnosis diag = cfg.include_history ? meta_diagnose(history) : diagnosis::none;
        strategy strat = select_strategy(diag, d);
        const std::vector<history_entry> history_before = history;

        std::vector<attempt_record> depth_attempts;
        std::vector<screenshot> composites(static_cast<std::size_t>(n_eff));
        std::vector<std::vector<injected_icon_info>> canvases(static_cast<std::size_t>(n_eff));

        for (int n = 1; n <= n_eff; ++n) {
            attempt_record rec;
            rec.depth = d;
            rec.pass = n;
            rec.built_on_depth = random ? 0 : prev_depth;
            rec.built_on_pass = random ? 0 : prev_pass;
            rec.strategy_name = random ? "random" : std::string(1, strategy_letter(strat));
            rec.diagnosis_name = diagnosis_name(diag);
            const std::uint64_t attempt_seed = derive_attempt_seed(sample_seed, d, n);

            try {
                edit_proposal proposal;
                if (random) {
                    proposal = random_proposal(sample.gt_box, dims, pool_ids, attempt_seed,
                                               cfg.max_edits);
                } else {
                    std::string token = make_diversity_token(sample.id, d, n, cfg.seed);
                    prompt_bundle bundle = build_prompt(sample, carried, history_before, strat,
                                                        token, d, n, templates, opts);
                    editor_call_context ctx{&sample, dims,           d,    n,
                                            strat,   diag,           &history_before,
                                            attempt_seed};
                    proposal = parse_edit_plan(editor.propose(bundle, ctx), cfg.max_edits);
                }

                for (const auto& e : proposal.edits)
                    rec.edits.push_back(
                        overlap.resolve_and_gate(e, sample.gt_box, gt_emb, check_cosine));

                const screenshot& base = random ? clean : carried;
                screenshot composite = overlap.composite(base, rec.edits);
                rec.composite_digest = screenshot_digest(composite);

                std::vector<injected_icon_info> canvas = random ? std::vector<injected_icon_info>{}
                                                                : carried_icons;
                for (const auto& e : rec.edits)
                    if (e.accepted)
                        canvas.push_back(
                            {e.placement, cosine(instr_emb, overlap.icon_embedding(e.icon_id))});

                victim_prediction pred = query_victim(composite, sample, canvas, profile, victim);
                rec.parsed = pred.parsed;
                if (pred.parsed) {
                    rec.click = pred.click;
                    rec.delta = norm_click_distance(*pred.click, sample.gt_box, dims);
                    std::vector<norm_box> boxes;
                    for (const auto& icon : canvas) boxes.push_back(icon.placement);
                    rec.flags = success_flags(*pred.click, sample.gt_box, boxes, dims);
                } else {
                    rec.note = pred.parse_error;
                }

                if (!cfg.save_composites_dir.empty()) {
                    char name[64];
                    std::snprintf(name, sizeof(name), "_d%02d_p%02d.png", d, n);
                    save_png_file(cfg.save_composites_dir / (sample.id + name), composite);
                }
                composites[static_cast<std::size_t>(n - 1)] = std::move(composite);
                canvases[static_cast<std::size_t>(n - 1)] = std::move(canvas);
            } catch (const error& e) {
                rec.errored = true;
                rec.note = std::string(errc_name(e.code())) + ": " + e.what();
            }

            depth_attempts.push_back(std::move(rec));
        }

        for (const auto& rec : depth_attempts) {
            if (!rec.errored) history.push_back(rec.to_history());
            log.attempts.push_back(rec);
        }

        // Deterministic post-depth scan, earliest pass first.
        for (const auto& rec : depth_attempts) {
            if (rec.flags.l1 && rec.accepted_count() > 0) {
                if (!log.first_l1) log.first_l1 = {rec.depth, rec.pass};
                break;
            }
        }
        if (log.first_l1 && log.first_l1->first == d && cfg.mode == run_mode::early_stop) {
            log.stopped_early = true;
            break;
        }

        if (!random) {
            if (auto sel = select_carry(depth_attempts, cfg)) {
                carried = std::move(composites[*sel]);
                carried_icons = std::move(canvases[*sel]);
                prev_depth = d;
                prev_pass = depth_attempts[*sel].pass;
            }
            log.carried_digests.push_back(screenshot_digest(carried));
        } else {
            log.carried_digests.push_back(screenshot_digest(clean));
        }
    }

    return log;
}

} // namespace decoy
