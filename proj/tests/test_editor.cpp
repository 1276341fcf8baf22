#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "decoy/editor.hpp"
#include "decoy/error.hpp"
#include "test_support.hpp"

using namespace decoy;
using decoy::testing::textured_icon;

namespace {

applied_edit edit(bool accepted, std::optional<double> cos_gt,
                  gate_reject rej = gate_reject::none, const std::string& desc = "icon") {
    applied_edit e;
    e.element_desc = desc;
    e.placement = {0.1, 0.1, 0.2, 0.2};
    e.icon_id = 0;
    e.cosine_to_gt_crop = cos_gt;
    e.accepted = accepted;
    e.rejection = rej;
    return e;
}

history_entry attempt(double delta, std::vector<applied_edit> edits, bool l1 = false,
                      int depth = 1, int pass = 1) {
    history_entry h;
    h.depth = depth;
    h.pass = pass;
    h.edits = std::move(edits);
    h.delta = delta;
    h.flags.l1 = l1;
    h.flags.l2 = false;
    return h;
}

attack_sample make_sample() {
    attack_sample s;
    s.id = "s001";
    s.platform = "mobile";
    s.instruction = "open the settings panel";
    s.gt_box = {0.181, 0.772, 0.435, 0.844};
    s.target_kind = "icon";
    return s;
}

} // namespace

TEST_CASE("meta_diagnose pinned cases and precedence") {
    // Empty history.
    CHECK(meta_diagnose({}) == diagnosis::none);

    // Three attempts, victim pinned to the target: super-stuck.
    std::vector<history_entry> stuck{
        attempt(0.001, {edit(true, 0.5)}),
        attempt(0.002, {edit(true, 0.5)}),
        attempt(0.004, {edit(true, 0.5)}),
    };
    CHECK(meta_diagnose(stuck) == diagnosis::super_stuck);

    // Two attempts with the same deltas: too few for super-stuck; similar
    // icons but no effect.
    std::vector<history_entry> two(stuck.begin(), stuck.begin() + 2);
    CHECK(meta_diagnose(two) == diagnosis::high_cosine_no_effect);

    // Best delta inside [0.005, 0.05): near miss, regardless of attempt count.
    std::vector<history_entry> near{
        attempt(0.001, {edit(true, 0.5)}),
        attempt(0.03, {edit(true, 0.5)}),
        attempt(0.002, {edit(true, 0.5)}),
    };
    CHECK(meta_diagnose(near) == diagnosis::near_miss);

    // Majority of proposals rejected by the cosine gate. One delta sits above
    // the near-miss band so neither stuck nor near-miss preempts.
    std::vector<history_entry> trivial{
        attempt(0.0, {edit(false, 0.7, gate_reject::cosine), edit(false, 0.8, gate_reject::cosine),
                      edit(true, 0.5)}),
        attempt(0.06, {edit(false, 0.65, gate_reject::cosine)}),
        attempt(0.0, {edit(false, 0.61, gate_reject::cosine)}),
        attempt(0.0, {edit(true, 0.5)}),
    };
    CHECK(meta_diagnose(trivial) == diagnosis::trivial_filter);

    // Applied icons look nothing like the target.
    std::vector<history_entry> low{
        attempt(0.0, {edit(true, 0.1), edit(true, 0.2)}),
        attempt(0.0, {edit(true, 0.15)}),
        attempt(0.06, {edit(true, 0.2)}), // delta >= 0.05 blocks near-miss
    };
    CHECK(meta_diagnose(low) == diagnosis::low_cosine);

    // Ran out of named conditions: none.
    std::vector<history_entry> vague{
        attempt(0.2, {edit(true, 0.5)}),
        attempt(0.3, {edit(true, 0.45)}),
    };
    CHECK(meta_diagnose(vague) == diagnosis::none);

    // Precedence: super-stuck beats a trivial-filter pattern.
    std::vector<history_entry> both{
        attempt(0.001, {edit(false, 0.7, gate_reject::cosine)}),
        attempt(0.002, {edit(false, 0.7, gate_reject::cosine)}),
        attempt(0.001, {edit(false, 0.7, gate_reject::cosine)}),
    };
    CHECK(meta_diagnose(both) == diagnosis::super_stuck);

    // low-cosine/high-cosine require at least one applied edit.
    std::vector<history_entry> no_applied{
        attempt(0.0, {edit(false, 0.7, gate_reject::iou)}),
    };
    CHECK(meta_diagnose(no_applied) == diagnosis::none);
}

TEST_CASE("meta_diagnose boundary values") {
    diagnose_thresholds th;
    // max delta exactly 0.005 is not stuck (strict <) but is near-miss.
    std::vector<history_entry> h{
        attempt(0.005, {edit(true, 0.5)}),
        attempt(0.0, {edit(true, 0.5)}),
        attempt(0.0, {edit(true, 0.5)}),
    };
    CHECK(meta_diagnose(h, th) == diagnosis::near_miss);
    // max delta exactly 0.05 leaves the near-miss band.
    h[0].delta = 0.05;
    CHECK(meta_diagnose(h, th) != diagnosis::near_miss);
    // Rejection share exactly 0.5 is not trivial-filter (strict >).
    std::vector<history_entry> half{
        attempt(0.0, {edit(false, 0.7, gate_reject::cosine), edit(true, 0.5)}),
    };
    CHECK(meta_diagnose(half) != diagnosis::trivial_filter);
}

TEST_CASE("select_strategy mapping and rotation") {
    CHECK(select_strategy(diagnosis::super_stuck, 1) == strategy::E);
    CHECK(select_strategy(diagnosis::near_miss, 4) == strategy::D);
    CHECK(select_strategy(diagnosis::trivial_filter, 2) == strategy::A);
    CHECK(select_strategy(diagnosis::low_cosine, 5) == strategy::A);
    CHECK(select_strategy(diagnosis::high_cosine_no_effect, 3) == strategy::F);
    // Undiagnosed: rotation keyed by depth.
    CHECK(select_strategy(diagnosis::none, 1) == strategy::A);
    CHECK(select_strategy(diagnosis::none, 2) == strategy::B);
    CHECK(select_strategy(diagnosis::none, 6) == strategy::F);
    CHECK(select_strategy(diagnosis::none, 7) == strategy::A);
    // Overrides are table-driven.
    strategy_table table;
    table.overrides[diagnosis::super_stuck] = strategy::B;
    CHECK(select_strategy(diagnosis::super_stuck, 1, table) == strategy::B);
}

TEST_CASE("diversity tokens: 8-char alphanumeric, distinct across passes") {
    std::set<std::string> seen;
    for (int d = 1; d <= 5; ++d) {
        for (int p = 1; p <= 3; ++p) {
            auto tok = make_diversity_token("s001", d, p, 42);
            CHECK(tok.size() == 8);
            for (char c : tok) CHECK((std::isalnum(static_cast<unsigned char>(c)) != 0));
            CHECK(tok == make_diversity_token("s001", d, p, 42)); // stable
            seen.insert(tok);
        }
    }
    CHECK(seen.size() == 15);
    CHECK(make_diversity_token("s001", 1, 1, 42) != make_diversity_token("s002", 1, 1, 42));
    CHECK(make_diversity_token("s001", 1, 1, 42) != make_diversity_token("s001", 1, 1, 43));
}

TEST_CASE("parse_edit_plan accepts a well-formed block with prose around it") {
    std::string raw = "<thought>target is an icon, use strategy A</thought>\n"
                      "BEGIN_EDIT_PLAN\n"
                      "{\"strategy\": \"A: twins\", \"edits\": ["
                      "{\"element_desc\": \"ellipsis menu icon\", \"bbox\": [0.1, 0.2, 0.2, 0.3]},"
                      "{\"element_desc\": \"search magnifier\", \"bbox\": [0.5, 0.2, 0.6, 0.3]}"
                      "]}\n"
                      "END_EDIT_PLAN\ntrailing chatter";
    auto plan = parse_edit_plan(raw, 3);
    CHECK(plan.strategy_note == "A: twins");
    REQUIRE(plan.edits.size() == 2);
    CHECK(plan.edits[0].element_desc == "ellipsis menu icon");
    CHECK(plan.edits[1].bbox.x1 == doctest::Approx(0.5));
}

TEST_CASE("parse_edit_plan clamps to max_edits, first ones win") {
    std::string raw = "BEGIN_EDIT_PLAN\n{\"strategy\":\"B\",\"edits\":[";
    for (int i = 0; i < 5; ++i) {
        if (i) raw += ",";
        raw += "{\"element_desc\":\"icon " + std::to_string(i) +
               "\",\"bbox\":[0.1,0.1,0.2,0.2]}";
    }
    raw += "]}\nEND_EDIT_PLAN";
    auto plan = parse_edit_plan(raw, 3);
    REQUIRE(plan.edits.size() == 3);
    CHECK(plan.edits[2].element_desc == "icon 2");
}

TEST_CASE("parse_edit_plan drops invalid bboxes, keeps survivors") {
    std::string raw = "BEGIN_EDIT_PLAN\n{\"edits\":["
                      "{\"element_desc\":\"bad order\",\"bbox\":[0.5,0.1,0.2,0.2]},"
                      "{\"element_desc\":\"out of range\",\"bbox\":[0.1,0.1,1.2,0.2]},"
                      "{\"element_desc\":\"good\",\"bbox\":[0.1,0.1,0.2,0.2]}"
                      "]}\nEND_EDIT_PLAN";
    auto plan = parse_edit_plan(raw, 3);
    REQUIRE(plan.edits.size() == 1);
    CHECK(plan.edits[0].element_desc == "good");
}

TEST_CASE("parse_edit_plan error cases") {
    CHECK_THROWS_AS(parse_edit_plan("no block here", 3), error);
    CHECK_THROWS_AS(parse_edit_plan("BEGIN_EDIT_PLAN\n{not json}\nEND_EDIT_PLAN", 3), error);
    CHECK_THROWS_AS(parse_edit_plan("BEGIN_EDIT_PLAN\n{\"edits\":[]}\nEND_EDIT_PLAN", 3), error);
    CHECK_THROWS_AS(parse_edit_plan("BEGIN_EDIT_PLAN\n{\"edits\":["
                                    "{\"element_desc\":\"x\",\"bbox\":[0.5,0.1,0.2,0.2]}"
                                    "]}\nEND_EDIT_PLAN",
                                    3),
                    error);
    CHECK_THROWS_AS(parse_edit_plan("BEGIN_EDIT_PLAN\n{\"edits\":[...", 3), error);
    try {
        parse_edit_plan("no block", 3);
    } catch (const error& e) {
        CHECK(e.code() == errc::parse);
    }
}

TEST_CASE("render_edit_plan and parse_edit_plan round trip") {
    edit_proposal p;
    p.strategy_note = "D: position shift";
    p.edits.push_back({"keypad digit tile", {0.125, 0.25, 0.3125, 0.375}});
    p.edits.push_back({"calculator key button", {0.01, 0.02, 0.11, 0.13}});
    auto back = parse_edit_plan(render_edit_plan(p), 3);
    CHECK(back.strategy_note == p.strategy_note);
    REQUIRE(back.edits.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.edits[i].element_desc == p.edits[i].element_desc);
        CHECK(back.edits[i].bbox == p.edits[i].bbox);
    }
}

TEST_CASE("random_proposal ranges, overlap freedom, determinism") {
    norm_box gt{0.45, 0.45, 0.55, 0.55};
    image_dims dims{1000, 800};
    std::vector<std::int64_t> pool{0, 1, 2, 3, 4, 5, 6, 7};
    pixel_rect gt_px = to_pixel_rect(gt, dims);
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        auto p = random_proposal(gt, dims, pool, seed, 3);
        CHECK(p.edits.size() >= 1);
        CHECK(p.edits.size() <= 3);
        for (const auto& e : p.edits) {
            CHECK(parse_icon_ref(e.element_desc).has_value());
            CHECK(e.bbox.valid());
            CHECK(e.bbox.width() >= 0.03);
            CHECK(e.bbox.width() <= 0.20);
            CHECK(e.bbox.height() >= 0.03);
            CHECK(e.bbox.height() <= 0.20);
            pixel_rect r = to_pixel_rect(e.bbox, dims);
            bool overlaps = r.x < gt_px.x + gt_px.w && gt_px.x < r.x + r.w &&
                            r.y < gt_px.y + gt_px.h && gt_px.y < r.y + r.h;
            CHECK_FALSE(overlaps);
        }
    }
    auto a = random_proposal(gt, dims, pool, 7, 3);
    auto b = random_proposal(gt, dims, pool, 7, 3);
    REQUIRE(a.edits.size() == b.edits.size());
    for (std::size_t i = 0; i < a.edits.size(); ++i) {
        CHECK(a.edits[i].element_desc == b.edits[i].element_desc);
        CHECK(a.edits[i].bbox == b.edits[i].bbox);
    }
}

TEST_CASE("random_proposal infeasible placement raises") {
    // gt covering nearly the whole screen leaves nowhere to stand.
    norm_box gt{0.001, 0.001, 0.999, 0.999};
    CHECK_THROWS_AS(random_proposal(gt, {1000, 1000}, {0}, 1, 3), error);
    try {
        random_proposal(gt, {1000, 1000}, {0}, 1, 3);
    } catch (const error& e) {
        CHECK(e.code() == errc::placement_infeasible);
    }
}

TEST_CASE("build_prompt substitutes every placeholder") {
    auto templates = prompt_templates::load(DECOY_TEMPLATE_DIR);
    attack_sample s = make_sample();
    screenshot carried = textured_icon(320, 200, 5);
    std::vector<history_entry> history{
        attempt(0.4786, {edit(true, 0.33, gate_reject::none, "back arrow")}, true, 1, 1),
        attempt(0.0456, {edit(true, 0.31, gate_reject::none, "search magnifier")}, false, 1, 2),
    };
    editor_options opts;
    auto bundle = build_prompt(s, carried, history, strategy::D, "a1b2c3d4", 2, 1, templates, opts);

    CHECK(bundle.user_text.find("open the settings panel") != std::string::npos);
    CHECK(bundle.user_text.find("320") != std::string::npos);
    CHECK(bundle.user_text.find("200") != std::string::npos);
    CHECK(bundle.user_text.find("[0.1810, 0.7720, 0.4350, 0.8440]") != std::string::npos);
    CHECK(bundle.user_text.find("IoU < 0.10") != std::string::npos);
    CHECK(bundle.user_text.find("cosine < 0.60") != std::string::npos);
    CHECK(bundle.user_text.find("depth=2, pass=1") != std::string::npos);
    CHECK(bundle.user_text.find("[uid=a1b2c3d4]") != std::string::npos);
    CHECK(bundle.user_text.find("Strategy-D") != std::string::npos);
    CHECK(bundle.user_text.find("* LEFT:") != std::string::npos);
    CHECK(bundle.user_text.find("[d01_p01] [OK] SUCCESS!") != std::string::npos);
    CHECK(bundle.user_text.find("dist=0.4786") != std::string::npos);
    CHECK(bundle.user_text.find("{instruction}") == std::string::npos);
    CHECK(bundle.user_text.find("{zones_block}") == std::string::npos);
    CHECK(bundle.user_text.find("{history_block}") == std::string::npos);
    // System prompt ships with strategies present.
    CHECK(bundle.system_text.find("Strategy A: VISUAL TWIN CLUSTER") != std::string::npos);
    CHECK(bundle.system_text.find("<<STRATEGIES>>") == std::string::npos);
    CHECK_FALSE(bundle.image_png.empty());
}

TEST_CASE("build_prompt history cap keeps the most recent 15") {
    auto templates = prompt_templates::load(DECOY_TEMPLATE_DIR);
    attack_sample s = make_sample();
    screenshot carried = textured_icon(100, 100, 6);
    std::vector<history_entry> history;
    for (int d = 1; d <= 6; ++d)
        for (int p = 1; p <= 3; ++p)
            history.push_back(attempt(0.2, {edit(true, 0.5)}, false, d, p));
    editor_options opts;
    auto bundle = build_prompt(s, carried, history, strategy::A, "tok", 7, 1, templates, opts);
    // 18 attempts, cap 15: the first depth's entries d01_p01..p03 fall out.
    CHECK(bundle.user_text.find("[d01_p01]") == std::string::npos);
    CHECK(bundle.user_text.find("[d01_p03]") == std::string::npos);
    CHECK(bundle.user_text.find("[d02_p01]") != std::string::npos);
    CHECK(bundle.user_text.find("[d06_p03]") != std::string::npos);
}

TEST_CASE("build_prompt ablations") {
    auto templates = prompt_templates::load(DECOY_TEMPLATE_DIR);
    attack_sample s = make_sample();
    screenshot carried = textured_icon(100, 100, 7);
    std::vector<history_entry> history{
        attempt(0.3, {edit(true, 0.5, gate_reject::none, "search magnifier")}, true, 1, 1)};

    editor_options no_history;
    no_history.include_history = false;
    auto nh = build_prompt(s, carried, history, strategy::A, "tok", 2, 1, templates, no_history);
    CHECK(nh.user_text.find("[History of Previous Attempts]") == std::string::npos);
    CHECK(nh.user_text.find("Suggested approach") == std::string::npos);
    CHECK(nh.system_text.find("Strategy A: VISUAL TWIN CLUSTER") != std::string::npos);

    editor_options no_strategy;
    no_strategy.include_strategy = false;
    auto ns = build_prompt(s, carried, history, strategy::A, "tok", 2, 1, templates, no_strategy);
    CHECK(ns.user_text.find("Suggested approach") == std::string::npos);
    CHECK(ns.user_text.find("[History of Previous Attempts]") != std::string::npos);
    CHECK(ns.system_text.find("Strategy A: VISUAL TWIN CLUSTER") == std::string::npos);
    CHECK(ns.system_text.find("OUTPUT FORMAT") != std::string::npos);
}

TEST_CASE("overused descriptions need three uses") {
    std::vector<history_entry> history;
    for (int i = 0; i < 3; ++i)
        history.push_back(attempt(0.0, {edit(true, 0.3, gate_reject::none, "back arrow"),
                                        edit(true, 0.3, gate_reject::none, "unique " + std::to_string(i))}));
    auto over = overused_descriptions(history, 3);
    REQUIRE(over.size() == 1);
    CHECK(over[0] == "back arrow");
}

TEST_CASE("history renderer shows rejections and lineage") {
    std::vector<history_entry> history{attempt(
        0.0456,
        {edit(false, 0.72, gate_reject::cosine, "three black dots stacked"),
         edit(false, std::nullopt, gate_reject::iou, "overlapping icon"),
         edit(true, 0.18, gate_reject::none, "submit button icon")},
        false, 2, 3)};
    history[0].built_on_depth = 1;
    history[0].built_on_pass = 2;
    auto text = render_history_block(history, 15);
    CHECK(text.find("[d02_p03] [built-on:d01_p02] WEAK_EFFECT") != std::string::npos);
    CHECK(text.find("rejected(cos=0.72>=filter)") != std::string::npos);
    CHECK(text.find("rejected(iou=") != std::string::npos);
    CHECK(text.find("applied(cos-low,looks-diff)") != std::string::npos);
    CHECK(text.find("-> DIAGNOSIS: icons look UNLIKE target") != std::string::npos);
}
