#include "decoy/runio.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "decoy/error.hpp"

namespace decoy {

using nlohmann::json;

namespace {

gate_reject parse_gate_reject(const std::string& name) {
    if (name == "none") return gate_reject::none;
    if (name == "iou") return gate_reject::iou;
    if (name == "cosine") return gate_reject::cosine;
    fail(errc::parse, "unknown gate rejection: " + name);
}

json box_to_json(const norm_box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

norm_box box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) fail(errc::parse, "bbox must be a 4-array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json parse_line(const std::string& line, const char* what) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        fail(errc::parse, std::string(what) + ": " + e.what());
    }
}

} // namespace

std::vector<attack_sample> load_samples(const std::filesystem::path& jsonl_path) {
    std::string text = read_text_file(jsonl_path);
    std::vector<attack_sample> samples;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = parse_line(line, ("samples line " + std::to_string(line_no)).c_str());
        attack_sample s;
        try {
            s.id = j.at("id").get<std::string>();
            s.platform = j.value("platform", std::string("web"));
            s.instruction = j.at("instruction").get<std::string>();
            s.gt_box = box_from_json(j.at("gt_box"));
            s.image_path = jsonl_path.parent_path() / j.at("image").get<std::string>();
            if (j.contains("target_kind")) s.target_kind = j["target_kind"].get<std::string>();
        } catch (const json::exception& e) {
            fail(errc::parse, "samples line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!s.gt_box.valid())
            fail(errc::parse, "samples line " + std::to_string(line_no) + ": malformed gt_box");
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string attempt_to_json(const attempt_record& a) {
    json j;
    j["type"] = "attempt";
    j["depth"] = a.depth;
    j["pass"] = a.pass;
    j["built_on"] = json::array({a.built_on_depth, a.built_on_pass});
    j["strategy"] = a.strategy_name;
    j["diagnosis"] = a.diagnosis_name;
    j["errored"] = a.errored;
    j["parsed"] = a.parsed;
    j["click"] = a.click ? json::array({a.click->x, a.click->y}) : json();
    j["delta"] = a.delta;
    j["l1"] = a.flags.l1;
    j["l2"] = a.flags.l2;
    j["digest"] = a.composite_digest;
    j["note"] = a.note;
    json edits = json::array();
    for (const auto& e : a.edits) {
        json je;
        je["desc"] = e.element_desc;
        je["bbox"] = box_to_json(e.placement);
        je["icon_id"] = e.icon_id;
        je["cos_query"] = e.cosine_to_query;
        je["cos_gt"] = e.cosine_to_gt_crop ? json(*e.cosine_to_gt_crop) : json();
        je["iou"] = e.iou_with_gt;
        je["accepted"] = e.accepted;
        je["reject"] = gate_reject_name(e.rejection);
        edits.push_back(std::move(je));
    }
    j["edits"] = std::move(edits);
    return j.dump();
}

attempt_record attempt_from_json(const std::string& line, image_dims dims) {
    json j = parse_line(line, "attempt record");
    attempt_record a;
    try {
        a.depth = j.at("depth").get<int>();
        a.pass = j.at("pass").get<int>();
        a.built_on_depth = j.at("built_on")[0].get<int>();
        a.built_on_pass = j.at("built_on")[1].get<int>();
        a.strategy_name = j.at("strategy").get<std::string>();
        a.diagnosis_name = j.at("diagnosis").get<std::string>();
        a.errored = j.at("errored").get<bool>();
        a.parsed = j.at("parsed").get<bool>();
        if (!j.at("click").is_null())
            a.click = pixel_point{j["click"][0].get<double>(), j["click"][1].get<double>(),
                                  dims.width, dims.height};
        a.delta = j.at("delta").get<double>();
        a.flags.l1 = j.at("l1").get<bool>();
        a.flags.l2 = j.at("l2").get<bool>();
        a.composite_digest = j.at("digest").get<std::string>();
        a.note = j.at("note").get<std::string>();
        for (const auto& je : j.at("edits")) {
            applied_edit e;
            e.element_desc = je.at("desc").get<std::string>();
            e.placement = box_from_json(je.at("bbox"));
            e.icon_id = je.at("icon_id").get<std::int64_t>();
            e.cosine_to_query = je.at("cos_query").get<double>();
            if (!je.at("cos_gt").is_null()) e.cosine_to_gt_crop = je["cos_gt"].get<double>();
            e.iou_with_gt = je.at("iou").get<double>();
            e.accepted = je.at("accepted").get<bool>();
            e.rejection = parse_gate_reject(je.at("reject").get<std::string>());
            a.edits.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        fail(errc::parse, std::string("attempt record: ") + e.what());
    }
    return a;
}

void write_sample_log(const std::filesystem::path& logs_dir, const sample_run_log& log) {
    std::filesystem::create_directories(logs_dir);
    json header;
    header["type"] = "header";
    header["sample"] = log.sample_id;
    header["attack"] = attack_kind_name(log.attack);
    header["mode"] = run_mode_name(log.mode);
    header["depth"] = log.depth;
    header["passes"] = log.passes;
    header["seed"] = log.seed;
    header["dims"] = json::array({log.dims.width, log.dims.height});
    header["gt_box"] = box_to_json(log.gt_box);
    header["eligible"] = log.eligible;
    header["eligibility_errored"] = log.eligibility_errored;
    header["eligibility_note"] = log.eligibility_note;

    json end;
    end["type"] = "end";
    end["complete"] = true;
    end["first_l1"] = log.first_l1 ? json::array({log.first_l1->first, log.first_l1->second})
                                   : json();
    end["stopped_early"] = log.stopped_early;
    end["carried_digests"] = log.carried_digests;

    std::string text = header.dump() + "\n";
    for (const auto& a : log.attempts) text += attempt_to_json(a) + "\n";
    text += end.dump() + "\n";

    auto final_path = logs_dir / (log.sample_id + ".jsonl");
    auto tmp_path = logs_dir / (log.sample_id + ".jsonl.tmp");
    write_text_file(tmp_path, text);
    std::filesystem::rename(tmp_path, final_path);
}

sample_run_log read_sample_log(const std::filesystem::path& file) {
    std::string text = read_text_file(file);
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    if (lines.size() < 2) fail(errc::store_corrupt, "run log too short: " + file.string());

    sample_run_log log;
    json header = parse_line(lines.front(), "log header");
    try {
        if (header.at("type") != "header") fail(errc::store_corrupt, "missing log header");
        log.sample_id = header.at("sample").get<std::string>();
        log.attack = parse_attack_kind(header.at("attack").get<std::string>());
        log.mode = parse_run_mode(header.at("mode").get<std::string>());
        log.depth = header.at("depth").get<int>();
        log.passes = header.at("passes").get<int>();
        log.seed = header.at("seed").get<std::uint64_t>();
        log.dims = {header.at("dims")[0].get<int>(), header.at("dims")[1].get<int>()};
        log.gt_box = box_from_json(header.at("gt_box"));
        log.eligible = header.at("eligible").get<bool>();
        log.eligibility_errored = header.at("eligibility_errored").get<bool>();
        log.eligibility_note = header.at("eligibility_note").get<std::string>();
    } catch (const json::exception& e) {
        fail(errc::store_corrupt, std::string("log header: ") + e.what());
    }

    json end = parse_line(lines.back(), "log end record");
    if (!end.contains("type") || end["type"] != "end" || end.value("complete", false) == false)
        fail(errc::store_corrupt, "run log has no end record: " + file.string());
    try {
        if (!end.at("first_l1").is_null())
            log.first_l1 = {end["first_l1"][0].get<int>(), end["first_l1"][1].get<int>()};
        log.stopped_early = end.at("stopped_early").get<bool>();
        log.carried_digests = end.at("carried_digests").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        fail(errc::store_corrupt, std::string("log end record: ") + e.what());
    }

    for (std::size_t i = 1; i + 1 < lines.size(); ++i)
        log.attempts.push_back(attempt_from_json(lines[i], log.dims));
    return log;
}

bool sample_log_complete(const std::filesystem::path& file) {
    std::error_code ec;
    if (!std::filesystem::exists(file, ec)) return false;
    try {
        std::string text = read_text_file(file);
        auto last_nl = text.find_last_not_of('\n');
        if (last_nl == std::string::npos) return false;
        auto start = text.rfind('\n', last_nl);
        std::string last = text.substr(start == std::string::npos ? 0 : start + 1,
                                       last_nl - (start == std::string::npos ? 0 : start + 1) + 1);
        json end = json::parse(last);
        return end.value("type", "") == "end" && end.value("complete", false);
    } catch (...) {
        return false;
    }
}

void write_manifest(const std::filesystem::path& run_dir, const run_manifest& m) {
    std::filesystem::create_directories(run_dir);
    json j;
    j["label"] = m.label;
    j["attack"] = attack_kind_name(m.attack);
    j["mode"] = run_mode_name(m.mode);
    j["depth"] = m.depth;
    j["passes"] = m.passes;
    j["max_edits"] = m.max_edits;
    j["pass_cap"] = m.pass_cap;
    j["include_history"] = m.include_history;
    j["include_strategy"] = m.include_strategy;
    j["seed"] = m.seed;
    j["profile"] = m.profile_name;
    j["editor"] = m.editor_id;
    j["victim"] = m.victim_id;
    j["embedder"] = m.embedder_id;
    j["samples"] = m.samples_path;
    j["pool"] = m.pool_path;
    write_text_file(run_dir / "manifest.json", j.dump(2) + "\n");
}

run_manifest read_manifest(const std::filesystem::path& run_dir) {
    json j;
    try {
        j = json::parse(read_text_file(run_dir / "manifest.json"));
    } catch (const json::exception& e) {
        fail(errc::config, std::string("run manifest: ") + e.what());
    }
    run_manifest m;
    try {
        m.label = j.at("label").get<std::string>();
        m.attack = parse_attack_kind(j.at("attack").get<std::string>());
        m.mode = parse_run_mode(j.at("mode").get<std::string>());
        m.depth = j.at("depth").get<int>();
        m.passes = j.at("passes").get<int>();
        m.max_edits = j.at("max_edits").get<int>();
        m.pass_cap = j.at("pass_cap").get<int>();
        m.include_history = j.at("include_history").get<bool>();
        m.include_strategy = j.at("include_strategy").get<bool>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.profile_name = j.at("profile").get<std::string>();
        m.editor_id = j.at("editor").get<std::string>();
        m.victim_id = j.at("victim").get<std::string>();
        m.embedder_id = j.at("embedder").get<std::string>();
        m.samples_path = j.at("samples").get<std::string>();
        m.pool_path = j.at("pool").get<std::string>();
    } catch (const json::exception& e) {
        fail(errc::config, std::string("run manifest: ") + e.what());
    }
    return m;
}

run_data load_run(const std::filesystem::path& run_dir) {
    run_manifest m = read_manifest(run_dir);
    run_data data;
    data.label = m.label;
    data.attack = m.attack;
    data.mode = m.mode;
    data.depth = m.depth;
    data.passes = m.passes;
    data.victim_name = m.victim_id;

    std::vector<std::filesystem::path> files;
    auto logs_dir = run_dir / "logs";
    if (std::filesystem::exists(logs_dir))
        for (const auto& entry : std::filesystem::directory_iterator(logs_dir))
            if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        if (sample_log_complete(f)) data.logs.push_back(read_sample_log(f));
    return data;
}

} // namespace decoy
