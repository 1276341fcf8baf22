#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "decoy/backends.hpp"
#include "decoy/editor.hpp"
#include "decoy/embedding.hpp"
#include "decoy/error.hpp"
#include "decoy/http_backends.hpp"
#include "decoy/image.hpp"
#include "decoy/metrics.hpp"
#include "decoy/overlap.hpp"
#include "decoy/pool.hpp"
#include "decoy/runio.hpp"
#include "decoy/sample.hpp"
#include "decoy/search.hpp"
#include "decoy/victim.hpp"

namespace {

using namespace decoy;
using nlohmann::json;

json load_json_file(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(errc::config, path.string() + ": " + e.what());
    }
}

http_endpoint endpoint_from(const json& j, const char* default_path) {
    http_endpoint ep;
    try {
        ep.base_url = j.at("url").get<std::string>();
        ep.path = j.value("path", default_path);
        ep.model = j.value("model", "");
        ep.token_env = j.value("token_env", "");
        ep.max_in_flight = j.value("max_in_flight", 4);
        ep.max_retries = j.value("max_retries", 3);
        ep.backoff_ms = j.value("backoff_ms", 250);
        ep.connect_timeout_s = j.value("connect_timeout_s", 10);
        ep.read_timeout_s = j.value("read_timeout_s", 120);
    } catch (const json::exception& e) {
        fail(errc::config, std::string("endpoint: ") + e.what());
    }
    return ep;
}

std::unique_ptr<embedding_backend> build_embedder(const json& j, std::string& id) {
    std::string kind = j.value("kind", "deterministic");
    try {
        if (kind == "deterministic") {
            auto key = j.value("key", std::uint64_t{0});
            int dim = j.value("dim", 256);
            std::vector<cosine_fixture> fixtures;
            for (const auto& f : j.value("fixtures", json::array()))
                fixtures.push_back({f.at("key").get<std::string>(),
                                    f.at("anchor").get<std::string>(),
                                    f.at("cosine").get<double>()});
            id = "deterministic:key=" + std::to_string(key) + ",dim=" + std::to_string(dim);
            return std::make_unique<deterministic_embedder>(key, dim, std::move(fixtures));
        }
        if (kind == "http") {
            auto ep = endpoint_from(j, "/v1/embeddings");
            int dim = j.at("dim").get<int>();
            id = "http:" + ep.base_url + ep.path;
            return std::make_unique<http_embedder>(std::move(ep), dim);
        }
    } catch (const json::exception& e) {
        fail(errc::config, std::string("embedder: ") + e.what());
    }
    fail(errc::config, "unknown embedder kind: " + kind);
}

std::unique_ptr<editor_backend> build_editor(const json& j, const std::filesystem::path& base,
                                             std::string& id) {
    std::string kind = j.value("kind", "scripted-strategic");
    try {
        if (kind == "scripted-strategic") {
            scripted_strategic_options o;
            o.related_descs = j.at("related_descs").get<std::vector<std::string>>();
            o.edits_per_attempt = j.value("edits_per_attempt", 2);
            o.icon_side = j.value("icon_side", 0.05);
            o.target_delta = j.value("target_delta", 0.05);
            id = "scripted-strategic";
            return std::make_unique<scripted_strategic_editor>(std::move(o));
        }
        if (kind == "replay") {
            std::vector<std::string> script;
            if (j.contains("script")) {
                script = j.at("script").get<std::vector<std::string>>();
            } else {
                // blocks separated by lines of exactly "---"
                std::string text = read_text_file(base / j.at("script_file").get<std::string>());
                std::string cur;
                std::size_t pos = 0;
                while (pos <= text.size()) {
                    std::size_t nl = text.find('\n', pos);
                    std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
                    if (line == "---") {
                        script.push_back(cur);
                        cur.clear();
                    } else {
                        cur += line;
                        cur += '\n';
                    }
                    if (nl == std::string::npos) break;
                    pos = nl + 1;
                }
                if (!cur.empty()) script.push_back(cur);
            }
            id = "replay";
            return std::make_unique<replay_editor>(std::move(script));
        }
        if (kind == "http") {
            auto ep = endpoint_from(j, "/v1/chat/completions");
            id = "http:" + ep.base_url + ep.path;
            return std::make_unique<http_editor>(std::move(ep));
        }
    } catch (const json::exception& e) {
        fail(errc::config, std::string("editor: ") + e.what());
    }
    fail(errc::config, "unknown editor kind: " + kind);
}

std::unique_ptr<victim_backend> build_victim(const json& j, response_format format,
                                             std::string& id) {
    std::string kind = j.value("kind", "scripted");
    try {
        if (kind == "scripted") {
            std::string behavior = j.at("behavior").get<std::string>();
            id = "scripted:" + behavior;
            return make_scripted_victim(behavior, format);
        }
        if (kind == "http") {
            auto ep = endpoint_from(j, "/v1/chat/completions");
            id = "http:" + ep.base_url + ep.path;
            return std::make_unique<http_victim>(std::move(ep));
        }
    } catch (const json::exception& e) {
        fail(errc::config, std::string("victim: ") + e.what());
    }
    fail(errc::config, "unknown victim kind: " + kind);
}

// Serializes calls to backends that keep internal call state (replay scripts).
class locked_editor final : public editor_backend {
public:
    locked_editor(editor_backend& inner, std::mutex& mu) : inner_(inner), mu_(mu) {}
    std::string propose(const prompt_bundle& b, const editor_call_context& c) override {
        std::lock_guard lock(mu_);
        return inner_.propose(b, c);
    }

private:
    editor_backend& inner_;
    std::mutex& mu_;
};

class locked_victim final : public victim_backend {
public:
    locked_victim(victim_backend& inner, std::mutex& mu) : inner_(inner), mu_(mu) {}
    std::string complete(const victim_query& q) override {
        std::lock_guard lock(mu_);
        return inner_.complete(q);
    }

private:
    victim_backend& inner_;
    std::mutex& mu_;
};

struct pool_build_args {
    std::string src;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t default_quota = 1000;
    int hamming = 4;
    std::vector<std::string> quotas;
};

int cmd_pool_build(const pool_build_args& a) {
    pool_build_options opts;
    opts.seed = a.seed;
    opts.default_quota = a.default_quota;
    opts.near_dup_hamming = a.hamming;
    for (const auto& q : a.quotas) {
        auto eq = q.find('=');
        if (eq == std::string::npos || eq == 0)
            fail(errc::config, "--quota wants <source>=<count>, got: " + q);
        try {
            opts.quotas[q.substr(0, eq)] = std::stoull(q.substr(eq + 1));
        } catch (const std::exception&) {
            fail(errc::config, "--quota wants <source>=<count>, got: " + q);
        }
    }
    auto manifest = build_pool(a.src, a.out, opts);
    std::size_t kept = manifest.total;
    std::cout << "pool: " << kept << " icons from " << manifest.sources.size() << " sources -> "
              << a.out << "\n";
    return 0;
}

struct attack_args {
    std::string config;
    std::optional<std::string> attack;
    std::optional<std::string> mode;
    std::optional<int> depth;
    std::optional<int> passes;
    std::optional<int> pass_cap;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> label;
    std::vector<std::string> ablate;
    bool save_composites = false;
    bool resume = false;
};

struct attack_config {
    std::filesystem::path samples;
    std::filesystem::path pool;
    std::filesystem::path profile;
    std::filesystem::path templates;
    std::filesystem::path out;
    std::string label;
    json embedder_json;
    json editor_json;
    json victim_json;
    search_config search;
    int workers = 1;
    bool resume = false;
    bool save_composites = false;
};

std::filesystem::path resolve_profile(const std::string& name,
                                      const std::filesystem::path& base) {
    std::filesystem::path p(name);
    if (p.is_absolute() && std::filesystem::exists(p)) return p;
    if (std::filesystem::exists(base / p)) return base / p;
    auto shipped = std::filesystem::path(DECOY_PROFILE_DIR) / (name + ".json");
    if (std::filesystem::exists(shipped)) return shipped;
    fail(errc::config, "victim profile not found: " + name);
}

attack_config parse_attack_config(const std::filesystem::path& path) {
    json j = load_json_file(path);
    auto base = path.parent_path();
    auto respath = [&](const std::string& s) {
        std::filesystem::path p(s);
        return p.is_absolute() ? p : base / p;
    };
    attack_config cfg;
    try {
        cfg.samples = respath(j.at("samples").get<std::string>());
        cfg.pool = respath(j.at("pool").get<std::string>());
        cfg.profile = resolve_profile(j.at("profile").get<std::string>(), base);
        cfg.templates =
            j.contains("templates") ? respath(j.at("templates").get<std::string>())
                                    : std::filesystem::path(DECOY_TEMPLATE_DIR);
        if (j.contains("out")) cfg.out = respath(j.at("out").get<std::string>());
        cfg.label = j.value("label", "");
        cfg.embedder_json = j.value("embedder", json::object());
        cfg.editor_json = j.value("editor", json::object());
        cfg.victim_json = j.value("victim", json::object());
        cfg.workers = j.value("workers", 1);
        cfg.resume = j.value("resume", false);
        cfg.save_composites = j.value("save_composites", false);

        const json s = j.value("search", json::object());
        cfg.search.attack = parse_attack_kind(s.value("attack", "strategic"));
        cfg.search.mode = parse_run_mode(s.value("mode", "early-stop"));
        cfg.search.depth = s.value("depth", 5);
        cfg.search.passes = s.value("passes", 3);
        cfg.search.max_edits = s.value("max_edits", 3);
        cfg.search.pass_cap = s.value("pass_cap", 0);
        cfg.search.history_cap = s.value("history_cap", 15);
        cfg.search.seed = s.value("seed", std::uint64_t{0});
        cfg.search.include_history = s.value("include_history", true);
        cfg.search.include_strategy = s.value("include_strategy", true);
        cfg.search.thresholds.tau_iou = s.value("tau_iou", cfg.search.thresholds.tau_iou);
        cfg.search.thresholds.tau_cos = s.value("tau_cos", cfg.search.thresholds.tau_cos);
    } catch (const json::exception& e) {
        fail(errc::config, path.string() + ": " + e.what());
    }
    return cfg;
}

int cmd_attack(const attack_args& a) {
    attack_config cfg = parse_attack_config(a.config);
    if (a.attack) cfg.search.attack = parse_attack_kind(*a.attack);
    if (a.mode) cfg.search.mode = parse_run_mode(*a.mode);
    if (a.depth) cfg.search.depth = *a.depth;
    if (a.passes) cfg.search.passes = *a.passes;
    if (a.pass_cap) cfg.search.pass_cap = *a.pass_cap;
    if (a.seed) cfg.search.seed = *a.seed;
    if (a.workers) cfg.workers = *a.workers;
    if (a.out) cfg.out = *a.out;
    if (a.label) cfg.label = *a.label;
    if (a.save_composites) cfg.save_composites = true;
    if (a.resume) cfg.resume = true;
    for (const auto& ab : a.ablate) {
        if (ab == "no-history")
            cfg.search.include_history = false;
        else if (ab == "no-strategy")
            cfg.search.include_strategy = false;
        else
            fail(errc::config, "unknown ablation: " + ab);
    }

    cfg.search.validate();
    if (cfg.workers < 1) fail(errc::config, "workers must be >= 1");
    if (cfg.out.empty()) fail(errc::config, "no output directory (config `out` or --out)");
    if (cfg.label.empty())
        cfg.label = std::string(attack_kind_name(cfg.search.attack)) + "-" +
                    run_mode_name(cfg.search.mode);
    const std::pair<const char*, const std::filesystem::path*> required_paths[] = {
        {"samples", &cfg.samples}, {"pool", &cfg.pool}, {"templates", &cfg.templates}};
    for (const auto& [what, p] : required_paths)
        if (!std::filesystem::exists(*p))
            fail(errc::config, std::string(what) + " path does not exist: " + p->string());

    auto samples = load_samples(cfg.samples);
    if (samples.empty()) fail(errc::config, "sample set is empty: " + cfg.samples.string());

    auto pool = pool_reader::open(cfg.pool);
    std::string embedder_id, editor_id = "none", victim_id;
    auto embedder = build_embedder(cfg.embedder_json, embedder_id);
    overlapper overlap(pool, *embedder, cfg.search.thresholds);
    overlap.build_index();

    auto profile = victim_profile::load(cfg.profile);
    auto victim = build_victim(cfg.victim_json, profile.format, victim_id);
    std::unique_ptr<editor_backend> editor;
    if (cfg.search.attack == attack_kind::strategic)
        editor = build_editor(cfg.editor_json, a.config.empty()
                                                   ? std::filesystem::path(".")
                                                   : std::filesystem::path(a.config).parent_path(),
                              editor_id);
    else
        editor = std::make_unique<replay_editor>(std::vector<std::string>{""});
    auto templates = prompt_templates::load(cfg.templates);

    if (cfg.save_composites) cfg.search.save_composites_dir = cfg.out / "composites";

    run_manifest m;
    m.label = cfg.label;
    m.attack = cfg.search.attack;
    m.mode = cfg.search.mode;
    m.depth = cfg.search.depth;
    m.passes = cfg.search.passes;
    m.max_edits = cfg.search.max_edits;
    m.pass_cap = cfg.search.pass_cap;
    m.include_history = cfg.search.include_history;
    m.include_strategy = cfg.search.include_strategy;
    m.seed = cfg.search.seed;
    m.profile_name = profile.name;
    m.editor_id = editor_id;
    m.victim_id = victim_id;
    m.embedder_id = embedder_id;
    m.samples_path = cfg.samples.string();
    m.pool_path = cfg.pool.string();
    write_manifest(cfg.out, m);

    // Replay scripts mutate a cursor; serialize them across workers. HTTP
    // backends synchronize internally and stay unwrapped.
    std::mutex editor_mu, victim_mu;
    editor_backend* editor_used = editor.get();
    victim_backend* victim_used = victim.get();
    std::optional<locked_editor> editor_lock;
    std::optional<locked_victim> victim_lock;
    if (cfg.workers > 1) {
        if (cfg.editor_json.value("kind", "scripted-strategic") != "http") {
            editor_lock.emplace(*editor, editor_mu);
            editor_used = &*editor_lock;
        }
        if (cfg.victim_json.value("kind", "scripted") != "http") {
            victim_lock.emplace(*victim, victim_mu);
            victim_used = &*victim_lock;
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> n_eligible{0}, n_ineligible{0}, n_errored{0}, n_skipped{0};
    std::atomic<bool> abort_run{false};
    std::mutex io_mu;
    std::exception_ptr config_error;

    auto process = [&](std::size_t i) {
        const attack_sample& s = samples[i];
        auto tag = "[" + std::to_string(i + 1) + "/" + std::to_string(samples.size()) + "] " +
                   s.id + ": ";
        auto log_file = cfg.out / "logs" / (s.id + ".jsonl");
        if (cfg.resume && sample_log_complete(log_file)) {
            ++n_skipped;
            std::lock_guard lock(io_mu);
            std::cout << tag << "skipped (complete log)\n";
            return;
        }
        sample_run_log log;
        log.sample_id = s.id;
        log.attack = cfg.search.attack;
        log.mode = cfg.search.mode;
        log.depth = cfg.search.depth;
        log.passes = cfg.search.passes;
        log.seed = derive_sample_seed(cfg.search.seed, s.id);
        log.gt_box = s.gt_box;
        std::string line;
        try {
            screenshot clean = load_png_file(s.image_path);
            log.dims = {clean.width, clean.height};
            eligibility e = check_eligibility(s, clean, profile, *victim_used);
            if (!e.eligible) {
                log.eligible = false;
                log.eligibility_errored = e.errored;
                log.eligibility_note = e.note;
                ++n_ineligible;
                if (e.errored) ++n_errored;
                line = tag + "ineligible (" + (e.note.empty() ? "clean miss" : e.note) + ")";
            } else {
                log = run_attack(s, clean, cfg.search, *editor_used, overlap, profile,
                                 *victim_used, templates);
                ++n_eligible;
                if (log.first_l1)
                    line = tag + "first-l1 at d" + std::to_string(log.first_l1->first) + " n" +
                           std::to_string(log.first_l1->second);
                else
                    line = tag + "no success in budget";
            }
        } catch (const error& e) {
            if (e.code() == errc::config) throw;
            log.eligible = false;
            log.eligibility_errored = true;
            log.eligibility_note = std::string(errc_name(e.code())) + ": " + e.what();
            ++n_errored;
            line = tag + "errored (" + log.eligibility_note + ")";
        }
        write_sample_log(cfg.out / "logs", log);
        std::lock_guard lock(io_mu);
        std::cout << line << "\n";
    };

    auto worker = [&] {
        for (;;) {
            if (abort_run.load()) return;
            std::size_t i = next.fetch_add(1);
            if (i >= samples.size()) return;
            try {
                process(i);
            } catch (...) {
                std::lock_guard lock(io_mu);
                if (!config_error) config_error = std::current_exception();
                abort_run.store(true);
                return;
            }
        }
    };

    int n_workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), samples.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (config_error) std::rethrow_exception(config_error);

    std::cout << "run '" << cfg.label << "': " << samples.size() << " samples, "
              << n_eligible.load() << " attacked, " << n_ineligible.load() << " ineligible ("
              << n_errored.load() << " errored), " << n_skipped.load() << " resumed\n"
              << "logs: " << (cfg.out / "logs").string() << "\n";
    return 0;
}

struct report_args {
    std::vector<std::string> runs;
    std::string out;
    bool post_success = false;
};

int cmd_report(const report_args& a) {
    std::vector<run_data> runs;
    for (const auto& dir : a.runs) runs.push_back(load_run(dir));
    if (a.post_success) {
        for (const auto& r : runs) {
            try {
                post_first_success(r.logs);
            } catch (const error& e) {
                if (e.code() == errc::wrong_mode)
                    fail(errc::wrong_mode,
                         "run '" + r.label + "': " + e.what() +
                             " (post-success persistence needs --mode full runs)");
                // no successes / no eligible samples: the report prints markers
            }
        }
    }
    emit_report(runs, a.out);
    std::cout << "report: " << (std::filesystem::path(a.out) / "summary.txt").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"decoy: harmless-icon injection attacks on GUI-agent grounding"};
    app.require_subcommand(1);

    auto* pool_cmd = app.add_subcommand("pool", "icon pool maintenance");
    pool_cmd->require_subcommand(1);
    pool_build_args pb;
    auto* build_cmd = pool_cmd->add_subcommand("build", "filter, dedup and store icon crops");
    build_cmd->add_option("--src", pb.src, "directory of <source>/*.png crops")->required();
    build_cmd->add_option("--out", pb.out, "pool output directory")->required();
    build_cmd->add_option("--seed", pb.seed, "reservoir sampling seed");
    build_cmd->add_option("--default-quota", pb.default_quota, "per-source icon cap");
    build_cmd->add_option("--quota", pb.quotas, "per-source override, <source>=<count>");
    build_cmd->add_option("--hamming", pb.hamming, "near-duplicate dhash distance");

    attack_args aa;
    auto* attack_cmd = app.add_subcommand("attack", "run an attack over a sample set");
    attack_cmd->add_option("--config", aa.config, "run config JSON")->required();
    attack_cmd->add_option("--attack", aa.attack, "strategic|random")
        ->check(CLI::IsMember({"strategic", "random"}));
    attack_cmd->add_option("--mode", aa.mode, "early-stop|full")
        ->check(CLI::IsMember({"early-stop", "full"}));
    attack_cmd->add_option("--depth", aa.depth, "search depth D");
    attack_cmd->add_option("--passes", aa.passes, "parallel passes N");
    attack_cmd->add_option("--pass-cap", aa.pass_cap, "run only the first N' passes");
    attack_cmd->add_option("--seed", aa.seed, "run seed");
    attack_cmd->add_option("--workers", aa.workers, "cross-sample parallelism");
    attack_cmd->add_option("--out", aa.out, "run output directory");
    attack_cmd->add_option("--label", aa.label, "run label for reports");
    attack_cmd->add_option("--ablate", aa.ablate, "no-history|no-strategy")
        ->check(CLI::IsMember({"no-history", "no-strategy"}));
    attack_cmd->add_flag("--save-composites", aa.save_composites, "write composited screenshots");
    attack_cmd->add_flag("--resume", aa.resume, "skip samples with complete logs");

    report_args ra;
    auto* report_cmd = app.add_subcommand("report", "aggregate one or more runs");
    report_cmd->add_option("--run", ra.runs, "run directory (repeatable)")->required();
    report_cmd->add_option("--out", ra.out, "report output directory")->required();
    report_cmd->add_flag("--post-success", ra.post_success,
                         "require the post-first-success section (full-mode runs only)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (build_cmd->parsed()) return cmd_pool_build(pb);
        if (attack_cmd->parsed()) return cmd_attack(aa);
        if (report_cmd->parsed()) return cmd_report(ra);
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == errc::config ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
