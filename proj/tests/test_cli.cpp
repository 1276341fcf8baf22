#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "decoy/hashes.hpp"
#include "decoy/image.hpp"
#include "decoy/pool.hpp"
#include "decoy/runio.hpp"
#include "test_support.hpp"

using namespace decoy;
using decoy::testing::scratch_dir;
using decoy::testing::textured_icon;
using nlohmann::json;

namespace {

int run_cli(const std::vector<std::string>& args, std::string* output = nullptr) {
    std::string cmd = DECOY_CLI_PATH;
    for (const auto& a : args) cmd += " '" + a + "'";
    cmd += " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string text;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) text.append(buf, n);
    int rc = pclose(pipe);
    if (output) *output = text;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct cli_fixture {
    scratch_dir tmp{"cli"};
    std::filesystem::path root = tmp.path();
    std::string instruction = "open the settings panel";
    std::vector<std::string> descs{"settings gear icon", "gear glyph", "cogwheel button"};
    std::vector<std::string> planted_keys; // img:<sha> of three pool blobs

    cli_fixture() {
        auto icons = root / "icons";
        for (int s = 0; s < 2; ++s) {
            auto dir = icons / ("source" + std::to_string(s));
            std::filesystem::create_directories(dir);
            for (int i = 0; i < 20; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "icon_%02d.png", i);
                save_png_file(dir / name, textured_icon(32, 32, s * 100 + i + 1));
            }
        }
        pool_build_options opts;
        opts.seed = 7;
        build_pool(icons, root / "pool", opts);

        auto pool = pool_reader::open(root / "pool");
        REQUIRE(pool.size() >= 10);
        for (int i = 0; i < 3; ++i) {
            auto bytes = pool.get(pool.records()[static_cast<std::size_t>(i)].id);
            planted_keys.push_back("img:" + sha256_hex(bytes));
        }

        std::string samples;
        for (int i = 1; i <= 5; ++i) {
            char id[8];
            std::snprintf(id, sizeof id, "s%02d", i);
            auto clean = textured_icon(320, 200, 4000 + i);
            save_png_file(root / (std::string(id) + ".png"), clean);
            json line = {{"id", id},
                         {"instruction", instruction},
                         {"gt_box", {0.45, 0.40, 0.55, 0.52}},
                         {"image", std::string(id) + ".png"},
                         {"target_kind", "icon"}};
            samples += line.dump() + "\n";
        }
        write_text_file(root / "samples.jsonl", samples);
    }

    json base_config(const std::string& behavior) const {
        json fixtures = json::array();
        for (const auto& key : planted_keys)
            fixtures.push_back(
                {{"key", key}, {"anchor", "text:" + instruction}, {"cosine", 0.5}});
        for (std::size_t i = 0; i < descs.size(); ++i)
            fixtures.push_back(
                {{"key", "text:" + descs[i]}, {"anchor", planted_keys[i]}, {"cosine", 0.9}});
        return json{
            {"samples", "samples.jsonl"},
            {"pool", "pool"},
            {"profile", "qwen3_vl"},
            {"embedder",
             {{"kind", "deterministic"}, {"key", 7}, {"dim", 256}, {"fixtures", fixtures}}},
            {"editor", {{"kind", "scripted-strategic"}, {"related_descs", descs}}},
            {"victim", {{"kind", "scripted"}, {"behavior", behavior}}},
            {"search", {{"depth", 3}, {"passes", 2}, {"seed", 11}}},
        };
    }

    std::filesystem::path write_config(const std::string& name, const json& cfg) const {
        write_text_file(root / name, cfg.dump(2) + "\n");
        return root / name;
    }
};

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

} // namespace

TEST_CASE("cli: usage and config errors exit 2") {
    std::string out;
    CHECK(run_cli({"--help"}, &out) == 0);
    CHECK(out.find("attack") != std::string::npos);

    CHECK(run_cli({}, &out) == 2);
    CHECK(run_cli({"attack", "--bogus-flag"}, &out) == 2);
    CHECK(run_cli({"attack", "--config", "/nonexistent/cfg.json"}, &out) != 0);
    CHECK(run_cli({"attack"}, &out) == 2); // --config required
    CHECK(run_cli({"report", "--out", "/tmp/x"}, &out) == 2);

    scratch_dir tmp("cli_err");
    write_text_file(tmp.path() / "broken.json", "{nope");
    CHECK(run_cli({"attack", "--config", (tmp.path() / "broken.json").string()}, &out) == 2);

    json cfg = {{"samples", "missing.jsonl"}, {"pool", "missing"}, {"profile", "qwen3_vl"}};
    write_text_file(tmp.path() / "cfg.json", cfg.dump());
    CHECK(run_cli({"attack", "--config", (tmp.path() / "cfg.json").string()}, &out) == 2);

    CHECK(run_cli({"attack", "--config", "x.json", "--ablate", "no-luck"}, &out) == 2);
    CHECK(run_cli({"attack", "--config", "x.json", "--mode", "sideways"}, &out) == 2);
}

TEST_CASE("cli: pool build is deterministic and rejects empty input") {
    cli_fixture fx;
    std::string out;
    int rc = run_cli({"pool", "build", "--src", (fx.root / "icons").string(), "--out",
                      (fx.root / "pool_a").string(), "--seed", "5"},
                     &out);
    CHECK(rc == 0);
    CHECK(out.find("pool:") != std::string::npos);
    CHECK(std::filesystem::exists(fx.root / "pool_a" / "manifest.json"));

    rc = run_cli({"pool", "build", "--src", (fx.root / "icons").string(), "--out",
                  (fx.root / "pool_b").string(), "--seed", "5"},
                 &out);
    CHECK(rc == 0);
    CHECK(slurp(fx.root / "pool_a" / "manifest.json") ==
          slurp(fx.root / "pool_b" / "manifest.json"));
    CHECK(slurp(fx.root / "pool_a" / "records.jsonl") ==
          slurp(fx.root / "pool_b" / "records.jsonl"));

    std::filesystem::create_directories(fx.root / "void");
    CHECK(run_cli({"pool", "build", "--src", (fx.root / "void").string(), "--out",
                   (fx.root / "pool_c").string()},
                  &out) == 2);
}

TEST_CASE("cli: seeded attack runs are byte-identical, resume skips complete logs") {
    cli_fixture fx;
    auto cfg = fx.write_config("attack.json",
                               fx.base_config("nearest-injected:cos=0.35,radius=0.30"));
    std::string out;

    int rc = run_cli({"attack", "--config", cfg.string(), "--mode", "full", "--out",
                      (fx.root / "run_a").string(), "--label", "strategic-full"},
                     &out);
    INFO(out);
    CHECK(rc == 0);
    CHECK(out.find("run 'strategic-full'") != std::string::npos);
    for (int i = 1; i <= 5; ++i) {
        char id[8];
        std::snprintf(id, sizeof id, "s%02d", i);
        CHECK(sample_log_complete(fx.root / "run_a" / "logs" / (std::string(id) + ".jsonl")));
    }

    rc = run_cli({"attack", "--config", cfg.string(), "--mode", "full", "--out",
                  (fx.root / "run_b").string(), "--label", "strategic-full"},
                 &out);
    CHECK(rc == 0);
    for (int i = 1; i <= 5; ++i) {
        char id[8];
        std::snprintf(id, sizeof id, "s%02d", i);
        auto rel = std::filesystem::path("logs") / (std::string(id) + ".jsonl");
        CHECK(slurp(fx.root / "run_a" / rel) == slurp(fx.root / "run_b" / rel));
    }

    // A different seed changes the logs.
    rc = run_cli({"attack", "--config", cfg.string(), "--mode", "full", "--seed", "12", "--out",
                  (fx.root / "run_c").string()},
                 &out);
    CHECK(rc == 0);
    CHECK(slurp(fx.root / "run_a" / "logs" / "s01.jsonl") !=
          slurp(fx.root / "run_c" / "logs" / "s01.jsonl"));

    // Resume: drop one log, the rest must not be recomputed.
    auto victim_log = fx.root / "run_a" / "logs" / "s03.jsonl";
    std::string s03_bytes = slurp(victim_log);
    std::filesystem::remove(victim_log);
    rc = run_cli({"attack", "--config", cfg.string(), "--mode", "full", "--out",
                  (fx.root / "run_a").string(), "--resume"},
                 &out);
    CHECK(rc == 0);
    CHECK(out.find("skipped (complete log)") != std::string::npos);
    CHECK(slurp(victim_log) == s03_bytes); // regenerated bit-exactly
    int skips = 0;
    for (std::size_t pos = 0; (pos = out.find("skipped", pos)) != std::string::npos; ++pos)
        ++skips;
    CHECK(skips == 4);
}

TEST_CASE("cli: reports aggregate runs; --post-success rejects early-stop runs") {
    cli_fixture fx;
    auto cfg = fx.write_config("attack.json",
                               fx.base_config("nearest-injected:cos=0.35,radius=0.30"));
    std::string out;

    CHECK(run_cli({"attack", "--config", cfg.string(), "--mode", "full", "--out",
                   (fx.root / "full_run").string(), "--label", "strategic-full"},
                  &out) == 0);
    CHECK(run_cli({"attack", "--config", cfg.string(), "--mode", "full", "--attack", "random",
                   "--out", (fx.root / "rand_run").string(), "--label", "random-full"},
                  &out) == 0);
    CHECK(run_cli({"attack", "--config", cfg.string(), "--mode", "early-stop", "--out",
                   (fx.root / "es_run").string(), "--label", "strategic-es"},
                  &out) == 0);

    int rc = run_cli({"report", "--run", (fx.root / "full_run").string(), "--run",
                      (fx.root / "rand_run").string(), "--out", (fx.root / "rep").string()},
                     &out);
    INFO(out);
    CHECK(rc == 0);
    std::string summary = slurp(fx.root / "rep" / "summary.txt");
    CHECK(summary.find("run: strategic-full") != std::string::npos);
    CHECK(summary.find("run: random-full") != std::string::npos);
    CHECK(summary.find("post-first-success:") != std::string::npos);
    CHECK(std::filesystem::exists(fx.root / "rep" / "curves" / "strategic-full_depth.csv"));
    CHECK(std::filesystem::exists(fx.root / "rep" / "curves" / "random-full_icons.csv"));

    // Identical rerun of the report.
    CHECK(run_cli({"report", "--run", (fx.root / "full_run").string(), "--run",
                   (fx.root / "rand_run").string(), "--out", (fx.root / "rep2").string()},
                  &out) == 0);
    CHECK(slurp(fx.root / "rep2" / "summary.txt") == summary);

    rc = run_cli({"report", "--run", (fx.root / "es_run").string(), "--out",
                  (fx.root / "rep3").string(), "--post-success"},
                 &out);
    CHECK(rc == 3);
    CHECK(out.find("full") != std::string::npos);

    // Without the flag the early-stop run reports fine.
    CHECK(run_cli({"report", "--run", (fx.root / "es_run").string(), "--out",
                   (fx.root / "rep4").string()},
                  &out) == 0);
    CHECK(slurp(fx.root / "rep4" / "summary.txt").find("not applicable") != std::string::npos);
}

TEST_CASE("cli: ablations and composites land in the manifest and run dir") {
    cli_fixture fx;
    auto cfg = fx.write_config("attack.json", fx.base_config("always-gt-center"));
    std::string out;

    int rc = run_cli({"attack", "--config", cfg.string(), "--out",
                      (fx.root / "ab_run").string(), "--ablate", "no-history",
                      "--save-composites", "--depth", "2", "--passes", "2"},
                     &out);
    INFO(out);
    CHECK(rc == 0);
    run_manifest m = read_manifest(fx.root / "ab_run");
    CHECK(m.include_history == false);
    CHECK(m.include_strategy == true);
    CHECK(m.depth == 2);
    CHECK(m.editor_id == "scripted-strategic");
    CHECK(m.victim_id == "scripted:always-gt-center");
    bool any_png = false;
    for (const auto& e :
         std::filesystem::directory_iterator(fx.root / "ab_run" / "composites"))
        if (e.path().extension() == ".png") any_png = true;
    CHECK(any_png);

    // always-gt-center never misses: no successes recorded.
    auto log = read_sample_log(fx.root / "ab_run" / "logs" / "s01.jsonl");
    CHECK_FALSE(log.first_l1.has_value());
    CHECK(log.eligible);

    // random attack needs no editor config
    json rnd = fx.base_config("always-gt-center");
    rnd.erase("editor");
    auto rcfg = fx.write_config("rnd.json", rnd);
    rc = run_cli({"attack", "--config", rcfg.string(), "--attack", "random", "--out",
                  (fx.root / "rnd_run").string(), "--depth", "2"},
                 &out);
    INFO(out);
    CHECK(rc == 0);
    run_manifest rm = read_manifest(fx.root / "rnd_run");
    CHECK(rm.editor_id == "none");
    CHECK(rm.attack == attack_kind::random);
}
