#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "decoy/metrics.hpp"
#include "decoy/search.hpp"

namespace decoy {

// One line of the attempt log; parse inverts exactly.
std::string attempt_to_json(const attempt_record& a);
attempt_record attempt_from_json(const std::string& line, image_dims dims);

// logs/<sample_id>.jsonl: a header line, one line per attempt, and an end
// line that marks the log complete. Rewritten atomically (temp + rename).
void write_sample_log(const std::filesystem::path& logs_dir, const sample_run_log& log);
sample_run_log read_sample_log(const std::filesystem::path& file);

// True when the file ends with a complete end record; resume skips these.
bool sample_log_complete(const std::filesystem::path& file);

struct run_manifest {
    std::string label;
    attack_kind attack = attack_kind::strategic;
    run_mode mode = run_mode::early_stop;
    int depth = 5;
    int passes = 3;
    int max_edits = 3;
    int pass_cap = 0;
    bool include_history = true;
    bool include_strategy = true;
    std::uint64_t seed = 0;
    std::string profile_name;
    std::string editor_id;
    std::string victim_id;
    std::string embedder_id;
    std::string samples_path;
    std::string pool_path;
};

void write_manifest(const std::filesystem::path& run_dir, const run_manifest& m);
run_manifest read_manifest(const std::filesystem::path& run_dir);

// Manifest plus every complete log under logs/, ordered by sample id.
run_data load_run(const std::filesystem::path& run_dir);

} // namespace decoy
