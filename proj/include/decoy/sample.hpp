#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "decoy/geometry.hpp"
#include "decoy/image.hpp"

namespace decoy {

// One grounding task: a screenshot, the instruction given to the victim, and
// the ground-truth element the victim is supposed to click.
struct attack_sample {
    std::string id;
    std::string platform; // mobile | desktop | web
    std::string instruction;
    norm_box gt_box;
    std::filesystem::path image_path;
    // When tagged "icon" the non-triviality gate compares candidate icons
    // against the gt crop; other kinds skip the visual-similarity check.
    std::optional<std::string> target_kind;

    screenshot load_image() const { return load_png_file(image_path); }
};

// Parses a JSONL dataset; image paths resolve relative to the file.
std::vector<attack_sample> load_samples(const std::filesystem::path& jsonl_path);

} // namespace decoy
