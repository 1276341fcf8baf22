#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "decoy/search.hpp"

namespace decoy {

// First miss-with-accepted-icons in (depth, pass) order, recomputed from the
// raw attempts rather than read off the logged index.
std::optional<std::pair<int, int>> first_success(const sample_run_log& log);

std::size_t eligible_count(const std::vector<sample_run_log>& logs);

// Fraction of eligible samples whose first success happens at depth <=
// max_depth. Zero eligible samples raise undefined-metric.
double asr_at_depth(const std::vector<sample_run_log>& logs, int max_depth);

// Fraction of eligible samples whose first success happens while the running
// total of accepted icons (inclusive of the succeeding attempt) is <=
// max_icons.
double asr_at_icons(const std::vector<sample_run_log>& logs, int max_icons);

struct budget_curve {
    std::string axis; // "depth" or "icons"
    std::vector<int> budgets;
    std::vector<double> l1;
    std::vector<double> l2;
};

budget_curve depth_curve(const std::vector<sample_run_log>& logs, int max_depth);
budget_curve icons_curve(const std::vector<sample_run_log>& logs,
                         const std::vector<int>& budgets);

struct post_success_stats {
    std::size_t pooled_attempts = 0;
    double l1_rate = 0.0;
    double l2_rate = 0.0;
    std::size_t samples_with_success = 0;
};

// Pools every attempt strictly after each sample's first success. Demands
// full-mode logs (wrong-mode otherwise); an empty pool raises
// undefined-metric.
post_success_stats post_first_success(const std::vector<sample_run_log>& logs);

struct distance_stats {
    double mean_px = 0.0;
    double median_px = 0.0; // midpoint of the two central values when even
    std::size_t count = 0;
};

// Pixel distance from the click to the target center at each sample's first
// success, in original-image space. No successes raise undefined-metric.
distance_stats click_distance_stats(const std::vector<sample_run_log>& logs);

struct run_data {
    std::string label;
    attack_kind attack = attack_kind::strategic;
    run_mode mode = run_mode::early_stop;
    int depth = 5;
    int passes = 3;
    std::string victim_name;
    std::vector<sample_run_log> logs;
};

// summary.txt plus curves/<label>_depth.csv and curves/<label>_icons.csv
// ("budget,l1,l2" rows). Undefined sections render as "no data"; identical
// inputs produce byte-identical output.
void emit_report(const std::vector<run_data>& runs, const std::filesystem::path& out_dir);

} // namespace decoy
