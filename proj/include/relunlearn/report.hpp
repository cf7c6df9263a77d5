#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relunlearn/eval_harness.hpp"

namespace relunlearn {

struct ReportEntry {
    std::string name;  // file prefix, e.g. "full" or "baseline"
    Evaluation evaluation;
    std::optional<std::vector<LossRecord>> loss_curve;
};

std::vector<ReportEntry> report_entries(const AblationReport& report);

// Files written under out_dir:
//   report.json                    every entry, full precision
//   <name>_forgetting.tsv          Attack, Base Cosine, Optimal Cosine, Δcos (Forgetting)
//   <name>_forgetting_tiers.tsv    the same per tier, with pair counts
//   <name>_preservation.tsv        Preservation Case, Base Cosine, Optimal Cosine, Abs. Drift (|Δcos|)
//   <name>_loss_curve.tsv          when the entry carries a loss curve
//   ablation_bars.tsv              one row per entry: forgetting per attack, drifts
// Returns the paths written, in that order.
std::vector<std::string> emit_report(const std::vector<ReportEntry>& entries, const std::string& out_dir);

std::string report_json(const std::vector<ReportEntry>& entries);
std::vector<ReportEntry> parse_report(std::string_view text);

std::string forgetting_table(const ForgettingReport& report);
std::string forgetting_tier_table(const ForgettingReport& report);
std::string preservation_table(const PreservationReport& report);
std::string ablation_bars(const std::vector<ReportEntry>& entries);

// Fixed-width, four-decimal rendering for terminals.
std::string render_text(const std::vector<ReportEntry>& entries);

// Writes `content` to `path`, creating parent directories.
void write_file(const std::string& path, std::string_view content);
std::string read_file(const std::string& path);

}  // namespace relunlearn
