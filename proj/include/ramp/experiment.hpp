#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ramp/config.hpp"
#include "ramp/evaluation.hpp"

namespace ramp {

std::string robust_report_json(const RobustReport& report);
std::string epoch_record_json(const EpochRecord& rec);
std::string delta_analysis_json(const DeltaAnalysis& analysis);

/// Executes a config end to end: dataset, training, per-epoch JSONL metrics,
/// checkpoints, final robustness report, manifest. Returns the manifest.
RunManifest run_experiment(const std::filesystem::path& config_path,
                           const std::string& out_dir_override = "");

/// Loads a checkpoint and evaluates it on the config's probe split.
RobustReport eval_checkpoint(const std::filesystem::path& checkpoint_path,
                             const std::filesystem::path& config_path);

/// Error-decomposition terms along the checkpoints of a completed run;
/// writes delta.json in the run directory and returns the analysis.
DeltaAnalysis delta_analysis(const std::filesystem::path& run_dir);

enum class FigureKind { TradeoffBars, AccuracyCurves, ErrorTerms };

FigureKind figure_kind_from_string(const std::string& s);

/// Tidy CSV assembled from the named run directories.
std::string figure_data_csv(FigureKind kind, const std::vector<std::filesystem::path>& run_dirs);

}  // namespace ramp
