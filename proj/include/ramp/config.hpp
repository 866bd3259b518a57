#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ramp/attacks.hpp"
#include "ramp/dataset.hpp"
#include "ramp/evaluation.hpp"
#include "ramp/training.hpp"

namespace ramp {

/// Line-oriented "section.key = value" text. Raw strings are kept so that
/// parse -> canonicalize -> parse is a fixed point; typed views validate on
/// access.
class ExperimentConfig {
public:
    static ExperimentConfig parse_file(const std::filesystem::path& path);
    static ExperimentConfig parse_text(const std::string& text);

    std::string canonical_text() const;  // sorted "key = value" lines
    std::uint64_t config_hash() const;   // FNV-1a over the canonical text

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;  // accepts "a/b" fractions
    double get_double_or(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value);

    /// RAMP_KIT_SEED, when set, replaces every *.seed key.
    void apply_seed_override_from_env();

    // typed views ------------------------------------------------------------
    Dataset build_dataset() const;
    std::pair<Dataset, Dataset> build_train_probe_split() const;  // (train, probe)
    std::vector<std::size_t> model_dims(const Dataset& data) const;
    std::uint64_t model_seed() const;
    TrainPlan build_train_plan(const Dataset& data) const;
    EvalSettings build_eval_settings() const;
    DeltaEstimatorSettings build_delta_settings() const;
    std::string output_dir() const;
    int checkpoint_every() const;

private:
    std::map<std::string, std::string> kv_;

    AttackSpec attack_spec_for(AttackNorm norm, const std::string& prefix) const;
};

std::uint64_t fnv1a64(const std::string& text);

struct RunManifest {
    std::string config_hash;  // hex
    std::uint64_t dataset_seed = 0;
    std::uint64_t model_seed = 0;
    std::uint64_t train_seed = 0;
    std::string started_at;   // ISO-8601 UTC
    std::string finished_at;
    std::string config_path;  // canonical copy inside the run dir
    std::string metrics_path;
    std::string timings_path;
    std::string report_path;
    std::vector<std::string> checkpoint_paths;

    std::string to_json() const;
};

}  // namespace ramp
