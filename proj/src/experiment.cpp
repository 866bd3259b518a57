#include "ramp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ramp/errors.hpp"

namespace ramp {

namespace {

using nlohmann::json;

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

json epoch_record_to_json(const EpochRecord& rec) {
    return json{{"type", "epoch"},         {"epoch", rec.epoch},
                {"phase", rec.phase},      {"train_loss", rec.train_loss},
                {"clean_acc", rec.clean_acc}, {"l1_acc", rec.l1_acc},
                {"l2_acc", rec.l2_acc},    {"linf_acc", rec.linf_acc},
                {"union_acc", rec.union_acc}};
}

json robust_report_to_json(const RobustReport& report) {
    json flags = json::array();
    for (const SampleFlags& f : report.per_sample) {
        flags.push_back(json::array({f.clean, f.l1, f.l2, f.linf}));
    }
    return json{{"type", "robust_report"},   {"clean_acc", report.clean_acc},
                {"l1_acc", report.l1_acc},   {"l2_acc", report.l2_acc},
                {"linf_acc", report.linf_acc}, {"union_acc", report.union_acc},
                {"per_sample", std::move(flags)}};
}

json delta_to_json(const DeltaAnalysis& analysis) {
    json snaps = json::array();
    for (const SnapshotDeltaTerms& t : analysis.per_snapshot) {
        snaps.push_back(json{{"epoch", t.index},
                             {"variance", t.variance},
                             {"bias", t.bias},
                             {"tau_bar", std::sqrt(std::max(0.0, t.tau_sq))},
                             {"predicted_diff", t.predicted_diff}});
    }
    const DeltaErrorReport& r = analysis.report;
    return json{{"type", "delta_error_report"},
                {"variance", r.variance},
                {"bias", r.bias},
                {"tau_bar_sq", r.tau_bar_sq},
                {"predicted_diff", r.predicted_diff},
                {"beta", r.beta},
                {"m", r.m},
                {"per_snapshot", std::move(snaps)}};
}

}  // namespace

std::string robust_report_json(const RobustReport& report) {
    return robust_report_to_json(report).dump();
}

std::string epoch_record_json(const EpochRecord& rec) { return epoch_record_to_json(rec).dump(); }

std::string delta_analysis_json(const DeltaAnalysis& analysis) {
    return delta_to_json(analysis).dump(2);
}

RunManifest run_experiment(const std::filesystem::path& config_path,
                           const std::string& out_dir_override) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    cfg.apply_seed_override_from_env();
    if (!out_dir_override.empty()) cfg.set("output.dir", out_dir_override);

    const std::filesystem::path out_dir = cfg.output_dir();
    std::filesystem::create_directories(out_dir);

    RunManifest manifest;
    manifest.started_at = iso_now();
    manifest.config_hash = hash_hex(cfg.config_hash());
    manifest.dataset_seed = static_cast<std::uint64_t>(cfg.get_int("dataset.seed"));
    manifest.model_seed = cfg.model_seed();
    manifest.train_seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));

    write_text(out_dir / "config.canonical", cfg.canonical_text());
    manifest.config_path = "config.canonical";

    auto [train_set, probe_set] = cfg.build_train_probe_split();
    const TrainPlan plan = cfg.build_train_plan(train_set);
    const EvalSettings eval = cfg.build_eval_settings();
    const MlpModel initial = MlpModel::init(cfg.model_dims(train_set), cfg.model_seed());

    std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::trunc);
    std::ofstream timings(out_dir / "timings.jsonl", std::ios::trunc);
    if (!metrics || !timings) throw std::runtime_error("cannot open run logs in " + out_dir.string());
    manifest.metrics_path = "metrics.jsonl";
    manifest.timings_path = "timings.jsonl";

    const int ckpt_every = cfg.checkpoint_every();
    RunPlanHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& rec, const MlpModel& model) {
        metrics << epoch_record_to_json(rec).dump() << "\n";
        timings << json{{"epoch", rec.epoch}, {"seconds", rec.seconds}}.dump() << "\n";
        if (ckpt_every > 0 && (rec.epoch + 1) % ckpt_every == 0) {
            char name[40];
            std::snprintf(name, sizeof(name), "ckpt_epoch_%05d.ckpt", rec.epoch);
            save_checkpoint(model, out_dir / name);
            manifest.checkpoint_paths.push_back(name);
        }
    };

    auto [model, records] = run_plan(initial, plan, train_set, probe_set, eval, hooks);
    (void)records;

    save_checkpoint(model, out_dir / "final.ckpt");
    manifest.checkpoint_paths.push_back("final.ckpt");

    const RobustReport report = evaluate_robustness(model, probe_set, eval.specs, plan.box_lo,
                                                    plan.box_hi, mix64(eval.salt, 0xf17a1ull));
    metrics << robust_report_to_json(report).dump() << "\n";
    metrics.close();
    timings.close();

    write_text(out_dir / "report.json", robust_report_to_json(report).dump(2) + "\n");
    manifest.report_path = "report.json";

    manifest.finished_at = iso_now();
    write_text(out_dir / "manifest.json", manifest.to_json() + "\n");
    return manifest;
}

RobustReport eval_checkpoint(const std::filesystem::path& checkpoint_path,
                             const std::filesystem::path& config_path) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    cfg.apply_seed_override_from_env();
    const MlpModel model = load_checkpoint(checkpoint_path);
    auto [train_set, probe_set] = cfg.build_train_probe_split();
    (void)train_set;
    const EvalSettings eval = cfg.build_eval_settings();
    return evaluate_robustness(model, probe_set, eval.specs, 0.0, 1.0,
                               mix64(eval.salt, 0xf17a1ull));
}

DeltaAnalysis delta_analysis(const std::filesystem::path& run_dir) {
    const std::filesystem::path cfg_path = run_dir / "config.canonical";
    ExperimentConfig cfg = ExperimentConfig::parse_file(cfg_path);

    // epoch checkpoints in epoch order; final.ckpt is excluded because its
    // epoch index is not encoded
    std::vector<std::pair<int, std::filesystem::path>> ckpts;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt_epoch_", 0) == 0 && name.size() >= 21) {
            ckpts.emplace_back(std::stoi(name.substr(11, 5)), entry.path());
        }
    }
    std::sort(ckpts.begin(), ckpts.end());
    if (ckpts.size() < 2) {
        throw std::runtime_error("delta analysis needs at least 2 epoch checkpoints in " +
                                 run_dir.string() + "; set output.checkpoint_every");
    }

    std::vector<MlpModel> snapshots;
    snapshots.reserve(ckpts.size());
    for (const auto& [epoch, path] : ckpts) snapshots.push_back(load_checkpoint(path));

    auto [train_set, probe_set] = cfg.build_train_probe_split();
    (void)train_set;
    const TrainPlan plan = cfg.build_train_plan(probe_set);
    const DeltaEstimatorSettings settings = cfg.build_delta_settings();
    const std::vector<AttackSpec> specs{find_spec(plan.train_specs, plan.ramp.key_q)};

    DeltaAnalysis analysis = estimate_delta_terms(snapshots, probe_set, specs, settings);
    for (std::size_t i = 0; i < analysis.per_snapshot.size(); ++i) {
        analysis.per_snapshot[i].index = ckpts[i].first;
    }
    write_text(run_dir / "delta.json", delta_to_json(analysis).dump(2) + "\n");
    return analysis;
}

FigureKind figure_kind_from_string(const std::string& s) {
    if (s == "tradeoff_bars") return FigureKind::TradeoffBars;
    if (s == "accuracy_curves") return FigureKind::AccuracyCurves;
    if (s == "error_terms") return FigureKind::ErrorTerms;
    throw std::invalid_argument("unknown figure kind: " + s +
                                " (expected tradeoff_bars|accuracy_curves|error_terms)");
}

namespace {

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

std::string csv_num(double v) {
    std::ostringstream ss;
    ss.precision(12);
    ss << v;
    return ss.str();
}

}  // namespace

std::string figure_data_csv(FigureKind kind, const std::vector<std::filesystem::path>& run_dirs) {
    std::string csv;
    switch (kind) {
        case FigureKind::TradeoffBars: {
            csv = "category,metric,value,run_id\n";
            for (const auto& dir : run_dirs) {
                const json rep = read_json_file(dir / "report.json");
                const std::string run_id = dir.filename().string();
                for (const auto& [cat, key] :
                     std::vector<std::pair<std::string, std::string>>{{"clean", "clean_acc"},
                                                                      {"linf", "linf_acc"},
                                                                      {"l1", "l1_acc"},
                                                                      {"l2", "l2_acc"},
                                                                      {"union", "union_acc"}}) {
                    csv += cat + ",accuracy," + csv_num(rep.at(key).get<double>()) + "," + run_id +
                           "\n";
                }
            }
            return csv;
        }
        case FigureKind::AccuracyCurves: {
            csv = "epoch,metric,value,run_id\n";
            for (const auto& dir : run_dirs) {
                const std::string run_id = dir.filename().string();
                std::ifstream in(dir / "metrics.jsonl");
                if (!in) throw std::runtime_error("cannot open " + (dir / "metrics.jsonl").string());
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    const json j = json::parse(line);
                    if (j.value("type", "") != "epoch") continue;
                    const std::string epoch = std::to_string(j.at("epoch").get<int>());
                    for (const char* key : {"train_loss", "clean_acc", "l1_acc", "l2_acc",
                                            "linf_acc", "union_acc"}) {
                        csv += epoch + "," + key + "," + csv_num(j.at(key).get<double>()) + "," +
                               run_id + "\n";
                    }
                }
            }
            return csv;
        }
        case FigureKind::ErrorTerms: {
            csv = "epoch,variance,bias,tau_bar,predicted_diff\n";
            for (const auto& dir : run_dirs) {
                const json j = read_json_file(dir / "delta.json");
                for (const auto& snap : j.at("per_snapshot")) {
                    csv += std::to_string(snap.at("epoch").get<int>()) + "," +
                           csv_num(snap.at("variance").get<double>()) + "," +
                           csv_num(snap.at("bias").get<double>()) + "," +
                           csv_num(snap.at("tau_bar").get<double>()) + "," +
                           csv_num(snap.at("predicted_diff").get<double>()) + "\n";
                }
            }
            return csv;
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace ramp
