#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ramp/experiment.hpp"
#include "ramp/lp.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-norm adversarial training toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    auto* train = app.add_subcommand("train", "run a training experiment from a config file");
    train->add_option("config", config_path, "config file")->required();
    train->add_option("--out", out_dir, "override output.dir");

    std::string ckpt_path, eval_config;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a config's probe split");
    eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("config", eval_config, "config file")->required();

    std::string run_dir;
    auto* delta = app.add_subcommand("delta-analysis",
                                     "error-decomposition terms over a run's checkpoints");
    delta->add_option("run_dir", run_dir, "completed run directory")->required();

    std::string fig_kind, fig_out;
    std::vector<std::string> fig_dirs;
    auto* figure = app.add_subcommand("figure-data", "emit tidy CSV from run directories");
    figure->add_option("kind", fig_kind, "tradeoff_bars|accuracy_curves|error_terms")->required();
    figure->add_option("run_dirs", fig_dirs, "run directories");
    figure->add_option("--out", fig_out, "write CSV here instead of stdout");

    double eps1 = 0, eps2 = 0, epsinf = 0;
    std::size_t dim = 0;
    auto* keypair = app.add_subcommand("keypair", "ball-volume key-pair heuristic");
    keypair->add_option("eps1", eps1)->required();
    keypair->add_option("eps2", eps2)->required();
    keypair->add_option("epsinf", epsinf)->required();
    keypair->add_option("dim", dim)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const ramp::RunManifest manifest = ramp::run_experiment(config_path, out_dir);
            std::cout << manifest.to_json() << "\n";
        } else if (*eval) {
            const ramp::RobustReport report = ramp::eval_checkpoint(ckpt_path, eval_config);
            std::cout << ramp::robust_report_json(report) << "\n";
        } else if (*delta) {
            const ramp::DeltaAnalysis analysis = ramp::delta_analysis(run_dir);
            std::cout << ramp::delta_analysis_json(analysis) << "\n";
        } else if (*figure) {
            std::vector<std::filesystem::path> dirs(fig_dirs.begin(), fig_dirs.end());
            const std::string csv = ramp::figure_data_csv(ramp::figure_kind_from_string(fig_kind), dirs);
            if (fig_out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream out(fig_out, std::ios::trunc);
                if (!out) throw std::runtime_error("cannot write " + fig_out);
                out << csv;
            }
        } else if (*keypair) {
            const auto pair = ramp::select_key_pair(eps1, eps2, epsinf, dim);
            std::printf("log_volumes: l1=%.4f l2=%.4f linf=%.4f\n",
                        ramp::log_ball_volume(ramp::AttackNorm::L1, dim, eps1),
                        ramp::log_ball_volume(ramp::AttackNorm::L2, dim, eps2),
                        ramp::log_ball_volume(ramp::AttackNorm::Linf, dim, epsinf));
            std::printf("key_pair: q=%s r=%s\n", ramp::to_string(pair.first).c_str(),
                        ramp::to_string(pair.second).c_str());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
