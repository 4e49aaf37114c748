// Command-line front end for the causal-curiosity experiments.
//
//   causal-curiosity run --config exp.cfg [--seeds N] [--conditions a,b] [--out DIR]
//   causal-curiosity eval --records out/records.csv [--threshold 0.9]
//   causal-curiosity print-truth --stage 1|2

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cwm/config.hpp"
#include "cwm/experiment.hpp"
#include "cwm/gridworld.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

void print_truth(int stage_number) {
    const auto stage = stage_number == 1 ? cwm::Stage::one : cwm::Stage::two;
    const cwm::Graph g = cwm::ground_truth_graph(stage);
    const auto ins = cwm::input_names(stage);
    const auto outs = cwm::output_names(stage);
    std::cout << "input";
    for (const auto& o : outs) std::cout << ',' << o;
    std::cout << '\n';
    for (std::size_t i = 0; i < ins.size(); ++i) {
        std::cout << ins[i];
        for (std::size_t k = 0; k < outs.size(); ++k) std::cout << ',' << (g.edge(i, k) ? 1 : 0);
        std::cout << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal world-model learning with curiosity-driven action selection"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run the two-stage experiment for every condition and seed");
    std::string config_path;
    int n_seeds = 0;
    std::string conditions;
    std::string out_dir;
    int threads = 0;
    run->add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    run->add_option("--seeds", n_seeds, "Use seeds 0..N-1 (overrides the config)")->check(CLI::PositiveNumber);
    run->add_option("--conditions", conditions, "Comma list of random,learning_progress,ambiguity");
    run->add_option("--out", out_dir, "Output directory (overrides the config)");
    run->add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Recompute summary.csv from a records file");
    std::string records_path;
    double threshold = 0.9;
    eval->add_option("--records", records_path, "records.csv written by `run`")->required();
    eval->add_option("--threshold", threshold, "Discovery threshold on probability(C->H)");

    auto* truth = app.add_subcommand("print-truth", "Print the ground-truth causal graph as a CSV matrix");
    int stage = 2;
    truth->add_option("--stage", stage, "Stage (1: without health, 2: with health)")->check(CLI::IsMember({1, 2}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (*run) {
        cwm::ExperimentConfig cfg;
        try {
            if (!config_path.empty()) cfg = cwm::load_config(config_path);
            if (n_seeds > 0) cfg.seeds = cwm::ExperimentConfig::default_seeds(static_cast<std::size_t>(n_seeds));
            if (!conditions.empty()) cfg.conditions = cwm::parse_condition_list(conditions);
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (threads > 0) cfg.threads = threads;
            cfg.validate();
        } catch (const cwm::ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return kExitConfig;
        }
        try {
            return cwm::run_experiment(cfg, std::cout);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitRuntime;
        }
    }

    if (*eval) {
        std::ifstream in(records_path);
        if (!in) {
            std::cerr << "error: cannot open '" << records_path << "'\n";
            return kExitConfig;
        }
        try {
            const auto records = cwm::read_records(in);
            cwm::write_summary(std::cout, cwm::summarize(records, threshold));
        } catch (const std::exception& e) {
            std::cerr << "error: " << records_path << ": " << e.what() << '\n';
            return kExitRuntime;
        }
        return kExitOk;
    }

    if (*truth) {
        print_truth(stage);
        return kExitOk;
    }
    return kExitOk;
}
