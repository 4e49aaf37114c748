#pragma once

// Experiment configuration and its flat `key = value` file format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cwm/curiosity.hpp"
#include "cwm/gridworld.hpp"

namespace cwm {

/// Invalid or unreadable configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FunctionalOptimizer { sgd, adam };

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds = default_seeds(20);
    std::vector<RewardKind> conditions{RewardKind::random, RewardKind::learning_progress, RewardKind::ambiguity};

    int stage1_episodes = 150;
    int stage2_episodes = 30;

    double lr_theta = 0.1;
    double lr_gamma = 5e-2;
    double alpha = 0.02;
    int n_graph_samples = 8;
    bool baseline = true;
    bool per_feature_scores = true;
    double advantage_clip = 5.0;  // 0 disables clipping
    FunctionalOptimizer optimizer = FunctionalOptimizer::adam;

    int replay_episodes = 60;
    int epochs_per_episode = 3;
    int batch_size = 32;

    // Stage two is short and starts from an empty replay, so it trains
    // with its own structural rate and pass count.
    double stage2_lr_gamma = 0.3;
    int stage2_epochs_per_episode = 8;

    // Planner; its horizon follows grid.episode_len and its reward follows
    // the condition being run.
    int n_courses = 32;
    int n_graphs = 4;
    double sim_lr = 5e-2;
    double sim_alpha = 0.05;

    GridConfig grid;

    int d_h = 16;
    double sigma_min = 0.05;
    // Exponent on sigma^2 weighting each sample's likelihood gradient; 0 is plain NLL.
    double variance_weight = 1.0;
    double clamp_bound = 5.0;

    /// Probability an edge must exceed to count as discovered.
    double threshold = 0.9;
    int threads = 1;
    std::filesystem::path output_dir = "out";

    static std::vector<std::uint64_t> default_seeds(std::size_t n);

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;

    PlanConfig plan_config(RewardKind kind) const;
    ReinforceOptions reinforce_options() const;
};

/// Parse `key = value` lines. '#' starts a comment; blank lines are ignored.
/// Unknown keys, duplicate keys and malformed values are errors.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Full resolved config in the same format parse_config reads.
void write_config(std::ostream& out, const ExperimentConfig& cfg);

/// "0-19" or "1,5,9" (ranges may be mixed with singles).
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<RewardKind> parse_condition_list(const std::string& text);

}  // namespace cwm
