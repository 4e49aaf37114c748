#pragma once

// Two-stage protocol: stage one learns the position/color structure from
// random play; stage two adds health and lets the chosen condition drive
// action selection.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cwm/config.hpp"
#include "cwm/curiosity.hpp"
#include "cwm/gridworld.hpp"
#include "cwm/model.hpp"
#include "cwm/structure.hpp"

namespace cwm {

struct RunRecord {
    std::string condition;
    std::uint64_t seed = 0;
    int stage = 1;
    int episode = 0;  // 1-based: probabilities after training on that episode
    std::string edge_from;
    std::string edge_to;
    double probability = 0.0;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// FIFO of whole episodes; the oldest episode is evicted past capacity.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity_episodes);
    void push_episode(std::vector<Transition> episode);
    void clear() { episodes_.clear(); }
    std::size_t episode_count() const { return episodes_.size(); }
    std::vector<Transition> all() const;

private:
    std::size_t capacity_;
    std::deque<std::vector<Transition>> episodes_;
};

/// Learner state for one (condition, seed) run.
struct Agent {
    Stage stage = Stage::one;
    FunctionalParams functional;
    StructuralParams structural;
    AdamState adam;  // only used with the Adam optimizer
};

struct StageOneResult {
    Agent agent;
    std::vector<RunRecord> records;  // condition left empty; filled in per run
};

/// Run one real episode with the given action indices; returns its transitions.
std::vector<Transition> play_episode(const GridConfig& grid, Stage stage, EnvState& state,
                                     std::span<const std::size_t> actions);

/// One training pass schedule over the replay contents: `epochs` shuffled
/// passes, each split into minibatches; every minibatch samples graphs and
/// updates both parameter sets. Throws NumericalError on divergence.
void train_on_replay(const ExperimentConfig& cfg, Agent& agent, std::span<const Transition> data, Rng& rng);

/// Edge probabilities of every learnable edge as records.
void append_edge_records(const Agent& agent, std::uint64_t seed, int stage, int episode,
                         std::vector<RunRecord>& out);

StageOneResult run_stage1(const ExperimentConfig& cfg, std::uint64_t seed);

/// Expand a stage-one agent to the health-aware model: every stage-one logit
/// and weight is kept, new logits start at 0 and new weights are drawn fresh.
Agent expand_to_stage_two(const Agent& stage_one, std::uint64_t seed);

std::vector<RunRecord> run_stage2(const ExperimentConfig& cfg, std::uint64_t seed, RewardKind condition,
                                  const Agent& stage_one, Agent* final_agent = nullptr);

struct StructureSummary {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t true_negatives = 0;
    std::size_t false_negatives = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    std::size_t shd = 0;
};

/// Compare logistic(gamma) > threshold (strict) against `truth` over learnable entries.
StructureSummary evaluate_structure(const StructuralParams& sp, const Graph& truth, double threshold = 0.5);

struct ConditionSummary {
    std::string condition;
    std::size_t seeds = 0;
    double episodes_to_threshold_mean = 0.0;
    double episodes_to_threshold_std = 0.0;
    int mean_curve_episodes_to_threshold = 0;
    double final_probability_mean = 0.0;
    double final_probability_std = 0.0;
};

/// Per-condition speed of discovering edge `from -> to` in `stage`. A seed
/// that never exceeds `threshold` counts as (last episode + 1). Standard
/// deviations are population deviations.
std::vector<ConditionSummary> summarize(std::span<const RunRecord> records, double threshold,
                                        const std::string& from = "C", const std::string& to = "H", int stage = 2);

inline constexpr const char* kRecordsHeader = "condition,seed,stage,episode,edge_from,edge_to,probability";

void write_records(std::ostream& out, std::span<const RunRecord> records);
/// Strict reader for files produced by write_records. Throws std::runtime_error
/// naming the offending line.
std::vector<RunRecord> read_records(std::istream& in);
void write_summary(std::ostream& out, std::span<const ConditionSummary> rows);

/// Canonical order: condition, seed, stage, episode, then model edge order.
void sort_records(std::vector<RunRecord>& records);

struct ExperimentOutcome {
    std::vector<RunRecord> records;
    std::vector<ConditionSummary> summary;
    std::vector<std::string> failures;  // "condition,seed,message"
};

/// Every condition x seed, on cfg.threads worker threads. Output is independent
/// of the thread count.
ExperimentOutcome run_all(const ExperimentConfig& cfg);

/// run_all plus records.csv, summary.csv and config.echo under cfg.output_dir.
/// Returns the process exit code (0 ok, 2 numerical failure); throws
/// std::runtime_error when files cannot be written.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace cwm
