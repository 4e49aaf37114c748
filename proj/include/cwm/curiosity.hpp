#pragma once

// Monte-Carlo scoring of candidate action courses. For each course the agent
// imagines trajectories under several sampled graphs, trains its structural
// beliefs on the disagreement between them, and rates the resulting update.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwm/model.hpp"
#include "cwm/rng.hpp"
#include "cwm/structure.hpp"

namespace cwm {

enum class RewardKind { learning_progress, ambiguity, random };

std::string_view to_string(RewardKind kind);
/// Accepts "learning_progress", "ambiguity", "random". Throws ContractError.
RewardKind parse_reward_kind(std::string_view name);

struct ActionCourse {
    std::vector<Vector> actions;  // one-hot rows
    std::vector<std::size_t> indices;
    friend bool operator==(const ActionCourse&, const ActionCourse&) = default;
};

struct PlanConfig {
    std::size_t n_courses = 32;
    std::size_t n_graphs = 4;
    std::size_t horizon = 15;
    double sim_lr = 5e-2;
    double sim_alpha = 0.05;
    ReinforceOptions reinforce;
    double sigma_min = kDefaultSigmaMin;
    RewardKind reward_kind = RewardKind::ambiguity;

    void validate() const;
};

/// Uniformly random course of `horizon` one-hot actions over `action_dim`.
ActionCourse random_course(std::size_t action_dim, std::size_t horizon, Rng& rng);

/// One simulated structural update driven by cross-graph pseudo-data. The
/// inputs are never modified; the updated copy is returned.
StructuralParams simulate_structural_learning(const StructuralParams& sp, const FunctionalParams& fp,
                                              std::span<const double> start_state, const ActionCourse& course,
                                              std::span<const Graph> graphs, const PlanConfig& cfg);

/// Entrywise L1 distance between learnable logits.
double reward_learning_progress(const StructuralParams& before, const StructuralParams& after);

/// Mean negative Bernoulli entropy over all entries; in [-ln 2, 0].
double reward_ambiguity(const StructuralParams& after);

struct PlanResult {
    ActionCourse course;
    std::size_t chosen_index = 0;
    std::vector<double> scores;  // empty for the random condition
};

/// Pick the best of cfg.n_courses random courses under cfg.reward_kind. Each
/// course draws from its own stream derived from `seed`, so evaluation order
/// does not affect the outcome. `threads` > 1 evaluates courses concurrently.
PlanResult plan(const StructuralParams& sp, const FunctionalParams& fp, std::span<const double> current_state,
                const PlanConfig& cfg, std::uint64_t seed, std::size_t threads = 1);

}  // namespace cwm
