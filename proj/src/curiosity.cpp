#include "cwm/curiosity.hpp"

#include <algorithm>
#include <exception>
#include <thread>

namespace cwm {

std::string_view to_string(RewardKind kind) {
    switch (kind) {
        case RewardKind::learning_progress: return "learning_progress";
        case RewardKind::ambiguity: return "ambiguity";
        case RewardKind::random: return "random";
    }
    return "?";
}

RewardKind parse_reward_kind(std::string_view name) {
    if (name == "learning_progress") return RewardKind::learning_progress;
    if (name == "ambiguity") return RewardKind::ambiguity;
    if (name == "random") return RewardKind::random;
    throw ContractError("unknown condition '" + std::string(name) +
                        "' (expected random, learning_progress or ambiguity)");
}

void PlanConfig::validate() const {
    require(n_courses >= 1, "n_courses must be positive");
    require(n_graphs >= 2, "n_graphs must be at least 2");
    require(horizon >= 1, "horizon must be positive");
    require(std::isfinite(sim_lr) && std::isfinite(sim_alpha), "simulation rates must be finite");
}

ActionCourse random_course(std::size_t action_dim, std::size_t horizon, Rng& rng) {
    ActionCourse c;
    c.actions.reserve(horizon);
    c.indices.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        const auto a = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(action_dim) - 1));
        Vector v(action_dim, 0.0);
        v[a] = 1.0;
        c.actions.push_back(std::move(v));
        c.indices.push_back(a);
    }
    return c;
}

StructuralParams simulate_structural_learning(const StructuralParams& sp, const FunctionalParams& fp,
                                              std::span<const double> start_state, const ActionCourse& course,
                                              std::span<const Graph> graphs, const PlanConfig& cfg) {
    require(!course.actions.empty(), "action course must have a positive horizon");
    require(graphs.size() >= 2, "cross-graph learning needs at least two graphs");

    std::vector<std::vector<Vector>> trajectories;
    trajectories.reserve(graphs.size());
    for (const auto& g : graphs) trajectories.push_back(rollout(fp, g, start_state, course.actions, cfg.sigma_min));

    // Teacher-forced pseudo-transitions taken from one imagined trajectory.
    auto transitions_of = [&](const std::vector<Vector>& traj) {
        std::vector<Transition> out;
        out.reserve(traj.size());
        Vector prev(start_state.begin(), start_state.end());
        for (std::size_t t = 0; t < traj.size(); ++t) {
            out.push_back({prev, course.actions[t], traj[t]});
            prev = traj[t];
        }
        return out;
    };
    std::vector<std::vector<Transition>> per_graph;
    per_graph.reserve(graphs.size());
    for (const auto& traj : trajectories) per_graph.push_back(transitions_of(traj));

    std::vector<ScoredGraph> scored;
    scored.reserve(graphs.size());
    for (std::size_t m = 0; m < graphs.size(); ++m) {
        std::vector<Transition> foreign;
        for (std::size_t other = 0; other < graphs.size(); ++other) {
            if (other == m) continue;
            foreign.insert(foreign.end(), per_graph[other].begin(), per_graph[other].end());
        }
        Vector per_feature = batch_feature_log_likelihood(fp, graphs[m], foreign, cfg.sigma_min);
        double total = 0.0;
        for (double v : per_feature) total += v;
        scored.push_back({graphs[m], total, std::move(per_feature)});
    }

    const Matrix rg = reinforce_gradient(sp, scored, cfg.reinforce);
    return apply_structural_update(sp, rg, sparsity_gradient(sp), cfg.sim_lr, cfg.sim_alpha);
}

double reward_learning_progress(const StructuralParams& before, const StructuralParams& after) {
    require(before.gamma().same_shape(after.gamma()), "structural parameter shapes differ");
    double total = 0.0;
    for (std::size_t i = 0; i < before.inputs(); ++i) {
        for (std::size_t k = 0; k < before.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            total += std::abs(after.logit(i, k) - before.logit(i, k));
        }
    }
    return total;
}

double reward_ambiguity(const StructuralParams& after) {
    double total = 0.0;
    for (std::size_t i = 0; i < after.inputs(); ++i) {
        for (std::size_t k = 0; k < after.state_dim(); ++k) {
            const double p = logistic(after.logit(i, k));
            // p ln p -> 0 as p -> 0; guard the exact endpoints.
            if (p > 0.0) total += p * std::log(p);
            if (p < 1.0) total += (1.0 - p) * std::log1p(-p);
        }
    }
    return total / static_cast<double>(after.inputs() * after.state_dim());
}

PlanResult plan(const StructuralParams& sp, const FunctionalParams& fp, std::span<const double> current_state,
                const PlanConfig& cfg, std::uint64_t seed, std::size_t threads) {
    cfg.validate();
    const std::size_t action_dim = fp.dims().action;
    PlanResult result;

    if (cfg.reward_kind == RewardKind::random) {
        Rng rng(derive_seed(seed, 0));
        result.course = random_course(action_dim, cfg.horizon, rng);
        return result;
    }

    std::vector<ActionCourse> courses(cfg.n_courses);
    result.scores.assign(cfg.n_courses, 0.0);

    auto evaluate = [&](std::size_t c) {
        Rng rng(derive_seed(seed, c));
        courses[c] = random_course(action_dim, cfg.horizon, rng);
        std::vector<Graph> graphs;
        graphs.reserve(cfg.n_graphs);
        for (std::size_t m = 0; m < cfg.n_graphs; ++m) graphs.push_back(sample_graph(sp, rng));
        const StructuralParams updated = simulate_structural_learning(sp, fp, current_state, courses[c], graphs, cfg);
        result.scores[c] = cfg.reward_kind == RewardKind::learning_progress ? reward_learning_progress(sp, updated)
                                                                            : reward_ambiguity(updated);
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, cfg.n_courses);
    if (workers == 1) {
        for (std::size_t c = 0; c < cfg.n_courses; ++c) evaluate(c);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> pool;
            pool.reserve(workers);
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t c = w; c < cfg.n_courses; c += workers) evaluate(c);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
        }
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    // Strict '>' keeps the lowest index on ties.
    std::size_t best = 0;
    for (std::size_t c = 1; c < cfg.n_courses; ++c) {
        if (result.scores[c] > result.scores[best]) best = c;
    }
    result.chosen_index = best;
    result.course = courses[best];
    return result;
}

}  // namespace cwm
