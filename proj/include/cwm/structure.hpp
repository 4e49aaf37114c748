#pragma once

// Structural parameters: one logit per potential (input -> state feature)
// edge. State self-edges are pinned at +clamp_bound and never learned.

#include <optional>
#include <span>
#include <vector>

#include "cwm/common.hpp"
#include "cwm/model.hpp"
#include "cwm/rng.hpp"

namespace cwm {

inline constexpr double kDefaultClampBound = 5.0;

class StructuralParams {
public:
    StructuralParams() = default;
    /// Learnable logits start at `initial_logit`; self-edges at +clamp_bound.
    StructuralParams(std::size_t state_dim, std::size_t action_dim, double clamp_bound = kDefaultClampBound,
                     double initial_logit = 0.0);

    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t inputs() const { return state_dim_ + action_dim_; }
    double clamp_bound() const { return clamp_bound_; }

    const Matrix& gamma() const { return gamma_; }
    double logit(std::size_t input, std::size_t output) const { return gamma_(input, output); }

    /// Set a learnable logit (clamped). Frozen entries cannot be set.
    void set_logit(std::size_t input, std::size_t output, double value);

    static bool frozen(std::size_t input, std::size_t output) { return input == output; }
    std::size_t learnable_count() const { return inputs() * state_dim_ - state_dim_; }

    /// Grow by one state feature (appended after the existing ones). Every
    /// pre-existing logit keeps its value; new learnable entries start at 0.
    StructuralParams with_added_state_feature() const;

    friend bool operator==(const StructuralParams&, const StructuralParams&) = default;

private:
    friend StructuralParams apply_structural_update(const StructuralParams&, const Matrix&, const Matrix&, double,
                                                    double);
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    double clamp_bound_ = kDefaultClampBound;
    Matrix gamma_;
};

/// logistic(gamma), elementwise.
Matrix edge_probabilities(const StructuralParams& sp);

/// Independent Bernoulli draw per learnable edge; self-edges always present.
Graph sample_graph(const StructuralParams& sp, Rng& rng);

/// log p_gamma(G) summed over learnable entries.
double log_prob_graph(const StructuralParams& sp, const Graph& g);

struct ScoredGraph {
    Graph graph;
    /// Mean log-likelihood of the batch under `graph`.
    double score = 0.0;
    /// Optional per-output-feature split of `score` (one entry per state
    /// feature). Used when ReinforceOptions::per_feature is set.
    Vector feature_scores;
};

struct ReinforceOptions {
    /// Subtract the mean score of the retained samples.
    bool baseline = true;
    /// Weight column k by feature k's own score instead of the total. Still
    /// unbiased: the other features' terms do not depend on column k.
    bool per_feature = false;
    /// If > 0, advantages are clipped to [-clip, clip] before weighting.
    double advantage_clip = 0.0;
};

/// Score-function estimate of d E[score] / d gamma: mean over samples of
/// (A - p) * (score - baseline). Non-finite scores are dropped with a warning
/// on stderr; if none remain the result is zero.
Matrix reinforce_gradient(const StructuralParams& sp, std::span<const ScoredGraph> samples,
                          ReinforceOptions opts = {});

/// d logistic(gamma) / d gamma = p (1 - p) on learnable entries.
Matrix sparsity_gradient(const StructuralParams& sp);

/// gamma += lr * (reinforce - alpha * sparsity), then clamp. Frozen entries
/// are untouched. Throws NumericalError on non-finite input.
StructuralParams apply_structural_update(const StructuralParams& sp, const Matrix& reinforce_grad,
                                         const Matrix& sparsity_grad, double lr, double alpha);

}  // namespace cwm
