#pragma once

// Masked per-feature Gaussian world model.
//
// Each output feature k owns a one-hidden-layer network that reads the
// concatenated input [prev_state, action] through column k of a binary
// adjacency mask and emits the mean and the (floored) standard deviation of
// a Gaussian over that feature's next value.

#include <cstddef>
#include <span>
#include <vector>

#include "cwm/common.hpp"
#include "cwm/rng.hpp"

namespace cwm {

struct ModelDims {
    std::size_t state = 0;   // d_s
    std::size_t action = 0;  // d_a
    std::size_t hidden = 16; // d_h

    std::size_t inputs() const { return state + action; }
    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Weights of the network predicting one output feature.
struct FeatureBlock {
    Matrix w_hidden;  // hidden x inputs
    Vector b_hidden;  // hidden
    Vector w_mu;      // hidden
    Vector w_sigma;   // hidden
    double b_mu = 0.0;
    double b_sigma = 0.0;

    friend bool operator==(const FeatureBlock&, const FeatureBlock&) = default;
};

/// Functional parameters shared by every sampled graph. A gradient has the
/// same layout, so this type doubles as the gradient container.
class FunctionalParams {
public:
    FunctionalParams() = default;

    /// All-zero parameters.
    explicit FunctionalParams(ModelDims dims);

    /// Hidden weights uniform in [-0.5, 0.5] / sqrt(fan-in); everything else 0.
    static FunctionalParams initialized(ModelDims dims, Rng& rng);

    const ModelDims& dims() const { return dims_; }
    std::vector<FeatureBlock>& blocks() { return blocks_; }
    const std::vector<FeatureBlock>& blocks() const { return blocks_; }
    FeatureBlock& block(std::size_t k) { return blocks_.at(k); }
    const FeatureBlock& block(std::size_t k) const { return blocks_.at(k); }

    /// Visit every scalar parameter in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        for (auto& b : blocks_) {
            for (double& v : b.w_hidden.flat()) f(v);
            for (double& v : b.b_hidden) f(v);
            for (double& v : b.w_mu) f(v);
            for (double& v : b.w_sigma) f(v);
            f(b.b_mu);
            f(b.b_sigma);
        }
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<FunctionalParams*>(this)->for_each([&](double& v) { f(static_cast<const double&>(v)); });
    }

    std::size_t parameter_count() const;
    bool finite() const;

    /// Grow to a model with one more state feature. The new feature gets a
    /// fresh block and every existing block gets a freshly drawn hidden-weight
    /// column for the new input (inserted after the old state inputs). All
    /// pre-existing weights are copied unchanged.
    FunctionalParams with_added_state_feature(Rng& rng) const;

    friend bool operator==(const FunctionalParams&, const FunctionalParams&) = default;

private:
    ModelDims dims_;
    std::vector<FeatureBlock> blocks_;
};

/// Binary adjacency matrix, rows = inputs (state then action), cols = state
/// outputs. Self-edges (k, k) are always set.
class Graph {
public:
    Graph() = default;
    Graph(std::size_t state_dim, std::size_t action_dim);

    /// Graph with every edge present.
    static Graph complete(std::size_t state_dim, std::size_t action_dim);

    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t inputs() const { return state_dim_ + action_dim_; }

    bool edge(std::size_t input, std::size_t output) const { return bits_[input * state_dim_ + output] != 0; }
    /// Setting a self-edge to false is a contract violation.
    void set_edge(std::size_t input, std::size_t output, bool present);

    static bool is_self_edge(std::size_t input, std::size_t output) { return input == output; }

    friend bool operator==(const Graph&, const Graph&) = default;

private:
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    std::vector<unsigned char> bits_;
};

struct GaussianPrediction {
    Vector mu;
    Vector sigma;
};

struct Transition {
    Vector prev_state;
    Vector action;
    Vector next_state;
};

inline constexpr double kDefaultSigmaMin = 1e-3;

/// Predicted next-state distribution for one transition.
GaussianPrediction forward(const FunctionalParams& params, const Graph& graph,
                           std::span<const double> prev_state, std::span<const double> action,
                           double sigma_min = kDefaultSigmaMin);

/// Diagonal Gaussian log-density of `target`.
double log_likelihood(const GaussianPrediction& pred, std::span<const double> target);

/// Per-feature terms of log_likelihood; they sum to it.
Vector feature_log_likelihoods(const GaussianPrediction& pred, std::span<const double> target);

/// Mean per-transition log-likelihood of a batch, its per-feature split, and
/// its gradient with respect to every functional parameter.
struct BatchEvaluation {
    double log_likelihood = 0.0;
    Vector feature_log_likelihood;
    FunctionalParams gradient;
};

/// `variance_weight` (beta >= 0) scales each feature's gradient contribution by
/// sigma^(2 beta), treated as a constant. beta = 0 is the exact gradient; larger
/// values stop high-variance predictions from absorbing their own error. The
/// reported log-likelihoods are unaffected.
BatchEvaluation evaluate_batch(const FunctionalParams& params, const Graph& graph,
                               std::span<const Transition> batch, double sigma_min = kDefaultSigmaMin,
                               double variance_weight = 0.0);

/// Mean log-likelihood only (no backward pass).
double batch_log_likelihood(const FunctionalParams& params, const Graph& graph,
                            std::span<const Transition> batch, double sigma_min = kDefaultSigmaMin);

/// Per-feature mean log-likelihood of a batch (no backward pass).
Vector batch_feature_log_likelihood(const FunctionalParams& params, const Graph& graph,
                                    std::span<const Transition> batch, double sigma_min = kDefaultSigmaMin);

/// Gradient of the mean per-transition log-likelihood over `batch`.
FunctionalParams functional_gradient(const FunctionalParams& params, const Graph& graph,
                                     std::span<const Transition> batch, double sigma_min = kDefaultSigmaMin);

/// params + lr * mean(gradients). Throws NumericalError (and leaves nothing
/// modified) if a gradient or the result is non-finite.
FunctionalParams apply_functional_update(const FunctionalParams& params,
                                         std::span<const FunctionalParams> gradients, double lr);

/// Adam moment estimates for gradient ascent on FunctionalParams.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const ModelDims& dims, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// One bias-corrected Adam ascent step along mean(gradients). Throws
    /// NumericalError (leaving params and moments untouched) on non-finite input.
    FunctionalParams step(const FunctionalParams& params, std::span<const FunctionalParams> gradients, double lr);

    std::size_t steps() const { return steps_; }

private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t steps_ = 0;
    Vector first_;
    Vector second_;
};

/// Mean-propagated open-loop prediction. Returns one clamped state per action.
std::vector<Vector> rollout(const FunctionalParams& params, const Graph& graph,
                            std::span<const double> start_state, std::span<const Vector> actions,
                            double sigma_min = kDefaultSigmaMin);

/// Number of rollout() calls made by this thread so far. Used to verify that
/// code paths which should not simulate never do.
std::size_t rollout_call_count();

}  // namespace cwm
