#include "cwm/structure.hpp"

#include <algorithm>
#include <iostream>

namespace cwm {

StructuralParams::StructuralParams(std::size_t state_dim, std::size_t action_dim, double clamp_bound,
                                   double initial_logit)
    : state_dim_(state_dim), action_dim_(action_dim), clamp_bound_(clamp_bound),
      gamma_(state_dim + action_dim, state_dim, std::clamp(initial_logit, -clamp_bound, clamp_bound)) {
    require(state_dim > 0 && action_dim > 0, "structural dimensions must be positive");
    require(clamp_bound > 0.0 && std::isfinite(clamp_bound), "clamp bound must be positive and finite");
    for (std::size_t k = 0; k < state_dim; ++k) gamma_(k, k) = clamp_bound;
}

void StructuralParams::set_logit(std::size_t input, std::size_t output, double value) {
    require(input < inputs() && output < state_dim_, "logit index out of range");
    require(!frozen(input, output), "self-edge logits are frozen");
    require(std::isfinite(value), "logit must be finite");
    gamma_(input, output) = std::clamp(value, -clamp_bound_, clamp_bound_);
}

StructuralParams StructuralParams::with_added_state_feature() const {
    StructuralParams out(state_dim_ + 1, action_dim_, clamp_bound_, 0.0);
    for (std::size_t i = 0; i < inputs(); ++i) {
        // Action rows shift down by one to make room for the new state input.
        const std::size_t dst_row = i < state_dim_ ? i : i + 1;
        for (std::size_t k = 0; k < state_dim_; ++k) out.gamma_(dst_row, k) = gamma_(i, k);
    }
    return out;
}

Matrix edge_probabilities(const StructuralParams& sp) {
    Matrix p(sp.inputs(), sp.state_dim());
    for (std::size_t i = 0; i < sp.inputs(); ++i)
        for (std::size_t k = 0; k < sp.state_dim(); ++k) p(i, k) = logistic(sp.logit(i, k));
    return p;
}

Graph sample_graph(const StructuralParams& sp, Rng& rng) {
    Graph g(sp.state_dim(), sp.action_dim());
    for (std::size_t i = 0; i < sp.inputs(); ++i) {
        for (std::size_t k = 0; k < sp.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            g.set_edge(i, k, uniform01(rng) < logistic(sp.logit(i, k)));
        }
    }
    return g;
}

double log_prob_graph(const StructuralParams& sp, const Graph& g) {
    require(g.state_dim() == sp.state_dim() && g.action_dim() == sp.action_dim(), "graph shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < sp.inputs(); ++i) {
        for (std::size_t k = 0; k < sp.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            // log logistic(x) = -log1p(exp(-x)); stable for either sign.
            const double x = sp.logit(i, k);
            total += g.edge(i, k) ? -std::log1p(std::exp(-x)) : -std::log1p(std::exp(x));
        }
    }
    return total;
}

Matrix reinforce_gradient(const StructuralParams& sp, std::span<const ScoredGraph> samples, ReinforceOptions opts) {
    require(!samples.empty(), "reinforce_gradient needs at least one sample");
    const std::size_t n_out = sp.state_dim();
    Matrix grad(sp.inputs(), n_out);

    auto column_score = [&](const ScoredGraph& s, std::size_t k) {
        return opts.per_feature ? s.feature_scores[k] : s.score;
    };
    auto usable = [&](const ScoredGraph& s) {
        if (!opts.per_feature) return std::isfinite(s.score);
        return all_finite(s.feature_scores);
    };

    std::vector<const ScoredGraph*> kept;
    kept.reserve(samples.size());
    for (const auto& s : samples) {
        require(s.graph.state_dim() == sp.state_dim() && s.graph.action_dim() == sp.action_dim(),
                "graph shape mismatch");
        require(!opts.per_feature || s.feature_scores.size() == n_out, "per-feature scores missing or mis-sized");
        if (usable(s)) kept.push_back(&s);
    }
    if (kept.size() < samples.size()) {
        std::cerr << "warning: dropped " << (samples.size() - kept.size())
                  << " REINFORCE sample(s) with non-finite score\n";
    }
    if (kept.empty()) {
        std::cerr << "warning: no finite REINFORCE samples; structural gradient is zero\n";
        return grad;
    }

    Vector baseline(n_out, 0.0);
    if (opts.baseline) {
        for (const auto* s : kept)
            for (std::size_t k = 0; k < n_out; ++k) baseline[k] += column_score(*s, k);
        for (double& b : baseline) b /= static_cast<double>(kept.size());
    }
    const Matrix p = edge_probabilities(sp);
    const double scale = 1.0 / static_cast<double>(kept.size());
    for (const auto* s : kept) {
        for (std::size_t k = 0; k < n_out; ++k) {
            double advantage = column_score(*s, k) - baseline[k];
            if (opts.advantage_clip > 0.0) {
                advantage = std::clamp(advantage, -opts.advantage_clip, opts.advantage_clip);
            }
            for (std::size_t i = 0; i < sp.inputs(); ++i) {
                if (StructuralParams::frozen(i, k)) continue;
                const double a = s->graph.edge(i, k) ? 1.0 : 0.0;
                grad(i, k) += scale * (a - p(i, k)) * advantage;
            }
        }
    }
    return grad;
}

Matrix sparsity_gradient(const StructuralParams& sp) {
    Matrix g(sp.inputs(), sp.state_dim());
    for (std::size_t i = 0; i < sp.inputs(); ++i) {
        for (std::size_t k = 0; k < sp.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            const double p = logistic(sp.logit(i, k));
            g(i, k) = p * (1.0 - p);
        }
    }
    return g;
}

StructuralParams apply_structural_update(const StructuralParams& sp, const Matrix& reinforce_grad,
                                         const Matrix& sparsity_grad, double lr, double alpha) {
    require(reinforce_grad.same_shape(sp.gamma()) && sparsity_grad.same_shape(sp.gamma()),
            "structural gradient shape mismatch");
    if (!std::isfinite(lr) || !std::isfinite(alpha) || !all_finite(reinforce_grad.flat()) ||
        !all_finite(sparsity_grad.flat())) {
        throw NumericalError("non-finite input to structural update");
    }
    StructuralParams out = sp;
    const double bound = sp.clamp_bound();
    for (std::size_t i = 0; i < sp.inputs(); ++i) {
        for (std::size_t k = 0; k < sp.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            const double step = lr * (reinforce_grad(i, k) - alpha * sparsity_grad(i, k));
            out.gamma_(i, k) = std::clamp(sp.gamma()(i, k) + step, -bound, bound);
        }
    }
    return out;
}

}  // namespace cwm
