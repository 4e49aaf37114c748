#include "cwm/model.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

namespace cwm {

namespace {

FeatureBlock zero_block(const ModelDims& d) {
    FeatureBlock b;
    b.w_hidden = Matrix(d.hidden, d.inputs());
    b.b_hidden.assign(d.hidden, 0.0);
    b.w_mu.assign(d.hidden, 0.0);
    b.w_sigma.assign(d.hidden, 0.0);
    return b;
}

double init_weight(Rng& rng, std::size_t fan_in) {
    return (uniform01(rng) - 0.5) / std::sqrt(static_cast<double>(fan_in));
}

void check_dims(const FunctionalParams& params, const Graph& graph, std::size_t state_len,
                std::size_t action_len) {
    const auto& d = params.dims();
    require(graph.state_dim() == d.state && graph.action_dim() == d.action,
            "graph shape does not match model dimensions");
    require(state_len == d.state, "state vector length does not match d_s");
    require(action_len == d.action, "action vector length does not match d_a");
}

// Forward pass for one feature, keeping what backprop needs.
struct FeaturePass {
    Vector masked_input;
    std::vector<std::size_t> nonzero;  // indices of masked_input that are not 0
    Vector hidden;
    double mu = 0.0;
    double log_sigma = 0.0;
    double sigma = 0.0;
    bool floored = false;
};

void run_feature(const FeatureBlock& blk, const Graph& graph, std::size_t k, std::span<const double> prev_state,
                 std::span<const double> action, double sigma_min, FeaturePass& out) {
    const std::size_t n_state = prev_state.size();
    const std::size_t n_in = n_state + action.size();
    out.masked_input.resize(n_in);
    out.nonzero.clear();
    for (std::size_t i = 0; i < n_in; ++i) {
        const double x = i < n_state ? prev_state[i] : action[i - n_state];
        out.masked_input[i] = graph.edge(i, k) ? x : 0.0;
        if (out.masked_input[i] != 0.0) out.nonzero.push_back(i);
    }
    const std::size_t n_hidden = blk.b_hidden.size();
    out.hidden.resize(n_hidden);
    double mu = blk.b_mu;
    double s = blk.b_sigma;
    for (std::size_t j = 0; j < n_hidden; ++j) {
        const auto w = blk.w_hidden.row(j);
        double a = blk.b_hidden[j];
        for (std::size_t i : out.nonzero) a += w[i] * out.masked_input[i];
        const double h = logistic(a);
        out.hidden[j] = h;
        mu += blk.w_mu[j] * h;
        s += blk.w_sigma[j] * h;
    }
    out.mu = mu;
    out.log_sigma = s;
    const double sigma = std::exp(s);
    out.floored = !(sigma >= sigma_min);
    out.sigma = out.floored ? sigma_min : sigma;
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

thread_local std::size_t g_rollout_calls = 0;

}  // namespace

FunctionalParams::FunctionalParams(ModelDims dims) : dims_(dims) {
    require(dims.state > 0 && dims.action > 0 && dims.hidden > 0, "model dimensions must be positive");
    blocks_.assign(dims.state, zero_block(dims));
}

FunctionalParams FunctionalParams::initialized(ModelDims dims, Rng& rng) {
    FunctionalParams p(dims);
    for (auto& b : p.blocks_) {
        for (double& w : b.w_hidden.flat()) w = init_weight(rng, dims.inputs());
        for (double& w : b.w_mu) w = init_weight(rng, dims.hidden);
        for (double& w : b.w_sigma) w = init_weight(rng, dims.hidden);
    }
    return p;
}

std::size_t FunctionalParams::parameter_count() const {
    std::size_t n = 0;
    for_each([&](const double&) { ++n; });
    return n;
}

bool FunctionalParams::finite() const {
    bool ok = true;
    for_each([&](const double& v) { ok = ok && std::isfinite(v); });
    return ok;
}

FunctionalParams FunctionalParams::with_added_state_feature(Rng& rng) const {
    ModelDims grown = dims_;
    grown.state += 1;
    FunctionalParams out(grown);
    const std::size_t new_col = dims_.state;
    for (std::size_t k = 0; k < dims_.state; ++k) {
        const auto& src = blocks_[k];
        auto& dst = out.blocks_[k];
        for (std::size_t j = 0; j < dims_.hidden; ++j) {
            for (std::size_t i = 0; i < grown.inputs(); ++i) {
                if (i < new_col) {
                    dst.w_hidden(j, i) = src.w_hidden(j, i);
                } else if (i > new_col) {
                    dst.w_hidden(j, i) = src.w_hidden(j, i - 1);
                }
            }
        }
        // Drawn in a separate pass so the copy order above cannot shift the stream.
        for (std::size_t j = 0; j < dims_.hidden; ++j) dst.w_hidden(j, new_col) = init_weight(rng, grown.inputs());
        dst.b_hidden = src.b_hidden;
        dst.w_mu = src.w_mu;
        dst.w_sigma = src.w_sigma;
        dst.b_mu = src.b_mu;
        dst.b_sigma = src.b_sigma;
    }
    auto& fresh = out.blocks_.back();
    for (double& w : fresh.w_hidden.flat()) w = init_weight(rng, grown.inputs());
    for (double& w : fresh.w_mu) w = init_weight(rng, grown.hidden);
    for (double& w : fresh.w_sigma) w = init_weight(rng, grown.hidden);
    return out;
}

Graph::Graph(std::size_t state_dim, std::size_t action_dim)
    : state_dim_(state_dim), action_dim_(action_dim), bits_((state_dim + action_dim) * state_dim, 0) {
    for (std::size_t k = 0; k < state_dim; ++k) bits_[k * state_dim + k] = 1;
}

Graph Graph::complete(std::size_t state_dim, std::size_t action_dim) {
    Graph g(state_dim, action_dim);
    std::fill(g.bits_.begin(), g.bits_.end(), 1);
    return g;
}

void Graph::set_edge(std::size_t input, std::size_t output, bool present) {
    require(input < inputs() && output < state_dim_, "edge index out of range");
    require(present || !is_self_edge(input, output), "self-edges cannot be removed");
    bits_[input * state_dim_ + output] = present ? 1 : 0;
}

GaussianPrediction forward(const FunctionalParams& params, const Graph& graph, std::span<const double> prev_state,
                           std::span<const double> action, double sigma_min) {
    check_dims(params, graph, prev_state.size(), action.size());
    const std::size_t n = params.dims().state;
    GaussianPrediction pred{Vector(n), Vector(n)};
    FeaturePass pass;
    for (std::size_t k = 0; k < n; ++k) {
        run_feature(params.block(k), graph, k, prev_state, action, sigma_min, pass);
        pred.mu[k] = pass.mu;
        pred.sigma[k] = pass.sigma;
    }
    return pred;
}

Vector feature_log_likelihoods(const GaussianPrediction& pred, std::span<const double> target) {
    require(pred.mu.size() == target.size() && pred.sigma.size() == target.size(),
            "prediction and target lengths differ");
    Vector out(target.size());
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double z = (target[k] - pred.mu[k]) / pred.sigma[k];
        out[k] = -0.5 * z * z - std::log(pred.sigma[k]) - kHalfLog2Pi;
    }
    return out;
}

double log_likelihood(const GaussianPrediction& pred, std::span<const double> target) {
    double total = 0.0;
    for (double v : feature_log_likelihoods(pred, target)) total += v;
    return total;
}

BatchEvaluation evaluate_batch(const FunctionalParams& params, const Graph& graph, std::span<const Transition> batch,
                               double sigma_min, double variance_weight) {
    require(variance_weight >= 0.0, "variance weight must be non-negative");
    require(!batch.empty(), "batch must not be empty");
    const auto& d = params.dims();
    BatchEvaluation ev{0.0, Vector(d.state, 0.0), FunctionalParams(d)};
    const double scale = 1.0 / static_cast<double>(batch.size());
    FeaturePass pass;
    Vector d_hidden(d.hidden);

    for (const auto& tr : batch) {
        check_dims(params, graph, tr.prev_state.size(), tr.action.size());
        require(tr.next_state.size() == d.state, "target length does not match d_s");
        for (std::size_t k = 0; k < d.state; ++k) {
            const auto& blk = params.block(k);
            auto& g = ev.gradient.block(k);
            run_feature(blk, graph, k, tr.prev_state, tr.action, sigma_min, pass);

            const double resid = tr.next_state[k] - pass.mu;
            const double inv_var = 1.0 / (pass.sigma * pass.sigma);
            const double z2 = resid * resid * inv_var;
            ev.feature_log_likelihood[k] += scale * (-0.5 * z2 - std::log(pass.sigma) - kHalfLog2Pi);

            // dLL/dmu and dLL/d(log sigma); the floor makes sigma constant.
            const double w = variance_weight == 0.0   ? scale
                             : variance_weight == 1.0 ? scale * pass.sigma * pass.sigma
                                                      : scale * std::pow(pass.sigma, 2.0 * variance_weight);
            const double g_mu = w * resid * inv_var;
            const double g_s = pass.floored ? 0.0 : w * (z2 - 1.0);

            g.b_mu += g_mu;
            g.b_sigma += g_s;
            for (std::size_t j = 0; j < d.hidden; ++j) {
                const double h = pass.hidden[j];
                g.w_mu[j] += g_mu * h;
                g.w_sigma[j] += g_s * h;
                d_hidden[j] = (g_mu * blk.w_mu[j] + g_s * blk.w_sigma[j]) * h * (1.0 - h);
            }
            for (std::size_t j = 0; j < d.hidden; ++j) {
                const double da = d_hidden[j];
                g.b_hidden[j] += da;
                auto row = g.w_hidden.row(j);
                for (std::size_t i : pass.nonzero) row[i] += da * pass.masked_input[i];
            }
        }
    }
    for (double v : ev.feature_log_likelihood) ev.log_likelihood += v;
    return ev;
}

double batch_log_likelihood(const FunctionalParams& params, const Graph& graph, std::span<const Transition> batch,
                            double sigma_min) {
    require(!batch.empty(), "batch must not be empty");
    double total = 0.0;
    for (const auto& tr : batch) {
        total += log_likelihood(forward(params, graph, tr.prev_state, tr.action, sigma_min), tr.next_state);
    }
    return total / static_cast<double>(batch.size());
}

Vector batch_feature_log_likelihood(const FunctionalParams& params, const Graph& graph,
                                    std::span<const Transition> batch, double sigma_min) {
    require(!batch.empty(), "batch must not be empty");
    Vector total(params.dims().state, 0.0);
    for (const auto& tr : batch) {
        const auto terms = feature_log_likelihoods(forward(params, graph, tr.prev_state, tr.action, sigma_min),
                                                   tr.next_state);
        for (std::size_t k = 0; k < total.size(); ++k) total[k] += terms[k];
    }
    for (double& v : total) v /= static_cast<double>(batch.size());
    return total;
}

FunctionalParams functional_gradient(const FunctionalParams& params, const Graph& graph,
                                     std::span<const Transition> batch, double sigma_min) {
    return evaluate_batch(params, graph, batch, sigma_min).gradient;
}

namespace {

// Flattened mean of the gradients, in for_each order.
Vector mean_gradient(const FunctionalParams& params, std::span<const FunctionalParams> gradients) {
    require(!gradients.empty(), "at least one gradient is required");
    Vector mean(params.parameter_count(), 0.0);
    for (std::size_t gi = 0; gi < gradients.size(); ++gi) {
        const auto& g = gradients[gi];
        require(g.dims() == params.dims(), "gradient shape does not match parameters");
        if (!g.finite()) {
            std::ostringstream msg;
            msg << "non-finite functional gradient (sample " << gi << " of " << gradients.size() << ")";
            throw NumericalError(msg.str());
        }
        std::size_t idx = 0;
        g.for_each([&](const double& v) { mean[idx++] += v; });
    }
    const double scale = 1.0 / static_cast<double>(gradients.size());
    for (double& v : mean) v *= scale;
    return mean;
}

}  // namespace

FunctionalParams apply_functional_update(const FunctionalParams& params, std::span<const FunctionalParams> gradients,
                                         double lr) {
    const Vector mean = mean_gradient(params, gradients);
    FunctionalParams out = params;
    std::size_t idx = 0;
    out.for_each([&](double& v) { v += lr * mean[idx++]; });
    if (!out.finite()) throw NumericalError("functional update produced non-finite parameters");
    return out;
}

AdamState::AdamState(const ModelDims& dims, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    const std::size_t n = FunctionalParams(dims).parameter_count();
    first_.assign(n, 0.0);
    second_.assign(n, 0.0);
}

FunctionalParams AdamState::step(const FunctionalParams& params, std::span<const FunctionalParams> gradients,
                                 double lr) {
    const Vector g = mean_gradient(params, gradients);
    require(g.size() == first_.size(), "Adam state does not match parameter shape");
    Vector m = first_;
    Vector v = second_;
    const auto t = static_cast<double>(steps_ + 1);
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    FunctionalParams out = params;
    std::size_t idx = 0;
    out.for_each([&](double& w) {
        m[idx] = beta1_ * m[idx] + (1.0 - beta1_) * g[idx];
        v[idx] = beta2_ * v[idx] + (1.0 - beta2_) * g[idx] * g[idx];
        w += lr * (m[idx] / c1) / (std::sqrt(v[idx] / c2) + eps_);
        ++idx;
    });
    if (!out.finite()) throw NumericalError("Adam update produced non-finite parameters");
    first_ = std::move(m);
    second_ = std::move(v);
    ++steps_;
    return out;
}

std::vector<Vector> rollout(const FunctionalParams& params, const Graph& graph, std::span<const double> start_state,
                            std::span<const Vector> actions, double sigma_min) {
    require(!actions.empty(), "rollout needs at least one action");
    ++g_rollout_calls;
    std::vector<Vector> states;
    states.reserve(actions.size());
    Vector current(start_state.begin(), start_state.end());
    for (const auto& a : actions) {
        auto pred = forward(params, graph, current, a, sigma_min);
        for (double& v : pred.mu) v = std::clamp(v, 0.0, 1.0);
        current = pred.mu;
        states.push_back(std::move(pred.mu));
    }
    return states;
}

std::size_t rollout_call_count() { return g_rollout_calls; }

}  // namespace cwm
