#include <cmath>
#include <numbers>

#include "cwm/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cwm;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

TEST_CASE("forward with zero parameters predicts mean 0 and sigma 1") {
    FunctionalParams p({3, 2, 4});
    const Graph g = Graph::complete(3, 2);
    const auto pred = forward(p, g, Vector{0.1, 0.7, 0.3}, Vector{0.0, 1.0});
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(pred.mu[k] == 0.0);
        CHECK(pred.sigma[k] == 1.0);
    }
}

TEST_CASE("forward rejects mismatched dimensions") {
    FunctionalParams p({3, 2, 4});
    const Graph g(3, 2);
    CHECK_THROWS_AS(forward(p, g, Vector{0.1, 0.2}, Vector{1.0, 0.0}), ContractError);
    CHECK_THROWS_AS(forward(p, g, Vector{0.1, 0.2, 0.3}, Vector{1.0}), ContractError);
    CHECK_THROWS_AS(forward(p, Graph(4, 2), Vector{0.1, 0.2, 0.3}, Vector{1.0, 0.0}), ContractError);
}

TEST_CASE("forward matches a straight-line evaluation") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = oracle::random_params({3, 2, 4}, rng);
        const auto g = oracle::random_graph(3, 2, rng);
        const auto t = oracle::random_transition(3, 2, rng);
        std::vector<double> mu, sigma;
        oracle::predict(p, g, t.prev_state, t.action, kDefaultSigmaMin, mu, sigma);
        const auto pred = forward(p, g, t.prev_state, t.action);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(pred.mu[k] == doctest::Approx(mu[k]).epsilon(1e-12));
            CHECK(pred.sigma[k] == doctest::Approx(sigma[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("masked inputs cannot influence their feature") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = oracle::random_params({4, 4, 8}, rng);
        const auto g = oracle::random_graph(4, 4, rng);
        const auto t = oracle::random_transition(4, 4, rng);
        const auto base = forward(p, g, t.prev_state, t.action);
        Vector s = t.prev_state;
        Vector a = t.action;
        for (std::size_t k = 0; k < 4; ++k) {
            // Perturb every non-parent of k.
            Vector s2 = s, a2 = a;
            for (std::size_t i = 0; i < 8; ++i) {
                if (g.edge(i, k)) continue;
                if (i < 4) s2[i] = uniform01(rng);
                else a2[i - 4] = uniform01(rng) * 3.0;
            }
            const auto moved = forward(p, g, s2, a2);
            CHECK(moved.mu[k] == base.mu[k]);
            CHECK(moved.sigma[k] == base.sigma[k]);
        }
    }
}

TEST_CASE("sigma never drops below the floor") {
    FunctionalParams p({2, 2, 3});
    for (auto& b : p.blocks()) b.b_sigma = -50.0;
    const auto pred = forward(p, Graph(2, 2), Vector{0.5, 0.5}, Vector{1.0, 0.0}, 1e-3);
    CHECK(pred.sigma[0] == 1e-3);
    CHECK(pred.sigma[1] == 1e-3);
}

TEST_CASE("log_likelihood closed forms") {
    GaussianPrediction pred{{0.2, 0.4, 0.6}, {1.0, 1.0, 1.0}};
    CHECK(log_likelihood(pred, pred.mu) == doctest::Approx(-1.5 * kLog2Pi));

    GaussianPrediction one{{0.0}, {1.0}};
    CHECK(log_likelihood(one, Vector{2.0}) == doctest::Approx(-2.0 - 0.5 * kLog2Pi));

    CHECK_THROWS_AS(log_likelihood(one, Vector{1.0, 2.0}), ContractError);
}

TEST_CASE("log_likelihood matches an explicit density") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        GaussianPrediction pred;
        Vector target;
        double expected = 0.0;
        for (int k = 0; k < 4; ++k) {
            pred.mu.push_back(uniform01(rng));
            pred.sigma.push_back(0.1 + uniform01(rng));
            target.push_back(uniform01(rng));
            expected += oracle::gaussian_log_density(target.back(), pred.mu.back(), pred.sigma.back());
        }
        CHECK(log_likelihood(pred, target) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("log_likelihood peaks at the mean") {
    Rng rng(5);
    GaussianPrediction pred{{0.3, 0.8}, {0.2, 0.5}};
    const double at_mean = log_likelihood(pred, pred.mu);
    for (int trial = 0; trial < 100; ++trial) {
        Vector t = pred.mu;
        t[trial % 2] += (uniform01(rng) - 0.5) * 0.1 + (trial % 3 == 0 ? 1e-6 : 0.0);
        if (t == pred.mu) continue;
        CHECK(log_likelihood(pred, t) < at_mean);
    }
}

TEST_CASE("functional gradient matches central finite differences") {
    Rng rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const ModelDims d{3, 2, 4};
        const auto p = oracle::random_params(d, rng, 0.5);
        const auto g = oracle::random_graph(3, 2, rng);
        std::vector<Transition> batch{oracle::random_transition(3, 2, rng), oracle::random_transition(3, 2, rng)};
        const auto grad = functional_gradient(p, g, batch);
        const auto check = oracle::finite_difference_check(p, g, batch, grad, kDefaultSigmaMin);
        CHECK(check.failures == 0);
        CHECK(check.checked == p.parameter_count());
    }
}

TEST_CASE("masked input weights receive exactly zero gradient") {
    Rng rng(8);
    const auto p = oracle::random_params({3, 2, 4}, rng, 0.5);
    const Graph g(3, 2);  // self-edges only
    std::vector<Transition> batch{oracle::random_transition(3, 2, rng)};
    const auto grad = functional_gradient(p, g, batch);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t j = 0; j < 4; ++j) {
            for (std::size_t i = 0; i < 5; ++i) {
                if (i == k) continue;
                CHECK(grad.block(k).w_hidden(j, i) == 0.0);
            }
        }
    }
}

TEST_CASE("duplicated batch gives the single-transition gradient") {
    Rng rng(9);
    const auto p = oracle::random_params({3, 2, 4}, rng, 0.5);
    const auto g = oracle::random_graph(3, 2, rng);
    const auto t = oracle::random_transition(3, 2, rng);
    const std::vector<Transition> one{t};
    const std::vector<Transition> two{t, t};
    const auto g1 = functional_gradient(p, g, one);
    const auto g2 = functional_gradient(p, g, two);
    std::vector<double> a, b;
    g1.for_each([&](const double& v) { a.push_back(v); });
    g2.for_each([&](const double& v) { b.push_back(v); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-14));
    CHECK_THROWS_AS(functional_gradient(p, g, std::vector<Transition>{}), ContractError);
}

TEST_CASE("evaluate_batch score equals the mean log-likelihood") {
    Rng rng(10);
    const auto p = oracle::random_params({4, 4, 8}, rng, 0.5);
    const auto g = oracle::random_graph(4, 4, rng);
    std::vector<Transition> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(oracle::random_transition(4, 4, rng));
    const auto ev = evaluate_batch(p, g, batch);
    CHECK(ev.log_likelihood == doctest::Approx(oracle::mean_log_likelihood(p, g, batch, kDefaultSigmaMin)));
    CHECK(ev.log_likelihood == doctest::Approx(batch_log_likelihood(p, g, batch)));
    double split = 0.0;
    for (double v : ev.feature_log_likelihood) split += v;
    CHECK(split == doctest::Approx(ev.log_likelihood));
}

TEST_CASE("apply_functional_update arithmetic") {
    Rng rng(12);
    const auto p = oracle::random_params({2, 2, 3}, rng);
    const auto g = oracle::random_params({2, 2, 3}, rng);
    FunctionalParams neg = g;
    neg.for_each([](double& v) { v = -v; });

    CHECK(apply_functional_update(p, std::vector{g}, 0.0) == p);
    CHECK(apply_functional_update(p, std::vector{g, neg}, 0.7) == p);

    const auto stepped = apply_functional_update(p, std::vector{g}, 1.0);
    std::vector<double> pv, gv, sv;
    p.for_each([&](const double& v) { pv.push_back(v); });
    g.for_each([&](const double& v) { gv.push_back(v); });
    stepped.for_each([&](const double& v) { sv.push_back(v); });
    for (std::size_t i = 0; i < pv.size(); ++i) CHECK(sv[i] == pv[i] + gv[i]);
}

TEST_CASE("apply_functional_update refuses non-finite gradients") {
    FunctionalParams p({2, 2, 3});
    FunctionalParams bad({2, 2, 3});
    bad.block(1).b_mu = std::nan("");
    CHECK_THROWS_AS(apply_functional_update(p, std::vector{bad}, 0.1), NumericalError);
    CHECK_THROWS_AS(apply_functional_update(p, std::vector<FunctionalParams>{}, 0.1), ContractError);
}

TEST_CASE("rollout chains clamped forward means") {
    Rng rng(13);
    const auto p = oracle::random_params({3, 2, 4}, rng);
    const auto g = oracle::random_graph(3, 2, rng);
    const Vector s0{0.2, 0.5, 0.9};
    const std::vector<Vector> actions{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};

    const auto traj = rollout(p, g, s0, actions);
    REQUIRE(traj.size() == 3);
    Vector s = s0;
    for (std::size_t t = 0; t < 3; ++t) {
        std::vector<double> mu, sigma;
        oracle::predict(p, g, s, actions[t], kDefaultSigmaMin, mu, sigma);
        for (double& v : mu) v = std::min(1.0, std::max(0.0, v));
        for (std::size_t k = 0; k < 3; ++k) CHECK(traj[t][k] == doctest::Approx(mu[k]).epsilon(1e-12));
        s = mu;
    }
    CHECK(rollout(p, g, s0, actions) == traj);

    const auto single = rollout(p, g, s0, std::vector<Vector>{actions[0]});
    auto pred = forward(p, g, s0, actions[0]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(single[0][k] == std::clamp(pred.mu[k], 0.0, 1.0));
    CHECK_THROWS_AS(rollout(p, g, s0, std::vector<Vector>{}), ContractError);
}

TEST_CASE("graph keeps self-edges") {
    Graph g(3, 2);
    CHECK(g.edge(1, 1));
    CHECK_FALSE(g.edge(0, 1));
    CHECK_THROWS_AS(g.set_edge(2, 2, false), ContractError);
}

TEST_CASE("adding a state feature preserves existing weights") {
    Rng rng(14);
    const auto p = FunctionalParams::initialized({4, 4, 5}, rng);
    const auto grown = p.with_added_state_feature(rng);
    CHECK(grown.dims() == ModelDims{5, 4, 5});
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& a = p.block(k);
        const auto& b = grown.block(k);
        CHECK(a.w_mu == b.w_mu);
        CHECK(a.b_hidden == b.b_hidden);
        for (std::size_t j = 0; j < 5; ++j) {
            for (std::size_t i = 0; i < 4; ++i) CHECK(b.w_hidden(j, i) == a.w_hidden(j, i));
            for (std::size_t i = 4; i < 8; ++i) CHECK(b.w_hidden(j, i + 1) == a.w_hidden(j, i));
        }
    }
    CHECK(grown.finite());
}
