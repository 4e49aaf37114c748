#include "cwm/gridworld.hpp"

#include <algorithm>
#include <cmath>

namespace cwm {

namespace {

enum Feature : std::size_t { kX = 0, kY = 1, kXa = 2, kC = 3, kH = 4 };

}  // namespace

void GridConfig::validate() const {
    require(width >= 2 && height >= 2, "grid must be at least 2x2");
    require(step_size >= 1, "step_size must be >= 1");
    require(episode_len >= 1, "episode_len must be positive");
    require(std::isfinite(heal_gain) && heal_gain >= 0.0, "heal_gain must be finite and non-negative");
    require(initial_health >= 0.0 && initial_health <= 1.0, "initial health must lie in [0, 1]");
    require(start_x.lo >= 0 && start_x.lo <= start_x.hi && start_x.hi < width, "start_x range invalid");
    require(xa.lo <= xa.hi && xa.hi < width, "xa range invalid");
    require(xa.lo > start_x.hi, "healing area must lie strictly right of the start range");
}

std::size_t state_dim(Stage stage) { return stage == Stage::one ? 4 : 5; }

std::vector<std::string> output_names(Stage stage) {
    std::vector<std::string> names{"X", "Y", "X_a", "C"};
    if (stage == Stage::two) names.emplace_back("H");
    return names;
}

std::vector<std::string> input_names(Stage stage) {
    auto names = output_names(stage);
    for (Action a : kAllActions) names.emplace_back(action_name(a));
    return names;
}

std::string_view action_name(Action a) {
    switch (a) {
        case Action::left: return "A_left";
        case Action::right: return "A_right";
        case Action::up: return "A_up";
        case Action::down: return "A_down";
    }
    return "?";
}

EnvState reset(const GridConfig& cfg, Rng& rng) {
    EnvState s;
    s.x = static_cast<int>(uniform_int(rng, cfg.start_x.lo, cfg.start_x.hi));
    s.y = static_cast<int>(uniform_int(rng, 0, cfg.height - 1));
    s.xa = static_cast<int>(uniform_int(rng, cfg.xa.lo, cfg.xa.hi));
    s.h = cfg.initial_health;
    s.c = s.xa <= s.x ? 1 : 0;
    return s;
}

EnvState step(const GridConfig& cfg, const EnvState& state, Action action) {
    EnvState next = state;
    switch (action) {
        case Action::left: next.x = state.x - cfg.step_size; break;
        case Action::right: next.x = state.x + cfg.step_size; break;
        case Action::up: next.y = state.y + cfg.step_size; break;
        case Action::down: next.y = state.y - cfg.step_size; break;
    }
    next.x = std::clamp(next.x, 0, cfg.width - 1);
    next.y = std::clamp(next.y, 0, cfg.height - 1);
    // Color and health read the previous step's values.
    next.c = state.xa <= state.x ? 1 : 0;
    next.h = std::clamp(state.h + cfg.heal_gain * state.c, 0.0, 1.0);
    return next;
}

Vector encode(const EnvState& state, Stage stage, const GridConfig& cfg) {
    const double wx = cfg.width - 1;
    const double hy = cfg.height - 1;
    Vector v{state.x / wx, state.y / hy, state.xa / wx, static_cast<double>(state.c)};
    if (stage == Stage::two) v.push_back(state.h);
    return v;
}

EnvState decode(std::span<const double> f, Stage stage, const GridConfig& cfg) {
    require(f.size() == state_dim(stage), "feature vector length does not match stage");
    EnvState s;
    s.x = static_cast<int>(std::lround(f[kX] * (cfg.width - 1)));
    s.y = static_cast<int>(std::lround(f[kY] * (cfg.height - 1)));
    s.xa = static_cast<int>(std::lround(f[kXa] * (cfg.width - 1)));
    s.c = f[kC] >= 0.5 ? 1 : 0;
    s.h = stage == Stage::two ? f[kH] : cfg.initial_health;
    return s;
}

Vector one_hot(Action a) {
    Vector v(kActionCount, 0.0);
    v[static_cast<std::size_t>(a)] = 1.0;
    return v;
}

Graph ground_truth_graph(Stage stage) {
    const std::size_t ds = state_dim(stage);
    Graph g(ds, kActionCount);
    auto action_row = [ds](Action a) { return ds + static_cast<std::size_t>(a); };
    g.set_edge(action_row(Action::left), kX, true);
    g.set_edge(action_row(Action::right), kX, true);
    g.set_edge(action_row(Action::up), kY, true);
    g.set_edge(action_row(Action::down), kY, true);
    g.set_edge(kX, kC, true);
    g.set_edge(kXa, kC, true);
    if (stage == Stage::two) g.set_edge(kC, kH, true);
    return g;
}

}  // namespace cwm
