#pragma once

// Fully observable grid world with a healing area. The agent's color turns
// green one step after it stands at or right of the area boundary, and its
// health rises one step after it is green.

#include <array>
#include <string>
#include <string_view>

#include "cwm/common.hpp"
#include "cwm/model.hpp"
#include "cwm/rng.hpp"

namespace cwm {

struct IntRange {
    int lo = 0;
    int hi = 0;  // inclusive
    friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct GridConfig {
    int width = 8;
    int height = 8;
    int step_size = 1;
    double heal_gain = 0.1;
    double initial_health = 0.5;
    int episode_len = 15;
    IntRange start_x{0, 2};
    IntRange xa{4, 6};

    /// Throws ContractError if the config is unusable.
    void validate() const;
    friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct EnvState {
    int x = 0;
    int y = 0;
    int xa = 0;
    double h = 0.5;
    int c = 0;  // 1 = green
    friend bool operator==(const EnvState&, const EnvState&) = default;
};

enum class Action : int { left = 0, right = 1, up = 2, down = 3 };
inline constexpr std::size_t kActionCount = 4;
inline constexpr std::array<Action, kActionCount> kAllActions{Action::left, Action::right, Action::up, Action::down};

enum class Stage : int { one = 1, two = 2 };

/// Number of encoded state features: 4 in stage one, 5 in stage two.
std::size_t state_dim(Stage stage);

/// Input labels in model order: state features then actions.
std::vector<std::string> input_names(Stage stage);
/// Output (state feature) labels in model order.
std::vector<std::string> output_names(Stage stage);

std::string_view action_name(Action a);

EnvState reset(const GridConfig& cfg, Rng& rng);
EnvState step(const GridConfig& cfg, const EnvState& state, Action action);

/// Normalized feature vector; stage one [X, Y, X_a, C], stage two adds H.
Vector encode(const EnvState& state, Stage stage, const GridConfig& cfg);
/// Inverse of encode on grid-valued fields. Health is 0.5 in stage one.
EnvState decode(std::span<const double> features, Stage stage, const GridConfig& cfg);

Vector one_hot(Action a);

/// Reference causal graph (self-edges included).
Graph ground_truth_graph(Stage stage);

}  // namespace cwm
