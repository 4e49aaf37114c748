#include "cwm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace cwm {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("invalid value for '" + key + "': '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw ConfigError("invalid boolean for '" + key + "': '" + text + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter number(T ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

template <typename T>
Setter grid_number(T GridConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.grid.*field = parse_number<T>(k, v);
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seeds", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.seeds = parse_seed_list(v); }},
        {"conditions",
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.conditions = parse_condition_list(v); }},
        {"stage1_episodes", number(&ExperimentConfig::stage1_episodes)},
        {"stage2_episodes", number(&ExperimentConfig::stage2_episodes)},
        {"lr_theta", number(&ExperimentConfig::lr_theta)},
        {"lr_gamma", number(&ExperimentConfig::lr_gamma)},
        {"alpha", number(&ExperimentConfig::alpha)},
        {"n_graph_samples", number(&ExperimentConfig::n_graph_samples)},
        {"baseline",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.baseline = parse_bool(k, v); }},
        {"per_feature_scores",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.per_feature_scores = parse_bool(k, v);
         }},
        {"advantage_clip", number(&ExperimentConfig::advantage_clip)},
        {"optimizer",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "adam") c.optimizer = FunctionalOptimizer::adam;
             else if (v == "sgd") c.optimizer = FunctionalOptimizer::sgd;
             else throw ConfigError("invalid value for '" + k + "': '" + v + "' (expected adam or sgd)");
         }},
        {"replay_episodes", number(&ExperimentConfig::replay_episodes)},
        {"epochs_per_episode", number(&ExperimentConfig::epochs_per_episode)},
        {"stage2_lr_gamma", number(&ExperimentConfig::stage2_lr_gamma)},
        {"stage2_epochs_per_episode", number(&ExperimentConfig::stage2_epochs_per_episode)},
        {"batch_size", number(&ExperimentConfig::batch_size)},
        {"n_courses", number(&ExperimentConfig::n_courses)},
        {"n_graphs", number(&ExperimentConfig::n_graphs)},
        {"sim_lr", number(&ExperimentConfig::sim_lr)},
        {"sim_alpha", number(&ExperimentConfig::sim_alpha)},
        {"width", grid_number(&GridConfig::width)},
        {"height", grid_number(&GridConfig::height)},
        {"step_size", grid_number(&GridConfig::step_size)},
        {"heal_gain", grid_number(&GridConfig::heal_gain)},
        {"initial_health", grid_number(&GridConfig::initial_health)},
        {"episode_len", grid_number(&GridConfig::episode_len)},
        {"start_x_min", [](ExperimentConfig& c, const std::string& k,
                           const std::string& v) { c.grid.start_x.lo = parse_number<int>(k, v); }},
        {"start_x_max", [](ExperimentConfig& c, const std::string& k,
                           const std::string& v) { c.grid.start_x.hi = parse_number<int>(k, v); }},
        {"xa_min",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid.xa.lo = parse_number<int>(k, v); }},
        {"xa_max",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid.xa.hi = parse_number<int>(k, v); }},
        {"d_h", number(&ExperimentConfig::d_h)},
        {"sigma_min", number(&ExperimentConfig::sigma_min)},
        {"variance_weight", number(&ExperimentConfig::variance_weight)},
        {"clamp_bound", number(&ExperimentConfig::clamp_bound)},
        {"threshold", number(&ExperimentConfig::threshold)},
        {"threads", number(&ExperimentConfig::threads)},
        {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
    };
    return table;
}

}  // namespace

std::vector<std::uint64_t> ExperimentConfig::default_seeds(std::size_t n) {
    std::vector<std::uint64_t> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = i;
    return s;
}

void ExperimentConfig::validate() const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    check(!seeds.empty(), "seeds must not be empty");
    check(!conditions.empty(), "conditions must not be empty");
    check(stage1_episodes >= 0 && stage2_episodes >= 0, "episode counts must be non-negative");
    check(lr_theta > 0 && lr_gamma > 0 && alpha > 0 && sim_lr > 0 && sim_alpha > 0, "all rates must be > 0");
    check(std::isfinite(lr_theta) && std::isfinite(lr_gamma) && std::isfinite(alpha) && std::isfinite(sim_lr) &&
              std::isfinite(sim_alpha),
          "all rates must be finite");
    check(n_graph_samples >= 1, "n_graph_samples must be positive");
    check(replay_episodes >= 1, "replay_episodes must be positive");
    check(epochs_per_episode >= 1, "epochs_per_episode must be positive");
    check(stage2_lr_gamma > 0 && std::isfinite(stage2_lr_gamma), "stage2_lr_gamma must be > 0");
    check(stage2_epochs_per_episode >= 1, "stage2_epochs_per_episode must be positive");
    check(batch_size >= 1, "batch_size must be positive");
    check(n_courses >= 1, "n_courses must be positive");
    check(n_graphs >= 2, "n_graphs must be at least 2");
    check(d_h >= 1, "d_h must be positive");
    check(sigma_min > 0 && std::isfinite(sigma_min), "sigma_min must be positive");
    check(variance_weight >= 0 && variance_weight <= 1, "variance_weight must be in [0, 1]");
    check(clamp_bound > 0 && std::isfinite(clamp_bound), "clamp_bound must be positive");
    check(advantage_clip >= 0 && std::isfinite(advantage_clip), "advantage_clip must be >= 0");
    check(threshold > 0 && threshold < 1, "threshold must lie in (0, 1)");
    check(threads >= 1, "threads must be positive");
    check(!output_dir.empty(), "output_dir must not be empty");
    try {
        grid.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
}

PlanConfig ExperimentConfig::plan_config(RewardKind kind) const {
    PlanConfig p;
    p.n_courses = static_cast<std::size_t>(n_courses);
    p.n_graphs = static_cast<std::size_t>(n_graphs);
    p.horizon = static_cast<std::size_t>(grid.episode_len);
    p.sim_lr = sim_lr;
    p.sim_alpha = sim_alpha;
    p.reinforce = reinforce_options();
    p.sigma_min = sigma_min;
    p.reward_kind = kind;
    return p;
}

ReinforceOptions ExperimentConfig::reinforce_options() const {
    return {.baseline = baseline, .per_feature = per_feature_scores, .advantage_clip = advantage_clip};
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg) {
    std::set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string content = trim(line);
        if (content.empty()) continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(content).substr(0, eq));
        const std::string value = trim(std::string_view(content).substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        try {
            it->second(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    return parse_config(in, std::move(base));
}

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_config(std::ostream& out, const ExperimentConfig& c) {
    std::ostringstream seeds;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds << (i ? "," : "") << c.seeds[i];
    std::ostringstream conds;
    for (std::size_t i = 0; i < c.conditions.size(); ++i) conds << (i ? "," : "") << to_string(c.conditions[i]);

    out << "seeds = " << seeds.str() << '\n'
        << "conditions = " << conds.str() << '\n'
        << "stage1_episodes = " << c.stage1_episodes << '\n'
        << "stage2_episodes = " << c.stage2_episodes << '\n'
        << "lr_theta = " << shortest(c.lr_theta) << '\n'
        << "lr_gamma = " << shortest(c.lr_gamma) << '\n'
        << "alpha = " << shortest(c.alpha) << '\n'
        << "n_graph_samples = " << c.n_graph_samples << '\n'
        << "baseline = " << (c.baseline ? "true" : "false") << '\n'
        << "per_feature_scores = " << (c.per_feature_scores ? "true" : "false") << '\n'
        << "advantage_clip = " << shortest(c.advantage_clip) << '\n'
        << "optimizer = " << (c.optimizer == FunctionalOptimizer::adam ? "adam" : "sgd") << '\n'
        << "replay_episodes = " << c.replay_episodes << '\n'
        << "epochs_per_episode = " << c.epochs_per_episode << '\n'
        << "stage2_lr_gamma = " << shortest(c.stage2_lr_gamma) << '\n'
        << "stage2_epochs_per_episode = " << c.stage2_epochs_per_episode << '\n'
        << "batch_size = " << c.batch_size << '\n'
        << "n_courses = " << c.n_courses << '\n'
        << "n_graphs = " << c.n_graphs << '\n'
        << "sim_lr = " << shortest(c.sim_lr) << '\n'
        << "sim_alpha = " << shortest(c.sim_alpha) << '\n'
        << "width = " << c.grid.width << '\n'
        << "height = " << c.grid.height << '\n'
        << "step_size = " << c.grid.step_size << '\n'
        << "heal_gain = " << shortest(c.grid.heal_gain) << '\n'
        << "initial_health = " << shortest(c.grid.initial_health) << '\n'
        << "episode_len = " << c.grid.episode_len << '\n'
        << "start_x_min = " << c.grid.start_x.lo << '\n'
        << "start_x_max = " << c.grid.start_x.hi << '\n'
        << "xa_min = " << c.grid.xa.lo << '\n'
        << "xa_max = " << c.grid.xa.hi << '\n'
        << "d_h = " << c.d_h << '\n'
        << "sigma_min = " << shortest(c.sigma_min) << '\n'
        << "variance_weight = " << shortest(c.variance_weight) << '\n'
        << "clamp_bound = " << shortest(c.clamp_bound) << '\n'
        << "threshold = " << shortest(c.threshold) << '\n'
        << "threads = " << c.threads << '\n'
        << "output_dir = " << c.output_dir.string() << '\n';
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& part : split(text, ',')) {
        if (part.empty()) throw ConfigError("empty entry in seed list '" + text + "'");
        if (const auto dash = part.find('-'); dash != std::string::npos) {
            const auto lo = parse_number<std::uint64_t>("seeds", trim(part.substr(0, dash)));
            const auto hi = parse_number<std::uint64_t>("seeds", trim(part.substr(dash + 1)));
            if (hi < lo) throw ConfigError("descending seed range '" + part + "'");
            for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        } else {
            seeds.push_back(parse_number<std::uint64_t>("seeds", part));
        }
    }
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("duplicate seed in '" + text + "'");
    }
    return seeds;
}

std::vector<RewardKind> parse_condition_list(const std::string& text) {
    std::vector<RewardKind> out;
    for (const auto& part : split(text, ',')) {
        try {
            const RewardKind k = parse_reward_kind(part);
            if (std::find(out.begin(), out.end(), k) != out.end()) {
                throw ConfigError("duplicate condition '" + part + "'");
            }
            out.push_back(k);
        } catch (const ContractError& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

}  // namespace cwm
