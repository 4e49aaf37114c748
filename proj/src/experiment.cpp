#include "cwm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace cwm {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
    kTagInit = 1,
    kTagStage1Env = 2,
    kTagStage1Train = 3,
    kTagStage1Actions = 4,
    kTagExpand = 10,
    kTagStage2Env = 11,
    kTagStage2Train = 12,
    kTagStage2Plan = 13,
};

ModelDims dims_for(const ExperimentConfig& cfg, Stage stage) {
    return {state_dim(stage), kActionCount, static_cast<std::size_t>(cfg.d_h)};
}

std::size_t edge_rank(const std::string& name) {
    static const auto names = input_names(Stage::two);
    const auto it = std::find(names.begin(), names.end(), name);
    return static_cast<std::size_t>(it - names.begin());
}

std::string format_probability(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", p);
    return buf;
}

double population_std(std::span<const double> xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return xs.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity_episodes) : capacity_(capacity_episodes) {
    require(capacity_episodes >= 1, "replay capacity must be positive");
}

void ReplayBuffer::push_episode(std::vector<Transition> episode) {
    episodes_.push_back(std::move(episode));
    while (episodes_.size() > capacity_) episodes_.pop_front();
}

std::vector<Transition> ReplayBuffer::all() const {
    std::vector<Transition> out;
    for (const auto& ep : episodes_) out.insert(out.end(), ep.begin(), ep.end());
    return out;
}

std::vector<Transition> play_episode(const GridConfig& grid, Stage stage, EnvState& state,
                                     std::span<const std::size_t> actions) {
    std::vector<Transition> out;
    out.reserve(actions.size());
    for (std::size_t a : actions) {
        require(a < kActionCount, "action index out of range");
        const auto action = static_cast<Action>(a);
        EnvState next = step(grid, state, action);
        out.push_back({encode(state, stage, grid), one_hot(action), encode(next, stage, grid)});
        state = next;
    }
    return out;
}

void train_on_replay(const ExperimentConfig& cfg, Agent& agent, std::span<const Transition> data, Rng& rng) {
    if (data.empty()) return;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    std::vector<Transition> batch;
    std::vector<FunctionalParams> grads;
    std::vector<ScoredGraph> scored;

    for (int epoch = 0; epoch < cfg.epochs_per_episode; ++epoch) {
        // Fisher-Yates with our own integer draw keeps the shuffle portable.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(i) - 1))]);
        }
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(order.size(), start + batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);

            grads.clear();
            scored.clear();
            for (int g = 0; g < cfg.n_graph_samples; ++g) {
                Graph graph = sample_graph(agent.structural, rng);
                auto ev = evaluate_batch(agent.functional, graph, batch, cfg.sigma_min, cfg.variance_weight);
                grads.push_back(std::move(ev.gradient));
                scored.push_back({std::move(graph), ev.log_likelihood, std::move(ev.feature_log_likelihood)});
            }
            const Matrix rg = reinforce_gradient(agent.structural, scored, cfg.reinforce_options());
            const Matrix sg = sparsity_gradient(agent.structural);
            // Both updates read the same pre-update parameters.
            FunctionalParams next_fp = cfg.optimizer == FunctionalOptimizer::adam
                                           ? agent.adam.step(agent.functional, grads, cfg.lr_theta)
                                           : apply_functional_update(agent.functional, grads, cfg.lr_theta);
            agent.structural = apply_structural_update(agent.structural, rg, sg, cfg.lr_gamma, cfg.alpha);
            agent.functional = std::move(next_fp);
        }
    }
}

void append_edge_records(const Agent& agent, std::uint64_t seed, int stage, int episode,
                         std::vector<RunRecord>& out) {
    const auto ins = input_names(agent.stage);
    const auto outs = output_names(agent.stage);
    const StructuralParams& sp = agent.structural;
    for (std::size_t i = 0; i < sp.inputs(); ++i) {
        for (std::size_t k = 0; k < sp.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            out.push_back({"", seed, stage, episode, ins[i], outs[k], logistic(sp.logit(i, k))});
        }
    }
}

StageOneResult run_stage1(const ExperimentConfig& cfg, std::uint64_t seed) {
    StageOneResult res;
    Rng init_rng(derive_seed(seed, kTagInit));
    Rng env_rng(derive_seed(seed, kTagStage1Env));
    Rng train_rng(derive_seed(seed, kTagStage1Train));
    Rng action_rng(derive_seed(seed, kTagStage1Actions));

    res.agent.stage = Stage::one;
    res.agent.functional = FunctionalParams::initialized(dims_for(cfg, Stage::one), init_rng);
    res.agent.structural = StructuralParams(state_dim(Stage::one), kActionCount, cfg.clamp_bound);
    res.agent.adam = AdamState(res.agent.functional.dims());

    ReplayBuffer replay(static_cast<std::size_t>(cfg.replay_episodes));
    const auto horizon = static_cast<std::size_t>(cfg.grid.episode_len);
    for (int ep = 1; ep <= cfg.stage1_episodes; ++ep) {
        EnvState state = reset(cfg.grid, env_rng);
        const ActionCourse course = random_course(kActionCount, horizon, action_rng);
        replay.push_episode(play_episode(cfg.grid, Stage::one, state, course.indices));
        train_on_replay(cfg, res.agent, replay.all(), train_rng);
        append_edge_records(res.agent, seed, 1, ep, res.records);
    }
    return res;
}

Agent expand_to_stage_two(const Agent& stage_one, std::uint64_t seed) {
    require(stage_one.stage == Stage::one, "expected a stage-one agent");
    Rng rng(derive_seed(seed, kTagExpand));
    Agent out;
    out.stage = Stage::two;
    out.functional = stage_one.functional.with_added_state_feature(rng);
    out.structural = stage_one.structural.with_added_state_feature();
    out.adam = AdamState(out.functional.dims());
    return out;
}

std::vector<RunRecord> run_stage2(const ExperimentConfig& cfg, std::uint64_t seed, RewardKind condition,
                                  const Agent& stage_one, Agent* final_agent) {
    ExperimentConfig train_cfg = cfg;
    train_cfg.lr_gamma = cfg.stage2_lr_gamma;
    train_cfg.epochs_per_episode = cfg.stage2_epochs_per_episode;

    Agent agent = expand_to_stage_two(stage_one, seed);
    Rng env_rng(derive_seed(seed, kTagStage2Env));
    Rng train_rng(derive_seed(seed, kTagStage2Train));
    const std::uint64_t plan_root = derive_seed(seed, kTagStage2Plan);
    const PlanConfig pcfg = cfg.plan_config(condition);

    std::vector<RunRecord> records;
    ReplayBuffer replay(static_cast<std::size_t>(cfg.replay_episodes));
    for (int ep = 1; ep <= cfg.stage2_episodes; ++ep) {
        EnvState state = reset(cfg.grid, env_rng);
        const Vector start = encode(state, Stage::two, cfg.grid);
        const PlanResult chosen =
            plan(agent.structural, agent.functional, start, pcfg, derive_seed(plan_root, static_cast<std::uint64_t>(ep)));
        replay.push_episode(play_episode(cfg.grid, Stage::two, state, chosen.course.indices));
        train_on_replay(train_cfg, agent, replay.all(), train_rng);
        append_edge_records(agent, seed, 2, ep, records);
    }
    if (final_agent) *final_agent = std::move(agent);
    return records;
}

StructureSummary evaluate_structure(const StructuralParams& sp, const Graph& truth, double threshold) {
    require(truth.state_dim() == sp.state_dim() && truth.action_dim() == sp.action_dim(),
            "truth graph shape does not match structural parameters");
    StructureSummary s;
    for (std::size_t i = 0; i < sp.inputs(); ++i) {
        for (std::size_t k = 0; k < sp.state_dim(); ++k) {
            if (StructuralParams::frozen(i, k)) continue;
            const bool predicted = logistic(sp.logit(i, k)) > threshold;
            const bool actual = truth.edge(i, k);
            if (predicted && actual) ++s.true_positives;
            else if (predicted) ++s.false_positives;
            else if (actual) ++s.false_negatives;
            else ++s.true_negatives;
        }
    }
    const auto pos = s.true_positives + s.false_negatives;
    const auto neg = s.false_positives + s.true_negatives;
    s.tpr = pos ? static_cast<double>(s.true_positives) / static_cast<double>(pos) : 0.0;
    s.fpr = neg ? static_cast<double>(s.false_positives) / static_cast<double>(neg) : 0.0;
    s.shd = s.false_positives + s.false_negatives;
    return s;
}

std::vector<ConditionSummary> summarize(std::span<const RunRecord> records, double threshold, const std::string& from,
                                        const std::string& to, int stage) {
    // condition -> seed -> episode -> probability
    std::map<std::string, std::map<std::uint64_t, std::map<int, double>>> curves;
    for (const auto& r : records) {
        if (r.stage == stage && r.edge_from == from && r.edge_to == to) {
            curves[r.condition][r.seed][r.episode] = r.probability;
        }
    }
    std::vector<ConditionSummary> out;
    for (const auto& [condition, seeds] : curves) {
        ConditionSummary row;
        row.condition = condition;
        row.seeds = seeds.size();

        int last_episode = 0;
        std::map<int, std::pair<double, std::size_t>> mean_curve;
        std::vector<double> hits;
        std::vector<double> finals;
        for (const auto& [seed, eps] : seeds) {
            last_episode = std::max(last_episode, eps.rbegin()->first);
            for (const auto& [ep, p] : eps) {
                mean_curve[ep].first += p;
                mean_curve[ep].second += 1;
            }
            finals.push_back(eps.rbegin()->second);
        }
        for (const auto& [seed, eps] : seeds) {
            int hit = last_episode + 1;
            for (const auto& [ep, p] : eps) {
                if (p > threshold) {
                    hit = ep;
                    break;
                }
            }
            hits.push_back(hit);
        }
        row.mean_curve_episodes_to_threshold = last_episode + 1;
        for (const auto& [ep, acc] : mean_curve) {
            if (acc.first / static_cast<double>(acc.second) > threshold) {
                row.mean_curve_episodes_to_threshold = ep;
                break;
            }
        }
        const double n = static_cast<double>(hits.size());
        row.episodes_to_threshold_mean = std::accumulate(hits.begin(), hits.end(), 0.0) / n;
        row.episodes_to_threshold_std = population_std(hits, row.episodes_to_threshold_mean);
        row.final_probability_mean = std::accumulate(finals.begin(), finals.end(), 0.0) / n;
        row.final_probability_std = population_std(finals, row.final_probability_mean);
        out.push_back(row);
    }
    return out;
}

void write_records(std::ostream& out, std::span<const RunRecord> records) {
    out << kRecordsHeader << '\n';
    for (const auto& r : records) {
        out << r.condition << ',' << r.seed << ',' << r.stage << ',' << r.episode << ',' << r.edge_from << ','
            << r.edge_to << ',' << format_probability(r.probability) << '\n';
    }
}

std::vector<RunRecord> read_records(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("line 1: missing header");
    if (line != kRecordsHeader) {
        throw std::runtime_error("line 1: header mismatch, expected '" + std::string(kRecordsHeader) + "'");
    }
    std::vector<RunRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fail = [&](const std::string& why) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": " + why);
        };
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (fields.size() != 7) fail("expected 7 fields, got " + std::to_string(fields.size()));
        RunRecord r;
        r.condition = fields[0];
        r.edge_from = fields[4];
        r.edge_to = fields[5];
        try {
            std::size_t pos = 0;
            r.seed = std::stoull(fields[1], &pos);
            if (pos != fields[1].size()) fail("bad seed");
            r.stage = std::stoi(fields[2], &pos);
            if (pos != fields[2].size()) fail("bad stage");
            r.episode = std::stoi(fields[3], &pos);
            if (pos != fields[3].size()) fail("bad episode");
            r.probability = std::stod(fields[6], &pos);
            if (pos != fields[6].size()) fail("bad probability");
        } catch (const std::logic_error&) {
            fail("unparseable number");
        }
        if (!(r.probability >= 0.0 && r.probability <= 1.0)) fail("probability outside [0, 1]");
        records.push_back(std::move(r));
    }
    return records;
}

void write_summary(std::ostream& out, std::span<const ConditionSummary> rows) {
    out << "condition,seeds,episodes_to_threshold_mean,episodes_to_threshold_std,"
           "mean_curve_episodes_to_threshold,final_probability_mean,final_probability_std\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.4f,%d,%.6f,%.6f\n", r.condition.c_str(), r.seeds,
                      r.episodes_to_threshold_mean, r.episodes_to_threshold_std, r.mean_curve_episodes_to_threshold,
                      r.final_probability_mean, r.final_probability_std);
        out << buf;
    }
}

void sort_records(std::vector<RunRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::tuple(a.condition, a.seed, a.stage, a.episode, edge_rank(a.edge_from), edge_rank(a.edge_to)) <
               std::tuple(b.condition, b.seed, b.stage, b.episode, edge_rank(b.edge_from), edge_rank(b.edge_to));
    });
}

ExperimentOutcome run_all(const ExperimentConfig& cfg) {
    cfg.validate();
    struct SeedResult {
        std::vector<RunRecord> records;
        std::vector<std::string> failures;
    };
    std::vector<SeedResult> results(cfg.seeds.size());

    auto run_seed = [&](std::size_t idx) {
        const std::uint64_t seed = cfg.seeds[idx];
        auto& res = results[idx];
        auto fail_all = [&](const std::string& msg) {
            for (RewardKind c : cfg.conditions) {
                res.failures.push_back(std::string(to_string(c)) + "," + std::to_string(seed) + "," + msg);
            }
        };
        StageOneResult s1;
        try {
            s1 = run_stage1(cfg, seed);
        } catch (const std::exception& e) {
            fail_all(std::string("stage 1: ") + e.what());
            return;
        }
        for (RewardKind c : cfg.conditions) {
            const std::string name(to_string(c));
            try {
                auto s2 = run_stage2(cfg, seed, c, s1.agent);
                for (auto r : s1.records) {
                    r.condition = name;
                    res.records.push_back(std::move(r));
                }
                for (auto& r : s2) {
                    r.condition = name;
                    res.records.push_back(std::move(r));
                }
            } catch (const std::exception& e) {
                res.failures.push_back(name + "," + std::to_string(seed) + ",stage 2: " + e.what());
            }
        }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), cfg.seeds.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) run_seed(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) run_seed(i);
            });
        }
    }

    ExperimentOutcome outcome;
    for (auto& r : results) {
        outcome.records.insert(outcome.records.end(), std::make_move_iterator(r.records.begin()),
                               std::make_move_iterator(r.records.end()));
        outcome.failures.insert(outcome.failures.end(), r.failures.begin(), r.failures.end());
    }
    sort_records(outcome.records);
    std::sort(outcome.failures.begin(), outcome.failures.end());
    outcome.summary = summarize(outcome.records, cfg.threshold);
    return outcome;
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + cfg.output_dir.string() + "': " + ec.message());

    auto open = [&](const char* name) {
        std::ofstream f(cfg.output_dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + (cfg.output_dir / name).string() + "'");
        return f;
    };
    // Fail on an unwritable directory before spending any compute.
    {
        auto echo = open("config.echo");
        write_config(echo, cfg);
    }

    const ExperimentOutcome outcome = run_all(cfg);
    {
        auto f = open("records.csv");
        write_records(f, outcome.records);
    }
    {
        auto f = open("summary.csv");
        write_summary(f, outcome.summary);
    }
    log << "wrote " << outcome.records.size() << " records to " << (cfg.output_dir / "records.csv").string() << '\n';
    write_summary(log, outcome.summary);
    if (!outcome.failures.empty()) {
        auto f = open("failures.csv");
        f << "condition,seed,message\n";
        for (const auto& line : outcome.failures) f << line << '\n';
        log << outcome.failures.size() << " run(s) failed; see failures.csv\n";
        return 2;
    }
    return 0;
}

}  // namespace cwm
