#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cwm/experiment.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cwm;

namespace {

ExperimentConfig tiny() {
    ExperimentConfig cfg;
    cfg.seeds = {0, 1};
    cfg.stage1_episodes = 3;
    cfg.stage2_episodes = 2;
    cfg.n_courses = 3;
    cfg.n_graphs = 2;
    cfg.d_h = 4;
    cfg.epochs_per_episode = 1;
    cfg.stage2_epochs_per_episode = 1;
    return cfg;
}

std::string records_text(const ExperimentOutcome& o) {
    std::ostringstream out;
    write_records(out, o.records);
    return out.str();
}

constexpr std::size_t kStage1Edges = 8 * 4 - 4;
constexpr std::size_t kStage2Edges = 9 * 5 - 5;

}  // namespace

TEST_CASE("replay buffer evicts whole episodes oldest first") {
    ReplayBuffer rb(2);
    auto ep = [](double v) { return std::vector<Transition>{{Vector{v}, Vector{1.0}, Vector{v}}}; };
    rb.push_episode(ep(1));
    rb.push_episode(ep(2));
    rb.push_episode(ep(3));
    CHECK(rb.episode_count() == 2);
    const auto all = rb.all();
    REQUIRE(all.size() == 2);
    CHECK(all[0].prev_state[0] == 2.0);
    CHECK(all[1].prev_state[0] == 3.0);
}

TEST_CASE("played episodes chain their states") {
    const GridConfig grid;
    EnvState s{0, 0, 4, 0.5, 0};
    const std::vector<std::size_t> actions{1, 1, 2, 0};
    const auto tr = play_episode(grid, Stage::two, s, actions);
    REQUIRE(tr.size() == 4);
    for (std::size_t t = 1; t < tr.size(); ++t) CHECK(tr[t].prev_state == tr[t - 1].next_state);
    CHECK(tr[0].action == one_hot(Action::right));
    CHECK(encode(s, Stage::two, grid) == tr.back().next_state);
}

TEST_CASE("record counts cover every condition, seed, episode and learnable edge") {
    const auto cfg = tiny();
    const auto out = run_all(cfg);
    CHECK(out.failures.empty());
    const std::size_t per_run = 3 * kStage1Edges + 2 * kStage2Edges;
    CHECK(out.records.size() == per_run * cfg.seeds.size() * cfg.conditions.size());
    for (const auto& r : out.records) {
        CHECK(r.episode >= 1);
        CHECK(r.probability >= 0.0);
        CHECK(r.probability <= 1.0);
        CHECK(r.edge_from != r.edge_to);
    }

    auto more = cfg;
    more.seeds = {0, 1, 2, 3};
    CHECK(run_all(more).records.size() == 2 * out.records.size());
}

TEST_CASE("runs are reproducible and independent of the thread count") {
    auto cfg = tiny();
    cfg.seeds = {0, 1, 2};
    const std::string a = records_text(run_all(cfg));
    CHECK(a == records_text(run_all(cfg)));
    cfg.threads = 3;
    CHECK(a == records_text(run_all(cfg)));
}

TEST_CASE("conditions share the stage-one records") {
    const auto out = run_all(tiny());
    std::map<std::string, std::vector<double>> s1;
    for (const auto& r : out.records)
        if (r.stage == 1) s1[r.condition].push_back(r.probability);
    REQUIRE(s1.size() == 3);
    CHECK(s1["random"] == s1["ambiguity"]);
    CHECK(s1["random"] == s1["learning_progress"]);
}

TEST_CASE("expansion keeps every stage-one logit and weight") {
    auto cfg = tiny();
    const auto s1 = run_stage1(cfg, 4);
    const Agent two = expand_to_stage_two(s1.agent, 4);
    const auto& g1 = s1.agent.structural.gamma();
    const auto& g2 = two.structural.gamma();
    for (std::size_t i = 0; i < 8; ++i) {
        const std::size_t src = i < 4 ? i : i + 1;
        for (std::size_t k = 0; k < 4; ++k) CHECK(g2(src, k) == g1(i, k));
    }
    // New entries: H row and column start undecided, its self-edge frozen on.
    for (std::size_t i = 0; i < 9; ++i)
        if (i != 4) CHECK(g2(i, 4) == 0.0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(g2(4, k) == 0.0);
    CHECK(g2(4, 4) == cfg.clamp_bound);
    CHECK(logistic(g2(3, 4)) == 0.5);

    for (std::size_t k = 0; k < 4; ++k) {
        const auto& b1 = s1.agent.functional.block(k);
        const auto& b2 = two.functional.block(k);
        CHECK(b2.w_mu == b1.w_mu);
        CHECK(b2.b_sigma == b1.b_sigma);
        for (std::size_t j = 0; j < b1.w_hidden.rows(); ++j)
            for (std::size_t i = 0; i < 8; ++i) CHECK(b2.w_hidden(j, i < 4 ? i : i + 1) == b1.w_hidden(j, i));
    }
    CHECK(expand_to_stage_two(s1.agent, 4).functional == two.functional);
}

TEST_CASE("structure evaluation") {
    const Graph truth = ground_truth_graph(Stage::two);
    StructuralParams sat(5, 4);
    for (const auto& e : oracle::learnable_edges(sat)) sat.set_logit(e.input, e.output, truth.edge(e.input, e.output) ? 5.0 : -5.0);
    const auto perfect = evaluate_structure(sat, truth, 0.9);
    CHECK(perfect.shd == 0);
    CHECK(perfect.tpr == 1.0);
    CHECK(perfect.fpr == 0.0);
    CHECK(perfect.true_positives == 7);
    CHECK(perfect.true_negatives == kStage2Edges - 7);

    const auto undecided = evaluate_structure(StructuralParams(5, 4), truth, 0.5);
    CHECK(undecided.tpr == 0.0);
    CHECK(undecided.fpr == 0.0);
    CHECK(undecided.shd == 7);

    // One wrong edge each way.
    sat.set_logit(3, 4, -5.0);
    sat.set_logit(7, 0, 5.0);  // A_up -> X
    const auto two_off = evaluate_structure(sat, truth, 0.9);
    CHECK(two_off.shd == 2);
    CHECK(two_off.false_negatives == 1);
    CHECK(two_off.false_positives == 1);
}

TEST_CASE("summary counts a seed that never crosses as one past the end") {
    std::vector<RunRecord> rs;
    auto add = [&](const std::string& c, std::uint64_t s, int ep, double p) {
        rs.push_back({c, s, 2, ep, "C", "H", p});
    };
    add("a", 0, 1, 0.5);
    add("a", 0, 2, 0.95);
    add("a", 0, 3, 0.97);
    add("a", 1, 1, 0.2);
    add("a", 1, 2, 0.3);
    add("a", 1, 3, 0.4);
    rs.push_back({"a", 0, 2, 1, "X", "H", 0.99});
    const auto sum = summarize(rs, 0.9);
    REQUIRE(sum.size() == 1);
    CHECK(sum[0].seeds == 2);
    CHECK(sum[0].episodes_to_threshold_mean == 3.0);  // (2 + 4) / 2
    CHECK(sum[0].episodes_to_threshold_std == 1.0);
    CHECK(sum[0].mean_curve_episodes_to_threshold == 4);
    CHECK(sum[0].final_probability_mean == doctest::Approx(0.685));
}

TEST_CASE("records round-trip through csv") {
    const auto out = run_all(tiny());
    std::ostringstream text;
    write_records(text, out.records);
    CHECK(text.str().rfind(std::string(kRecordsHeader) + "\n", 0) == 0);
    std::istringstream in(text.str());
    const auto back = read_records(in);
    REQUIRE(back.size() == out.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].condition == out.records[i].condition);
        CHECK(back[i].episode == out.records[i].episode);
        CHECK(std::abs(back[i].probability - out.records[i].probability) <= 5e-7);
    }
}

TEST_CASE("record reader rejects malformed input with a line number") {
    auto error_of = [](const std::string& text) -> std::string {
        std::istringstream in(text);
        try {
            read_records(in);
        } catch (const std::runtime_error& e) {
            return e.what();
        }
        return "";
    };
    const std::string h = std::string(kRecordsHeader) + "\n";
    CHECK(error_of("condition,seed\n").find("line 1") != std::string::npos);
    CHECK(error_of("").find("line 1") != std::string::npos);
    CHECK(error_of(h + "random,0,2,1,C,H,0.5\nrandom,0,2,1,C,H\n").find("line 3") != std::string::npos);
    CHECK(error_of(h + "random,x,2,1,C,H,0.5\n").find("line 2") != std::string::npos);
    CHECK(error_of(h + "random,0,2,1,C,H,1.5\n").find("line 2") != std::string::npos);
    CHECK(error_of(h + "random,0,2,1,C,H,0.5\n") == "");
}

TEST_CASE("sort order is condition, seed, stage, episode, then model edge order") {
    std::vector<RunRecord> rs{
        {"b", 0, 1, 1, "X", "Y", 0.1}, {"a", 1, 1, 1, "X", "Y", 0.1}, {"a", 0, 2, 1, "X", "Y", 0.1},
        {"a", 0, 1, 2, "X", "Y", 0.1}, {"a", 0, 1, 1, "A_up", "Y", 0.1}, {"a", 0, 1, 1, "X", "Y", 0.1},
    };
    sort_records(rs);
    CHECK(rs[0].edge_from == "X");
    CHECK(rs[1].edge_from == "A_up");
    CHECK(rs[2].episode == 2);
    CHECK(rs[3].stage == 2);
    CHECK(rs[4].seed == 1);
    CHECK(rs[5].condition == "b");
}

TEST_CASE("run_experiment writes its outputs") {
    auto cfg = tiny();
    cfg.seeds = {0};
    cfg.conditions = {RewardKind::random};
    cfg.output_dir = std::filesystem::temp_directory_path() / "cwm_test_run";
    std::filesystem::remove_all(cfg.output_dir);
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    for (const char* f : {"records.csv", "summary.csv", "config.echo"}) CHECK(std::filesystem::exists(cfg.output_dir / f));
    std::ifstream in(cfg.output_dir / "records.csv");
    CHECK(read_records(in).size() == 3 * kStage1Edges + 2 * kStage2Edges);
    std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("command-line exit codes") {
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "cwm_test_cli";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(CWM_CLI_PATH) + " " + args + " > " + (dir / "stdout").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    {
        std::ofstream cfg(dir / "ok.cfg");
        cfg << "stage1_episodes = 2\nstage2_episodes = 1\nn_courses = 2\nn_graphs = 2\nd_h = 4\n";
        std::ofstream bad(dir / "bad.cfg");
        bad << "stage1_episodes = 2\nnope = 1\n";
        std::ofstream recs(dir / "bad.csv");
        recs << "not,a,header\n";
    }
    CHECK(run("print-truth --stage 1") == 0);
    CHECK(run("") == 1);
    CHECK(run("run --config " + (dir / "bad.cfg").string()) == 1);
    CHECK(run("run --config " + (dir / "missing.cfg").string()) == 1);
    CHECK(run("eval --records " + (dir / "bad.csv").string()) == 2);
    CHECK(run("run --config " + (dir / "ok.cfg").string() + " --seeds 1 --conditions random --out " + (dir / "o").string()) ==
          0);
    CHECK(run("eval --records " + (dir / "o" / "records.csv").string()) == 0);
    std::filesystem::remove_all(dir);
}
