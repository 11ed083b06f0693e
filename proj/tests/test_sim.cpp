#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <random>

#include "pocadapt/mdp.hpp"
#include "pocadapt/sim.hpp"

using namespace pocadapt;
namespace fs = std::filesystem;

namespace {

SimScenario sure_thing() {
    SimScenario s;
    s.name = "sure_thing";
    s.cwe_type = 1;
    s.required_sequence = {3, 6, 8, 0};  // search, write, run, submit
    s.success_probs = {{"advance", 1.0}, {"off_sequence", 0.0}};
    return s;
}

}  // namespace

TEST_CASE("scenario validation rejects malformed sequences") {
    SimScenario s = sure_thing();
    CHECK_NOTHROW(s.validate());
    s.required_sequence.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.required_sequence = {3, 6};  // does not end with submit_and_verify
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = sure_thing();
    s.success_probs["advance"] = 1.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = sure_thing();
    s.t_max = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("initial state reflects the scenario") {
    SimScenario s = sure_thing();
    s.auth_required = 1;
    const ExploitState init = initial_state(s);
    CHECK(init.cwe_type == 1);
    CHECK(init.auth_required == 1);
    CHECK(init.iteration == 0);
    CHECK(scenario_progress(s, init) == 0);
}

TEST_CASE("deterministic rollout completes in exactly |sequence| steps") {
    const SimScenario s = sure_thing();
    std::mt19937_64 rng(1);
    const SimOutcome out = run_episode(s, make_scripted_policy(s), rng, "CVE-X", "ep-0");
    CHECK(out.verified);
    CHECK(out.steps == 4);
    CHECK(out.trajectory.outcome == EpisodeOutcome::VERIFIED);
    CHECK(out.trajectory.well_formed());
    // final submit: +1 step reward plus the +25 terminal bonus folded in
    CHECK(out.trajectory.transitions.back().reward == doctest::Approx(26.0));
}

TEST_CASE("milestones set state flags monotonically and in order") {
    const SimScenario s = sure_thing();
    std::mt19937_64 rng(1);
    ExploitState state = initial_state(s);

    StepResult r = sim_step(s, state, action_from_id(3), rng);
    CHECK(r.next.sink_hit == 1);
    CHECK(scenario_progress(s, r.next) == 1);
    state = r.next;

    r = sim_step(s, state, action_from_id(6), rng);
    CHECK(r.next.sandboxed == 1);
    CHECK(r.next.sink_hit == 1);  // earlier milestones never reset
    CHECK(scenario_progress(s, r.next) == 2);
    state = r.next;

    r = sim_step(s, state, action_from_id(8), rng);
    CHECK(scenario_progress(s, r.next) == 3);
}

TEST_CASE("submit is gated until all milestones are complete") {
    SimScenario s = sure_thing();
    s.success_probs["off_sequence"] = 1.0;  // even then, early submit must fail
    std::mt19937_64 rng(5);
    const ExploitState init = initial_state(s);
    const StepResult r = sim_step(s, init, action_from_id(0), rng);
    CHECK(r.next.last_success == 0);
    CHECK_FALSE(r.done);
}

TEST_CASE("episodes exhaust at the step limit") {
    SimScenario s = sure_thing();
    s.success_probs = {{"advance", 0.0}, {"off_sequence", 0.0}};
    s.t_max = 7;
    std::mt19937_64 rng(2);
    const SimOutcome out = run_episode(s, make_random_policy(), rng, "CVE-X", "ep-0");
    CHECK_FALSE(out.verified);
    CHECK(out.steps == 7);
    CHECK(out.trajectory.outcome == EpisodeOutcome::EXHAUSTED);

    std::mt19937_64 rng2(3);
    CHECK_THROWS_AS(sim_step(s, out.trajectory.transitions.back().next_state,
                             action_from_id(1), rng2),
                    EngineError);
}

TEST_CASE("logged rewards match an independent recomputation") {
    const RewardConfig cfg = RewardConfig::defaults();
    GenerateOptions opts;
    opts.episodes = 30;
    opts.seed = 11;
    const auto trajs = generate_trajectories(benchmark_scenarios(), opts, cfg);
    for (const auto& tau : trajs) {
        REQUIRE(tau.well_formed());
        for (const auto& t : tau.transitions)
            CHECK(t.reward == doctest::Approx(transition_reward(t, tau.outcome, cfg)));
    }
}

TEST_CASE("trajectory generation is deterministic per seed") {
    GenerateOptions opts;
    opts.episodes = 25;
    opts.seed = 99;
    const auto a = generate_trajectories(benchmark_scenarios(), opts);
    const auto b = generate_trajectories(benchmark_scenarios(), opts);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].cve_id == b[i].cve_id);
        REQUIRE(a[i].transitions.size() == b[i].transitions.size());
        for (size_t k = 0; k < a[i].transitions.size(); ++k) {
            CHECK(a[i].transitions[k].action.id == b[i].transitions[k].action.id);
            CHECK(a[i].transitions[k].next_state == b[i].transitions[k].next_state);
        }
    }
    opts.seed = 100;
    const auto c = generate_trajectories(benchmark_scenarios(), opts);
    bool any_difference = false;
    for (size_t i = 0; i < a.size() && !any_difference; ++i) {
        if (a[i].transitions.size() != c[i].transitions.size() || a[i].cve_id != c[i].cve_id) {
            any_difference = true;
            break;
        }
        for (size_t k = 0; k < a[i].transitions.size(); ++k)
            if (a[i].transitions[k].action.id != c[i].transitions[k].action.id) {
                any_difference = true;
                break;
            }
    }
    CHECK(any_difference);
}

TEST_CASE("scripted policy wins every p=1 episode, random policy does not") {
    std::vector<SimScenario> suite = benchmark_scenarios();
    for (auto& s : suite) s.success_probs = {{"advance", 1.0}, {"off_sequence", 0.0}};

    int scripted_wins = 0, random_wins = 0;
    for (int e = 0; e < 50; ++e) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(e));
        const SimScenario& s = suite[static_cast<size_t>(e % 4)];
        if (run_episode(s, make_scripted_policy(s), rng, "CVE-X", "ep").verified) ++scripted_wins;
        std::mt19937_64 rng2(static_cast<std::uint64_t>(e));
        if (run_episode(s, make_random_policy(), rng2, "CVE-X", "ep").verified) ++random_wins;
    }
    CHECK(scripted_wins == 50);
    CHECK(random_wins < 50);
}

TEST_CASE("evaluate_policy aggregates per-seed statistics") {
    const auto suite = benchmark_scenarios();
    const PolicyEval eval = evaluate_policy(make_random_policy(), suite, 40, {1, 2, 3, 4});
    CHECK(eval.per_seed_sr.size() == 4);
    CHECK(eval.sr_mean >= 0.0);
    CHECK(eval.sr_mean <= 100.0);
    for (double ee : eval.per_seed_ee) CHECK(ee <= 1.0);
    // same seeds, same policy family: the evaluation itself is deterministic
    const PolicyEval again = evaluate_policy(make_random_policy(), suite, 40, {1, 2, 3, 4});
    CHECK(eval.sr_mean == again.sr_mean);
    CHECK(eval.tte_mean == again.tte_mean);
}

TEST_CASE("scenario files round-trip") {
    const std::string path =
        (fs::temp_directory_path() / ("pocadapt-scn-" + std::to_string(::getpid()) + ".json"))
            .string();
    const auto suite = benchmark_scenarios();
    save_scenarios(suite, path);
    const auto back = load_scenarios(path);
    REQUIRE(back.size() == suite.size());
    for (size_t i = 0; i < suite.size(); ++i) {
        CHECK(back[i].name == suite[i].name);
        CHECK(back[i].cwe_type == suite[i].cwe_type);
        CHECK(back[i].required_sequence == suite[i].required_sequence);
        CHECK(back[i].weight == doctest::Approx(suite[i].weight));
    }
    fs::remove(path);
    CHECK_THROWS_AS(load_scenarios(path), UnreadableFile);
}
