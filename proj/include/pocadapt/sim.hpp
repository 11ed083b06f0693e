#pragma once

// Synthetic exploitation MDP used to generate trajectory logs and to compare
// trained policies against the random baseline at desk scale. All dynamics
// here are declared artifacts of this repo.

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pocadapt/mdp.hpp"
#include "pocadapt/trainer.hpp"

namespace pocadapt {

struct SimScenario {
    std::string name;
    int cwe_type = 0;
    std::vector<int> required_sequence;  // action ids; must end with submit_and_verify (0)
    std::map<std::string, double> success_probs = {{"advance", 0.8}, {"off_sequence", 0.2}};
    int t_max = 50;
    double weight = 1.0;  // relative frequency in a suite
    int auth_required = 0;

    void validate() const;
    double advance_prob() const { return success_probs.at("advance"); }
    double off_sequence_prob() const { return success_probs.at("off_sequence"); }
};

// Milestone i completion (i-th non-terminal sequence entry) sets the i-th
// flag of [sink_hit, sandboxed, has_poc_written, partial_success], so
// progress is fully decodable from the state features.
int scenario_progress(const SimScenario& scenario, const ExploitState& s);

ExploitState initial_state(const SimScenario& scenario);

struct StepResult {
    ExploitState next;
    double reward = 0;
    bool done = false;
    EpisodeOutcome outcome = EpisodeOutcome::EXHAUSTED;  // meaningful when done
};

StepResult sim_step(const SimScenario& scenario, const ExploitState& s, const ExploitAction& a,
                    std::mt19937_64& rng, const RewardConfig& cfg = RewardConfig::defaults());

using SimPolicy = std::function<ExploitAction(const ExploitState&, std::mt19937_64&)>;

SimPolicy make_random_policy();
// Plays the required sequence; with epsilon > 0 it explores uniformly.
SimPolicy make_scripted_policy(const SimScenario& scenario, double epsilon = 0.0);
// Greedy argmax over the checkpoint's online network.
SimPolicy make_greedy_policy(QNetwork net, EncodingVocab vocab = EncodingVocab{});

struct SimOutcome {
    bool verified = false;
    int steps = 0;
    Trajectory trajectory;
};

SimOutcome run_episode(const SimScenario& scenario, const SimPolicy& policy, std::mt19937_64& rng,
                       const std::string& cve_id, const std::string& episode_id,
                       const RewardConfig& cfg = RewardConfig::defaults());

// Benchmark suite: four scenario families with weights mirroring a skewed
// CWE distribution (49/13/17/21).
std::vector<SimScenario> benchmark_scenarios();

std::vector<SimScenario> load_scenarios(const std::string& path);
void save_scenarios(const std::vector<SimScenario>& scenarios, const std::string& path);

enum class PolicyKind { Random, Scripted, EpsilonScripted, Checkpoint };

struct GenerateOptions {
    PolicyKind policy = PolicyKind::EpsilonScripted;
    double epsilon = 0.3;
    int episodes = 100;
    std::uint64_t seed = 0;
    QNetwork checkpoint_net;  // used when policy == Checkpoint
};

// Writes log-store schema lines; deterministic per seed (per-episode
// generators derived from (seed, episode index)).
std::vector<Trajectory> generate_trajectories(const std::vector<SimScenario>& scenarios,
                                              const GenerateOptions& opts,
                                              const RewardConfig& cfg = RewardConfig::defaults());
void generate_logs(const std::vector<SimScenario>& scenarios, const GenerateOptions& opts,
                   const std::string& out_path,
                   const RewardConfig& cfg = RewardConfig::defaults());

struct PolicyEval {
    double sr_mean = 0, sr_std = 0;      // percentage
    double tte_mean = 0, tte_std = 0;    // steps, over seeds with >= 1 success
    double ee_mean = 0, ee_std = 0;
    std::vector<double> per_seed_sr;
    std::vector<double> per_seed_tte;
    std::vector<double> per_seed_ee;
};

// Runs `episodes` rollouts per seed and reports mean +- stddev across seeds.
PolicyEval evaluate_policy(const SimPolicy& policy, const std::vector<SimScenario>& scenarios,
                           int episodes, const std::vector<std::uint64_t>& seeds,
                           const RewardConfig& cfg = RewardConfig::defaults());

}  // namespace pocadapt
