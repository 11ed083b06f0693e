#pragma once

// MDP formalization of the Exploiter: state features, the 9-action space,
// reward shaping, and trajectory returns.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pocadapt/errors.hpp"

namespace pocadapt {

inline constexpr int kStateDim = 13;

// Action ids are a fixed bijection; the registry is config-extensible but
// defaults to these nine macro-actions.
enum class ActionId : int {
    submit_and_verify = 0,
    execute_command = 1,
    read_file = 2,
    search_code = 3,
    setup_environment = 4,
    analyze_runtime = 5,
    write_exploit = 6,
    modify_exploit = 7,
    run_exploit = 8,
};

inline constexpr int kDefaultActionCount = 9;

struct ExploitAction {
    int id = 0;
    std::string name;
};

const std::vector<ExploitAction>& default_actions();
ExploitAction action_from_id(int id);
ExploitAction action_from_name(const std::string& name);

struct ExploitState {
    int phase = 0;             // pipeline stage, 0..4
    int cwe_type = 0;          // 0..K_cwe-1
    double tool_diversity = 0; // [0,1]
    double error_rate = 0;     // [0,1]
    int iteration = 0;         // 0..T_max
    int last_tool = 0;         // 0..K_tool-1
    int last_success = 0;
    int error_pattern = 0;     // 0..K_err-1
    int has_poc_written = 0;
    int auth_required = 0;
    int sandboxed = 0;
    int sink_hit = 0;
    int partial_success = 0;

    bool operator==(const ExploitState&) const = default;
};

struct EncodingVocab {
    int k_cwe = 4;
    int k_tool = 9;
    int k_err = 8;  // declared default taxonomy, not fixed by the source logs
    int t_max = 50;
};

// Fixed-layout numeric encoding: categoricals as index/(K-1) (K=1 maps to 0),
// binaries as 0/1, iteration as iteration/T_max. Output lies in [0,1]^13.
Eigen::VectorXd encode_state(const ExploitState& s, const EncodingVocab& vocab);

struct RewardConfig {
    std::map<int, double> success_weights;  // action id -> r_success
    std::map<int, double> failure_weights;  // action id -> r_failure
    double terminal_success = 25.0;
    double terminal_failure = -10.0;
    double gamma = 0.99;

    static RewardConfig defaults();
    void validate() const;
};

struct Transition {
    ExploitState state;
    ExploitAction action;
    double reward = 0;
    ExploitState next_state;
    bool done = false;
};

enum class EpisodeOutcome { VERIFIED, EXHAUSTED };

std::string to_string(EpisodeOutcome o);
EpisodeOutcome outcome_from_string(const std::string& s);

struct Trajectory {
    std::string cve_id;
    std::string episode_id;
    std::vector<Transition> transitions;
    EpisodeOutcome outcome = EpisodeOutcome::EXHAUSTED;

    // done appears exactly on the last transition
    bool well_formed() const;
};

double step_reward(const Transition& t, const RewardConfig& cfg);
double terminal_reward(EpisodeOutcome outcome, const RewardConfig& cfg);

// Learning signal for one transition: the immediate step reward, plus the
// terminal reward folded in when done. This is what replay buffers store so
// the TD target carries the terminal signal at done=1.
double transition_reward(const Transition& t, EpisodeOutcome outcome, const RewardConfig& cfg);

// Undiscounted return: sum of step rewards plus the terminal reward.
double trajectory_return(const Trajectory& tau, const RewardConfig& cfg);

// Discounted return: sum gamma^t r_t + gamma^T r_terminal.
double discounted_return(const Trajectory& tau, const RewardConfig& cfg);

}  // namespace pocadapt
