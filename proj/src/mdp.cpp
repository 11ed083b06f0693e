#include "pocadapt/mdp.hpp"

#include <cmath>

namespace pocadapt {

const std::vector<ExploitAction>& default_actions() {
    static const std::vector<ExploitAction> actions = {
        {0, "submit_and_verify"}, {1, "execute_command"}, {2, "read_file"},
        {3, "search_code"},       {4, "setup_environment"}, {5, "analyze_runtime"},
        {6, "write_exploit"},     {7, "modify_exploit"},  {8, "run_exploit"},
    };
    return actions;
}

ExploitAction action_from_id(int id) {
    const auto& actions = default_actions();
    if (id < 0 || id >= static_cast<int>(actions.size()))
        throw OutOfVocabulary("action id out of range: " + std::to_string(id));
    return actions[static_cast<size_t>(id)];
}

ExploitAction action_from_name(const std::string& name) {
    for (const auto& a : default_actions())
        if (a.name == name) return a;
    throw OutOfVocabulary("unknown action name: " + name);
}

namespace {

double norm_index(int value, int k, const char* what) {
    if (value < 0 || value >= k)
        throw OutOfVocabulary(std::string(what) + " out of vocabulary: " + std::to_string(value));
    return k <= 1 ? 0.0 : static_cast<double>(value) / static_cast<double>(k - 1);
}

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

Eigen::VectorXd encode_state(const ExploitState& s, const EncodingVocab& vocab) {
    if (s.iteration < 0 || s.iteration > vocab.t_max)
        throw OutOfVocabulary("iteration exceeds T_max: " + std::to_string(s.iteration));
    Eigen::VectorXd v(kStateDim);
    v(0) = norm_index(s.phase, 5, "phase");
    v(1) = norm_index(s.cwe_type, vocab.k_cwe, "cwe_type");
    v(2) = clamp01(s.tool_diversity);
    v(3) = clamp01(s.error_rate);
    v(4) = vocab.t_max == 0 ? 0.0 : static_cast<double>(s.iteration) / vocab.t_max;
    v(5) = norm_index(s.last_tool, vocab.k_tool, "last_tool");
    v(6) = s.last_success ? 1.0 : 0.0;
    v(7) = norm_index(s.error_pattern, vocab.k_err, "error_pattern");
    v(8) = s.has_poc_written ? 1.0 : 0.0;
    v(9) = s.auth_required ? 1.0 : 0.0;
    v(10) = s.sandboxed ? 1.0 : 0.0;
    v(11) = s.sink_hit ? 1.0 : 0.0;
    v(12) = s.partial_success ? 1.0 : 0.0;
    return v;
}

RewardConfig RewardConfig::defaults() {
    RewardConfig cfg;
    for (const auto& a : default_actions()) {
        cfg.success_weights[a.id] = 1.0;
        cfg.failure_weights[a.id] = -1.0;
    }
    // harsher penalty where repetitive errors are most expensive
    cfg.failure_weights[static_cast<int>(ActionId::run_exploit)] = -2.0;
    cfg.failure_weights[static_cast<int>(ActionId::submit_and_verify)] = -2.0;
    return cfg;
}

void RewardConfig::validate() const {
    if (!(terminal_success > 0 && terminal_failure < 0))
        throw ConfigError("terminal rewards must satisfy terminal_success > 0 > terminal_failure");
    if (!(gamma > 0 && gamma <= 1))
        throw ConfigError("gamma must lie in (0,1]");
    for (const auto& a : default_actions()) {
        if (!success_weights.count(a.id) || !failure_weights.count(a.id))
            throw ConfigError("reward weights missing for action " + a.name);
    }
}

std::string to_string(EpisodeOutcome o) {
    return o == EpisodeOutcome::VERIFIED ? "VERIFIED" : "EXHAUSTED";
}

EpisodeOutcome outcome_from_string(const std::string& s) {
    if (s == "VERIFIED") return EpisodeOutcome::VERIFIED;
    if (s == "EXHAUSTED") return EpisodeOutcome::EXHAUSTED;
    throw EngineError("unknown episode outcome: " + s);
}

bool Trajectory::well_formed() const {
    if (transitions.empty()) return true;
    for (size_t i = 0; i + 1 < transitions.size(); ++i)
        if (transitions[i].done) return false;
    return transitions.back().done;
}

namespace {

double immediate_reward(const ExploitAction& a, const ExploitState& next, const RewardConfig& cfg) {
    const auto& table = next.last_success ? cfg.success_weights : cfg.failure_weights;
    const auto it = table.find(a.id);
    if (it == table.end())
        throw ConfigError("no reward weight for action id " + std::to_string(a.id));
    return it->second;
}

}  // namespace

double step_reward(const Transition& t, const RewardConfig& cfg) {
    if (t.done) throw EngineError("step_reward called on a terminal transition");
    return immediate_reward(t.action, t.next_state, cfg);
}

double terminal_reward(EpisodeOutcome outcome, const RewardConfig& cfg) {
    return outcome == EpisodeOutcome::VERIFIED ? cfg.terminal_success : cfg.terminal_failure;
}

double transition_reward(const Transition& t, EpisodeOutcome outcome, const RewardConfig& cfg) {
    double r = immediate_reward(t.action, t.next_state, cfg);
    if (t.done) r += terminal_reward(outcome, cfg);
    return r;
}

double trajectory_return(const Trajectory& tau, const RewardConfig& cfg) {
    double total = 0;
    for (const auto& t : tau.transitions)
        total += immediate_reward(t.action, t.next_state, cfg);
    return total + terminal_reward(tau.outcome, cfg);
}

double discounted_return(const Trajectory& tau, const RewardConfig& cfg) {
    double total = 0;
    double g = 1.0;
    for (const auto& t : tau.transitions) {
        total += g * immediate_reward(t.action, t.next_state, cfg);
        g *= cfg.gamma;
    }
    return total + g * terminal_reward(tau.outcome, cfg);
}

}  // namespace pocadapt
