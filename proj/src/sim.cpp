#include "pocadapt/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pocadapt/domain.hpp"
#include "pocadapt/log_store.hpp"

namespace pocadapt {

void SimScenario::validate() const {
    if (required_sequence.empty())
        throw ConfigError("scenario " + name + ": required_sequence must be non-empty");
    if (required_sequence.back() != static_cast<int>(ActionId::submit_and_verify))
        throw ConfigError("scenario " + name + ": required_sequence must end with submit_and_verify");
    if (required_sequence.size() > 5)
        throw ConfigError("scenario " + name + ": at most 4 milestones before submit are supported");
    for (const auto& [key, p] : success_probs)
        if (p < 0.0 || p > 1.0)
            throw ConfigError("scenario " + name + ": probability out of [0,1] for " + key);
    if (t_max <= 0) throw ConfigError("scenario " + name + ": t_max must be positive");
}

namespace {

// flag slots for milestones 0..3, in order
int milestone_flag(const ExploitState& s, int i) {
    switch (i) {
        case 0: return s.sink_hit;
        case 1: return s.sandboxed;
        case 2: return s.has_poc_written;
        case 3: return s.partial_success;
    }
    return 0;
}

void set_milestone_flag(ExploitState& s, int i) {
    switch (i) {
        case 0: s.sink_hit = 1; break;
        case 1: s.sandboxed = 1; break;
        case 2: s.has_poc_written = 1; break;
        case 3: s.partial_success = 1; break;
    }
}

int error_pattern_for(const ExploitAction& a, const EncodingVocab& vocab = EncodingVocab{}) {
    return 1 + a.id % (vocab.k_err - 1);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 over (seed, index) keeps per-episode streams independent
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

int scenario_progress(const SimScenario& scenario, const ExploitState& s) {
    const int milestones = static_cast<int>(scenario.required_sequence.size()) - 1;
    int progress = 0;
    while (progress < milestones && milestone_flag(s, progress)) ++progress;
    return progress;
}

ExploitState initial_state(const SimScenario& scenario) {
    ExploitState s;
    s.phase = static_cast<int>(PipelineStage::Exploiter);
    s.cwe_type = scenario.cwe_type;
    s.auth_required = scenario.auth_required;
    return s;
}

StepResult sim_step(const SimScenario& scenario, const ExploitState& s, const ExploitAction& a,
                    std::mt19937_64& rng, const RewardConfig& cfg) {
    if (s.iteration >= scenario.t_max)
        throw EngineError("sim_step: episode already at its step limit");

    const int milestones = static_cast<int>(scenario.required_sequence.size()) - 1;
    const int progress = scenario_progress(scenario, s);
    const bool at_submit_gate = progress == milestones;
    const bool advancing = a.id == scenario.required_sequence[static_cast<size_t>(progress)];

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double p = advancing ? scenario.advance_prob() : scenario.off_sequence_prob();
    // submitting before the milestones are done never succeeds
    const bool gated_out = a.id == static_cast<int>(ActionId::submit_and_verify) && !at_submit_gate;
    const bool success = !gated_out && coin(rng) < p;

    StepResult result;
    ExploitState next = s;
    next.iteration = s.iteration + 1;
    next.last_tool = a.id;
    next.last_success = success ? 1 : 0;
    next.error_pattern = success ? 0 : error_pattern_for(a);
    next.error_rate = (s.error_rate * s.iteration + (success ? 0.0 : 1.0)) / next.iteration;
    if (a.id != s.last_tool)
        next.tool_diversity = std::min(1.0, s.tool_diversity + 1.0 / 9.0);

    if (success && advancing && !at_submit_gate) set_milestone_flag(next, progress);

    const bool verified = success && advancing && at_submit_gate;
    result.done = verified || next.iteration >= scenario.t_max;
    result.outcome = verified ? EpisodeOutcome::VERIFIED : EpisodeOutcome::EXHAUSTED;
    result.next = next;

    Transition t;
    t.state = s;
    t.action = a;
    t.next_state = next;
    t.done = result.done;
    result.reward = transition_reward(t, result.outcome, cfg);
    return result;
}

SimPolicy make_random_policy() {
    return [](const ExploitState& s, std::mt19937_64& rng) { return random_policy(s, rng); };
}

SimPolicy make_scripted_policy(const SimScenario& scenario, double epsilon) {
    return [scenario, epsilon](const ExploitState& s, std::mt19937_64& rng) {
        if (epsilon > 0.0) {
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            if (coin(rng) < epsilon) return random_policy(s, rng);
        }
        const int progress = scenario_progress(scenario, s);
        return action_from_id(scenario.required_sequence[static_cast<size_t>(progress)]);
    };
}

SimPolicy make_greedy_policy(QNetwork net, EncodingVocab vocab) {
    return [net = std::move(net), vocab](const ExploitState& s, std::mt19937_64&) {
        return recommend(net, s, 1, std::nullopt, vocab).front().action;
    };
}

SimOutcome run_episode(const SimScenario& scenario, const SimPolicy& policy, std::mt19937_64& rng,
                       const std::string& cve_id, const std::string& episode_id,
                       const RewardConfig& cfg) {
    SimOutcome outcome;
    outcome.trajectory.cve_id = cve_id;
    outcome.trajectory.episode_id = episode_id;

    ExploitState s = initial_state(scenario);
    while (true) {
        const ExploitAction a = policy(s, rng);
        const StepResult step = sim_step(scenario, s, a, rng, cfg);
        Transition t;
        t.state = s;
        t.action = a;
        t.reward = step.reward;
        t.next_state = step.next;
        t.done = step.done;
        outcome.trajectory.transitions.push_back(std::move(t));
        s = step.next;
        if (step.done) {
            outcome.trajectory.outcome = step.outcome;
            outcome.verified = step.outcome == EpisodeOutcome::VERIFIED;
            break;
        }
    }
    outcome.steps = static_cast<int>(outcome.trajectory.transitions.size());
    return outcome;
}

std::vector<SimScenario> benchmark_scenarios() {
    using A = ActionId;
    auto seq = [](std::initializer_list<A> ids) {
        std::vector<int> out;
        for (A a : ids) out.push_back(static_cast<int>(a));
        return out;
    };
    std::vector<SimScenario> suite(4);
    suite[0].name = "path_traversal";
    suite[0].cwe_type = 0;
    suite[0].required_sequence = seq({A::search_code, A::setup_environment, A::write_exploit,
                                      A::run_exploit, A::submit_and_verify});
    suite[0].weight = 49;
    suite[1].name = "command_injection";
    suite[1].cwe_type = 1;
    suite[1].required_sequence = seq({A::execute_command, A::setup_environment, A::write_exploit,
                                      A::run_exploit, A::submit_and_verify});
    suite[1].weight = 13;
    suite[2].name = "cross_site_scripting";
    suite[2].cwe_type = 2;
    suite[2].required_sequence = seq({A::search_code, A::read_file, A::write_exploit,
                                      A::run_exploit, A::submit_and_verify});
    suite[2].weight = 17;
    suite[3].name = "code_injection";
    suite[3].cwe_type = 3;
    suite[3].required_sequence = seq({A::search_code, A::setup_environment, A::write_exploit,
                                      A::modify_exploit, A::submit_and_verify});
    suite[3].weight = 21;
    for (auto& s : suite) s.validate();
    return suite;
}

std::vector<SimScenario> load_scenarios(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UnreadableFile("cannot open scenario file: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<SimScenario> out;
    for (const auto& js : j.at("scenarios")) {
        SimScenario s;
        s.name = js.value("name", "scenario_" + std::to_string(out.size()));
        s.cwe_type = js.value("cwe_type", 0);
        for (const auto& ja : js.at("required_sequence"))
            s.required_sequence.push_back(ja.is_string()
                                              ? action_from_name(ja.get<std::string>()).id
                                              : ja.get<int>());
        if (js.contains("success_probs"))
            s.success_probs = js["success_probs"].get<std::map<std::string, double>>();
        s.t_max = js.value("t_max", 50);
        s.weight = js.value("weight", 1.0);
        s.auth_required = js.value("auth_required", 0);
        s.validate();
        out.push_back(std::move(s));
    }
    if (out.empty()) throw ConfigError("scenario file lists no scenarios");
    return out;
}

void save_scenarios(const std::vector<SimScenario>& scenarios, const std::string& path) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : scenarios) {
        nlohmann::json seq = nlohmann::json::array();
        for (int id : s.required_sequence) seq.push_back(action_from_id(id).name);
        list.push_back({{"name", s.name}, {"cwe_type", s.cwe_type}, {"required_sequence", seq},
                        {"success_probs", s.success_probs}, {"t_max", s.t_max},
                        {"weight", s.weight}, {"auth_required", s.auth_required}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw UnreadableFile("cannot write scenario file: " + path);
    out << nlohmann::json{{"scenarios", list}}.dump(2) << "\n";
}

namespace {

const SimScenario& pick_scenario(const std::vector<SimScenario>& scenarios, std::mt19937_64& rng) {
    std::vector<double> weights;
    for (const auto& s : scenarios) weights.push_back(s.weight);
    std::discrete_distribution<size_t> dist(weights.begin(), weights.end());
    return scenarios[dist(rng)];
}

}  // namespace

std::vector<Trajectory> generate_trajectories(const std::vector<SimScenario>& scenarios,
                                              const GenerateOptions& opts,
                                              const RewardConfig& cfg) {
    if (opts.episodes < 1) throw ConfigError("episodes must be >= 1");
    std::vector<Trajectory> out;
    for (int e = 0; e < opts.episodes; ++e) {
        std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(e)));
        const SimScenario& scenario = pick_scenario(scenarios, rng);

        SimPolicy policy;
        switch (opts.policy) {
            case PolicyKind::Random: policy = make_random_policy(); break;
            case PolicyKind::Scripted: policy = make_scripted_policy(scenario, 0.0); break;
            case PolicyKind::EpsilonScripted: policy = make_scripted_policy(scenario, opts.epsilon); break;
            case PolicyKind::Checkpoint: policy = make_greedy_policy(opts.checkpoint_net); break;
        }

        char cve[64];
        std::snprintf(cve, sizeof cve, "CVE-2025-%d%04d", scenario.cwe_type, e % 10000);
        const std::string episode_id = "ep-" + std::to_string(e);
        out.push_back(run_episode(scenario, policy, rng, cve, episode_id, cfg).trajectory);
    }
    return out;
}

void generate_logs(const std::vector<SimScenario>& scenarios, const GenerateOptions& opts,
                   const std::string& out_path, const RewardConfig& cfg) {
    const auto trajs = generate_trajectories(scenarios, opts, cfg);
    const std::string tmp = out_path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFile("cannot write log file: " + tmp);
        out << trajectories_to_log(trajs);
    }
    std::rename(tmp.c_str(), out_path.c_str());
}

namespace {

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double sum = 0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double acc = 0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

PolicyEval evaluate_policy(const SimPolicy& policy, const std::vector<SimScenario>& scenarios,
                           int episodes, const std::vector<std::uint64_t>& seeds,
                           const RewardConfig& cfg) {
    PolicyEval eval;
    for (std::uint64_t seed : seeds) {
        int successes = 0;
        long total_actions = 0;
        long success_steps = 0;
        for (int e = 0; e < episodes; ++e) {
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
            const SimScenario& scenario = pick_scenario(scenarios, rng);
            const SimOutcome outcome = run_episode(scenario, policy, rng,
                                                   "CVE-EVAL-" + std::to_string(e),
                                                   "eval-" + std::to_string(e), cfg);
            total_actions += outcome.steps;
            if (outcome.verified) {
                ++successes;
                success_steps += outcome.steps;
            }
        }
        eval.per_seed_sr.push_back(100.0 * successes / episodes);
        if (successes > 0)
            eval.per_seed_tte.push_back(static_cast<double>(success_steps) / successes);
        eval.per_seed_ee.push_back(total_actions > 0
                                       ? static_cast<double>(successes) / static_cast<double>(total_actions)
                                       : 0.0);
    }
    eval.sr_mean = mean_of(eval.per_seed_sr);
    eval.sr_std = stddev_of(eval.per_seed_sr);
    eval.tte_mean = mean_of(eval.per_seed_tte);
    eval.tte_std = stddev_of(eval.per_seed_tte);
    eval.ee_mean = mean_of(eval.per_seed_ee);
    eval.ee_std = stddev_of(eval.per_seed_ee);
    return eval;
}

}  // namespace pocadapt
