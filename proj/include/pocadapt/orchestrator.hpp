#pragma once

// Five-stage pipeline state machine: role-specialized agents behind a
// least-privilege tool registry, bounded feedback loops, and trajectory
// logging.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pocadapt/domain.hpp"
#include "pocadapt/mdp.hpp"
#include "pocadapt/metrics.hpp"
#include "pocadapt/oracle.hpp"

namespace pocadapt {

enum class AgentRole { RCA, Planner, Exploiter, Validator };

std::string to_string(AgentRole role);

enum class SideEffect { read, write, execute, env };

using ToolHandler = std::function<nlohmann::json(const nlohmann::json& args)>;

// The 16 sandboxed tools; registration outside this closed set is rejected.
const std::set<std::string>& known_tool_names();

class ToolRegistry {
public:
    void register_tool(const std::string& name, SideEffect effect, ToolHandler handler);
    bool has(const std::string& name) const;
    nlohmann::json invoke(const std::string& name, const nlohmann::json& args) const;

private:
    struct Entry {
        SideEffect effect;
        ToolHandler handler;
    };
    std::map<std::string, Entry> tools_;
};

// All 16 tools wired to a local sandbox executor. Tool workspace and command
// execution share the executor's root directory.
ToolRegistry make_default_registry(LocalDirExecutor& executor);

// Per-agent tool allocation under least privilege; config-overridable.
std::set<std::string> default_tool_allocation(AgentRole role);

struct AuditRecord {
    std::string run_id;
    std::string stage;
    std::string agent;
    std::string tool;
    std::string args_digest;
    bool ok = false;
    std::int64_t ts = 0;  // logical, monotonic per run

    nlohmann::json to_json() const;
};

// One agent's window onto the registry for one pipeline stage: enforces the
// allocation, audits every call, and charges the token account.
class ToolSession {
public:
    ToolSession(const ToolRegistry& registry, AgentRole role, std::set<std::string> allowed,
                std::string run_id, PipelineStage stage, std::vector<AuditRecord>& audit,
                TokenAccount& tokens, std::int64_t& clock);

    nlohmann::json invoke(const std::string& tool, const nlohmann::json& args);
    AgentRole role() const { return role_; }

private:
    const ToolRegistry& registry_;
    AgentRole role_;
    std::set<std::string> allowed_;
    std::string run_id_;
    PipelineStage stage_;
    std::vector<AuditRecord>& audit_;
    TokenAccount& tokens_;
    std::int64_t& clock_;
};

class Agent {
public:
    Agent(AgentRole role, std::set<std::string> allowed_tools)
        : role_(role), allowed_tools_(std::move(allowed_tools)) {}
    virtual ~Agent() = default;
    AgentRole role() const { return role_; }
    const std::set<std::string>& allowed_tools() const { return allowed_tools_; }

private:
    AgentRole role_;
    std::set<std::string> allowed_tools_;
};

struct RcaFailed : EngineError { using EngineError::EngineError; };
struct PlannerFailed : EngineError {
    std::string category;
    PlannerFailed(std::string cat, const std::string& msg)
        : EngineError(msg), category(std::move(cat)) {}
};
struct ExploiterFailed : EngineError { using EngineError::EngineError; };

class RcaAgentBase : public Agent {
public:
    using Agent::Agent;
    virtual RcaReport invoke(ToolSession& tools, const BugContext& c, const Feedback* fb) = 0;
};

class PlannerAgentBase : public Agent {
public:
    using Agent::Agent;
    virtual PlannerReport invoke(ToolSession& tools, const BugContext& c, const RcaReport& r,
                                 int retry_budget, int* rebuilds_used) = 0;
};

struct ExploiterStepOutcome {
    bool success = false;
    bool submitted = false;
    std::optional<std::pair<ExploitCandidate, Hypothesis>> candidate;
};

class ExploiterAgentBase : public Agent {
public:
    using Agent::Agent;
    // Called once before the action loop starts.
    virtual void begin(ToolSession&, const BugContext&, const RcaReport&, const PlannerReport&) {}
    // Pick one action from `allowed` (never outside it).
    virtual int choose_action(const ExploitState& s, const std::vector<int>& allowed) = 0;
    virtual ExploiterStepOutcome perform(ToolSession& tools, int action_id) = 0;
    // Validator feedback loop re-entry.
    virtual std::pair<ExploitCandidate, Hypothesis> refine(ToolSession& tools,
                                                           const Feedback& fb) = 0;
    // Self-verification before emission; false forces one internal rewrite.
    virtual bool self_check(const ExploitCandidate& e, const Hypothesis& h) = 0;
};

struct RunBudget {
    double wall_clock_limit_min = 60.0;
    long token_limit = 1'000'000;
    int refinement_budget = 3;
    int step_limit = 50;

    void validate() const;
};

struct PipelineRun {
    std::string run_id;
    BugContext context;
    std::optional<RcaReport> rca;
    std::optional<PlannerReport> plan;
    std::optional<std::pair<ExploitCandidate, Hypothesis>> exploit;
    Verdict verdict;
    Trajectory trajectory;
    TokenAccount accounting;
    std::vector<AuditRecord> audit;
    int rebuilds = 0;
    int validator_iterations = 0;
    bool rca_reentered = false;
};

// Policy hook: returns the allowed action ids (top-k) for a state.
using RecommendCallback = std::function<std::vector<int>(const ExploitState&)>;

struct PipelineDeps {
    LocalDirExecutor& executor;
    const ToolRegistry& registry;
    MatchJudge& judge;
    RecommendCallback policy;  // optional
    EncodingVocab vocab;
};

struct PipelineAgents {
    RcaAgentBase& rca;
    PlannerAgentBase& planner;
    ExploiterAgentBase& exploiter;
};

RcaReport run_rca(RcaAgentBase& agent, const BugContext& c, const Feedback* fb,
                  ToolSession& tools);

PlannerReport run_planner(PlannerAgentBase& agent, const BugContext& c, const RcaReport& r,
                          int retry_budget, ToolSession& tools, int* rebuilds_used = nullptr);

struct ExploiterResult {
    ExploitCandidate candidate;
    Hypothesis hypothesis;
    std::vector<Transition> transitions;  // done flags finalized by the caller
    bool submitted = false;
};

ExploiterResult run_exploiter(ExploiterAgentBase& agent, const BugContext& c, const RcaReport& r,
                              const PlannerReport& p, const RecommendCallback& policy,
                              const RunBudget& budget, ToolSession& tools,
                              const EncodingVocab& vocab);

PipelineRun run_pipeline(const BugContext& c, const PipelineAgents& agents,
                         const PipelineDeps& deps, const RunBudget& budget);

void write_trajectory_log(const PipelineRun& run, const std::string& path);
void write_audit_log(const PipelineRun& run, const std::string& path);

// Scripted fixture agents. They operate over a fixture repo tree that was
// materialized into the sandbox root; markers in the sources drive RCA, a
// plan.json drives the Planner, and exploit/hypothesis files drive the
// Exploiter.
std::unique_ptr<RcaAgentBase> make_scripted_rca_agent();
std::unique_ptr<PlannerAgentBase> make_scripted_planner_agent();
std::unique_ptr<ExploiterAgentBase> make_scripted_exploiter_agent();

}  // namespace pocadapt
