#include "pocadapt/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "pocadapt/hash.hpp"
#include "pocadapt/log_store.hpp"

namespace fs = std::filesystem;

namespace pocadapt {

std::string to_string(AgentRole role) {
    switch (role) {
        case AgentRole::RCA: return "RCA";
        case AgentRole::Planner: return "Planner";
        case AgentRole::Exploiter: return "Exploiter";
        case AgentRole::Validator: return "Validator";
    }
    return "unknown";
}

const std::set<std::string>& known_tool_names() {
    static const std::set<std::string> names = {
        "get_file", "write_to_file", "execute_ls_command", "execute_linux_command",
        "find", "grep", "semantic_code_search", "setup_environment", "rebuild_env",
        "run_poc", "refine_poc", "dynamic_trace", "test_exploit_condition",
        "inspect_runtime_state", "analyze_error_output", "set_environment_variable"};
    return names;
}

void ToolRegistry::register_tool(const std::string& name, SideEffect effect, ToolHandler handler) {
    if (!known_tool_names().count(name))
        throw ConfigError("tool name outside the closed registry: " + name);
    tools_[name] = {effect, std::move(handler)};
}

bool ToolRegistry::has(const std::string& name) const { return tools_.count(name) > 0; }

nlohmann::json ToolRegistry::invoke(const std::string& name, const nlohmann::json& args) const {
    const auto it = tools_.find(name);
    if (it == tools_.end()) throw ToolDenied("tool not registered: " + name);
    return it->second.handler(args);
}

std::set<std::string> default_tool_allocation(AgentRole role) {
    switch (role) {
        case AgentRole::RCA:
            return {"get_file", "execute_ls_command", "find", "grep", "semantic_code_search"};
        case AgentRole::Planner:
            return {"setup_environment", "rebuild_env", "execute_linux_command",
                    "set_environment_variable", "get_file"};
        case AgentRole::Exploiter:
            return {"write_to_file", "run_poc", "refine_poc", "dynamic_trace",
                    "test_exploit_condition", "inspect_runtime_state", "analyze_error_output",
                    "execute_linux_command", "get_file", "grep"};
        case AgentRole::Validator:
            return {"run_poc", "inspect_runtime_state", "analyze_error_output",
                    "execute_linux_command"};
    }
    return {};
}

nlohmann::json AuditRecord::to_json() const {
    return {{"run_id", run_id}, {"stage", stage}, {"agent", agent}, {"tool", tool},
            {"args_digest", args_digest}, {"ok", ok}, {"ts", ts}};
}

ToolSession::ToolSession(const ToolRegistry& registry, AgentRole role,
                         std::set<std::string> allowed, std::string run_id, PipelineStage stage,
                         std::vector<AuditRecord>& audit, TokenAccount& tokens,
                         std::int64_t& clock)
    : registry_(registry), role_(role), allowed_(std::move(allowed)),
      run_id_(std::move(run_id)), stage_(stage), audit_(audit), tokens_(tokens), clock_(clock) {}

nlohmann::json ToolSession::invoke(const std::string& tool, const nlohmann::json& args) {
    AuditRecord record;
    record.run_id = run_id_;
    record.stage = to_string(stage_);
    record.agent = to_string(role_);
    record.tool = tool;
    record.args_digest = sha256_hex(args.dump()).substr(0, 16);
    record.ts = ++clock_;

    if (!allowed_.count(tool)) {
        record.ok = false;
        audit_.push_back(std::move(record));
        throw ToolDenied(to_string(role_) + " is not allocated tool " + tool);
    }
    const nlohmann::json result = registry_.invoke(tool, args);
    record.ok = true;
    audit_.push_back(std::move(record));
    // flat token accounting proxy: ~4 chars per token
    tokens_.add(to_string(stage_), static_cast<long>(args.dump().size() / 4 + 1),
                static_cast<long>(result.dump().size() / 4 + 1));
    return result;
}

namespace {

std::vector<std::string> list_workspace_files(const std::string& root) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), root).generic_string();
        if (rel.rfind(".observations/", 0) == 0) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw UnreadableFile("cannot read " + p.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<std::string> identifier_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!current.empty()) {
            if (current.size() > 2) tokens.push_back(current);
            current.clear();
        }
    }
    if (current.size() > 2) tokens.push_back(current);
    return tokens;
}

// normalized bag-of-identifiers cosine between query and file content
double token_cosine(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, double> fa, fb;
    for (const auto& t : a) fa[t] += 1;
    for (const auto& t : b) fb[t] += 1;
    double dot = 0, na = 0, nb = 0;
    for (const auto& [t, c] : fa) {
        na += c * c;
        const auto it = fb.find(t);
        if (it != fb.end()) dot += c * it->second;
    }
    for (const auto& [_, c] : fb) nb += c * c;
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

ToolRegistry make_default_registry(LocalDirExecutor& executor) {
    ToolRegistry registry;
    const std::string root = executor.root();

    registry.register_tool("get_file", SideEffect::read, [root](const nlohmann::json& args) {
        const fs::path p = fs::path(root) / args.at("path").get<std::string>();
        if (!fs::is_regular_file(p)) return nlohmann::json{{"error", "not found"}, {"content", ""}};
        return nlohmann::json{{"content", slurp(p)}};
    });

    registry.register_tool("write_to_file", SideEffect::write, [root](const nlohmann::json& args) {
        const fs::path p = fs::path(root) / args.at("path").get<std::string>();
        fs::create_directories(p.parent_path().empty() ? fs::path(root) : p.parent_path());
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << args.at("content").get<std::string>();
        return nlohmann::json{{"ok", out.good()}};
    });

    registry.register_tool("execute_ls_command", SideEffect::read, [root](const nlohmann::json& args) {
        const fs::path p = fs::path(root) / args.value("path", std::string("."));
        std::vector<std::string> entries;
        if (fs::is_directory(p))
            for (const auto& e : fs::directory_iterator(p))
                entries.push_back(e.path().filename().generic_string());
        std::sort(entries.begin(), entries.end());
        return nlohmann::json{{"entries", entries}};
    });

    auto run_command = [&executor](const nlohmann::json& args) {
        const ExecutionResult r = executor.run(args.at("command").get<std::string>(),
                                               args.value("timeout_ms", std::int64_t{30000}));
        return nlohmann::json{{"status", r.status == ExecStatus::OK ? "OK" : "EXECUTE_FAIL"},
                              {"exit_code", r.exit_code},
                              {"stdout", r.stdout_text},
                              {"stderr", r.stderr_text},
                              {"duration_ms", r.duration_ms},
                              {"failure_detail", r.failure_detail}};
    };
    registry.register_tool("execute_linux_command", SideEffect::execute, run_command);
    registry.register_tool("run_poc", SideEffect::execute, run_command);

    registry.register_tool("find", SideEffect::read, [root](const nlohmann::json& args) {
        const std::string pattern = args.value("pattern", std::string());
        std::vector<std::string> matched;
        for (const auto& rel : list_workspace_files(root))
            if (pattern.empty() || rel.find(pattern) != std::string::npos) matched.push_back(rel);
        return nlohmann::json{{"files", matched}};
    });

    registry.register_tool("grep", SideEffect::read, [root](const nlohmann::json& args) {
        const std::regex re(args.at("pattern").get<std::string>());
        nlohmann::json matches = nlohmann::json::array();
        for (const auto& rel : list_workspace_files(root)) {
            std::ifstream in(fs::path(root) / rel);
            std::string line;
            int line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (std::regex_search(line, re))
                    matches.push_back({{"file", rel}, {"line", line_no}, {"text", line}});
            }
        }
        return nlohmann::json{{"matches", std::move(matches)}};
    });

    registry.register_tool("semantic_code_search", SideEffect::read, [root](const nlohmann::json& args) {
        const auto query = identifier_tokens(args.at("query").get<std::string>());
        std::vector<std::pair<std::string, double>> ranked;
        for (const auto& rel : list_workspace_files(root))
            ranked.emplace_back(rel, token_cosine(query, identifier_tokens(slurp(fs::path(root) / rel))));
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        nlohmann::json out = nlohmann::json::array();
        for (size_t i = 0; i < ranked.size() && i < 10; ++i)
            out.push_back({{"file", ranked[i].first}, {"score", ranked[i].second}});
        return nlohmann::json{{"ranked", std::move(out)}};
    });

    auto setup = [&executor](const nlohmann::json& args) {
        for (const auto& jc : args.at("commands")) {
            const ExecutionResult r = executor.run(jc.get<std::string>(), 30000);
            if (r.status != ExecStatus::OK || r.exit_code != 0)
                return nlohmann::json{{"ok", false},
                                      {"failed_cmd", jc.get<std::string>()},
                                      {"stderr", r.stderr_text},
                                      {"exit_code", r.exit_code}};
        }
        return nlohmann::json{{"ok", true}};
    };
    registry.register_tool("setup_environment", SideEffect::env, setup);
    registry.register_tool("rebuild_env", SideEffect::env, setup);

    registry.register_tool("refine_poc", SideEffect::write, [](const nlohmann::json& args) {
        // scripted refinement simply echoes the provided script; substitution
        // happens in the agent, which owns the candidate pool
        return nlohmann::json{{"script", args.value("script", std::string())}};
    });

    registry.register_tool("dynamic_trace", SideEffect::execute, [&executor](const nlohmann::json& args) {
        const ExecutionResult r =
            executor.run("sh -x -c '" + args.at("command").get<std::string>() + "'", 30000);
        return nlohmann::json{{"trace", r.stderr_text}, {"exit_code", r.exit_code}};
    });

    registry.register_tool("test_exploit_condition", SideEffect::execute,
                           [&executor](const nlohmann::json& args) {
                               const ExecutionResult r =
                                   executor.run(args.at("command").get<std::string>(), 30000);
                               return nlohmann::json{{"ok", r.status == ExecStatus::OK && r.exit_code == 0}};
                           });

    registry.register_tool("inspect_runtime_state", SideEffect::read,
                           [&executor](const nlohmann::json& args) {
                               ProbeSpec spec;
                               spec.kind = target_kind_from_string(args.at("kind").get<std::string>());
                               spec.target = args.at("target").get<std::string>();
                               spec.key = args.value("key", to_string(spec.kind) + ":" + spec.target);
                               spec.capture = args.value("capture", std::string("hash")) == "raw"
                                                  ? ProbeCapture::raw
                                                  : ProbeCapture::hash;
                               const ProbeResult r = executor.probe(spec);
                               nlohmann::json out{{"kind", to_string(r.kind)}};
                               if (r.value) out["value"] = *r.value;
                               if (r.error) out["error"] = *r.error;
                               return out;
                           });

    registry.register_tool("analyze_error_output", SideEffect::read, [](const nlohmann::json& args) {
        const std::string text = args.value("stderr", std::string());
        std::string category = "other";
        if (text.find("TIMEOUT") != std::string::npos) category = "timeout";
        else if (text.find("SyntaxError") != std::string::npos ||
                 text.find("syntax error") != std::string::npos) category = "syntax";
        else if (text.find("dependency") != std::string::npos ||
                 text.find("No module named") != std::string::npos) category = "dependency";
        else if (text.find("Permission denied") != std::string::npos) category = "permission";
        else if (text.find("Connection refused") != std::string::npos) category = "connection";
        else if (text.find("Assertion") != std::string::npos) category = "assertion";
        else if (text.find("not found") != std::string::npos ||
                 text.find("No such file") != std::string::npos) category = "not-found";
        return nlohmann::json{{"category", category}};
    });

    registry.register_tool("set_environment_variable", SideEffect::env,
                           [&executor](const nlohmann::json& args) {
                               executor.set_env(args.at("name").get<std::string>(),
                                                args.at("value").get<std::string>());
                               return nlohmann::json{{"ok", true}};
                           });

    return registry;
}

void RunBudget::validate() const {
    if (wall_clock_limit_min < 0 || token_limit <= 0 || refinement_budget <= 0 || step_limit <= 0)
        throw ConfigError("run budget fields must be positive");
}

// ---------------------------------------------------------------------------
// Scripted RCA agent: marker-driven vulnerability analysis over the fixture
// tree. Markers: "taint:entry", "taint:step", "taint:sink", "guard: <text>".
// ---------------------------------------------------------------------------

namespace {

CodeLocation loc_from_match(const nlohmann::json& m) {
    return {m.at("file").get<std::string>(), m.at("line").get<int>(), m.at("line").get<int>()};
}

std::string loc_key(const CodeLocation& loc) {
    return loc.file + ":" + std::to_string(loc.line_begin);
}

class ScriptedRcaAgent final : public RcaAgentBase {
public:
    ScriptedRcaAgent() : RcaAgentBase(AgentRole::RCA, default_tool_allocation(AgentRole::RCA)) {}

    RcaReport invoke(ToolSession& tools, const BugContext& c, const Feedback* fb) override {
        // collect signals, then rank candidate files by similarity
        tools.invoke("semantic_code_search", {{"query", c.description}});

        const auto sinks = tools.invoke("grep", {{"pattern", "taint:sink"}}).at("matches");
        if (sinks.empty()) throw RcaFailed("no sink locatable in the workspace");
        const auto entries = tools.invoke("grep", {{"pattern", "taint:entry"}}).at("matches");
        const auto steps = tools.invoke("grep", {{"pattern", "taint:step"}}).at("matches");
        const auto guards = tools.invoke("grep", {{"pattern", "guard:"}}).at("matches");

        RcaReport report;
        report.sink = loc_from_match(sinks.front());
        report.loc = report.sink;

        for (const auto& m : entries) report.entry_points.push_back(loc_from_match(m));
        if (fb) {
            // RefineWithFeedback: drop entry points the feedback called out
            std::erase_if(report.entry_points, [fb](const CodeLocation& loc) {
                return std::find(fb->affected_attributes.begin(), fb->affected_attributes.end(),
                                 loc_key(loc)) != fb->affected_attributes.end();
            });
        }
        if (report.entry_points.empty()) throw RcaFailed("no entry points identified");

        std::vector<CodeLocation> step_locs;
        for (const auto& m : steps) step_locs.push_back(loc_from_match(m));

        for (const auto& entry : report.entry_points) {
            std::vector<CodeLocation> path;
            path.push_back(entry);
            for (const auto& s : step_locs) path.push_back(s);
            path.push_back(report.sink);
            report.taint_paths.push_back(std::move(path));
        }

        for (const auto& m : guards) {
            const std::string text = m.at("text").get<std::string>();
            const auto pos = text.find("guard:");
            std::string predicate = text.substr(pos + 6);
            predicate.erase(0, predicate.find_first_not_of(' '));
            report.constraints.push_back(predicate);
        }
        if (report.constraints.empty() && !report.taint_paths.empty())
            report.constraints.push_back("input reaches " + loc_key(report.sink));

        for (const auto& entry : report.entry_points)
            report.trigger_steps.push_back("deliver attacker-controlled input at " + loc_key(entry));
        report.trigger_steps.push_back("propagate through " + std::to_string(step_locs.size()) +
                                       " intermediate step(s)");
        report.trigger_steps.push_back("trigger the sink at " + loc_key(report.sink));
        return report;
    }
};

// ---------------------------------------------------------------------------
// Scripted Planner: drives plan.json through the environment tools with a
// bounded rebuild loop.
// ---------------------------------------------------------------------------

std::string classify_build_failure(const std::string& stderr_text) {
    if (stderr_text.find("dependency") != std::string::npos ||
        stderr_text.find("unsatisfiable") != std::string::npos ||
        stderr_text.find("No module named") != std::string::npos)
        return "DEPENDENCY";
    return "BUILD_FAIL";
}

class ScriptedPlannerAgent final : public PlannerAgentBase {
public:
    ScriptedPlannerAgent()
        : PlannerAgentBase(AgentRole::Planner, default_tool_allocation(AgentRole::Planner)) {}

    PlannerReport invoke(ToolSession& tools, const BugContext&, const RcaReport&,
                         int retry_budget, int* rebuilds_used) override {
        const auto plan_file = tools.invoke("get_file", {{"path", "plan.json"}});
        if (plan_file.contains("error"))
            throw PlannerFailed("BUILD_FAIL", "fixture has no plan.json");
        const nlohmann::json plan = nlohmann::json::parse(plan_file.at("content").get<std::string>());

        PlannerReport report;
        if (plan.contains("env_spec"))
            report.env_spec = plan["env_spec"].get<std::map<std::string, std::string>>();
        for (const auto& cmd : plan.value("build_cmds", nlohmann::json::array()))
            report.build_cmds.push_back(cmd.get<std::string>());
        for (const auto& cmd : plan.value("run_cmds", nlohmann::json::array()))
            report.run_cmds.push_back(cmd.get<std::string>());
        if (plan.contains("access_info"))
            report.access_info = plan["access_info"].get<std::map<std::string, std::string>>();
        if (!report.access_info.count("endpoint"))
            throw PlannerFailed("BUILD_FAIL", "plan exposes no reachable endpoint");
        if (report.run_cmds.empty())
            throw PlannerFailed("BUILD_FAIL", "plan has no run commands");

        for (const auto& [name, value] : report.env_spec)
            if (name.rfind("env.", 0) == 0)
                tools.invoke("set_environment_variable", {{"name", name.substr(4)}, {"value", value}});

        nlohmann::json result = tools.invoke("setup_environment", {{"commands", report.build_cmds}});
        int rebuilds = 0;
        std::string last_stderr = result.value("stderr", std::string());
        while (!result.value("ok", false) && rebuilds < retry_budget) {
            ++rebuilds;
            result = tools.invoke("rebuild_env", {{"commands", report.build_cmds}});
            last_stderr = result.value("stderr", last_stderr);
        }
        if (rebuilds_used) *rebuilds_used = rebuilds;
        if (!result.value("ok", false))
            throw PlannerFailed(classify_build_failure(last_stderr),
                                "environment build failed after " + std::to_string(rebuilds) +
                                    " rebuild(s): " + last_stderr);

        for (const auto& cmd : report.run_cmds) {
            const auto run = tools.invoke("execute_linux_command", {{"command", cmd}});
            if (run.value("exit_code", 1) != 0)
                throw PlannerFailed(classify_build_failure(run.value("stderr", std::string())),
                                    "run command failed: " + cmd);
        }
        return report;
    }
};

// ---------------------------------------------------------------------------
// Scripted Exploiter: plays a fixed macro-action plan over fixture-provided
// exploit variants and hypothesis files.
// ---------------------------------------------------------------------------

class ScriptedExploiterAgent final : public ExploiterAgentBase {
public:
    ScriptedExploiterAgent()
        : ExploiterAgentBase(AgentRole::Exploiter, default_tool_allocation(AgentRole::Exploiter)) {}

    void begin(ToolSession&, const BugContext&, const RcaReport& r, const PlannerReport&) override {
        sink_file_ = r.sink.file;
        version_ = 0;
        plan_cursor_ = 0;
        candidate_.reset();
    }

    int choose_action(const ExploitState&, const std::vector<int>& allowed) override {
        // preferred plan first, then any allowed action as a fallback
        for (size_t i = plan_cursor_; i < plan_.size(); ++i)
            if (std::find(allowed.begin(), allowed.end(), plan_[i]) != allowed.end())
                return plan_[i];
        return allowed.front();
    }

    ExploiterStepOutcome perform(ToolSession& tools, int action_id) override {
        ExploiterStepOutcome out;
        switch (static_cast<ActionId>(action_id)) {
            case ActionId::search_code: {
                const auto matches = tools.invoke("grep", {{"pattern", "taint:sink"}}).at("matches");
                out.success = !matches.empty();
                break;
            }
            case ActionId::read_file: {
                const auto file = tools.invoke("get_file", {{"path", sink_file_}});
                out.success = !file.contains("error");
                break;
            }
            case ActionId::write_exploit:
                out.success = load_candidate(tools, version_);
                break;
            case ActionId::modify_exploit: {
                tools.invoke("refine_poc", {{"script", candidate_ ? candidate_->first.script : ""}});
                out.success = load_candidate(tools, version_ + 1) || candidate_.has_value();
                break;
            }
            case ActionId::run_exploit: {
                if (!candidate_) { out.success = false; break; }
                const auto run = tools.invoke("run_poc", {{"command", candidate_->first.entry_command}});
                out.success = run.value("status", std::string()) == "OK" &&
                              run.value("exit_code", 1) == 0;
                break;
            }
            case ActionId::submit_and_verify: {
                if (!candidate_) { out.success = false; break; }
                if (!self_check(candidate_->first, candidate_->second))
                    load_candidate(tools, version_);  // one internal rewrite
                out.success = true;
                out.submitted = true;
                out.candidate = candidate_;
                break;
            }
            case ActionId::execute_command:
                out.success = tools.invoke("execute_linux_command", {{"command", "true"}})
                                  .value("exit_code", 1) == 0;
                break;
            case ActionId::setup_environment:
                // environment already prepared by the Planner; treat as a probe
                out.success = tools.invoke("execute_linux_command", {{"command", "test -d ."}})
                                  .value("exit_code", 1) == 0;
                break;
            case ActionId::analyze_runtime: {
                const auto r = tools.invoke("inspect_runtime_state",
                                            {{"kind", "file_exists"}, {"target", sink_file_}});
                out.success = r.contains("value");
                break;
            }
        }
        if (out.success && plan_cursor_ < plan_.size() && plan_[plan_cursor_] == action_id)
            ++plan_cursor_;
        return out;
    }

    std::pair<ExploitCandidate, Hypothesis> refine(ToolSession& tools, const Feedback& fb) override {
        tools.invoke("refine_poc",
                     {{"script", candidate_ ? candidate_->first.script : ""}, {"feedback", fb.category}});
        load_candidate(tools, version_ + 1);
        if (!candidate_) throw ExploiterFailed("refinement requested before any candidate existed");
        return *candidate_;
    }

    bool self_check(const ExploitCandidate& e, const Hypothesis& h) override {
        return !e.script.empty() && e.entry_command.find("poc.sh") != std::string::npos &&
               validate_hypothesis(h);
    }

private:
    bool load_candidate(ToolSession& tools, int version) {
        const std::string script_path = "exploit/exploit_" + std::to_string(version) + ".sh";
        const auto script = tools.invoke("get_file", {{"path", script_path}});
        if (script.contains("error")) return false;  // keep the current candidate

        std::string hypo_path = "hypothesis_" + std::to_string(version) + ".json";
        auto hypo = tools.invoke("get_file", {{"path", hypo_path}});
        if (hypo.contains("error")) hypo = tools.invoke("get_file", {{"path", "hypothesis.json"}});
        if (hypo.contains("error")) return false;

        ExploitCandidate e;
        e.script = script.at("content").get<std::string>();
        e.language_hint = "sh";
        e.entry_command = "sh poc.sh";
        tools.invoke("write_to_file", {{"path", "poc.sh"}, {"content", e.script}});

        candidate_ = {std::move(e),
                      hypothesis_from_json(nlohmann::json::parse(hypo.at("content").get<std::string>()))};
        version_ = version;
        return true;
    }

    const std::vector<int> plan_ = {static_cast<int>(ActionId::search_code),
                                    static_cast<int>(ActionId::write_exploit),
                                    static_cast<int>(ActionId::run_exploit),
                                    static_cast<int>(ActionId::submit_and_verify)};
    size_t plan_cursor_ = 0;
    int version_ = 0;
    std::string sink_file_;
    std::optional<std::pair<ExploitCandidate, Hypothesis>> candidate_;
};

}  // namespace

std::unique_ptr<RcaAgentBase> make_scripted_rca_agent() {
    return std::make_unique<ScriptedRcaAgent>();
}
std::unique_ptr<PlannerAgentBase> make_scripted_planner_agent() {
    return std::make_unique<ScriptedPlannerAgent>();
}
std::unique_ptr<ExploiterAgentBase> make_scripted_exploiter_agent() {
    return std::make_unique<ScriptedExploiterAgent>();
}

RcaReport run_rca(RcaAgentBase& agent, const BugContext& c, const Feedback* fb,
                  ToolSession& tools) {
    if (agent.role() != AgentRole::RCA) throw EngineError("run_rca requires an RCA agent");
    return agent.invoke(tools, c, fb);
}

PlannerReport run_planner(PlannerAgentBase& agent, const BugContext& c, const RcaReport& r,
                          int retry_budget, ToolSession& tools, int* rebuilds_used) {
    if (agent.role() != AgentRole::Planner) throw EngineError("run_planner requires a Planner agent");
    return agent.invoke(tools, c, r, retry_budget, rebuilds_used);
}

namespace {

int cwe_group_from_description(const std::string& description) {
    std::string lower;
    lower.reserve(description.size());
    for (char ch : description)
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    if (lower.find("path traversal") != std::string::npos) return 0;
    if (lower.find("command injection") != std::string::npos) return 1;
    if (lower.find("cross-site scripting") != std::string::npos ||
        lower.find("xss") != std::string::npos)
        return 2;
    if (lower.find("code injection") != std::string::npos) return 3;
    return 0;
}

struct ExploiterBookkeeping {
    std::set<int> tools_used;
    int errors = 0;
    int steps = 0;
    int last_tool = 0;
    int last_success = 0;
    int has_poc = 0;
    int sink_hit = 0;
    int partial = 0;
    int error_pattern = 0;

    ExploitState state(int cwe_type) const {
        ExploitState s;
        s.phase = static_cast<int>(PipelineStage::Exploiter);
        s.cwe_type = cwe_type;
        s.tool_diversity = static_cast<double>(tools_used.size()) / kDefaultActionCount;
        s.error_rate = steps > 0 ? static_cast<double>(errors) / steps : 0.0;
        s.iteration = steps;
        s.last_tool = last_tool;
        s.last_success = last_success;
        s.error_pattern = error_pattern;
        s.has_poc_written = has_poc;
        s.sandboxed = 1;  // fixture executor is always sandboxed
        s.sink_hit = sink_hit;
        s.partial_success = partial;
        return s;
    }

    void record(int action_id, bool success) {
        ++steps;
        tools_used.insert(action_id);
        last_tool = action_id;
        last_success = success ? 1 : 0;
        if (!success) ++errors;
        error_pattern = success ? 0 : 1 + action_id % 7;
        if (success) {
            if (action_id == static_cast<int>(ActionId::write_exploit)) has_poc = 1;
            if (action_id == static_cast<int>(ActionId::search_code)) sink_hit = 1;
            if (action_id == static_cast<int>(ActionId::run_exploit)) partial = 1;
        }
    }
};

std::vector<int> all_action_ids() {
    std::vector<int> ids;
    for (const auto& a : default_actions()) ids.push_back(a.id);
    return ids;
}

}  // namespace

ExploiterResult run_exploiter(ExploiterAgentBase& agent, const BugContext& c, const RcaReport& r,
                              const PlannerReport& p, const RecommendCallback& policy,
                              const RunBudget& budget, ToolSession& tools,
                              const EncodingVocab& vocab) {
    if (agent.role() != AgentRole::Exploiter)
        throw EngineError("run_exploiter requires an Exploiter agent");

    agent.begin(tools, c, r, p);
    ExploiterResult result;
    ExploiterBookkeeping book;
    const int cwe = cwe_group_from_description(c.description);

    for (int step = 0; step < budget.step_limit; ++step) {
        const ExploitState state = book.state(cwe);
        std::vector<int> allowed = policy ? policy(state) : all_action_ids();
        if (allowed.empty()) allowed = all_action_ids();

        const int action_id = agent.choose_action(state, allowed);
        if (std::find(allowed.begin(), allowed.end(), action_id) == allowed.end())
            throw EngineError("exploiter chose an action outside the recommended set");

        const ExploiterStepOutcome out = agent.perform(tools, action_id);
        book.record(action_id, out.success);

        Transition t;
        t.state = state;
        t.action = action_from_id(action_id);
        t.next_state = book.state(cwe);
        t.done = false;  // finalized by the pipeline once the verdict is known
        (void)vocab;
        result.transitions.push_back(std::move(t));

        if (out.submitted && out.candidate) {
            result.candidate = out.candidate->first;
            result.hypothesis = out.candidate->second;
            result.submitted = true;
            break;
        }
    }
    return result;
}

namespace {

// Routes the oracle's executor contract through the Validator's tool session
// so validation shows up in the audit log under least privilege.
class ValidatorToolExecutor final : public SandboxExecutor {
public:
    ValidatorToolExecutor(ToolSession& tools) : tools_(tools) {}

    ExecutionResult run(const std::string& command, std::int64_t timeout_ms) override {
        const auto r = tools_.invoke("run_poc", {{"command", command}, {"timeout_ms", timeout_ms}});
        ExecutionResult result;
        result.status = r.value("status", std::string()) == "OK" ? ExecStatus::OK
                                                                 : ExecStatus::EXECUTE_FAIL;
        result.exit_code = r.value("exit_code", -1);
        result.stdout_text = r.value("stdout", std::string());
        result.stderr_text = r.value("stderr", std::string());
        result.duration_ms = r.value("duration_ms", std::int64_t{0});
        result.failure_detail = r.value("failure_detail", std::string());
        return result;
    }

    ProbeResult probe(const ProbeSpec& spec) override {
        const auto r = tools_.invoke("inspect_runtime_state",
                                     {{"kind", to_string(spec.kind)},
                                      {"target", spec.target},
                                      {"key", spec.key},
                                      {"capture", spec.capture == ProbeCapture::raw ? "raw" : "hash"}});
        ProbeResult result;
        result.kind = spec.kind;
        if (r.contains("value")) result.value = r["value"].get<std::string>();
        if (r.contains("error")) result.error = r["error"].get<std::string>();
        return result;
    }

    void reset() override {}

private:
    ToolSession& tools_;
};

Verdict timeout_verdict(PipelineStage stage) {
    return Verdict::not_validated({stage, "TIMEOUT", "wall clock budget exhausted"});
}

}  // namespace

PipelineRun run_pipeline(const BugContext& c, const PipelineAgents& agents,
                         const PipelineDeps& deps, const RunBudget& budget) {
    budget.validate();
    const auto started = std::chrono::steady_clock::now();
    const auto deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double, std::ratio<60>>(
                                            budget.wall_clock_limit_min));
    auto timed_out = [&] { return std::chrono::steady_clock::now() >= deadline; };

    PipelineRun run;
    run.run_id = c.advisory_id + "-run";
    run.context = c;
    run.trajectory.cve_id = c.advisory_id;
    run.trajectory.episode_id = run.run_id;
    std::int64_t clock = 0;

    auto session = [&](AgentRole role, PipelineStage stage) {
        return ToolSession(deps.registry, role, default_tool_allocation(role), run.run_id, stage,
                           run.audit, run.accounting, clock);
    };
    auto finalize = [&](Verdict verdict) {
        run.verdict = std::move(verdict);
        run.trajectory.outcome = run.verdict.status == VerdictStatus::VALIDATED
                                     ? EpisodeOutcome::VERIFIED
                                     : EpisodeOutcome::EXHAUSTED;
        if (!run.trajectory.transitions.empty()) {
            run.trajectory.transitions.back().done = true;
            for (auto& t : run.trajectory.transitions)
                t.reward = transition_reward(t, run.trajectory.outcome, RewardConfig::defaults());
        }
        return run;
    };
    auto over_token_budget = [&] {
        return run.accounting.input_tokens + run.accounting.output_tokens > budget.token_limit;
    };

    if (timed_out()) return finalize(timeout_verdict(PipelineStage::ContextRetrieval));

    // Stage: RCA
    try {
        ToolSession tools = session(AgentRole::RCA, PipelineStage::RCA);
        run.rca = run_rca(agents.rca, c, nullptr, tools);
    } catch (const ToolDenied& ex) {
        return finalize(Verdict::not_validated({PipelineStage::RCA, "TOOL_DENIED", ex.what()}));
    } catch (const RcaFailed& ex) {
        return finalize(Verdict::not_validated({PipelineStage::RCA, "NO_SINK", ex.what()}));
    }
    if (timed_out()) return finalize(timeout_verdict(PipelineStage::RCA));
    if (over_token_budget())
        return finalize(Verdict::not_validated(
            {PipelineStage::RCA, "BUDGET_EXHAUSTED", "token budget exhausted"}));

    // Stage: Planner
    try {
        ToolSession tools = session(AgentRole::Planner, PipelineStage::Planner);
        run.plan = run_planner(agents.planner, c, *run.rca, budget.refinement_budget, tools,
                               &run.rebuilds);
    } catch (const PlannerFailed& ex) {
        return finalize(Verdict::not_validated({PipelineStage::Planner, ex.category, ex.what()}));
    }
    if (timed_out()) return finalize(timeout_verdict(PipelineStage::Planner));

    // Stage: Exploiter
    ToolSession exploiter_tools = session(AgentRole::Exploiter, PipelineStage::Exploiter);
    ExploiterResult exploited = run_exploiter(agents.exploiter, c, *run.rca, *run.plan, deps.policy,
                                              budget, exploiter_tools, deps.vocab);
    run.trajectory.transitions = exploited.transitions;
    if (timed_out()) return finalize(timeout_verdict(PipelineStage::Exploiter));
    if (!exploited.submitted)
        return finalize(Verdict::not_validated(
            {PipelineStage::Exploiter, "STEP_LIMIT", "step limit reached without a submission"}));
    run.exploit = {exploited.candidate, exploited.hypothesis};

    // Stage: Validator (semantic oracle with Exploiter feedback loop)
    ToolSession validator_tools = session(AgentRole::Validator, PipelineStage::Validator);
    ValidatorToolExecutor validator_executor(validator_tools);
    RuleBasedJudge fallback_judge;
    (void)fallback_judge;

    std::vector<Feedback> emitted;
    Refiner refiner = [&](const Feedback& fb) {
        emitted.push_back(fb);
        // each refinement request is an Exploiter action, logged as a step
        const ExploitState before = run.trajectory.transitions.empty()
                                        ? ExploitState{}
                                        : run.trajectory.transitions.back().next_state;
        auto refined = agents.exploiter.refine(exploiter_tools, fb);
        Transition t;
        t.state = before;
        t.action = action_from_id(static_cast<int>(ActionId::modify_exploit));
        t.next_state = before;
        t.next_state.iteration = std::min(before.iteration + 1, deps.vocab.t_max);
        t.next_state.last_tool = t.action.id;
        t.next_state.last_success = 1;
        run.trajectory.transitions.push_back(t);
        return refined;
    };

    VerifyDeps verify_deps{validator_executor, deps.judge, refiner};
    VerifyTranscript transcript;
    Verdict verdict = verify(exploited.candidate, exploited.hypothesis, budget.refinement_budget,
                             verify_deps, &transcript);
    run.validator_iterations = transcript.iterations;

    // escalate once to RCA when every refinement round tripped over the same
    // claim key, then make a single final verification attempt
    if (verdict.status == VerdictStatus::NOT_VALIDATED && !emitted.empty() &&
        emitted.back().category == "NOT_MATCH") {
        bool same_key = !emitted.front().affected_attributes.empty();
        for (const auto& fb : emitted)
            same_key = same_key && fb.category == "NOT_MATCH" &&
                       fb.affected_attributes == emitted.front().affected_attributes;
        if (same_key && !run.rca_reentered) {
            run.rca_reentered = true;
            try {
                ToolSession rca_tools = session(AgentRole::RCA, PipelineStage::RCA);
                run.rca = run_rca(agents.rca, c, &emitted.back(), rca_tools);
                auto refined = agents.exploiter.refine(exploiter_tools, emitted.back());
                Refiner noop = [&refined](const Feedback&) { return refined; };
                VerifyDeps final_deps{validator_executor, deps.judge, noop};
                verdict = verify(refined.first, refined.second, 1, final_deps);
            } catch (const RcaFailed&) {
                // keep the original verdict
            } catch (const ExploiterFailed&) {
            }
        }
    }
    return finalize(std::move(verdict));
}

void write_trajectory_log(const PipelineRun& run, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFile("cannot write " + tmp);
        out << trajectories_to_log({run.trajectory});
    }
    std::rename(tmp.c_str(), path.c_str());
}

void write_audit_log(const PipelineRun& run, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFile("cannot write " + tmp);
        for (const auto& record : run.audit) out << record.to_json().dump() << "\n";
    }
    std::rename(tmp.c_str(), path.c_str());
}

}  // namespace pocadapt
