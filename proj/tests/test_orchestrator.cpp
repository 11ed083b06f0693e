#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "pocadapt/orchestrator.hpp"

using namespace pocadapt;
namespace fs = std::filesystem;

namespace {

// materializes a fixture tree into a disposable sandbox root
struct FixtureSandbox {
    fs::path root;

    explicit FixtureSandbox(const std::string& fixture) {
        static int counter = 0;
        root = fs::temp_directory_path() /
               ("pocadapt-orch-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::copy("tests/fixtures/" + fixture, root, fs::copy_options::recursive);
    }
    ~FixtureSandbox() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
};

BugContext traversal_context() {
    BugContext c;
    c.advisory_id = "CVE-2025-41001";
    c.description = "Path traversal in the record download endpoint lets remote "
                    "attackers append to files outside the data root.";
    c.repo_ref = "webapp@1.4.1";
    return c;
}

struct PipelineHarness {
    FixtureSandbox sandbox;
    LocalDirExecutor executor;
    ToolRegistry registry;
    RuleBasedJudge judge;
    std::unique_ptr<RcaAgentBase> rca = make_scripted_rca_agent();
    std::unique_ptr<PlannerAgentBase> planner = make_scripted_planner_agent();
    std::unique_ptr<ExploiterAgentBase> exploiter = make_scripted_exploiter_agent();

    explicit PipelineHarness(const std::string& fixture)
        : sandbox(fixture), executor(sandbox.root.string()),
          registry(make_default_registry(executor)) {}

    PipelineAgents agents() { return {*rca, *planner, *exploiter}; }
    PipelineDeps deps(RecommendCallback policy = nullptr) {
        return {executor, registry, judge, std::move(policy), EncodingVocab{}};
    }
};

std::string slurp_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("tool registry enforces the closed tool set") {
    FixtureSandbox sandbox("webapp");
    LocalDirExecutor executor(sandbox.root.string());
    ToolRegistry registry;
    CHECK_THROWS_AS(registry.register_tool("launch_browser", SideEffect::execute,
                                           [](const nlohmann::json&) { return nlohmann::json{}; }),
                    ConfigError);
    CHECK_THROWS_AS(registry.invoke("grep", {{"pattern", "x"}}), ToolDenied);

    const ToolRegistry full = make_default_registry(executor);
    for (const auto& name : known_tool_names()) CHECK(full.has(name));
}

TEST_CASE("tool allocations are least-privilege and disjoint where it matters") {
    const auto rca = default_tool_allocation(AgentRole::RCA);
    const auto validator = default_tool_allocation(AgentRole::Validator);
    CHECK(rca.size() == 5);
    CHECK(validator.size() == 4);
    CHECK_FALSE(rca.count("write_to_file"));
    CHECK_FALSE(rca.count("run_poc"));
    CHECK_FALSE(validator.count("write_to_file"));
    CHECK_FALSE(validator.count("refine_poc"));
    for (AgentRole role : {AgentRole::RCA, AgentRole::Planner, AgentRole::Exploiter,
                           AgentRole::Validator})
        for (const auto& tool : default_tool_allocation(role)) CHECK(known_tool_names().count(tool));
}

TEST_CASE("sessions deny out-of-allocation calls and audit both outcomes") {
    FixtureSandbox sandbox("webapp");
    LocalDirExecutor executor(sandbox.root.string());
    const ToolRegistry registry = make_default_registry(executor);
    std::vector<AuditRecord> audit;
    TokenAccount tokens;
    std::int64_t clock = 0;
    ToolSession session(registry, AgentRole::RCA, default_tool_allocation(AgentRole::RCA),
                        "run-1", PipelineStage::RCA, audit, tokens, clock);

    CHECK_NOTHROW(session.invoke("grep", {{"pattern", "taint:sink"}}));
    CHECK_THROWS_AS(session.invoke("setup_environment", {{"commands", nlohmann::json::array()}}),
                    ToolDenied);

    REQUIRE(audit.size() == 2);
    CHECK(audit[0].ok);
    CHECK(audit[0].tool == "grep");
    CHECK(audit[0].ts == 1);
    CHECK_FALSE(audit[1].ok);
    CHECK(audit[1].tool == "setup_environment");
    CHECK(audit[1].ts == 2);
    CHECK(tokens.consistent());
    CHECK(tokens.input_tokens > 0);  // only the granted call was charged
}

TEST_CASE("scripted RCA recovers the planted taint structure") {
    PipelineHarness h("webapp");
    std::vector<AuditRecord> audit;
    TokenAccount tokens;
    std::int64_t clock = 0;
    ToolSession tools(h.registry, AgentRole::RCA, default_tool_allocation(AgentRole::RCA),
                      "run-1", PipelineStage::RCA, audit, tokens, clock);

    const RcaReport report = run_rca(*h.rca, traversal_context(), nullptr, tools);
    CHECK(report.sink.file == "src/app.py");
    CHECK(report.sink.line_begin > 0);
    REQUIRE(report.entry_points.size() == 1);
    REQUIRE(report.taint_paths.size() == 1);
    CHECK(report.taint_paths[0].front() == report.entry_points[0]);
    CHECK(report.taint_paths[0].back() == report.sink);
    CHECK(report.taint_paths[0].size() >= 3);  // entry, >=1 step, sink
    REQUIRE_FALSE(report.constraints.empty());
    CHECK(report.constraints[0].find("traversal") != std::string::npos);
    CHECK(report.trigger_steps.size() >= 3);

    // feedback naming the only entry point forces a re-analysis failure
    Feedback fb;
    fb.category = "NOT_MATCH";
    fb.affected_attributes = {report.entry_points[0].file + ":" +
                              std::to_string(report.entry_points[0].line_begin)};
    CHECK_THROWS_AS(run_rca(*h.rca, traversal_context(), &fb, tools), RcaFailed);
}

TEST_CASE("scripted planner executes plan.json and survives a flaky build") {
    PipelineHarness h("webapp_flaky");
    std::vector<AuditRecord> audit;
    TokenAccount tokens;
    std::int64_t clock = 0;
    ToolSession tools(h.registry, AgentRole::Planner, default_tool_allocation(AgentRole::Planner),
                      "run-1", PipelineStage::Planner, audit, tokens, clock);

    int rebuilds = 0;
    const PlannerReport report =
        run_planner(*h.planner, traversal_context(), RcaReport{}, 3, tools, &rebuilds);
    CHECK(rebuilds == 1);  // first build fails cold, one rebuild fixes it
    CHECK(report.access_info.count("endpoint"));
    CHECK_FALSE(report.run_cmds.empty());
    bool saw_rebuild = false;
    for (const auto& record : audit) saw_rebuild = saw_rebuild || record.tool == "rebuild_env";
    CHECK(saw_rebuild);
}

TEST_CASE("planner reports a dependency diagnostic when builds never converge") {
    PipelineHarness h("webapp");
    std::ofstream(h.sandbox.root / "plan.json")
        << R"({"env_spec": {}, "build_cmds": ["echo 'dependency resolution failed' >&2; exit 1"],)"
        << R"( "run_cmds": ["true"], "access_info": {"endpoint": "local://webapp"}})";
    std::vector<AuditRecord> audit;
    TokenAccount tokens;
    std::int64_t clock = 0;
    ToolSession tools(h.registry, AgentRole::Planner, default_tool_allocation(AgentRole::Planner),
                      "run-1", PipelineStage::Planner, audit, tokens, clock);

    try {
        run_planner(*h.planner, traversal_context(), RcaReport{}, 2, tools);
        FAIL("expected PlannerFailed");
    } catch (const PlannerFailed& ex) {
        CHECK(ex.category == "DEPENDENCY");
        CHECK(is_registered_failure_category(PipelineStage::Planner, ex.category));
    }
}

TEST_CASE("exploiter stays inside the recommended action set") {
    PipelineHarness h("webapp");
    std::vector<AuditRecord> audit;
    TokenAccount tokens;
    std::int64_t clock = 0;
    ToolSession tools(h.registry, AgentRole::Exploiter,
                      default_tool_allocation(AgentRole::Exploiter), "run-1",
                      PipelineStage::Exploiter, audit, tokens, clock);

    RunBudget budget;
    budget.step_limit = 6;
    // a policy that never recommends submit_and_verify starves the run
    RecommendCallback no_submit = [](const ExploitState&) { return std::vector<int>{3, 6, 8}; };
    const ExploiterResult starved = run_exploiter(*h.exploiter, traversal_context(), RcaReport{},
                                                  PlannerReport{}, no_submit, budget, tools,
                                                  EncodingVocab{});
    CHECK_FALSE(starved.submitted);
    CHECK(starved.transitions.size() == 6);  // exactly the step limit
    for (const auto& t : starved.transitions) {
        const bool in_set = t.action.id == 3 || t.action.id == 6 || t.action.id == 8;
        CHECK(in_set);
    }
}

TEST_CASE("full pipeline validates the traversal fixture end to end") {
    PipelineHarness h("webapp");
    RunBudget budget;
    const PipelineRun run = run_pipeline(traversal_context(), h.agents(), h.deps(), budget);

    CHECK(run.verdict.status == VerdictStatus::VALIDATED);
    REQUIRE(run.verdict.poc.has_value());
    CHECK(run.rca.has_value());
    CHECK(run.plan.has_value());
    CHECK(run.exploit.has_value());
    CHECK(run.trajectory.outcome == EpisodeOutcome::VERIFIED);
    CHECK(run.trajectory.well_formed());
    REQUIRE_FALSE(run.trajectory.transitions.empty());
    // final submit folds the terminal bonus into the stored reward
    CHECK(run.trajectory.transitions.back().reward == doctest::Approx(26.0));
    CHECK(run.accounting.consistent());

    // least privilege holds for every audited call
    const std::map<std::string, AgentRole> stage_owner = {
        {"RCA", AgentRole::RCA},
        {"Planner", AgentRole::Planner},
        {"Exploiter", AgentRole::Exploiter},
        {"Validator", AgentRole::Validator}};
    std::int64_t last_ts = 0;
    for (const auto& record : run.audit) {
        CHECK(record.ok);
        CHECK(default_tool_allocation(stage_owner.at(record.agent)).count(record.tool));
        CHECK(record.ts > last_ts);  // strictly monotonic logical clock
        last_ts = record.ts;
    }
}

TEST_CASE("pipeline runs are byte-identical across repetitions") {
    auto run_once = [](const fs::path& traj, const fs::path& audit) {
        PipelineHarness h("webapp");
        const PipelineRun run = run_pipeline(traversal_context(), h.agents(), h.deps(), RunBudget{});
        write_trajectory_log(run, traj.string());
        write_audit_log(run, audit.string());
    };
    const fs::path base = fs::temp_directory_path() / ("pocadapt-det-" + std::to_string(::getpid()));
    run_once(base.string() + "-t1", base.string() + "-a1");
    run_once(base.string() + "-t2", base.string() + "-a2");
    CHECK(slurp_file(base.string() + "-t1") == slurp_file(base.string() + "-t2"));
    CHECK(slurp_file(base.string() + "-a1") == slurp_file(base.string() + "-a2"));
    for (const char* suffix : {"-t1", "-t2", "-a1", "-a2"}) fs::remove(base.string() + suffix);
}

TEST_CASE("planner failure leaves no exploiter transitions") {
    PipelineHarness h("webapp");
    fs::remove(h.sandbox.root / "plan.json");
    const PipelineRun run = run_pipeline(traversal_context(), h.agents(), h.deps(), RunBudget{});
    CHECK(run.verdict.status == VerdictStatus::NOT_VALIDATED);
    REQUIRE(run.verdict.diagnostic.has_value());
    CHECK(run.verdict.diagnostic->stage == PipelineStage::Planner);
    CHECK(run.trajectory.transitions.empty());
    for (const auto& record : run.audit) CHECK(record.agent != "Exploiter");
}

TEST_CASE("a zero wall-clock budget times out before any stage runs") {
    PipelineHarness h("webapp");
    RunBudget budget;
    budget.wall_clock_limit_min = 0.0;
    const PipelineRun run = run_pipeline(traversal_context(), h.agents(), h.deps(), budget);
    CHECK(run.verdict.status == VerdictStatus::NOT_VALIDATED);
    REQUIRE(run.verdict.diagnostic.has_value());
    CHECK(run.verdict.diagnostic->category == "TIMEOUT");
    CHECK(run.audit.empty());
}

TEST_CASE("a tiny token budget stops the pipeline with a budget diagnostic") {
    PipelineHarness h("webapp");
    RunBudget budget;
    budget.token_limit = 1;
    const PipelineRun run = run_pipeline(traversal_context(), h.agents(), h.deps(), budget);
    CHECK(run.verdict.status == VerdictStatus::NOT_VALIDATED);
    REQUIRE(run.verdict.diagnostic.has_value());
    CHECK(run.verdict.diagnostic->category == "BUDGET_EXHAUSTED");
}

TEST_CASE("run budget validation") {
    RunBudget budget;
    CHECK_NOTHROW(budget.validate());
    budget.step_limit = 0;
    CHECK_THROWS_AS(budget.validate(), ConfigError);
    budget = RunBudget{};
    budget.token_limit = 0;
    CHECK_THROWS_AS(budget.validate(), ConfigError);
    budget = RunBudget{};
    budget.wall_clock_limit_min = -1;
    CHECK_THROWS_AS(budget.validate(), ConfigError);
}
