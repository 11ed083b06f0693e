#pragma once

// Semantic state-differencing oracle: profile the sandbox before and after
// PoC execution, compute the semantic delta, and match it against the
// impact hypothesis under a bounded refinement loop.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pocadapt/domain.hpp"
#include "pocadapt/errors.hpp"

namespace pocadapt {

inline constexpr const char* kAbsenceMarker = "<absent>";

struct ProbeResult {
    TargetKind kind = TargetKind::file_content;
    std::optional<std::string> value;  // content hash, env value, raw capture, or absence marker
    std::optional<std::string> error;  // exactly one of value/error is present

    bool operator==(const ProbeResult&) const = default;
};

enum class ProbeCapture { hash, raw };

struct ProbeSpec {
    std::string key;  // stable probe key, unique within a plan
    TargetKind kind = TargetKind::file_content;
    std::string target;        // path / env name / query
    ProbeCapture capture = ProbeCapture::hash;
};

struct ProbePlan {
    std::string id;  // content hash of the claims it was built from
    std::vector<ProbeSpec> probes;
};

struct StateSnapshot {
    std::int64_t captured_at = 0;  // monotonic, nanoseconds
    std::map<std::string, ProbeResult> observations;
    std::string probe_plan_id;
};

struct DeltaEntry {
    std::string key;
    ProbeResult before;
    ProbeResult after;
};

struct SemanticDelta {
    std::vector<DeltaEntry> changed;
    std::vector<std::string> unchanged_keys;
    std::vector<std::string> plan_keys;  // full plan ordering; changed + unchanged partition it
    std::string narrative;

    size_t unchanged_count() const { return unchanged_keys.size(); }
    bool empty() const { return changed.empty(); }
};

enum class ExecStatus { OK, EXECUTE_FAIL };

struct ExecutionResult {
    ExecStatus status = ExecStatus::OK;
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
    std::int64_t duration_ms = 0;
    bool stdout_truncated = false;
    bool stderr_truncated = false;
    std::string failure_detail;  // e.g. "TIMEOUT", "SPAWN_FAIL", "SYNTAX"
};

struct JudgeDecision {
    bool matched = false;
    std::map<size_t, bool> per_claim;  // claim index -> satisfied
    std::string rationale;
};

// Contract every sandbox backend implements. One verify() call owns its
// executor exclusively for its full duration.
class SandboxExecutor {
public:
    virtual ~SandboxExecutor() = default;
    virtual ExecutionResult run(const std::string& command, std::int64_t timeout_ms) = 0;
    virtual ProbeResult probe(const ProbeSpec& spec) = 0;
    virtual void reset() = 0;
};

// Local-directory fixture executor: a working directory acts as the sandbox
// root, with a private environment map. process/network observations are
// file-backed markers under .observations/.
class LocalDirExecutor final : public SandboxExecutor {
public:
    explicit LocalDirExecutor(std::string root_dir,
                              std::map<std::string, std::string> env = {},
                              std::string template_dir = {});

    ExecutionResult run(const std::string& command, std::int64_t timeout_ms) override;
    ProbeResult probe(const ProbeSpec& spec) override;
    void reset() override;

    const std::string& root() const { return root_; }
    void set_env(const std::string& name, const std::string& value) { env_[name] = value; }

private:
    std::string root_;
    std::map<std::string, std::string> env_;
    std::string template_dir_;
};

class MatchJudge {
public:
    virtual ~MatchJudge() = default;
    virtual JudgeDecision judge(const SemanticDelta& delta, const Hypothesis& h) = 0;
};

// Deterministic default: claim i is satisfied iff its probe key changed and
// the after-value satisfies the claimed change.
class RuleBasedJudge final : public MatchJudge {
public:
    JudgeDecision judge(const SemanticDelta& delta, const Hypothesis& h) override;
};

ProbePlan build_probe_plan(const Hypothesis& h);
StateSnapshot capture_snapshot(const ProbePlan& plan, SandboxExecutor& executor);

// stderr patterns that classify a completed run as an execution failure
// (interpreter or syntax level); spawn failure and timeout always do.
std::vector<std::string> default_fail_patterns();

ExecutionResult execute_poc(const ExploitCandidate& e, SandboxExecutor& executor,
                            std::int64_t timeout_ms,
                            const std::vector<std::string>& fail_patterns = default_fail_patterns());

SemanticDelta analyze_delta(const StateSnapshot& pre, const StateSnapshot& post);

JudgeDecision judge_match(const SemanticDelta& delta, const Hypothesis& h, MatchJudge& judge);

Feedback make_feedback(const std::string& category, const ExecutionResult& result);
Feedback make_feedback(const std::string& category, const SemanticDelta& delta,
                       const JudgeDecision* decision = nullptr,
                       const Hypothesis* h = nullptr);

using Refiner = std::function<std::pair<ExploitCandidate, Hypothesis>(const Feedback&)>;

struct VerifyDeps {
    SandboxExecutor& executor;
    MatchJudge& judge;
    Refiner refiner;
    std::int64_t exec_timeout_ms = 30000;
    std::vector<std::string> fail_patterns = default_fail_patterns();
};

// Full audit record of one verify() call; serializable for log ingestion.
struct VerifyTranscript {
    int iterations = 0;            // k at exit
    int executor_invocations = 0;  // execute cycles actually run
    std::vector<Feedback> feedback_emitted;
    nlohmann::json events = nlohmann::json::array();

    nlohmann::json to_json() const;
};

Verdict verify(ExploitCandidate e0, Hypothesis h0, int budget, const VerifyDeps& deps,
               VerifyTranscript* transcript = nullptr);

}  // namespace pocadapt
