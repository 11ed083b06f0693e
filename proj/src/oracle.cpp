#include "pocadapt/oracle.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pocadapt/hash.hpp"

namespace fs = std::filesystem;

namespace pocadapt {

namespace {

constexpr size_t kStreamCap = 256 * 1024;  // per-stream capture cap
constexpr size_t kRawProbeCap = 64 * 1024;

std::int64_t monotonic_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::optional<std::string> read_file(const fs::path& p, size_t cap) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::string data;
    data.resize(cap + 1);
    in.read(data.data(), static_cast<std::streamsize>(data.size()));
    data.resize(static_cast<size_t>(in.gcount()));
    if (data.size() > cap) data.resize(cap);
    return data;
}

ProbeResult value_result(TargetKind kind, std::string value) {
    ProbeResult r;
    r.kind = kind;
    r.value = std::move(value);
    return r;
}

ProbeResult error_result(TargetKind kind, std::string error) {
    ProbeResult r;
    r.kind = kind;
    r.error = std::move(error);
    return r;
}

}  // namespace

LocalDirExecutor::LocalDirExecutor(std::string root_dir, std::map<std::string, std::string> env,
                                   std::string template_dir)
    : root_(std::move(root_dir)), env_(std::move(env)), template_dir_(std::move(template_dir)) {}

ExecutionResult LocalDirExecutor::run(const std::string& command, std::int64_t timeout_ms) {
    ExecutionResult result;
    const auto started = std::chrono::steady_clock::now();

    if (!fs::is_directory(root_)) {
        result.status = ExecStatus::EXECUTE_FAIL;
        result.failure_detail = "SPAWN_FAIL";
        result.stderr_text = "sandbox root missing: " + root_;
        return result;
    }

    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
        result.status = ExecStatus::EXECUTE_FAIL;
        result.failure_detail = "SPAWN_FAIL";
        return result;
    }

    const pid_t pid = fork();
    if (pid < 0) {
        result.status = ExecStatus::EXECUTE_FAIL;
        result.failure_detail = "SPAWN_FAIL";
        return result;
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]); close(out_pipe[1]);
        close(err_pipe[0]); close(err_pipe[1]);
        if (chdir(root_.c_str()) != 0) _exit(127);
        for (const auto& [k, v] : env_) setenv(k.c_str(), v.c_str(), 1);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }

    close(out_pipe[1]);
    close(err_pipe[1]);

    struct Stream { int fd; std::string* buf; bool* truncated; bool open = true; };
    Stream streams[2] = {
        {out_pipe[0], &result.stdout_text, &result.stdout_truncated},
        {err_pipe[0], &result.stderr_text, &result.stderr_truncated},
    };

    bool timed_out = false;
    const auto deadline = started + std::chrono::milliseconds(timeout_ms);
    char chunk[4096];
    while (streams[0].open || streams[1].open) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            kill(-pid, SIGKILL);
            break;
        }
        struct pollfd fds[2];
        nfds_t nfds = 0;
        for (auto& s : streams)
            if (s.open) fds[nfds++] = {s.fd, POLLIN, 0};
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
        const int rc = poll(fds, nfds, static_cast<int>(remaining.count()) + 1);
        if (rc < 0) break;
        if (rc == 0) continue;
        nfds_t idx = 0;
        for (auto& s : streams) {
            if (!s.open) continue;
            const auto& pf = fds[idx++];
            if (pf.revents & (POLLIN | POLLHUP)) {
                const ssize_t n = ::read(s.fd, chunk, sizeof chunk);
                if (n <= 0) {
                    s.open = false;
                } else if (s.buf->size() < kStreamCap) {
                    const size_t take = std::min(static_cast<size_t>(n), kStreamCap - s.buf->size());
                    s.buf->append(chunk, take);
                    if (take < static_cast<size_t>(n)) *s.truncated = true;
                } else {
                    *s.truncated = true;
                }
            }
        }
    }
    close(out_pipe[0]);
    close(err_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    result.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();

    if (timed_out) {
        result.status = ExecStatus::EXECUTE_FAIL;
        result.failure_detail = "TIMEOUT";
        result.exit_code = -1;
        return result;
    }
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status)
                                         : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    return result;
}

ProbeResult LocalDirExecutor::probe(const ProbeSpec& spec) {
    if (!fs::is_directory(root_))
        throw ExecutorUnavailable("sandbox root missing: " + root_);

    switch (spec.kind) {
        case TargetKind::file_content:
        case TargetKind::db_record: {
            const auto content = read_file(fs::path(root_) / spec.target, kRawProbeCap);
            if (!content) return value_result(spec.kind, kAbsenceMarker);
            if (spec.capture == ProbeCapture::raw) return value_result(spec.kind, *content);
            return value_result(spec.kind, sha256_hex(*content));
        }
        case TargetKind::file_exists:
            return value_result(spec.kind,
                                fs::exists(fs::path(root_) / spec.target) ? "present" : kAbsenceMarker);
        case TargetKind::env_var: {
            // sandbox env lives in the executor's map plus an optional .env file
            const auto it = env_.find(spec.target);
            if (it != env_.end()) return value_result(spec.kind, it->second);
            const auto env_file = read_file(fs::path(root_) / ".env" / spec.target, kRawProbeCap);
            if (env_file) return value_result(spec.kind, *env_file);
            return value_result(spec.kind, kAbsenceMarker);
        }
        case TargetKind::process_observation:
        case TargetKind::network_artifact: {
            // file-backed observation markers written by fixture processes
            const auto marker = read_file(fs::path(root_) / ".observations" / spec.target, kRawProbeCap);
            if (!marker) return value_result(spec.kind, kAbsenceMarker);
            if (spec.capture == ProbeCapture::raw) return value_result(spec.kind, *marker);
            return value_result(spec.kind, sha256_hex(*marker));
        }
    }
    return error_result(spec.kind, "unsupported probe kind");
}

void LocalDirExecutor::reset() {
    if (template_dir_.empty()) return;
    fs::remove_all(root_);
    fs::create_directories(root_);
    fs::copy(template_dir_, root_, fs::copy_options::recursive);
}

ProbePlan build_probe_plan(const Hypothesis& h) {
    if (!validate_hypothesis(h)) throw InvalidHypothesis("hypothesis fails validation");
    ProbePlan plan;
    std::string digest_input;
    for (size_t i = 0; i < h.impact_claims.size(); ++i) {
        const auto& claim = h.impact_claims[i];
        ProbeSpec spec;
        spec.kind = claim.target_kind;
        spec.target = claim.target_key;
        spec.key = to_string(claim.target_kind) + ":" + claim.target_key;
        const bool wants_value = claim.expected_change == ExpectedChange::value_equals ||
                                 claim.expected_change == ExpectedChange::value_contains;
        spec.capture = wants_value ? ProbeCapture::raw : ProbeCapture::hash;
        // disambiguate duplicate claims against the same target
        for (const auto& existing : plan.probes)
            if (existing.key == spec.key) { spec.key += "#" + std::to_string(i); break; }
        digest_input += spec.key + "|" + to_string(claim.expected_change) + "|" +
                        claim.expected_value.value_or("") + "\n";
        plan.probes.push_back(std::move(spec));
    }
    plan.id = sha256_hex(digest_input);
    return plan;
}

StateSnapshot capture_snapshot(const ProbePlan& plan, SandboxExecutor& executor) {
    StateSnapshot snap;
    snap.captured_at = monotonic_ns();
    snap.probe_plan_id = plan.id;
    for (const auto& spec : plan.probes) {
        try {
            snap.observations[spec.key] = executor.probe(spec);
        } catch (const ExecutorUnavailable&) {
            throw;
        } catch (const std::exception& ex) {
            snap.observations[spec.key] = error_result(spec.kind, ex.what());
        }
    }
    return snap;
}

std::vector<std::string> default_fail_patterns() {
    return {"SyntaxError", "syntax error", "command not found", "cannot execute",
            "No such file or directory: interpreter"};
}

ExecutionResult execute_poc(const ExploitCandidate& e, SandboxExecutor& executor,
                            std::int64_t timeout_ms, const std::vector<std::string>& fail_patterns) {
    if (timeout_ms <= 0) throw EngineError("execute_poc: timeout must be positive");
    ExecutionResult result = executor.run(e.entry_command, timeout_ms);
    if (result.status == ExecStatus::OK) {
        for (const auto& pattern : fail_patterns) {
            if (result.stderr_text.find(pattern) != std::string::npos) {
                result.status = ExecStatus::EXECUTE_FAIL;
                result.failure_detail = "SYNTAX";
                break;
            }
        }
    }
    return result;
}

SemanticDelta analyze_delta(const StateSnapshot& pre, const StateSnapshot& post) {
    if (pre.probe_plan_id != post.probe_plan_id)
        throw PlanMismatch("snapshots come from different probe plans");

    SemanticDelta delta;
    std::ostringstream narrative;
    for (const auto& [key, before] : pre.observations) {
        const auto it = post.observations.find(key);
        if (it == post.observations.end())
            throw PlanMismatch("post snapshot missing probe key: " + key);
        const auto& after = it->second;
        delta.plan_keys.push_back(key);
        if (before.error || after.error) {
            // observation noise is surfaced but never counted as a change
            delta.unchanged_keys.push_back(key);
            narrative << key << ": probe error ("
                      << before.error.value_or(after.error.value_or("")) << ")\n";
        } else if (before.value != after.value) {
            narrative << key << ": " << *before.value << " -> " << *after.value << "\n";
            delta.changed.push_back({key, before, after});
        } else {
            delta.unchanged_keys.push_back(key);
        }
    }
    delta.narrative = narrative.str();
    return delta;
}

JudgeDecision RuleBasedJudge::judge(const SemanticDelta& delta, const Hypothesis& h) {
    JudgeDecision decision;
    const ProbePlan plan = build_probe_plan(h);
    std::ostringstream rationale;
    bool all = true;
    for (size_t i = 0; i < h.impact_claims.size(); ++i) {
        const auto& claim = h.impact_claims[i];
        const auto& key = plan.probes[i].key;
        const DeltaEntry* entry = nullptr;
        for (const auto& e : delta.changed)
            if (e.key == key) { entry = &e; break; }

        bool ok = false;
        if (entry && entry->after.value) {
            const std::string& after = *entry->after.value;
            switch (claim.expected_change) {
                case ExpectedChange::created:
                    ok = entry->before.value == kAbsenceMarker && after != kAbsenceMarker;
                    break;
                case ExpectedChange::deleted:
                    ok = entry->before.value != kAbsenceMarker && after == kAbsenceMarker;
                    break;
                case ExpectedChange::modified:
                    ok = after != kAbsenceMarker;
                    break;
                case ExpectedChange::value_equals:
                    ok = after == *claim.expected_value;
                    break;
                case ExpectedChange::value_contains:
                    ok = after.find(*claim.expected_value) != std::string::npos;
                    break;
            }
        }
        decision.per_claim[i] = ok;
        all = all && ok;
        rationale << "claim " << i << " (" << key << "): "
                  << (ok ? "satisfied" : (entry ? "changed but not as claimed" : "no change observed"))
                  << "\n";
    }
    decision.matched = all && !h.impact_claims.empty();
    decision.rationale = rationale.str();
    return decision;
}

JudgeDecision judge_match(const SemanticDelta& delta, const Hypothesis& h, MatchJudge& judge) {
    JudgeDecision decision = judge.judge(delta, h);
    // enforce the decision invariant regardless of the judge backend
    bool all = !decision.per_claim.empty();
    for (const auto& [_, ok] : decision.per_claim) all = all && ok;
    decision.matched = all;
    return decision;
}

Feedback make_feedback(const std::string& category, const ExecutionResult& result) {
    if (category != "EXECUTE_FAIL") throw UnknownCategory("unknown feedback category: " + category);
    Feedback fb;
    fb.category = category;
    fb.raw_evidence = result.stderr_text.substr(0, 4096);
    fb.suggestion = "Execution failed (" +
                    (result.failure_detail.empty() ? std::string("exit ") + std::to_string(result.exit_code)
                                                   : result.failure_detail) +
                    "); fix the script's runtime errors before resubmitting.";
    return fb;
}

Feedback make_feedback(const std::string& category, const SemanticDelta& delta,
                       const JudgeDecision* decision, const Hypothesis* h) {
    if (category != "NOT_MATCH") throw UnknownCategory("unknown feedback category: " + category);
    Feedback fb;
    fb.category = category;
    if (decision && h) {
        const ProbePlan plan = build_probe_plan(*h);
        for (const auto& [idx, ok] : decision->per_claim)
            if (!ok && idx < plan.probes.size()) fb.affected_attributes.push_back(plan.probes[idx].key);
    } else {
        fb.affected_attributes = delta.unchanged_keys;
    }
    fb.raw_evidence = delta.narrative;
    fb.suggestion = "Observed state changes do not prove the hypothesis; adjust the exploit "
                    "to affect the claimed targets or revise the claims.";
    return fb;
}

namespace {

nlohmann::json snapshot_json(const StateSnapshot& snap) {
    nlohmann::json obs = nlohmann::json::object();
    for (const auto& [key, r] : snap.observations) {
        nlohmann::json jr;
        jr["kind"] = to_string(r.kind);
        if (r.value) jr["value"] = *r.value;
        if (r.error) jr["error"] = *r.error;
        obs[key] = std::move(jr);
    }
    return {{"plan_id", snap.probe_plan_id}, {"observations", std::move(obs)}};
}

nlohmann::json delta_json(const SemanticDelta& delta) {
    nlohmann::json changed = nlohmann::json::array();
    for (const auto& e : delta.changed)
        changed.push_back({{"key", e.key},
                           {"before", e.before.value.value_or("")},
                           {"after", e.after.value.value_or("")}});
    return {{"changed", std::move(changed)},
            {"unchanged_count", delta.unchanged_count()},
            {"narrative", delta.narrative}};
}

nlohmann::json feedback_json(const Feedback& fb) {
    return {{"category", fb.category},
            {"affected_attributes", fb.affected_attributes},
            {"suggestion", fb.suggestion},
            {"raw_evidence", fb.raw_evidence}};
}

}  // namespace

nlohmann::json VerifyTranscript::to_json() const {
    nlohmann::json fbs = nlohmann::json::array();
    for (const auto& fb : feedback_emitted) fbs.push_back(feedback_json(fb));
    return {{"format", "pocadapt-transcript"},
            {"version", 1},
            {"iterations", iterations},
            {"executor_invocations", executor_invocations},
            {"feedback", std::move(fbs)},
            {"events", events}};
}

Verdict verify(ExploitCandidate e, Hypothesis h, int budget, const VerifyDeps& deps,
               VerifyTranscript* transcript) {
    if (budget < 1) throw EngineError("verify: refinement budget must be >= 1");
    if (!deps.refiner) throw EngineError("verify: refiner callback is required");

    VerifyTranscript local;
    VerifyTranscript& tr = transcript ? *transcript : local;

    std::optional<Feedback> last_fb;
    int k = 0;
    while (k < budget) {
        const ProbePlan plan = build_probe_plan(h);
        const StateSnapshot pre = capture_snapshot(plan, deps.executor);
        const ExecutionResult result = execute_poc(e, deps.executor, deps.exec_timeout_ms, deps.fail_patterns);
        ++tr.executor_invocations;

        if (result.status != ExecStatus::OK) {
            last_fb = make_feedback("EXECUTE_FAIL", result);
            tr.feedback_emitted.push_back(*last_fb);
            tr.events.push_back({{"k", k}, {"event", "execute_fail"},
                                 {"detail", result.failure_detail},
                                 {"stderr", result.stderr_text.substr(0, 1024)}});
            ++k;
            std::tie(e, h) = deps.refiner(*last_fb);
            continue;
        }

        const StateSnapshot post = capture_snapshot(plan, deps.executor);
        const SemanticDelta delta = analyze_delta(pre, post);

        JudgeDecision decision;
        try {
            decision = judge_match(delta, h, deps.judge);
        } catch (const std::exception& ex) {
            // judge outage is treated as no-match with feedback
            decision.matched = false;
            decision.rationale = std::string("judge unavailable: ") + ex.what();
        }

        tr.events.push_back({{"k", k}, {"event", "judged"}, {"matched", decision.matched},
                             {"pre", snapshot_json(pre)}, {"post", snapshot_json(post)},
                             {"delta", delta_json(delta)}, {"rationale", decision.rationale}});

        if (decision.matched) {
            tr.iterations = k;
            return Verdict::validated(std::move(e));
        }

        last_fb = make_feedback("NOT_MATCH", delta, &decision, &h);
        tr.feedback_emitted.push_back(*last_fb);
        ++k;
        std::tie(e, h) = deps.refiner(*last_fb);
    }

    tr.iterations = k;
    StageFailure failure;
    failure.stage = PipelineStage::Validator;
    failure.category = last_fb ? last_fb->category : "NOT_MATCH";
    failure.detail = last_fb ? last_fb->suggestion : "refinement budget exhausted";
    return Verdict::not_validated(std::move(failure));
}

}  // namespace pocadapt
