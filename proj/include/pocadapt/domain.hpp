#pragma once

// Stage artifacts flowing through the five-stage pipeline:
// bug context -> RCA report -> planner report -> (exploit, hypothesis) -> verdict.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pocadapt/errors.hpp"

namespace pocadapt {

struct CodeLocation {
    std::string file;
    int line_begin = 0;
    int line_end = 0;

    bool operator==(const CodeLocation&) const = default;
};

struct BugContext {
    std::string advisory_id;  // CVE-YYYY-N or GHSA-x-y-z
    std::string description;
    std::string repo_ref;
    std::string patch_diff;  // unified diff, empty when the advisory carries none
    std::vector<std::string> affected_versions;

    bool operator==(const BugContext&) const = default;
};

bool is_valid_advisory_id(const std::string& id);

struct RcaReport {
    CodeLocation loc;
    CodeLocation sink;
    std::vector<CodeLocation> entry_points;
    std::vector<std::vector<CodeLocation>> taint_paths;
    std::vector<std::string> constraints;
    std::vector<std::string> trigger_steps;
};

struct PlannerReport {
    std::map<std::string, std::string> env_spec;
    std::vector<std::string> build_cmds;
    std::vector<std::string> run_cmds;
    std::map<std::string, std::string> access_info;
};

struct ExploitCandidate {
    std::string script;
    std::string language_hint;
    std::string entry_command;
};

enum class TargetKind {
    file_content,
    file_exists,
    env_var,
    process_observation,
    db_record,
    network_artifact,
};

enum class ExpectedChange {
    created,
    deleted,
    modified,
    value_equals,
    value_contains,
};

std::string to_string(TargetKind k);
std::string to_string(ExpectedChange c);
TargetKind target_kind_from_string(const std::string& s);
ExpectedChange expected_change_from_string(const std::string& s);

struct ImpactClaim {
    TargetKind target_kind = TargetKind::file_content;
    std::string target_key;
    ExpectedChange expected_change = ExpectedChange::modified;
    std::optional<std::string> expected_value;

    // expected_value is required exactly for value_equals / value_contains
    bool well_formed() const;
};

struct Hypothesis {
    std::vector<ImpactClaim> impact_claims;
    std::string narrative;
};

bool validate_hypothesis(const Hypothesis& h);

enum class PipelineStage {
    ContextRetrieval,
    RCA,
    Planner,
    Exploiter,
    Validator,
};

std::string to_string(PipelineStage s);

struct StageFailure {
    PipelineStage stage = PipelineStage::ContextRetrieval;
    std::string category;  // closed registry per stage, e.g. EXECUTE_FAIL, NOT_MATCH
    std::string detail;
};

// Registry check for diagnostic categories; unknown categories are rejected
// when verdicts are assembled.
bool is_registered_failure_category(PipelineStage stage, const std::string& category);

enum class VerdictStatus { VALIDATED, NOT_VALIDATED };

struct Verdict {
    VerdictStatus status = VerdictStatus::NOT_VALIDATED;
    std::optional<ExploitCandidate> poc;       // present iff VALIDATED
    std::optional<StageFailure> diagnostic;    // present iff NOT_VALIDATED

    static Verdict validated(ExploitCandidate poc);
    static Verdict not_validated(StageFailure failure);
};

struct Feedback {
    std::string category;
    std::vector<std::string> affected_attributes;
    std::string suggestion;
    std::string raw_evidence;
};

// Parses a GHSA- or NVD-shaped advisory document into a BugContext.
// Absent optional fields (patch, versions) map to empty values.
BugContext parse_advisory_record(const nlohmann::json& record);

nlohmann::json to_json(const BugContext& c);
nlohmann::json to_json(const Hypothesis& h);
Hypothesis hypothesis_from_json(const nlohmann::json& j);

}  // namespace pocadapt
