#include "pocadapt/domain.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace pocadapt {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

bool is_valid_advisory_id(const std::string& id) {
    static const std::regex cve(R"(CVE-\d{4}-\d+)", std::regex::icase);
    static const std::regex ghsa(R"(GHSA-[a-z0-9-]+)", std::regex::icase);
    return std::regex_match(id, cve) || std::regex_match(id, ghsa);
}

std::string to_string(TargetKind k) {
    switch (k) {
        case TargetKind::file_content: return "file_content";
        case TargetKind::file_exists: return "file_exists";
        case TargetKind::env_var: return "env_var";
        case TargetKind::process_observation: return "process_observation";
        case TargetKind::db_record: return "db_record";
        case TargetKind::network_artifact: return "network_artifact";
    }
    return "unknown";
}

std::string to_string(ExpectedChange c) {
    switch (c) {
        case ExpectedChange::created: return "created";
        case ExpectedChange::deleted: return "deleted";
        case ExpectedChange::modified: return "modified";
        case ExpectedChange::value_equals: return "value_equals";
        case ExpectedChange::value_contains: return "value_contains";
    }
    return "unknown";
}

TargetKind target_kind_from_string(const std::string& s) {
    if (s == "file_content") return TargetKind::file_content;
    if (s == "file_exists") return TargetKind::file_exists;
    if (s == "env_var") return TargetKind::env_var;
    if (s == "process_observation") return TargetKind::process_observation;
    if (s == "db_record") return TargetKind::db_record;
    if (s == "network_artifact") return TargetKind::network_artifact;
    throw EngineError("unknown target kind: " + s);
}

ExpectedChange expected_change_from_string(const std::string& s) {
    if (s == "created") return ExpectedChange::created;
    if (s == "deleted") return ExpectedChange::deleted;
    if (s == "modified") return ExpectedChange::modified;
    if (s == "value_equals") return ExpectedChange::value_equals;
    if (s == "value_contains") return ExpectedChange::value_contains;
    throw EngineError("unknown expected change: " + s);
}

bool ImpactClaim::well_formed() const {
    if (target_key.empty()) return false;
    const bool needs_value = expected_change == ExpectedChange::value_equals ||
                             expected_change == ExpectedChange::value_contains;
    return needs_value == expected_value.has_value();
}

bool validate_hypothesis(const Hypothesis& h) {
    if (h.impact_claims.empty()) return false;
    return std::all_of(h.impact_claims.begin(), h.impact_claims.end(),
                       [](const ImpactClaim& c) { return c.well_formed(); });
}

std::string to_string(PipelineStage s) {
    switch (s) {
        case PipelineStage::ContextRetrieval: return "ContextRetrieval";
        case PipelineStage::RCA: return "RCA";
        case PipelineStage::Planner: return "Planner";
        case PipelineStage::Exploiter: return "Exploiter";
        case PipelineStage::Validator: return "Validator";
    }
    return "unknown";
}

bool is_registered_failure_category(PipelineStage stage, const std::string& category) {
    // budget exhaustion can interrupt any stage
    if (category == "TIMEOUT" || category == "BUDGET_EXHAUSTED") return true;
    switch (stage) {
        case PipelineStage::ContextRetrieval:
            return category == "MALFORMED_RECORD" || category == "UNSUPPORTED_SCHEMA";
        case PipelineStage::RCA:
            return category == "NO_SINK" || category == "TOOL_DENIED";
        case PipelineStage::Planner:
            return category == "DEPENDENCY" || category == "BUILD_FAIL" ||
                   category == "BUDGET_EXHAUSTED";
        case PipelineStage::Exploiter:
            return category == "STEP_LIMIT" || category == "TIMEOUT" ||
                   category == "BUDGET_EXHAUSTED";
        case PipelineStage::Validator:
            return category == "EXECUTE_FAIL" || category == "NOT_MATCH" ||
                   category == "BUDGET_EXHAUSTED" || category == "TIMEOUT";
    }
    return false;
}

Verdict Verdict::validated(ExploitCandidate poc) {
    Verdict v;
    v.status = VerdictStatus::VALIDATED;
    v.poc = std::move(poc);
    return v;
}

Verdict Verdict::not_validated(StageFailure failure) {
    Verdict v;
    v.status = VerdictStatus::NOT_VALIDATED;
    v.diagnostic = std::move(failure);
    return v;
}

BugContext parse_advisory_record(const nlohmann::json& record) {
    if (!record.is_object() || record.empty())
        throw MalformedRecord("advisory record is empty or not an object");

    BugContext ctx;

    if (record.contains("ghsa_id")) {
        // GHSA shape: ghsa_id, summary, details, references
        ctx.advisory_id = record.value("ghsa_id", "");
        std::string summary = record.value("summary", "");
        std::string details = record.value("details", "");
        ctx.description = details.empty() ? summary
                          : (summary.empty() ? details : summary + "\n" + details);
        if (record.contains("references") && record["references"].is_array()) {
            for (const auto& ref : record["references"]) {
                const std::string url = ref.is_string() ? ref.get<std::string>()
                                                        : ref.value("url", "");
                if (ctx.repo_ref.empty() && url.find("github.com") != std::string::npos)
                    ctx.repo_ref = url;
            }
        }
        ctx.patch_diff = record.value("patch", "");
        if (record.contains("affected_versions"))
            ctx.affected_versions = record["affected_versions"].get<std::vector<std::string>>();
    } else if (record.contains("cve") && record["cve"].is_object()) {
        // NVD shape: cve.id, cve.descriptions[0].value
        const auto& cve = record["cve"];
        ctx.advisory_id = cve.value("id", "");
        if (cve.contains("descriptions") && cve["descriptions"].is_array() &&
            !cve["descriptions"].empty()) {
            ctx.description = cve["descriptions"][0].value("value", "");
        }
        ctx.repo_ref = cve.value("source_repo", "");
        ctx.patch_diff = cve.value("patch", "");
        if (cve.contains("affected_versions"))
            ctx.affected_versions = cve["affected_versions"].get<std::vector<std::string>>();
    } else {
        throw UnsupportedSchema("record matches neither GHSA nor NVD shape");
    }

    if (ctx.advisory_id.empty() || ctx.description.empty())
        throw MalformedRecord("advisory record missing id or description");
    if (!is_valid_advisory_id(ctx.advisory_id))
        throw MalformedRecord("advisory id has unexpected form: " + ctx.advisory_id);
    return ctx;
}

nlohmann::json to_json(const BugContext& c) {
    nlohmann::json j;
    const std::string id = lower(c.advisory_id);
    if (id.rfind("ghsa-", 0) == 0) {
        j["ghsa_id"] = c.advisory_id;
        j["summary"] = c.description;
        j["details"] = "";
        j["references"] = nlohmann::json::array();
        if (!c.repo_ref.empty()) j["references"].push_back(c.repo_ref);
        j["patch"] = c.patch_diff;
        j["affected_versions"] = c.affected_versions;
    } else {
        j["cve"]["id"] = c.advisory_id;
        j["cve"]["descriptions"] = nlohmann::json::array({{{"value", c.description}}});
        j["cve"]["source_repo"] = c.repo_ref;
        j["cve"]["patch"] = c.patch_diff;
        j["cve"]["affected_versions"] = c.affected_versions;
    }
    return j;
}

nlohmann::json to_json(const Hypothesis& h) {
    nlohmann::json claims = nlohmann::json::array();
    for (const auto& c : h.impact_claims) {
        nlohmann::json jc;
        jc["target_kind"] = to_string(c.target_kind);
        jc["target_key"] = c.target_key;
        jc["expected_change"] = to_string(c.expected_change);
        if (c.expected_value) jc["expected_value"] = *c.expected_value;
        claims.push_back(std::move(jc));
    }
    return {{"impact_claims", std::move(claims)}, {"narrative", h.narrative}};
}

Hypothesis hypothesis_from_json(const nlohmann::json& j) {
    Hypothesis h;
    h.narrative = j.value("narrative", "");
    for (const auto& jc : j.value("impact_claims", nlohmann::json::array())) {
        ImpactClaim c;
        c.target_kind = target_kind_from_string(jc.at("target_kind").get<std::string>());
        c.target_key = jc.at("target_key").get<std::string>();
        c.expected_change = expected_change_from_string(jc.at("expected_change").get<std::string>());
        if (jc.contains("expected_value")) c.expected_value = jc["expected_value"].get<std::string>();
        h.impact_claims.push_back(std::move(c));
    }
    return h;
}

}  // namespace pocadapt
