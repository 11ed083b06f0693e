#include "pocadapt/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace pocadapt {

void TokenAccount::add(const std::string& stage, long in, long out) {
    input_tokens += in;
    output_tokens += out;
    auto& [si, so] = per_stage[stage];
    si += in;
    so += out;
}

bool TokenAccount::consistent() const {
    long in = 0, out = 0;
    for (const auto& [_, counts] : per_stage) {
        in += counts.first;
        out += counts.second;
    }
    return in == input_tokens && out == output_tokens;
}

double compute_sr(long successes, long total) {
    if (total <= 0) throw EmptyPopulation("SR undefined over an empty population");
    if (successes < 0 || successes > total)
        throw EngineError("successes must lie in [0, total]");
    return 100.0 * static_cast<double>(successes) / static_cast<double>(total);
}

double compute_tte(const std::vector<long>& step_counts_of_successes) {
    if (step_counts_of_successes.empty())
        throw NoSuccesses("TTE undefined with zero successes");
    double sum = 0;
    for (long s : step_counts_of_successes) sum += static_cast<double>(s);
    return sum / static_cast<double>(step_counts_of_successes.size());
}

double compute_ee(long successes, long total_actions) {
    if (total_actions <= 0) throw ZeroActions("EE undefined with zero total actions");
    return static_cast<double>(successes) / static_cast<double>(total_actions);
}

MetricsReport emit_report(const std::vector<RunRecord>& runs, const PriceTable& prices) {
    MetricsReport report;
    report.runs = static_cast<long>(runs.size());
    std::vector<long> success_steps;
    for (const auto& run : runs) {
        report.total_actions += run.steps;
        report.token_input_total += run.tokens.input_tokens;
        report.token_output_total += run.tokens.output_tokens;
        auto& cwe = report.per_cwe[run.cwe_group.empty() ? "unknown" : run.cwe_group];
        auto& sev = report.per_severity[run.severity.empty() ? "unknown" : run.severity];
        ++cwe.total;
        ++sev.total;
        if (run.success) {
            ++report.successes;
            ++cwe.successes;
            ++sev.successes;
            success_steps.push_back(run.steps);
        }
    }
    if (report.runs > 0) report.sr = compute_sr(report.successes, report.runs);
    if (!success_steps.empty()) report.tte = compute_tte(success_steps);
    report.ee = report.total_actions > 0 ? compute_ee(report.successes, report.total_actions) : 0.0;
    report.cost_estimate = (report.token_input_total / 1000.0) * prices.input_per_1k +
                           (report.token_output_total / 1000.0) * prices.output_per_1k;
    return report;
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json per_cwe = nlohmann::json::object(), per_sev = nlohmann::json::object();
    for (const auto& [key, b] : report.per_cwe)
        per_cwe[key] = {{"successes", b.successes}, {"total", b.total}};
    for (const auto& [key, b] : report.per_severity)
        per_sev[key] = {{"successes", b.successes}, {"total", b.total}};
    nlohmann::json j = {{"format", "pocadapt-report"},
                        {"version", 1},
                        {"sr", report.sr},
                        {"ee", report.ee},
                        {"runs", report.runs},
                        {"successes", report.successes},
                        {"total_actions", report.total_actions},
                        {"token_input_total", report.token_input_total},
                        {"token_output_total", report.token_output_total},
                        {"cost_estimate", report.cost_estimate},
                        {"per_cwe", std::move(per_cwe)},
                        {"per_severity", std::move(per_sev)}};
    if (report.tte) j["tte"] = *report.tte;
    return j;
}

std::string render_report_table(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    out << "metric            value\n"
        << "----------------  ----------\n";
    std::snprintf(line, sizeof line, "%-16s  %.2f%%\n", "SR", report.sr);
    out << line;
    if (report.tte)
        std::snprintf(line, sizeof line, "%-16s  %.2f\n", "TTE", *report.tte);
    else
        std::snprintf(line, sizeof line, "%-16s  n/a (no successes)\n", "TTE");
    out << line;
    std::snprintf(line, sizeof line, "%-16s  %.4f\n", "EE", report.ee);
    out << line;
    std::snprintf(line, sizeof line, "%-16s  %ld / %ld\n", "successes", report.successes, report.runs);
    out << line;
    std::snprintf(line, sizeof line, "%-16s  %ld in / %ld out\n", "tokens",
                  report.token_input_total, report.token_output_total);
    out << line;
    std::snprintf(line, sizeof line, "%-16s  $%.4f\n", "cost", report.cost_estimate);
    out << line;
    for (const auto& [key, b] : report.per_cwe) {
        std::snprintf(line, sizeof line, "cwe %-12s  %ld/%ld\n", key.c_str(), b.successes, b.total);
        out << line;
    }
    for (const auto& [key, b] : report.per_severity) {
        std::snprintf(line, sizeof line, "sev %-12s  %ld/%ld\n", key.c_str(), b.successes, b.total);
        out << line;
    }
    return out.str();
}

}  // namespace pocadapt
