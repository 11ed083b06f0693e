#pragma once

// System- and policy-level metric computation and report emission.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pocadapt/errors.hpp"

namespace pocadapt {

struct TokenAccount {
    long input_tokens = 0;
    long output_tokens = 0;
    std::map<std::string, std::pair<long, long>> per_stage;  // stage -> (in, out)

    void add(const std::string& stage, long in, long out);
    bool consistent() const;  // per-stage sums equal totals
};

// SR = successes / total * 100.
double compute_sr(long successes, long total);

// Mean steps over successful runs; undefined (absent) when none succeeded.
double compute_tte(const std::vector<long>& step_counts_of_successes);

// EE = successes / total actions across all attempts.
double compute_ee(long successes, long total_actions);

struct RunRecord {
    std::string id;          // advisory or episode id
    bool success = false;
    long steps = 0;          // Exploiter-phase actions
    std::string cwe_group;
    std::string severity;
    TokenAccount tokens;
};

struct Breakdown {
    long successes = 0;
    long total = 0;
};

struct MetricsReport {
    double sr = 0;
    std::optional<double> tte;  // absent when no run succeeded
    double ee = 0;
    long token_input_total = 0;
    long token_output_total = 0;
    double cost_estimate = 0;
    std::map<std::string, Breakdown> per_cwe;
    std::map<std::string, Breakdown> per_severity;
    long runs = 0;
    long successes = 0;
    long total_actions = 0;
};

// Price table: backend -> {input_per_1k, output_per_1k}; cost is linear in
// token counts for a fixed table.
struct PriceTable {
    std::string backend = "default";
    double input_per_1k = 0;
    double output_per_1k = 0;
};

MetricsReport emit_report(const std::vector<RunRecord>& runs, const PriceTable& prices);

nlohmann::json report_to_json(const MetricsReport& report);
std::string render_report_table(const MetricsReport& report);

}  // namespace pocadapt
