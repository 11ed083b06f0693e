#pragma once

// Trajectory-log ingestion, the FIFO replay buffer, CVE-disjoint splitting,
// and seeded batch sampling.

#include <cstdint>
#include <deque>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pocadapt/errors.hpp"
#include "pocadapt/mdp.hpp"

namespace pocadapt {

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity = 10000);

    void push(Transition t);
    size_t size() const { return entries_.size(); }
    size_t capacity() const { return capacity_; }
    std::uint64_t insertion_count() const { return insertion_count_; }
    const Transition& at(size_t i) const { return entries_.at(i); }

    nlohmann::json to_json() const;
    static ReplayBuffer from_json(const nlohmann::json& j);

private:
    size_t capacity_;
    std::deque<Transition> entries_;  // FIFO: push back, evict front
    std::uint64_t insertion_count_ = 0;
};

struct SplitSpec {
    std::set<std::string> train_cves;
    std::set<std::string> test_cves;
    std::uint64_t seed = 0;
};

struct IngestResult {
    std::vector<Trajectory> trajectories;
    size_t skipped_lines = 0;
    size_t total_lines = 0;
};

// One JSON object per line; one Trajectory per episode_id, transitions in
// timestamp order. Malformed lines are skipped and counted. Rewards are
// recomputed from the reward config so reward semantics stay centralized.
IngestResult ingest_log(const std::string& path, const RewardConfig& cfg = RewardConfig::defaults());

size_t fill_buffer(const std::vector<Trajectory>& trajs, ReplayBuffer& buf);

SplitSpec split_by_cve(const std::vector<Trajectory>& trajs, double test_fraction,
                       std::uint64_t seed);

// Uniform sampling without replacement within a batch; deterministic per seed.
std::vector<Transition> sample_batch(const ReplayBuffer& buf, size_t batch_size,
                                     std::uint64_t seed);

// Log-line schema shared by real and simulated runs.
nlohmann::json state_to_json(const ExploitState& s);
ExploitState state_from_json(const nlohmann::json& j);
nlohmann::json log_line_json(const std::string& cve_id, const std::string& episode_id, int step,
                             const ExploitState& state, const ExploitAction& action, int success,
                             bool done, const EpisodeOutcome* outcome, std::int64_t ts);

nlohmann::json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& j);

void save_buffer(const ReplayBuffer& buf, const std::string& path);
ReplayBuffer load_buffer(const std::string& path);

// Serialize trajectories back to the line schema (round-trip support).
std::string trajectories_to_log(const std::vector<Trajectory>& trajs);

}  // namespace pocadapt
