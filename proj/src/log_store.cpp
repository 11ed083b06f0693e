#include "pocadapt/log_store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace pocadapt {

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    entries_.push_back(std::move(t));
    ++insertion_count_;
    if (entries_.size() > capacity_) entries_.pop_front();
}

nlohmann::json state_to_json(const ExploitState& s) {
    return {{"phase", s.phase},
            {"cwe_type", s.cwe_type},
            {"tool_diversity", s.tool_diversity},
            {"error_rate", s.error_rate},
            {"iteration", s.iteration},
            {"last_tool", s.last_tool},
            {"last_success", s.last_success},
            {"error_pattern", s.error_pattern},
            {"has_poc_written", s.has_poc_written},
            {"auth_required", s.auth_required},
            {"sandboxed", s.sandboxed},
            {"sink_hit", s.sink_hit},
            {"partial_success", s.partial_success}};
}

ExploitState state_from_json(const nlohmann::json& j) {
    ExploitState s;
    s.phase = j.at("phase").get<int>();
    s.cwe_type = j.at("cwe_type").get<int>();
    s.tool_diversity = j.at("tool_diversity").get<double>();
    s.error_rate = j.at("error_rate").get<double>();
    s.iteration = j.at("iteration").get<int>();
    s.last_tool = j.at("last_tool").get<int>();
    s.last_success = j.at("last_success").get<int>();
    s.error_pattern = j.at("error_pattern").get<int>();
    s.has_poc_written = j.at("has_poc_written").get<int>();
    s.auth_required = j.at("auth_required").get<int>();
    s.sandboxed = j.at("sandboxed").get<int>();
    s.sink_hit = j.at("sink_hit").get<int>();
    s.partial_success = j.at("partial_success").get<int>();
    return s;
}

nlohmann::json log_line_json(const std::string& cve_id, const std::string& episode_id, int step,
                             const ExploitState& state, const ExploitAction& action, int success,
                             bool done, const EpisodeOutcome* outcome, std::int64_t ts) {
    nlohmann::json j = {{"cve_id", cve_id}, {"episode_id", episode_id}, {"step", step},
                        {"state", state_to_json(state)}, {"action", action.name},
                        {"success", success}, {"done", done}, {"ts", ts}};
    if (done && outcome) j["outcome"] = to_string(*outcome);
    return j;
}

nlohmann::json transition_to_json(const Transition& t) {
    return {{"state", state_to_json(t.state)},
            {"action", t.action.id},
            {"reward", t.reward},
            {"next_state", state_to_json(t.next_state)},
            {"done", t.done}};
}

Transition transition_from_json(const nlohmann::json& j) {
    Transition t;
    t.state = state_from_json(j.at("state"));
    t.action = action_from_id(j.at("action").get<int>());
    t.reward = j.at("reward").get<double>();
    t.next_state = state_from_json(j.at("next_state"));
    t.done = j.at("done").get<bool>();
    return t;
}

nlohmann::json ReplayBuffer::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& t : entries_) entries.push_back(transition_to_json(t));
    return {{"format", "pocadapt-buffer"},
            {"version", 1},
            {"capacity", capacity_},
            {"insertion_count", insertion_count_},
            {"entries", std::move(entries)}};
}

ReplayBuffer ReplayBuffer::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "pocadapt-buffer" || j.value("version", 0) != 1)
        throw UnreadableFile("not a pocadapt-buffer v1 document");
    ReplayBuffer buf(j.at("capacity").get<size_t>());
    for (const auto& e : j.at("entries")) buf.entries_.push_back(transition_from_json(e));
    buf.insertion_count_ = j.value("insertion_count", static_cast<std::uint64_t>(buf.entries_.size()));
    return buf;
}

namespace {

struct RawLine {
    int step = 0;
    std::int64_t ts = 0;
    ExploitState state;
    ExploitAction action;
    int success = 0;
    bool done = false;
    EpisodeOutcome outcome = EpisodeOutcome::EXHAUSTED;
    bool has_outcome = false;
};

// Terminal next-state derivation: the final log line has no successor, so
// its next state is the line's state advanced by the recorded action.
ExploitState derive_next_state(const ExploitState& s, const ExploitAction& a, int success) {
    ExploitState next = s;
    next.iteration = s.iteration + 1;
    next.last_tool = a.id;
    next.last_success = success;
    return next;
}

}  // namespace

IngestResult ingest_log(const std::string& path, const RewardConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw UnreadableFile("cannot open log file: " + path);

    std::map<std::string, std::pair<std::string, std::vector<RawLine>>> episodes;  // episode -> (cve, lines)
    std::vector<std::string> episode_order;
    IngestResult result;

    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++result.total_lines;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            RawLine raw;
            raw.step = j.at("step").get<int>();
            raw.ts = j.value("ts", static_cast<std::int64_t>(raw.step));
            raw.state = state_from_json(j.at("state"));
            const auto& ja = j.at("action");
            raw.action = ja.is_string() ? action_from_name(ja.get<std::string>())
                                        : action_from_id(ja.get<int>());
            raw.success = j.at("success").get<int>();
            raw.done = j.value("done", false);
            if (j.contains("outcome")) {
                raw.outcome = outcome_from_string(j["outcome"].get<std::string>());
                raw.has_outcome = true;
            }
            const std::string episode = j.at("episode_id").get<std::string>();
            const std::string cve = j.at("cve_id").get<std::string>();
            auto [it, inserted] = episodes.try_emplace(episode, cve, std::vector<RawLine>{});
            if (inserted) episode_order.push_back(episode);
            it->second.second.push_back(std::move(raw));
        } catch (const std::exception&) {
            ++result.skipped_lines;
        }
    }

    for (const auto& episode : episode_order) {
        auto& [cve, lines] = episodes.at(episode);
        std::stable_sort(lines.begin(), lines.end(),
                         [](const RawLine& a, const RawLine& b) { return a.ts < b.ts; });
        Trajectory traj;
        traj.cve_id = cve;
        traj.episode_id = episode;
        for (size_t i = 0; i < lines.size(); ++i) {
            const auto& raw = lines[i];
            Transition t;
            t.state = raw.state;
            t.action = raw.action;
            t.done = raw.done;
            t.next_state = (i + 1 < lines.size())
                               ? lines[i + 1].state
                               : derive_next_state(raw.state, raw.action, raw.success);
            traj.transitions.push_back(std::move(t));
            if (raw.has_outcome) traj.outcome = raw.outcome;
            if (raw.done) break;  // ignore trailing lines after a terminal marker
        }
        if (traj.transitions.empty()) continue;
        // episodes truncated mid-run are closed out as exhausted
        if (!traj.transitions.back().done) {
            traj.transitions.back().done = true;
            traj.outcome = EpisodeOutcome::EXHAUSTED;
        }
        for (auto& t : traj.transitions) t.reward = transition_reward(t, traj.outcome, cfg);
        result.trajectories.push_back(std::move(traj));
    }

    if (result.trajectories.empty()) throw EmptyLog("no valid episodes in " + path);
    return result;
}

size_t fill_buffer(const std::vector<Trajectory>& trajs, ReplayBuffer& buf) {
    size_t inserted = 0;
    for (const auto& traj : trajs)
        for (const auto& t : traj.transitions) {
            buf.push(t);
            ++inserted;
        }
    return inserted;
}

SplitSpec split_by_cve(const std::vector<Trajectory>& trajs, double test_fraction,
                       std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must lie in (0,1)");

    std::set<std::string> distinct;
    for (const auto& t : trajs) distinct.insert(t.cve_id);
    if (distinct.size() < 2) throw TooFewCVEs("need at least 2 distinct advisory ids to split");

    std::vector<std::string> ids(distinct.begin(), distinct.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    size_t n_test = static_cast<size_t>(test_fraction * static_cast<double>(ids.size()) + 0.5);
    n_test = std::clamp<size_t>(n_test, 1, ids.size() - 1);

    SplitSpec spec;
    spec.seed = seed;
    for (size_t i = 0; i < ids.size(); ++i)
        (i < n_test ? spec.test_cves : spec.train_cves).insert(ids[i]);
    return spec;
}

std::vector<Transition> sample_batch(const ReplayBuffer& buf, size_t batch_size,
                                     std::uint64_t seed) {
    if (buf.size() < batch_size)
        throw InsufficientData("buffer holds " + std::to_string(buf.size()) +
                               " transitions, batch needs " + std::to_string(batch_size));
    std::vector<size_t> indices(buf.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);

    std::vector<Transition> batch;
    batch.reserve(batch_size);
    for (size_t i = 0; i < batch_size; ++i) batch.push_back(buf.at(indices[i]));
    return batch;
}

void save_buffer(const ReplayBuffer& buf, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFile("cannot write " + tmp);
        out << buf.to_json().dump();
    }
    std::rename(tmp.c_str(), path.c_str());
}

ReplayBuffer load_buffer(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableFile("cannot open buffer file: " + path);
    nlohmann::json j;
    in >> j;
    return ReplayBuffer::from_json(j);
}

std::string trajectories_to_log(const std::vector<Trajectory>& trajs) {
    std::ostringstream out;
    for (const auto& traj : trajs) {
        for (size_t i = 0; i < traj.transitions.size(); ++i) {
            const auto& t = traj.transitions[i];
            const EpisodeOutcome outcome = traj.outcome;
            out << log_line_json(traj.cve_id, traj.episode_id, static_cast<int>(i), t.state,
                                 t.action, t.next_state.last_success, t.done,
                                 t.done ? &outcome : nullptr, static_cast<std::int64_t>(i))
                       .dump()
                << "\n";
        }
    }
    return out.str();
}

}  // namespace pocadapt
