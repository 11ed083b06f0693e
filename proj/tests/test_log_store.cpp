#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pocadapt/log_store.hpp"

using namespace pocadapt;
namespace fs = std::filesystem;

namespace {

Transition simple_transition(int action_id, int success, bool done = false) {
    Transition t;
    t.action = action_from_id(action_id);
    t.next_state.iteration = 1;
    t.next_state.last_tool = action_id;
    t.next_state.last_success = success;
    t.done = done;
    return t;
}

std::string temp_file(const std::string& tag) {
    return (fs::temp_directory_path() /
            ("pocadapt-log-" + tag + "-" + std::to_string(::getpid()) + ".jsonl"))
        .string();
}

std::string two_episode_log() {
    std::string lines;
    // episode A: 2 steps, verified
    ExploitState s;
    lines += log_line_json("CVE-2025-1", "ep-a", 0, s, action_from_id(3), 1, false, nullptr, 10).dump() + "\n";
    s.iteration = 1;
    s.last_tool = 3;
    s.last_success = 1;
    const EpisodeOutcome verified = EpisodeOutcome::VERIFIED;
    lines += log_line_json("CVE-2025-1", "ep-a", 1, s, action_from_id(0), 1, true, &verified, 11).dump() + "\n";
    // episode B: 1 step, exhausted
    ExploitState sb;
    const EpisodeOutcome exhausted = EpisodeOutcome::EXHAUSTED;
    lines += log_line_json("CVE-2025-2", "ep-b", 0, sb, action_from_id(8), 0, true, &exhausted, 5).dump() + "\n";
    return lines;
}

}  // namespace

TEST_CASE("replay buffer is strictly FIFO with bounded size") {
    ReplayBuffer buf(2);
    buf.push(simple_transition(1, 1));
    buf.push(simple_transition(2, 1));
    buf.push(simple_transition(3, 1));
    CHECK(buf.size() == 2);
    CHECK(buf.insertion_count() == 3);
    CHECK(buf.at(0).action.id == 2);  // oldest entry evicted first
    CHECK(buf.at(1).action.id == 3);
    CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);
}

TEST_CASE("buffer never exceeds capacity under random insertion") {
    std::mt19937_64 rng(42);
    ReplayBuffer buf(17);
    for (int i = 0; i < 500; ++i) {
        buf.push(simple_transition(static_cast<int>(rng() % 9), static_cast<int>(rng() % 2)));
        CHECK(buf.size() <= 17);
    }
    CHECK(buf.insertion_count() == 500);
}

TEST_CASE("ingest reconstructs episodes with correct done placement") {
    const std::string path = temp_file("ingest");
    std::ofstream(path) << two_episode_log();
    const IngestResult result = ingest_log(path);
    REQUIRE(result.trajectories.size() == 2);
    CHECK(result.skipped_lines == 0);

    const Trajectory& a = result.trajectories[0];
    CHECK(a.cve_id == "CVE-2025-1");
    REQUIRE(a.transitions.size() == 2);
    CHECK(a.well_formed());
    CHECK(a.outcome == EpisodeOutcome::VERIFIED);
    // rewards are recomputed centrally: final verified submit carries +1 + 25
    CHECK(a.transitions.back().reward == doctest::Approx(26.0));

    const Trajectory& b = result.trajectories[1];
    CHECK(b.outcome == EpisodeOutcome::EXHAUSTED);
    CHECK(b.transitions.back().reward == doctest::Approx(-2.0 - 10.0));
    fs::remove(path);
}

TEST_CASE("malformed lines are skipped and counted") {
    const std::string path = temp_file("skip");
    std::ofstream(path) << two_episode_log() << "this is not json\n" << "{\"cve_id\": 3}\n";
    const IngestResult result = ingest_log(path);
    CHECK(result.trajectories.size() == 2);
    CHECK(result.skipped_lines == 2);
    CHECK(result.total_lines == 5);
    fs::remove(path);
}

TEST_CASE("empty and missing logs raise dedicated errors") {
    const std::string path = temp_file("empty");
    std::ofstream(path) << "";
    CHECK_THROWS_AS(ingest_log(path), EmptyLog);
    fs::remove(path);
    CHECK_THROWS_AS(ingest_log(path), UnreadableFile);
}

TEST_CASE("ingestion round-trips through serialization") {
    const std::string path = temp_file("roundtrip");
    std::ofstream(path) << two_episode_log();
    const IngestResult first = ingest_log(path);

    const std::string path2 = temp_file("roundtrip2");
    std::ofstream(path2) << trajectories_to_log(first.trajectories);
    const IngestResult second = ingest_log(path2);

    REQUIRE(first.trajectories.size() == second.trajectories.size());
    for (size_t i = 0; i < first.trajectories.size(); ++i) {
        const auto& ta = first.trajectories[i];
        const auto& tb = second.trajectories[i];
        CHECK(ta.cve_id == tb.cve_id);
        CHECK(ta.outcome == tb.outcome);
        REQUIRE(ta.transitions.size() == tb.transitions.size());
        for (size_t k = 0; k < ta.transitions.size(); ++k) {
            CHECK(ta.transitions[k].state == tb.transitions[k].state);
            CHECK(ta.transitions[k].action.id == tb.transitions[k].action.id);
            CHECK(ta.transitions[k].done == tb.transitions[k].done);
        }
    }
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("fill_buffer keeps trajectory order and multiset semantics") {
    std::vector<Trajectory> trajs(1);
    trajs[0].transitions = {simple_transition(1, 1), simple_transition(2, 0, true)};
    ReplayBuffer buf(10);
    CHECK(fill_buffer(trajs, buf) == 2);
    CHECK(fill_buffer(trajs, buf) == 2);  // no dedup
    CHECK(buf.insertion_count() == 4);
    CHECK(buf.at(0).action.id == 1);
}

TEST_CASE("split_by_cve is deterministic and leakage-free") {
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 20; ++i) {
        Trajectory t;
        t.cve_id = "CVE-2025-" + std::to_string(i % 10);  // two episodes per CVE
        t.episode_id = "ep-" + std::to_string(i);
        trajs.push_back(std::move(t));
    }
    const SplitSpec a = split_by_cve(trajs, 0.3, 5);
    const SplitSpec b = split_by_cve(trajs, 0.3, 5);
    CHECK(a.train_cves == b.train_cves);
    CHECK(a.test_cves == b.test_cves);
    CHECK(a.train_cves.size() + a.test_cves.size() == 10);
    for (const auto& cve : a.test_cves) CHECK(a.train_cves.count(cve) == 0);

    std::vector<Trajectory> one(1);
    one[0].cve_id = "CVE-2025-1";
    CHECK_THROWS_AS(split_by_cve(one, 0.3, 5), TooFewCVEs);
}

TEST_CASE("sample_batch is seeded and without replacement") {
    ReplayBuffer buf(64);
    for (int i = 0; i < 64; ++i) buf.push(simple_transition(i % 9, 1));

    const auto batch = sample_batch(buf, 64, 9);
    CHECK(batch.size() == 64);
    // a full-size batch is a permutation: all 9 action ids appear with buffer multiplicity
    std::map<int, int> counts;
    for (const auto& t : batch) ++counts[t.action.id];
    CHECK(counts[0] == 8);  // 64 entries cycling through 9 ids: id 0 appears 8 times
    CHECK(counts[1] == 7);

    const auto again = sample_batch(buf, 64, 9);
    for (size_t i = 0; i < batch.size(); ++i) CHECK(batch[i].action.id == again[i].action.id);

    CHECK_THROWS_AS(sample_batch(buf, 65, 9), InsufficientData);
}

TEST_CASE("buffer snapshot persistence round-trips") {
    ReplayBuffer buf(8);
    for (int i = 0; i < 5; ++i) buf.push(simple_transition(i, i % 2, i == 4));
    const std::string path = temp_file("buffer");
    save_buffer(buf, path);
    const ReplayBuffer back = load_buffer(path);
    REQUIRE(back.size() == buf.size());
    for (size_t i = 0; i < buf.size(); ++i) {
        CHECK(back.at(i).action.id == buf.at(i).action.id);
        CHECK(back.at(i).next_state == buf.at(i).next_state);
        CHECK(back.at(i).done == buf.at(i).done);
    }
    fs::remove(path);
}
