#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "pocadapt/sim.hpp"
#include "pocadapt/trainer.hpp"

using namespace pocadapt;
namespace fs = std::filesystem;

namespace {

ReplayBuffer training_buffer(int episodes, std::uint64_t seed) {
    GenerateOptions opts;
    opts.episodes = episodes;
    opts.seed = seed;
    ReplayBuffer buf;
    fill_buffer(generate_trajectories(benchmark_scenarios(), opts), buf);
    return buf;
}

}  // namespace

TEST_CASE("trainer config validation") {
    TrainerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainerConfig{};
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adam matches the published update rule on one parameter") {
    // single 1x1 "network": only b2 participates; gradient g = 0.3
    QNetworkT<double> net = QNetworkT<double>::zeros(1, 1, 1);
    AdamOptimizerT<double> adam(net, 0.1, 0.9, 0.999, 1e-8);
    NetGradsT<double> grads = NetGradsT<double>::zeros_like(net);
    grads.b2(0) = 0.3;
    adam.step(net, grads);

    const double m_hat = (0.1 * 0.3) / (1 - 0.9);           // = 0.3
    const double v_hat = (0.001 * 0.09) / (1 - 0.999);      // = 0.09
    const double expected = -0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(net.b2(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("training reduces the loss and is deterministic per seed") {
    const ReplayBuffer buf = training_buffer(40, 17);
    TrainerConfig cfg;
    cfg.epochs = 45;
    cfg.seed = 3;

    TrainingReport report;
    const Checkpoint a = train(buf, cfg, EncodingVocab{}, &report);
    REQUIRE(report.epoch_mean_loss.size() == 45);
    CHECK(report.epoch_mean_loss.back() < report.epoch_mean_loss.front());

    const Checkpoint b = train(buf, cfg);
    CHECK(a.online == b.online);
    CHECK(a.target == b.target);
    CHECK(a.training_step == b.training_step);
    CHECK(a.rng_state_digest == b.rng_state_digest);

    cfg.seed = 4;
    const Checkpoint c = train(buf, cfg);
    CHECK_FALSE(a.online == c.online);
}

TEST_CASE("training demands at least one batch") {
    ReplayBuffer tiny(100);
    Transition t;
    t.action = action_from_id(1);
    for (int i = 0; i < 10; ++i) tiny.push(t);
    TrainerConfig cfg;  // batch 64 > 10
    CHECK_THROWS_AS(train(tiny, cfg), InsufficientData);
}

TEST_CASE("recommend ranks by Q with id tie-break and honors masks") {
    QNetwork net = QNetwork::zeros(13, 4, 9);
    net.b2 << 0, 5, 5, 1, 0, 0, 0, 0, 0;
    const ExploitState s;

    const auto top2 = recommend(net, s, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].action.id == 1);  // q=5, tie broken by lower id
    CHECK(top2[1].action.id == 2);

    const auto all = recommend(net, s, 9);
    CHECK(all.size() == 9);

    const auto masked = recommend(net, s, 1, std::set<int>{0, 3, 4});
    CHECK(masked[0].action.id == 3);  // argmax excluded by mask

    CHECK_THROWS_AS(recommend(net, s, 1, std::set<int>{}), EmptyAfterMask);
    CHECK_THROWS_AS(recommend(net, s, 0), EngineError);
    CHECK_THROWS_AS(recommend(net, s, 10), EngineError);
}

TEST_CASE("random_policy is seeded, uniform, and maskable") {
    const ExploitState s;
    std::vector<int> first;
    {
        std::mt19937_64 rng(8);
        for (int i = 0; i < 50; ++i) first.push_back(random_policy(s, rng).id);
    }
    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) CHECK(random_policy(s, rng).id == first[static_cast<size_t>(i)]);

    std::map<int, int> counts;
    std::mt19937_64 big(12);
    const int draws = 9000;
    for (int i = 0; i < draws; ++i) ++counts[random_policy(s, big).id];
    const double expected = draws / 9.0;
    const double sigma = std::sqrt(draws * (1.0 / 9) * (8.0 / 9));
    for (const auto& [id, n] : counts) {
        CHECK(std::abs(n - expected) <= 3 * sigma);
        (void)id;
    }

    std::mt19937_64 rng2(1);
    CHECK(random_policy(s, rng2, std::set<int>{7}).id == 7);
}

TEST_CASE("checkpoint round-trip reproduces forward passes bit-exactly") {
    const ReplayBuffer buf = training_buffer(30, 23);
    TrainerConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 9;
    const Checkpoint ckpt = train(buf, cfg);

    const std::string path =
        (fs::temp_directory_path() / ("pocadapt-ckpt-" + std::to_string(::getpid()))).string();
    save_checkpoint(ckpt, path);
    const Checkpoint back = load_checkpoint(path);

    CHECK(back.online == ckpt.online);
    CHECK(back.target == ckpt.target);
    CHECK(back.training_step == ckpt.training_step);
    CHECK(back.config.epochs == 5);

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<float> dist(0, 1);
    for (int i = 0; i < 100; ++i) {
        QNetwork::Vector x(13);
        for (int j = 0; j < 13; ++j) x(j) = dist(rng);
        const auto qa = ckpt.online.forward(x);
        const auto qb = back.online.forward(x);
        for (int j = 0; j < qa.size(); ++j) CHECK(qa(j) == qb(j));  // bitwise
    }
    fs::remove(path);

    CHECK_THROWS_AS(load_checkpoint(path), UnreadableFile);
}

TEST_CASE("load_checkpoint rejects foreign and truncated files") {
    const std::string path =
        (fs::temp_directory_path() / ("pocadapt-badckpt-" + std::to_string(::getpid()))).string();
    std::ofstream(path) << "{\"format\": \"something-else\"}\n";
    CHECK_THROWS_AS(load_checkpoint(path), BadCheckpoint);
    fs::remove(path);
}
