#include "pocadapt/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pocadapt/hash.hpp"

namespace pocadapt {

void TrainerConfig::validate() const {
    if (learning_rate <= 0 || batch_size <= 0 || huber_delta <= 0 || epochs <= 0 ||
        target_sync_interval <= 0 || hidden_dim <= 0)
        throw ConfigError("trainer config fields must be positive");
    if (!(gamma > 0 && gamma < 1)) throw ConfigError("gamma must lie in (0,1)");
}

Checkpoint train(const ReplayBuffer& buf, const TrainerConfig& cfg, const EncodingVocab& vocab,
                 TrainingReport* report) {
    cfg.validate();
    if (buf.size() < static_cast<size_t>(cfg.batch_size))
        throw InsufficientData("buffer holds " + std::to_string(buf.size()) +
                               " transitions, batch size is " + std::to_string(cfg.batch_size));

    const int out_dim = static_cast<int>(default_actions().size());
    QNetwork online = QNetwork::initialized(kStateDim, cfg.hidden_dim, out_dim, cfg.seed);
    QNetwork target = online;
    AdamOptimizer opt(online, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);

    // Encode every state once; buffer contents are immutable during training.
    const size_t n = buf.size();
    Eigen::MatrixXf states(kStateDim, n), next_states(kStateDim, n);
    std::vector<float> rewards(n);
    std::vector<int> actions(n);
    std::vector<bool> done(n);
    for (size_t i = 0; i < n; ++i) {
        const Transition& t = buf.at(i);
        states.col(static_cast<Eigen::Index>(i)) = encode_state(t.state, vocab).cast<float>();
        next_states.col(static_cast<Eigen::Index>(i)) = encode_state(t.next_state, vocab).cast<float>();
        rewards[i] = static_cast<float>(t.reward);
        actions[i] = t.action.id;
        done[i] = t.done;
    }

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    TrainingReport local_report;
    TrainingReport& rep = report ? *report : local_report;
    std::int64_t step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        int batches = 0;
        for (size_t start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
            const size_t bsz = static_cast<size_t>(cfg.batch_size);
            Eigen::MatrixXf batch_states(kStateDim, bsz);
            std::vector<LossSample> samples(bsz);
            for (size_t b = 0; b < bsz; ++b) {
                const size_t i = order[start + b];
                batch_states.col(static_cast<Eigen::Index>(b)) = states.col(static_cast<Eigen::Index>(i));
                const float y = td_target<float>(rewards[i],
                                                 next_states.col(static_cast<Eigen::Index>(i)),
                                                 done[i], online, target,
                                                 static_cast<float>(cfg.gamma));
                samples[b] = {actions[i], static_cast<double>(y)};
            }
            NetGradsT<float> grads;
            const float loss = huber_q_loss<float>(online, batch_states, samples,
                                                   static_cast<float>(cfg.huber_delta), &grads);
            opt.step(online, grads);
            loss_sum += loss;
            ++batches;
            ++step;
            if (step % cfg.target_sync_interval == 0) target = online;
        }
        rep.epoch_mean_loss.push_back(batches > 0 ? loss_sum / batches : 0.0);
    }
    rep.gradient_steps = step;

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.online = std::move(online);
    ckpt.target = std::move(target);
    ckpt.training_step = step;
    std::ostringstream rng_state;
    rng_state << rng;
    ckpt.rng_state_digest = sha256_hex(rng_state.str());
    return ckpt;
}

std::vector<Recommendation> recommend(const QNetwork& net, const ExploitState& s, int k,
                                      const std::optional<std::set<int>>& mask,
                                      const EncodingVocab& vocab) {
    const int out_dim = net.output_dim();
    if (k < 1 || k > out_dim)
        throw EngineError("recommend: k must lie in [1, " + std::to_string(out_dim) + "]");

    const Eigen::VectorXf q = net.forward(encode_state(s, vocab).cast<float>().eval());
    std::vector<Recommendation> ranked;
    for (int id = 0; id < out_dim; ++id) {
        if (mask && !mask->count(id)) continue;
        ranked.push_back({action_from_id(id), static_cast<double>(q(id))});
    }
    if (ranked.empty()) throw EmptyAfterMask("mask excludes every action");

    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.q_value != b.q_value) return a.q_value > b.q_value;
        return a.action.id < b.action.id;
    });
    if (static_cast<int>(ranked.size()) > k) ranked.resize(static_cast<size_t>(k));
    return ranked;
}

ExploitAction random_policy(const ExploitState&, std::mt19937_64& rng,
                            const std::optional<std::set<int>>& mask) {
    std::vector<int> candidates;
    for (const auto& a : default_actions())
        if (!mask || mask->count(a.id)) candidates.push_back(a.id);
    if (candidates.empty()) throw EmptyAfterMask("mask excludes every action");
    std::uniform_int_distribution<size_t> dist(0, candidates.size() - 1);
    return action_from_id(candidates[dist(rng)]);
}

ExploitAction random_policy(const ExploitState& s, std::uint64_t seed,
                            const std::optional<std::set<int>>& mask) {
    std::mt19937_64 rng(seed);
    return random_policy(s, rng, mask);
}

namespace {

void append_blob(std::string& out, const Eigen::MatrixXf& m) {
    // row-major float32, little-endian (native on every supported target)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const float v = m(r, c);
            char bytes[sizeof(float)];
            std::memcpy(bytes, &v, sizeof(float));
            out.append(bytes, sizeof(float));
        }
}

void read_blob(const std::string& data, size_t& offset, Eigen::MatrixXf& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (offset + sizeof(float) > data.size())
                throw BadCheckpoint("weight blob shorter than declared layout");
            float v;
            std::memcpy(&v, data.data() + offset, sizeof(float));
            offset += sizeof(float);
            m(r, c) = v;
        }
}

void append_net(std::string& out, const QNetwork& net) {
    append_blob(out, net.w1);
    append_blob(out, Eigen::MatrixXf(net.b1));
    append_blob(out, net.w2);
    append_blob(out, Eigen::MatrixXf(net.b2));
}

QNetwork read_net(const std::string& data, size_t& offset, int in, int hidden, int out) {
    QNetwork net = QNetwork::zeros(in, hidden, out);
    Eigen::MatrixXf b1(hidden, 1), b2(out, 1);
    read_blob(data, offset, net.w1);
    read_blob(data, offset, b1);
    read_blob(data, offset, net.w2);
    read_blob(data, offset, b2);
    net.b1 = b1.col(0);
    net.b2 = b2.col(0);
    return net;
}

nlohmann::json config_to_json(const TrainerConfig& cfg) {
    return {{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
            {"gamma", cfg.gamma},                 {"huber_delta", cfg.huber_delta},
            {"epochs", cfg.epochs},               {"target_sync_interval", cfg.target_sync_interval},
            {"hidden_dim", cfg.hidden_dim},       {"seed", cfg.seed},
            {"adam_beta1", cfg.adam_beta1},       {"adam_beta2", cfg.adam_beta2},
            {"adam_epsilon", cfg.adam_epsilon}};
}

TrainerConfig config_from_json(const nlohmann::json& j) {
    TrainerConfig cfg;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.huber_delta = j.value("huber_delta", cfg.huber_delta);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.target_sync_interval = j.value("target_sync_interval", cfg.target_sync_interval);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_epsilon = j.value("adam_epsilon", cfg.adam_epsilon);
    return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json header = {{"format", "pocadapt-checkpoint"},
                             {"version", 1},
                             {"input_dim", ckpt.online.input_dim()},
                             {"hidden_dim", ckpt.online.hidden_dim()},
                             {"output_dim", ckpt.online.output_dim()},
                             {"training_step", ckpt.training_step},
                             {"rng_state_digest", ckpt.rng_state_digest},
                             {"config", config_to_json(ckpt.config)}};
    std::string body;
    append_net(body, ckpt.online);
    append_net(body, ckpt.target);
    header["blob_bytes"] = body.size();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFile("cannot write " + tmp);
        out << header.dump() << "\n" << body;
    }
    std::rename(tmp.c_str(), path.c_str());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableFile("cannot open checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw BadCheckpoint("checkpoint header missing");
    const nlohmann::json header = nlohmann::json::parse(header_line);
    if (header.value("format", "") != "pocadapt-checkpoint" || header.value("version", 0) != 1)
        throw BadCheckpoint("not a pocadapt-checkpoint v1 file");

    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (body.size() != header.at("blob_bytes").get<size_t>())
        throw BadCheckpoint("weight blob size mismatch");

    const int in_dim = header.at("input_dim").get<int>();
    const int hidden = header.at("hidden_dim").get<int>();
    const int out_dim = header.at("output_dim").get<int>();

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    size_t offset = 0;
    ckpt.online = read_net(body, offset, in_dim, hidden, out_dim);
    ckpt.target = read_net(body, offset, in_dim, hidden, out_dim);
    ckpt.training_step = header.value("training_step", std::int64_t{0});
    ckpt.rng_state_digest = header.value("rng_state_digest", "");
    return ckpt;
}

}  // namespace pocadapt
