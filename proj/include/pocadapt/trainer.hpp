#pragma once

// Offline DDQN training over the replay buffer, action recommendation, the
// random baseline policy, and checkpoint persistence.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pocadapt/log_store.hpp"
#include "pocadapt/mdp.hpp"
#include "pocadapt/qnet.hpp"

namespace pocadapt {

struct TrainerConfig {
    double learning_rate = 0.001;
    int batch_size = 64;
    double gamma = 0.99;
    double huber_delta = 1.0;
    int epochs = 45;
    int target_sync_interval = 100;  // gradient steps between target <- online copies
    int hidden_dim = 128;
    std::uint64_t seed = 0;
    // Adam moment parameters, declared so checkpoints echo the full recipe.
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

struct Checkpoint {
    TrainerConfig config;
    QNetwork online;
    QNetwork target;
    std::int64_t training_step = 0;
    std::string rng_state_digest;
};

struct TrainingReport {
    std::vector<double> epoch_mean_loss;
    std::int64_t gradient_steps = 0;
};

// Adam with bias correction; shapes mirror the network's parameters.
template <typename Scalar>
class AdamOptimizerT {
public:
    AdamOptimizerT(const QNetworkT<Scalar>& net, double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          m_(NetGradsT<Scalar>::zeros_like(net)), v_(NetGradsT<Scalar>::zeros_like(net)) {}

    void step(QNetworkT<Scalar>& net, const NetGradsT<Scalar>& grads) {
        ++t_;
        update(net.w1, grads.w1, m_.w1, v_.w1);
        update(net.b1, grads.b1, m_.b1, v_.b1);
        update(net.w2, grads.w2, m_.w2, v_.w2);
        update(net.b2, grads.b2, m_.b2, v_.b2);
    }

    std::int64_t steps() const { return t_; }

private:
    template <typename M>
    void update(M& param, const M& grad, M& m, M& v) {
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (Eigen::Index i = 0; i < param.size(); ++i) {
            const double g = static_cast<double>(grad.data()[i]);
            double mi = beta1_ * static_cast<double>(m.data()[i]) + (1.0 - beta1_) * g;
            double vi = beta2_ * static_cast<double>(v.data()[i]) + (1.0 - beta2_) * g * g;
            m.data()[i] = static_cast<Scalar>(mi);
            v.data()[i] = static_cast<Scalar>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            param.data()[i] -= static_cast<Scalar>(lr_ * m_hat / (std::sqrt(v_hat) + eps_));
        }
    }

    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    NetGradsT<Scalar> m_, v_;
};

using AdamOptimizer = AdamOptimizerT<float>;

// Epoch-based offline training: shuffle the buffer each epoch, regress
// Q(s,a) onto the DDQN target, sync the target network periodically.
// Fully deterministic under a fixed config seed.
Checkpoint train(const ReplayBuffer& buf, const TrainerConfig& cfg,
                 const EncodingVocab& vocab = EncodingVocab{}, TrainingReport* report = nullptr);

struct Recommendation {
    ExploitAction action;
    double q_value = 0;
};

// Top-k actions by Q value, ties broken by ascending action id. The mask,
// when present, removes actions before ranking.
std::vector<Recommendation> recommend(const QNetwork& net, const ExploitState& s, int k,
                                      const std::optional<std::set<int>>& mask = std::nullopt,
                                      const EncodingVocab& vocab = EncodingVocab{});

ExploitAction random_policy(const ExploitState& s, std::mt19937_64& rng,
                            const std::optional<std::set<int>>& mask = std::nullopt);
ExploitAction random_policy(const ExploitState& s, std::uint64_t seed,
                            const std::optional<std::set<int>>& mask = std::nullopt);

// Versioned JSON header followed by little-endian float32 weight blobs,
// online network then target network, each laid out W1, b1, W2, b2.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pocadapt
