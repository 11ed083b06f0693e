#pragma once

// Value network and DDQN learning rules. The network is a dense
// in -> hidden (ReLU) -> out map templated on scalar so the same backprop
// code serves float32 training and float64 gradient verification.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pocadapt/errors.hpp"

namespace pocadapt {

template <typename Scalar>
struct QNetworkT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Matrix w1;  // hidden x in
    Vector b1;  // hidden
    Matrix w2;  // out x hidden
    Vector b2;  // out

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int hidden_dim() const { return static_cast<int>(w1.rows()); }
    int output_dim() const { return static_cast<int>(w2.rows()); }

    static QNetworkT zeros(int in, int hidden, int out) {
        QNetworkT net;
        net.w1 = Matrix::Zero(hidden, in);
        net.b1 = Vector::Zero(hidden);
        net.w2 = Matrix::Zero(out, hidden);
        net.b2 = Vector::Zero(out);
        return net;
    }

    // Seeded uniform fan-in initialization.
    static QNetworkT initialized(int in, int hidden, int out, std::uint64_t seed) {
        QNetworkT net = zeros(in, hidden, out);
        std::mt19937_64 rng(seed);
        auto fill = [&rng](auto& m, Scalar bound) {
            std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                                        static_cast<double>(bound));
            for (Eigen::Index i = 0; i < m.size(); ++i)
                m.data()[i] = static_cast<Scalar>(dist(rng));
        };
        const Scalar bound1 = Scalar(1) / std::sqrt(static_cast<Scalar>(in));
        const Scalar bound2 = Scalar(1) / std::sqrt(static_cast<Scalar>(hidden));
        fill(net.w1, bound1);
        fill(net.b1, bound1);
        fill(net.w2, bound2);
        fill(net.b2, bound2);
        return net;
    }

    Vector forward(const Vector& x) const {
        if (x.size() != w1.cols())
            throw DimensionMismatch("forward: expected input of length " +
                                    std::to_string(w1.cols()) + ", got " +
                                    std::to_string(x.size()));
        Vector h = (w1 * x + b1).cwiseMax(Scalar(0));
        return w2 * h + b2;
    }

    bool same_architecture(const QNetworkT& other) const {
        return w1.rows() == other.w1.rows() && w1.cols() == other.w1.cols() &&
               w2.rows() == other.w2.rows() && w2.cols() == other.w2.cols();
    }

    bool operator==(const QNetworkT& other) const {
        return w1 == other.w1 && b1 == other.b1 && w2 == other.w2 && b2 == other.b2;
    }
};

using QNetwork = QNetworkT<float>;

template <typename Scalar>
int argmax_index(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;  // ties resolve to the lowest index
    return best;
}

// DDQN target: action selected by the online network, evaluated by the
// target network. done transitions cut the bootstrap entirely.
template <typename Scalar>
Scalar td_target(Scalar reward, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& next_vec,
                 bool done, const QNetworkT<Scalar>& online, const QNetworkT<Scalar>& target,
                 Scalar gamma) {
    if (done) return reward;
    if (!online.same_architecture(target))
        throw DimensionMismatch("td_target: online and target networks differ in shape");
    const int chosen = argmax_index(online.forward(next_vec));
    return reward + gamma * target.forward(next_vec)(chosen);
}

template <typename Scalar>
Scalar huber_loss(Scalar pred, Scalar target, Scalar delta) {
    if (!(delta > Scalar(0))) throw EngineError("huber_loss: delta must be positive");
    const Scalar e = pred - target;
    const Scalar abs_e = e < Scalar(0) ? -e : e;
    if (abs_e <= delta) return Scalar(0.5) * e * e;
    return delta * (abs_e - Scalar(0.5) * delta);
}

template <typename Scalar>
Scalar huber_grad(Scalar pred, Scalar target, Scalar delta) {
    const Scalar e = pred - target;
    if (e > delta) return delta;
    if (e < -delta) return -delta;
    return e;
}

template <typename Scalar>
struct NetGradsT {
    using Matrix = typename QNetworkT<Scalar>::Matrix;
    using Vector = typename QNetworkT<Scalar>::Vector;
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;

    static NetGradsT zeros_like(const QNetworkT<Scalar>& net) {
        return {Matrix::Zero(net.w1.rows(), net.w1.cols()), Vector::Zero(net.b1.size()),
                Matrix::Zero(net.w2.rows(), net.w2.cols()), Vector::Zero(net.b2.size())};
    }
};

struct LossSample {
    int action = 0;
    double target = 0;
};

// Mean Huber loss of Q(s, a_i) against y_i over a batch, with analytic
// gradients through the network. Inputs are columns of `states`.
template <typename Scalar>
Scalar huber_q_loss(const QNetworkT<Scalar>& net,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& states,
                    const std::vector<LossSample>& samples, Scalar delta,
                    NetGradsT<Scalar>* grads = nullptr) {
    using Vector = typename QNetworkT<Scalar>::Vector;
    const auto n = static_cast<Scalar>(samples.size());
    Scalar total = Scalar(0);
    if (grads) *grads = NetGradsT<Scalar>::zeros_like(net);
    for (size_t i = 0; i < samples.size(); ++i) {
        const Vector x = states.col(static_cast<Eigen::Index>(i));
        const Vector pre = net.w1 * x + net.b1;
        const Vector h = pre.cwiseMax(Scalar(0));
        const Vector q = net.w2 * h + net.b2;
        const int a = samples[i].action;
        const Scalar y = static_cast<Scalar>(samples[i].target);
        total += huber_loss(q(a), y, delta);
        if (grads) {
            const Scalar g = huber_grad(q(a), y, delta) / n;
            grads->w2.row(a) += g * h.transpose();
            grads->b2(a) += g;
            Vector dh = net.w2.row(a).transpose() * g;
            for (Eigen::Index j = 0; j < dh.size(); ++j)
                if (pre(j) <= Scalar(0)) dh(j) = Scalar(0);
            grads->w1 += dh * x.transpose();
            grads->b1 += dh;
        }
    }
    return total / n;
}

}  // namespace pocadapt
