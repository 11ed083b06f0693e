#include <doctest.h>

#include <random>

#include "pocadapt/qnet.hpp"

using namespace pocadapt;

namespace {

using DNet = QNetworkT<double>;
using DVec = DNet::Vector;
using DMat = DNet::Matrix;

DVec vec(std::initializer_list<double> xs) {
    DVec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

}  // namespace

TEST_CASE("forward: zero weights give zero output") {
    const DNet net = DNet::zeros(13, 8, 9);
    const DVec q = net.forward(DVec::Zero(13));
    CHECK(q.size() == 9);
    CHECK(q.isZero());
}

TEST_CASE("forward: hand-computed 2x2 miniature") {
    // w1 = [[1,0],[0,-1]], b1 = [0.5, 0], w2 = [[2, 3]], b2 = [-1]
    DNet net = DNet::zeros(2, 2, 1);
    net.w1 << 1, 0, 0, -1;
    net.b1 << 0.5, 0;
    net.w2 << 2, 3;
    net.b2 << -1;
    // x = [1, 2]: pre = [1.5, -2] -> relu [1.5, 0] -> 2*1.5 + 3*0 - 1 = 2
    CHECK(net.forward(vec({1, 2}))(0) == doctest::Approx(2.0));
    // x = [0, -1]: pre = [0.5, 1] -> 2*0.5 + 3*1 - 1 = 3
    CHECK(net.forward(vec({0, -1}))(0) == doctest::Approx(3.0));
}

TEST_CASE("forward rejects wrong input width") {
    const DNet net = DNet::zeros(13, 8, 9);
    CHECK_THROWS_AS(net.forward(DVec::Zero(12)), DimensionMismatch);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax_index<double>(vec({0, 5, 5, 1})) == 1);
    CHECK(argmax_index<double>(vec({7})) == 0);
    CHECK(argmax_index<double>(vec({2, 2, 2})) == 0);
}

TEST_CASE("td_target hand cases") {
    // nets engineered so online Q(s') = [1,3,2] and target Q(s') = [5,0,7]
    DNet online = DNet::zeros(1, 1, 3);
    online.w1 << 1;
    online.w2 << 0, 0, 0;
    online.b2 = vec({1, 3, 2});
    DNet target = online;
    target.b2 = vec({5, 0, 7});

    const DVec s = vec({0});
    CHECK(td_target<double>(1.0, s, false, online, target, 0.5) == doctest::Approx(1.0 + 0.5 * 0.0));

    SUBCASE("done cuts the bootstrap regardless of networks and gamma") {
        CHECK(td_target<double>(-10.0, s, true, online, target, 0.99) == doctest::Approx(-10.0));
        CHECK(td_target<double>(-10.0, s, true, target, online, 0.5) == doctest::Approx(-10.0));
    }

    SUBCASE("online == target degenerates to the vanilla max target") {
        CHECK(td_target<double>(1.0, s, false, target, target, 0.5) ==
              doctest::Approx(1.0 + 0.5 * 7.0));
    }
}

TEST_CASE("huber loss values and knee continuity") {
    CHECK(huber_loss<double>(3, 3, 1) == doctest::Approx(0.0));
    CHECK(huber_loss<double>(4, 3, 1) == doctest::Approx(0.5));  // |e| = delta knee
    CHECK(huber_loss<double>(5, 3, 1) == doctest::Approx(1.5));  // 1 * (2 - 0.5)
    CHECK(huber_loss<double>(2.3, 3, 1) == doctest::Approx(0.5 * 0.49));
    CHECK_THROWS_AS(huber_loss<double>(1, 0, 0), EngineError);
}

TEST_CASE("analytic batch gradients match central differences") {
    std::mt19937_64 rng(20);
    std::uniform_real_distribution<double> dist(-1, 1);
    const int in = 5, hidden = 7, out = 4, batch = 6;

    for (int trial = 0; trial < 10; ++trial) {
        DNet net = DNet::initialized(in, hidden, out, rng());
        DMat states(in, batch);
        for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = dist(rng);
        std::vector<LossSample> samples;
        for (int b = 0; b < batch; ++b)
            samples.push_back({static_cast<int>(rng() % out), dist(rng) * 3});

        NetGradsT<double> grads;
        huber_q_loss<double>(net, states, samples, 1.0, &grads);

        auto check_param = [&](auto& param, auto& grad) {
            for (Eigen::Index i = 0; i < param.size(); ++i) {
                const double eps = 1e-6;
                const double orig = param.data()[i];
                param.data()[i] = orig + eps;
                const double up = huber_q_loss<double>(net, states, samples, 1.0);
                param.data()[i] = orig - eps;
                const double down = huber_q_loss<double>(net, states, samples, 1.0);
                param.data()[i] = orig;
                const double fd = (up - down) / (2 * eps);
                CHECK(grad.data()[i] == doctest::Approx(fd).epsilon(1e-5));
            }
        };
        check_param(net.w1, grads.w1);
        check_param(net.w2, grads.w2);
        check_param(net.b2, grads.b2);
        check_param(net.b1, grads.b1);
    }
}

TEST_CASE("double-Q direction on random network pairs") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dist(-1, 1);
    int diverged = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const DNet online = DNet::initialized(4, 6, 5, rng());
        const DNet target = DNet::initialized(4, 6, 5, rng());
        DVec s(4);
        for (int i = 0; i < 4; ++i) s(i) = dist(rng);

        const DVec tq = target.forward(s);
        if (argmax_index(online.forward(s)) == argmax_index(tq)) continue;
        ++diverged;
        const double ddqn = td_target<double>(0.3, s, false, online, target, 0.9);
        const double vanilla = 0.3 + 0.9 * tq.maxCoeff();
        CHECK(ddqn <= vanilla);
    }
    CHECK(diverged > 100);  // the property must actually be exercised
}
