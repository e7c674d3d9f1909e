#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "mortonnet/train.hpp"
#include "test_util.hpp"

using namespace mortonnet;

namespace {

// Samples whose target is a fixed linear function of the inputs, so a small
// model can actually fit them.
std::vector<TrainingSample> make_samples(std::size_t n, int k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainingSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        TrainingSample s;
        s.inputs = Eigen::MatrixXd::Zero(k - 1, 3);
        for (Eigen::Index t = 1; t < k - 1; ++t)
            for (int c = 0; c < 3; ++c) s.inputs(t, c) = 0.4 * (2.0 * rng.next_double() - 1.0);
        s.target = 0.5 * s.inputs.row(k - 2).transpose() +
                   0.25 * s.inputs.row(1).transpose() + Eigen::Vector3d(0.01, -0.02, 0.03);
        s.center_index = static_cast<std::uint32_t>(i % 17);
        out.push_back(std::move(s));
    }
    return out;
}

ModelConfig small_model_config(int k) {
    ModelConfig cfg;
    cfg.k = k;
    cfg.enc_layers = 2;
    cfg.enc_width = 8;
    cfg.gru_layers = 3;
    cfg.hidden = 16;
    cfg.init_seed = 5;
    return cfg;
}

bool models_bit_equal(const Model& a, const Model& b) {
    auto va = trainable_views(a), vb = trainable_views(b);
    if (va.size() != vb.size()) return false;
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (va[i].size() != vb[i].size()) return false;
        for (Eigen::Index j = 0; j < va[i].size(); ++j)
            if (va[i].data[j] != vb[i].data[j]) return false;
    }
    auto ba = buffer_views(a), bb = buffer_views(b);
    for (std::size_t i = 0; i < ba.size(); ++i)
        for (Eigen::Index j = 0; j < ba[i].size(); ++j)
            if (ba[i].data[j] != bb[i].data[j]) return false;
    return true;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("mse of a perfect prediction is zero") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(6, 3);
    auto [loss, grad] = mse_loss(y, y);
    CHECK(loss == 0.0);
    CHECK(grad.isZero(0.0));
}

TEST_CASE("mse hand value for a unit error") {
    Eigen::MatrixXd y(1, 3), t(1, 3);
    y << 1, 0, 0;
    t << 0, 0, 0;
    auto [loss, grad] = mse_loss(y, t);
    CHECK(loss == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(grad(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(grad(0, 1) == 0.0);
}

TEST_CASE("mse gradient matches finite differences") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(4, 3);
    Eigen::MatrixXd t = Eigen::MatrixXd::Random(4, 3);
    auto [loss, grad] = mse_loss(y, t);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < 3; ++j) {
            Eigen::MatrixXd yp = y, ym = y;
            yp(i, j) += h;
            ym(i, j) -= h;
            double fd = (mse_loss(yp, t).first - mse_loss(ym, t).first) / (2 * h);
            REQUIRE(grad(i, j) == doctest::Approx(fd).epsilon(1e-6));
        }
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
    Model m = init_model(small_model_config(6));
    Model before = m;
    GradientSet g = GradientSet::zeros_like(m);
    AdamState state = AdamState::zeros_like(m);
    adam_step(m, g, state, 1e-3);
    CHECK(models_bit_equal(m, before));
    CHECK(state.t == 1);
}

TEST_CASE("adam takes a bias-corrected unit step") {
    // one scalar parameter w=0 with gradient 1 at t=1
    Model m = init_model(small_model_config(6));
    m.head.bias.setZero();
    GradientSet g = GradientSet::zeros_like(m);
    g.head.bias(0) = 1.0;
    AdamState state = AdamState::zeros_like(m);
    adam_step(m, g, state, 1e-3);
    CHECK(m.head.bias(0) == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam matches a scalar reference over several steps") {
    Model m = init_model(small_model_config(6));
    m.head.bias.setZero();
    AdamState state = AdamState::zeros_like(m);

    double w = 0.0, mm = 0.0, vv = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
    for (int t = 1; t <= 5; ++t) {
        double grad = 0.3 + 0.1 * t;
        GradientSet g = GradientSet::zeros_like(m);
        g.head.bias(1) = grad;
        adam_step(m, g, state, lr);

        mm = b1 * mm + (1 - b1) * grad;
        vv = b2 * vv + (1 - b2) * grad * grad;
        double mhat = mm / (1 - std::pow(b1, t));
        double vhat = vv / (1 - std::pow(b2, t));
        w -= lr * mhat / (std::sqrt(vhat) + eps);
        REQUIRE(m.head.bias(1) == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("adam rejects non-finite gradients") {
    Model m = init_model(small_model_config(6));
    GradientSet g = GradientSet::zeros_like(m);
    g.head.weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
    AdamState state = AdamState::zeros_like(m);
    CHECK_THROWS_AS(adam_step(m, g, state, 1e-3), std::runtime_error);
}

TEST_CASE("lr schedule stays put while the loss improves") {
    TrainConfig cfg;
    CHECK(lr_schedule({1.0, 0.9, 0.8, 0.7}, cfg) == cfg.lr0);
}

TEST_CASE("lr schedule decays after a flat plateau") {
    TrainConfig cfg;
    CHECK(lr_schedule({1.0}, cfg) == cfg.lr0);
    CHECK(lr_schedule({1.0, 1.0}, cfg) == cfg.lr0);
    CHECK(lr_schedule({1.0, 1.0, 1.0}, cfg) == doctest::Approx(0.9 * cfg.lr0));
    // counter reset after the decay: two more flat epochs fire again
    CHECK(lr_schedule({1.0, 1.0, 1.0, 1.0}, cfg) == doctest::Approx(0.9 * cfg.lr0));
    CHECK(lr_schedule({1.0, 1.0, 1.0, 1.0, 1.0}, cfg) == doctest::Approx(0.81 * cfg.lr0));
}

TEST_CASE("lr schedule counter resets on improvement") {
    TrainConfig cfg;
    CHECK(lr_schedule({1.0, 0.9, 0.95, 0.92}, cfg) == doctest::Approx(0.9 * cfg.lr0));
    CHECK(lr_schedule({1.0, 0.9, 0.95, 0.92, 0.93}, cfg) == doctest::Approx(0.9 * cfg.lr0));
    CHECK_THROWS_AS(lr_schedule({}, cfg), std::invalid_argument);
}

TEST_CASE("split keeps each point's sequences on one side") {
    std::vector<TrainingSample> samples = make_samples(200, 5, 3);
    TrainConfig cfg;
    cfg.seed = 11;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    CHECK(train_set.size() + val_set.size() == samples.size());
    CHECK(val_set.size() >= samples.size() / 20);

    std::set<std::uint32_t> train_points, val_points;
    for (const TrainingSample& s : train_set) train_points.insert(s.center_index);
    for (const TrainingSample& s : val_set) val_points.insert(s.center_index);
    for (std::uint32_t p : val_points) CHECK(train_points.count(p) == 0);
}

TEST_CASE("zero learning rate freezes the parameters") {
    std::vector<TrainingSample> samples = make_samples(80, 6, 7);
    TrainConfig cfg;
    cfg.lr0 = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 2;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    Model model = init_model(small_model_config(6));
    Model before = model;
    Checkpoint ckpt = train_loop(train_set, val_set, model, cfg);

    auto va = trainable_views(before), vb = trainable_views(ckpt.model);
    for (std::size_t i = 0; i < va.size(); ++i)
        for (Eigen::Index j = 0; j < va[i].size(); ++j) REQUIRE(va[i].data[j] == vb[i].data[j]);
    CHECK(ckpt.log[0].val_loss == ckpt.log[2].val_loss);
}

TEST_CASE("training is bit-deterministic in the seed") {
    std::vector<TrainingSample> samples = make_samples(100, 6, 13);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 32;
    cfg.seed = 5;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    Model model = init_model(small_model_config(6));

    Checkpoint a = train_loop(train_set, val_set, model, cfg);
    Checkpoint b = train_loop(train_set, val_set, model, cfg);
    CHECK(models_bit_equal(a.model, b.model));
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].val_loss == b.log[i].val_loss);
        CHECK(a.log[i].lr == b.log[i].lr);
    }
}

TEST_CASE("a small model memorizes a small sample set") {
    std::vector<TrainingSample> samples = make_samples(60, 6, 21);
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch_size = 16;
    cfg.seed = 3;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    Model model = init_model(small_model_config(6));
    Checkpoint ckpt = train_loop(train_set, val_set, model, cfg);
    CHECK(ckpt.log.back().train_loss < 1e-3 * ckpt.log.front().train_loss);
}

TEST_CASE("checkpoint records the best validation loss and lr never grows") {
    std::vector<TrainingSample> samples = make_samples(120, 6, 31);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 32;
    cfg.seed = 9;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    Checkpoint ckpt = train_loop(train_set, val_set, init_model(small_model_config(6)), cfg);

    double min_val = std::numeric_limits<double>::infinity();
    for (const EpochLog& e : ckpt.log) min_val = std::min(min_val, e.val_loss);
    CHECK(ckpt.best_val_loss == min_val);
    for (std::size_t i = 1; i < ckpt.log.size(); ++i) CHECK(ckpt.log[i].lr <= ckpt.log[i - 1].lr);
    CHECK(ckpt.log[static_cast<std::size_t>(ckpt.best_epoch) - 1].val_loss == ckpt.best_val_loss);
}

TEST_CASE("resuming a mid-training checkpoint reproduces the full run") {
    std::vector<TrainingSample> samples = make_samples(100, 6, 41);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 32;
    cfg.seed = 17;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    Model model = init_model(small_model_config(6));

    Checkpoint full = train_loop(train_set, val_set, model, cfg);

    Checkpoint middle;
    train_loop(train_set, val_set, model, cfg, nullptr, [&](const Checkpoint& state) {
        if (state.epoch == 4) middle = state;
    });
    Checkpoint resumed = train_loop(train_set, val_set, model, cfg, &middle);

    CHECK(models_bit_equal(full.model, resumed.model));
    CHECK(models_bit_equal(full.best_model, resumed.best_model));
    REQUIRE(full.log.size() == resumed.log.size());
    for (std::size_t i = 0; i < full.log.size(); ++i) {
        CHECK(full.log[i].train_loss == resumed.log[i].train_loss);
        CHECK(full.log[i].val_loss == resumed.log[i].val_loss);
    }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    std::vector<TrainingSample> samples = make_samples(40, 6, 51);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 1;
    auto [train_set, val_set] = split_train_val(samples, cfg);
    Model model = init_model(small_model_config(6));
    model.head.weight.setConstant(1e308);
    CHECK_THROWS_WITH_AS(train_loop(train_set, val_set, model, cfg),
                         doctest::Contains("epoch 1"), std::runtime_error);
}

TEST_CASE("rho accuracy counts predictions inside the ball") {
    Model model = init_model(small_model_config(6));
    // zero head weight makes the output a constant: the bias
    model.head.weight.setZero();
    model.head.bias << 0.5, 0.0, 0.0;

    std::vector<TrainingSample> samples = make_samples(8, 6, 61);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i < 2)
            samples[i].target << 0.5, 0.0, 0.0;  // exact hit
        else if (i < 4)
            samples[i].target << 0.5, 0.01, 0.0;  // inside rho=0.02, outside 1e-9
        else
            samples[i].target << 10.0, 0.0, 0.0;  // far out
    }
    CHECK(eval_accuracy(model, samples, 0.02) == doctest::Approx(0.5));
    CHECK(eval_accuracy(model, samples, 1e-9) == doctest::Approx(0.25));

    std::vector<TrainingSample> all_far(samples.begin() + 4, samples.end());
    CHECK(eval_accuracy(model, all_far, 0.02) == 0.0);
}

}  // TEST_SUITE
