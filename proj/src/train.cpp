#include "mortonnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mortonnet/rng.hpp"

namespace mortonnet {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

void TrainConfig::validate() const {
    if (!(lr0 >= 0.0)) throw std::invalid_argument("TrainConfig: lr0 must be >= 0");
    if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("TrainConfig: decay must be in (0, 1)");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("TrainConfig: val_fraction must be in (0, 1)");
    if (!(rho > 0.0)) throw std::invalid_argument("TrainConfig: rho must be > 0");
}

std::pair<double, Eigen::MatrixXd> mse_loss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target) {
    if (y.rows() != target.rows() || y.cols() != target.cols())
        throw std::invalid_argument("mse_loss: shape mismatch");
    const double denom = static_cast<double>(y.size());
    Eigen::MatrixXd diff = y - target;
    double loss = diff.squaredNorm() / denom;
    Eigen::MatrixXd grad = (2.0 / denom) * diff;
    return {loss, std::move(grad)};
}

AdamState AdamState::zeros_like(Model& model) {
    AdamState state;
    for (const TensorView& view : trainable_views(model)) {
        state.m.emplace_back(Eigen::VectorXd::Zero(view.size()));
        state.v.emplace_back(Eigen::VectorXd::Zero(view.size()));
    }
    return state;
}

void adam_step(std::vector<TensorView> params, std::vector<TensorView> grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: tensor count mismatch");
    if (!(lr >= 0.0)) throw std::invalid_argument("adam_step: learning rate must be >= 0");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size()) throw std::invalid_argument("adam_step: shape mismatch");
        Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size());
        Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size());
        if (!g.isFinite().all())
            throw std::runtime_error("adam_step: non-finite gradient in " + params[i].name);

        auto m = state.m[i].array();
        auto v = state.v[i].array();
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.square();
        p -= lr * (m / bc1) / ((v / bc2).sqrt() + kAdamEps);
    }
}

void adam_step(Model& model, GradientSet& grads, AdamState& state, double lr) {
    adam_step(trainable_views(model), trainable_views(grads), state, lr);
}

double lr_schedule(const std::vector<double>& history, const TrainConfig& cfg) {
    if (history.empty()) throw std::invalid_argument("lr_schedule: empty history");
    double lr = cfg.lr0;
    double best = std::numeric_limits<double>::infinity();
    int bad = 0;
    for (double loss : history) {
        if (loss < best) {
            best = loss;
            bad = 0;
        } else if (++bad >= cfg.patience) {
            lr *= cfg.decay;
            bad = 0;
        }
    }
    return lr;
}

std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_train_val(
    const std::vector<TrainingSample>& samples, const TrainConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw std::invalid_argument("split_train_val: no samples");

    std::vector<std::uint32_t> points;
    for (const TrainingSample& s : samples) points.push_back(s.center_index);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());

    Rng rng(Rng::mix(cfg.seed, 0x5b117ULL));
    rng.shuffle(points);

    const std::size_t want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(samples.size()))));
    std::vector<char> in_val_point(points.empty() ? 0 : *std::max_element(points.begin(), points.end()) + 1, 0);
    std::size_t val_count = 0;
    std::vector<std::size_t> per_point(in_val_point.size(), 0);
    for (const TrainingSample& s : samples) ++per_point[s.center_index];
    for (std::uint32_t p : points) {
        if (val_count >= want) break;
        in_val_point[p] = 1;
        val_count += per_point[p];
    }

    std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> out;
    for (const TrainingSample& s : samples)
        (in_val_point[s.center_index] ? out.second : out.first).push_back(s);
    if (out.first.empty() || out.second.empty())
        throw std::runtime_error("split_train_val: split produced an empty side");
    return out;
}

double eval_loss(Model& model, const std::vector<TrainingSample>& samples, int batch_size) {
    if (samples.empty()) throw std::invalid_argument("eval_loss: no samples");
    std::vector<std::uint32_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0u);

    double total = 0.0;
    Eigen::MatrixXd x, targets;
    for (std::size_t at = 0; at < samples.size(); at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(samples.size(), at + static_cast<std::size_t>(batch_size));
        pack_batch(samples, order, at, end, x, targets);
        Eigen::MatrixXd y = forward(x, static_cast<Eigen::Index>(end - at), model, Mode::Eval);
        total += (y - targets).squaredNorm();
    }
    return total / (3.0 * static_cast<double>(samples.size()));
}

double eval_accuracy(Model& model, const std::vector<TrainingSample>& samples, double rho,
                     int batch_size) {
    if (!(rho > 0.0)) throw std::invalid_argument("eval_accuracy: rho must be > 0");
    if (samples.empty()) return 0.0;
    std::vector<std::uint32_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0u);

    std::size_t hits = 0;
    Eigen::MatrixXd x, targets;
    for (std::size_t at = 0; at < samples.size(); at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(samples.size(), at + static_cast<std::size_t>(batch_size));
        pack_batch(samples, order, at, end, x, targets);
        Eigen::MatrixXd y = forward(x, static_cast<Eigen::Index>(end - at), model, Mode::Eval);
        for (Eigen::Index b = 0; b < y.rows(); ++b)
            if ((y.row(b) - targets.row(b)).norm() <= rho) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

Checkpoint train_loop(const std::vector<TrainingSample>& train_samples,
                      const std::vector<TrainingSample>& val_samples, const Model& model,
                      const TrainConfig& cfg, const Checkpoint* resume,
                      const std::function<void(const Checkpoint&)>& on_epoch) {
    cfg.validate();
    if (train_samples.empty() || val_samples.empty())
        throw std::invalid_argument("train_loop: empty split");

    Checkpoint state;
    Rng rng(Rng::mix(cfg.seed, 0x7247ULL));
    if (resume) {
        state = *resume;
        rng.set_state(state.rng_state);
    } else {
        state.model = model;
        state.best_model = model;
        state.adam = AdamState::zeros_like(state.model);
        state.lr = cfg.lr0;
        state.epoch = 0;
    }
    state.config = cfg;

    std::vector<std::uint32_t> order(train_samples.size());
    Eigen::MatrixXd x, targets;
    ForwardCache cache;

    for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0u);
        rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t at = 0; at < train_samples.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(train_samples.size(), at + static_cast<std::size_t>(cfg.batch_size));
            pack_batch(train_samples, order, at, end, x, targets);
            Eigen::Index batch = static_cast<Eigen::Index>(end - at);

            Eigen::MatrixXd y = forward(x, batch, state.model, Mode::Train, &cache);
            auto [loss, dy] = mse_loss(y, targets);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_loop: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(at / cfg.batch_size));
            loss_sum += loss * static_cast<double>(batch);

            GradientSet grads = backward(state.model, cache, dy);
            adam_step(state.model, grads, state.adam, state.lr);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = state.lr;
        entry.train_loss = loss_sum / static_cast<double>(train_samples.size());
        entry.val_loss = eval_loss(state.model, val_samples, cfg.batch_size);
        entry.val_rho_acc = eval_accuracy(state.model, val_samples, cfg.rho, cfg.batch_size);
        if (!std::isfinite(entry.val_loss))
            throw std::runtime_error("train_loop: non-finite validation loss at epoch " +
                                     std::to_string(epoch));
        state.log.push_back(entry);
        state.epoch = epoch;
        state.val_loss = entry.val_loss;

        if (entry.val_loss < state.best_val_loss) {
            state.best_val_loss = entry.val_loss;
            state.best_epoch = epoch;
            state.best_model = state.model;
            state.bad_epochs = 0;
        } else if (++state.bad_epochs >= cfg.patience) {
            state.lr *= cfg.decay;
            state.bad_epochs = 0;
        }

        state.rng_state = rng.state();
        if (on_epoch) on_epoch(state);
    }
    return state;
}

}  // namespace mortonnet
