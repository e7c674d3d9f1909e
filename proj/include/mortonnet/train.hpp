#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mortonnet/model.hpp"

namespace mortonnet {

struct TrainConfig {
    double lr0 = 1e-3;
    double decay = 0.9;
    int patience = 2;        // epochs without improvement before a decay
    int epochs = 40;
    int batch_size = 64;
    double val_fraction = 0.1;
    double rho = 0.02;       // correctness ball radius, cloud units
    std::uint64_t seed = 0;

    void validate() const;
};

/// First/second moment accumulators, one flat vector per trainable tensor in
/// trainable_views order.
struct AdamState {
    std::vector<Eigen::VectorXd> m, v;
    std::int64_t t = 0;

    static AdamState zeros_like(Model& model);
};

struct EpochLog {
    int epoch = 0;           // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;         // rate used during this epoch
    double val_rho_acc = 0.0;
};

/// Complete training state at an epoch boundary. Restoring one and continuing
/// reproduces the uninterrupted run bit-exactly, so it doubles as both the
/// resume point and the best-validation snapshot.
struct Checkpoint {
    Model model;       // parameters after `epoch` epochs (incl. BN stats)
    Model best_model;  // snapshot at the best validation loss so far
    AdamState adam;
    TrainConfig config;
    int epoch = 0;  // epochs completed
    double lr = 0.0;
    double val_loss = std::numeric_limits<double>::infinity();
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int bad_epochs = 0;  // plateau counter
    std::uint64_t rng_state = 0;
    std::vector<EpochLog> log;
};

/// Mean squared error over all B x 3 entries and its gradient:
/// L = sum((y - t)^2) / (3B), dL/dy = 2 (y - t) / (3B).
std::pair<double, Eigen::MatrixXd> mse_loss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target);

/// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) over aligned
/// parameter/gradient views.
void adam_step(std::vector<TensorView> params, std::vector<TensorView> grads, AdamState& state,
               double lr);
void adam_step(Model& model, GradientSet& grads, AdamState& state, double lr);

/// Learning rate for the epoch after `history`: multiplied by cfg.decay each
/// time the running-best validation loss fails to improve strictly for
/// cfg.patience consecutive epochs; the counter resets on improvement and
/// after a decay.
double lr_schedule(const std::vector<double>& history, const TrainConfig& cfg);

/// Seeded per-point split: whole points move to validation until the
/// validation side holds >= val_fraction of the samples, so no point's
/// sequences straddle the splits.
std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_train_val(
    const std::vector<TrainingSample>& samples, const TrainConfig& cfg);

/// Full training procedure: per epoch a seeded shuffle, train-mode batches
/// through forward/backward/adam, then an eval-mode validation pass feeding
/// the plateau schedule and best-checkpoint tracking. Single-threaded and
/// bit-deterministic in (seed, data, config). Pass `resume` to continue a
/// run; `on_epoch` fires after every epoch with the current state.
Checkpoint train_loop(const std::vector<TrainingSample>& train_samples,
                      const std::vector<TrainingSample>& val_samples, const Model& model,
                      const TrainConfig& cfg, const Checkpoint* resume = nullptr,
                      const std::function<void(const Checkpoint&)>& on_epoch = nullptr);

/// Mean eval-mode loss over samples.
double eval_loss(Model& model, const std::vector<TrainingSample>& samples, int batch_size);

/// Fraction of samples whose predicted displacement lies within Euclidean
/// distance rho of the true one.
double eval_accuracy(Model& model, const std::vector<TrainingSample>& samples, double rho,
                     int batch_size = 256);

}  // namespace mortonnet
