#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mortonnet/model.hpp"
#include "mortonnet/sequence.hpp"

namespace mortonnet {

/// Per-point local-structure descriptors: one hidden-size row per cloud
/// point. `valid[i]` is false where sequence generation had to skip the
/// point; such rows are zero and must not be consumed.
struct FeatureMatrix {
    Eigen::MatrixXd values;  // N x hidden
    std::vector<std::uint8_t> valid;

    std::size_t count_valid() const;
};

/// Element-wise maximum over the rows of an m x H state matrix.
Eigen::VectorXd pool_states(const Eigen::MatrixXd& states);

/// For every point: generate its m sequences, run them through the model in
/// eval mode, and max-pool the m final hidden states. Deterministic in
/// (cfg.seed, cloud, model) and independent of n_threads.
FeatureMatrix extract_features(const Model& model, const PointCloud& cloud,
                               const SequenceGenConfig& cfg, const SpatialIndex& index,
                               const QuantSpec& spec, int n_threads = 1);

/// Baseline features: raw coordinates tiled out to `dim` columns, so a
/// classifier of the same architecture can consume them.
FeatureMatrix coordinate_features(const PointCloud& cloud, int dim);

}  // namespace mortonnet
