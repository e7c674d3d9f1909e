#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mortonnet/core.hpp"
#include "mortonnet/morton.hpp"
#include "mortonnet/neighborhood.hpp"

namespace mortonnet {

/// Degenerate-generation markers carried by a sequence.
enum SequenceFlags : std::uint8_t {
    kSeqNone = 0,
    // the eligible predecessor pool had exactly k-1 points, so all m copies
    // for this point are the same forced subset
    kSeqForcedDuplicate = 1,
    // pool smaller than k-1 even over the whole cloud; sampled with
    // replacement, indices may repeat
    kSeqWithReplacement = 2,
    // support had to grow beyond the adaptive radius to find enough
    // predecessors (up to the whole cloud in the worst case)
    kSeqEnlargedSupport = 4,
};

/// One k-long ordered training sequence: k-1 sampled predecessors in
/// ascending order-key, then the center point as terminus.
struct ZSequence {
    std::vector<std::uint32_t> point_indices;  // length k, last = center
    OrderingScheme ordering;
    std::uint8_t flags = kSeqNone;

    std::uint32_t center() const { return point_indices.back(); }
};

/// Model-ready sample: translated inputs and the raw displacement target.
struct TrainingSample {
    Eigen::MatrixXd inputs;   // (k-1) x 3, row 0 is exactly (0,0,0)
    Eigen::Vector3d target;   // x_k - x_{k-1}, cloud units
    std::uint32_t center_index = 0;
    std::uint8_t flags = kSeqNone;
};

struct SequenceGenConfig {
    int k = 100;
    int m = 5;
    OrderingScheme scheme = OrderingScheme::morton();
    std::uint64_t seed = 0;
};

struct SequenceSet {
    std::vector<ZSequence> sequences;          // ordered by (point index, slot)
    std::vector<std::uint32_t> skipped_points; // no eligible predecessor at all
};

/// The m sequences ending at one point. Returns empty when the point has no
/// eligible predecessor even over the whole cloud (a curve-boundary point).
/// `ranks` must come from ordering_ranks with the same scheme/spec.
std::vector<ZSequence> sequences_for_point(const PointCloud& cloud, const SequenceGenConfig& cfg,
                                           const SpatialIndex& index,
                                           const std::vector<std::uint32_t>& ranks,
                                           std::uint32_t point_index);

/// m sequences for every point of the cloud, deterministic in (cfg.seed,
/// cloud); points with zero eligible predecessors are skipped and recorded.
SequenceSet generate_sequences(const PointCloud& cloud, const SequenceGenConfig& cfg,
                               const SpatialIndex& index, const QuantSpec& spec);

/// Translate the sequence so its first point sits at the origin; the
/// displacement target is taken from the raw coordinates and is unaffected.
TrainingSample normalize_sequence(const PointCloud& cloud, const ZSequence& seq);

std::vector<TrainingSample> normalize_all(const PointCloud& cloud, const std::vector<ZSequence>& seqs);

}  // namespace mortonnet
