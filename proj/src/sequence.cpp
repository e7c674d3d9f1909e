#include "mortonnet/sequence.hpp"

#include <algorithm>
#include <stdexcept>

#include "mortonnet/rng.hpp"

namespace mortonnet {

namespace {

void check_config(const SequenceGenConfig& cfg, const PointCloud& cloud) {
    if (cfg.k < 3) throw std::invalid_argument("sequence generation: k must be >= 3");
    if (cfg.m < 1) throw std::invalid_argument("sequence generation: m must be >= 1");
    if (cloud.size() < 2)
        throw std::invalid_argument("sequence generation: cloud too small for any sequence");
}

}  // namespace

std::vector<ZSequence> sequences_for_point(const PointCloud& cloud, const SequenceGenConfig& cfg,
                                           const SpatialIndex& index,
                                           const std::vector<std::uint32_t>& ranks,
                                           std::uint32_t point_index) {
    check_config(cfg, cloud);
    if (ranks.size() != cloud.size())
        throw std::invalid_argument("sequences_for_point: rank array does not match cloud");

    const std::uint32_t center_rank = ranks[point_index];
    const std::size_t want = static_cast<std::size_t>(cfg.k) - 1;

    std::uint8_t flags = kSeqNone;
    std::vector<std::uint32_t> pool;
    if (cloud.size() > 2 * static_cast<std::size_t>(cfg.k)) {
        SupportSet support = adaptive_support(index, point_index, cfg.k);
        pool.reserve(support.member_indices.size());
        for (std::uint32_t i : support.member_indices)
            if (ranks[i] < center_rank) pool.push_back(i);

        // Enlarge the support gradually when it holds too few predecessors;
        // jumping straight to the whole cloud would trade locality away for
        // roughly every second point.
        double radius = support.radius;
        const double diameter = 2.0 * index.bbox().longest_extent() + 1.0;
        std::size_t seen = support.member_indices.size();
        while (pool.size() < want && seen + 1 < cloud.size() && radius < diameter) {
            flags |= kSeqEnlargedSupport;
            radius *= 2.0;
            std::vector<std::uint32_t> members = index.radius_query(cloud.points[point_index], radius);
            pool.clear();
            seen = 0;
            for (std::uint32_t i : members) {
                if (i == point_index) continue;
                ++seen;
                if (ranks[i] < center_rank) pool.push_back(i);
            }
        }
    }
    if (pool.size() < want) {
        // Small clouds and true curve-boundary points: the predecessor pool
        // is the whole cloud.
        flags |= kSeqEnlargedSupport;
        pool.clear();
        for (std::uint32_t i = 0; i < cloud.size(); ++i)
            if (ranks[i] < center_rank) pool.push_back(i);
    }
    if (pool.empty()) return {};  // global Z-order minimum; caller records the skip
    if (pool.size() == want) flags |= kSeqForcedDuplicate;
    if (pool.size() < want) flags |= kSeqWithReplacement;

    std::vector<ZSequence> out;
    out.reserve(static_cast<std::size_t>(cfg.m));
    std::vector<std::uint32_t> scratch;
    for (int slot = 0; slot < cfg.m; ++slot) {
        Rng rng(Rng::mix(cfg.seed, point_index, static_cast<std::uint64_t>(slot)));

        ZSequence seq;
        seq.ordering = cfg.scheme;
        seq.flags = flags;
        seq.point_indices.reserve(static_cast<std::size_t>(cfg.k));

        if (flags & kSeqWithReplacement) {
            for (std::size_t i = 0; i < want; ++i)
                seq.point_indices.push_back(pool[rng.next_below(pool.size())]);
        } else {
            scratch = pool;
            rng.partial_shuffle(scratch, want);
            seq.point_indices.assign(scratch.begin(), scratch.begin() + static_cast<long>(want));
        }
        // a sampled subset is unordered; re-sort so the sequence follows the curve
        std::sort(seq.point_indices.begin(), seq.point_indices.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return ranks[a] < ranks[b]; });
        seq.point_indices.push_back(point_index);
        out.push_back(std::move(seq));
    }
    return out;
}

SequenceSet generate_sequences(const PointCloud& cloud, const SequenceGenConfig& cfg,
                               const SpatialIndex& index, const QuantSpec& spec) {
    check_config(cfg, cloud);
    std::vector<std::uint32_t> ranks = ordering_ranks(cloud, cfg.scheme, spec);

    SequenceSet set;
    set.sequences.reserve(cloud.size() * static_cast<std::size_t>(cfg.m));
    for (std::uint32_t p = 0; p < cloud.size(); ++p) {
        std::vector<ZSequence> seqs = sequences_for_point(cloud, cfg, index, ranks, p);
        if (seqs.empty()) {
            set.skipped_points.push_back(p);
            continue;
        }
        for (ZSequence& s : seqs) set.sequences.push_back(std::move(s));
    }
    return set;
}

TrainingSample normalize_sequence(const PointCloud& cloud, const ZSequence& seq) {
    const std::size_t k = seq.point_indices.size();
    if (k < 2) throw std::invalid_argument("normalize_sequence: sequence too short");
    for (std::uint32_t i : seq.point_indices)
        if (i >= cloud.size()) throw std::invalid_argument("normalize_sequence: index out of range");

    TrainingSample sample;
    sample.center_index = seq.point_indices.back();
    sample.flags = seq.flags;

    const Point3& origin = cloud.points[seq.point_indices[0]];
    sample.inputs.resize(static_cast<long>(k) - 1, 3);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        Point3 d = cloud.points[seq.point_indices[i]] - origin;
        sample.inputs(static_cast<long>(i), 0) = d.x;
        sample.inputs(static_cast<long>(i), 1) = d.y;
        sample.inputs(static_cast<long>(i), 2) = d.z;
    }
    Point3 t = cloud.points[seq.point_indices[k - 1]] - cloud.points[seq.point_indices[k - 2]];
    sample.target << t.x, t.y, t.z;
    return sample;
}

std::vector<TrainingSample> normalize_all(const PointCloud& cloud, const std::vector<ZSequence>& seqs) {
    std::vector<TrainingSample> out;
    out.reserve(seqs.size());
    for (const ZSequence& s : seqs) out.push_back(normalize_sequence(cloud, s));
    return out;
}

}  // namespace mortonnet
