#pragma once

#include <cstdint>
#include <vector>

#include "mortonnet/core.hpp"
#include "mortonnet/morton.hpp"

namespace mortonnet {

/// Uniform grid over the cloud bbox. Cells are half-open along each axis;
/// the grid is immutable after build and answers radius queries exactly.
class SpatialIndex {
public:
    SpatialIndex(const PointCloud& cloud, double cell_size);

    /// Exactly the indices i with ||p_i - center||_2 <= r, ascending.
    std::vector<std::uint32_t> radius_query(const Point3& center, double r) const;

    /// Euclidean distance from point `center_index` to its n-th nearest
    /// other point (1-based n). Exact; ties share the same distance.
    double nth_neighbor_distance(std::uint32_t center_index, std::size_t n) const;

    /// Same, before the square root. Callers that compare memberships should
    /// use this to avoid the sqrt round-trip.
    double nth_neighbor_squared_distance(std::uint32_t center_index, std::size_t n) const;

    /// All point ids in grid cells intersecting the ball (superset of the
    /// exact answer; no distance filtering).
    void gather_ball_candidates(const Point3& center, double r, std::vector<std::uint32_t>& out) const;

    const PointCloud& cloud() const { return *cloud_; }
    double cell_size() const { return cell_size_; }
    const Aabb& bbox() const { return bbox_; }
    std::size_t cell_count() const { return buckets_offsets_.size() - 1; }
    std::size_t occupied_cells() const;

    /// Load-balancing default: longest bbox extent / cbrt(n).
    static double default_cell_size(const PointCloud& cloud);

private:
    std::size_t cell_of(const Point3& p) const;
    void gather_cell_range(const std::array<long, 3>& lo, const std::array<long, 3>& hi,
                           std::vector<std::uint32_t>& out) const;

    const PointCloud* cloud_;
    Aabb bbox_;
    double cell_size_;
    std::array<long, 3> dims_;
    // CSR bucket layout: ids of cell c are ids_[offsets_[c] .. offsets_[c+1])
    std::vector<std::uint32_t> buckets_offsets_;
    std::vector<std::uint32_t> bucket_ids_;
};

/// Neighborhood S_r(x) of a designated center point: all cloud points within
/// `radius`, center itself excluded from the member list.
struct SupportSet {
    std::uint32_t center_index = 0;
    double radius = 0.0;
    std::vector<std::uint32_t> member_indices;
};

SpatialIndex build_index(const PointCloud& cloud, double cell_size);

std::vector<std::uint32_t> radius_query(const SpatialIndex& index, const Point3& center, double r);

/// Smallest support around point `center_index` holding at least 2k other
/// points: radius is the distance to the (2k)-th nearest other point, and
/// the member set is everything within that radius (ties included, center
/// excluded). Requires the cloud to have more than 2k points.
SupportSet adaptive_support(const SpatialIndex& index, std::uint32_t center_index, int k);

}  // namespace mortonnet
