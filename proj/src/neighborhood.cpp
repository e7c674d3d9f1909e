#include "mortonnet/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mortonnet {

namespace {
constexpr std::size_t kMaxCells = std::size_t{1} << 24;

std::array<long, 3> clamp_cell(const std::array<long, 3>& c, const std::array<long, 3>& dims) {
    return {std::clamp(c[0], 0L, dims[0] - 1), std::clamp(c[1], 0L, dims[1] - 1),
            std::clamp(c[2], 0L, dims[2] - 1)};
}
}  // namespace

double SpatialIndex::default_cell_size(const PointCloud& cloud) {
    Aabb box = compute_bbox(cloud);
    double n = static_cast<double>(cloud.size());
    return box.longest_extent() / std::max(1.0, std::cbrt(n));
}

SpatialIndex::SpatialIndex(const PointCloud& cloud, double cell_size) : cloud_(&cloud), cell_size_(cell_size) {
    if (cloud.empty()) throw std::invalid_argument("SpatialIndex: empty cloud");
    if (!(cell_size > 0.0)) throw std::invalid_argument("SpatialIndex: cell size must be positive");
    require_finite(cloud);
    bbox_ = compute_bbox(cloud);

    std::size_t total = 1;
    for (int axis = 0; axis < 3; ++axis) {
        dims_[axis] = static_cast<long>(std::floor(bbox_.extent(axis) / cell_size_)) + 1;
        if (dims_[axis] < 1) dims_[axis] = 1;
        total *= static_cast<std::size_t>(dims_[axis]);
        if (total > kMaxCells) throw std::invalid_argument("SpatialIndex: cell size too small for domain");
    }

    // counting-sort fill keeps per-cell ids in ascending point order
    buckets_offsets_.assign(total + 1, 0);
    std::vector<std::size_t> cell_of_point(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        cell_of_point[i] = cell_of(cloud.points[i]);
        ++buckets_offsets_[cell_of_point[i] + 1];
    }
    for (std::size_t c = 1; c <= total; ++c) buckets_offsets_[c] += buckets_offsets_[c - 1];
    bucket_ids_.resize(cloud.size());
    std::vector<std::uint32_t> cursor(buckets_offsets_.begin(), buckets_offsets_.end() - 1);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        bucket_ids_[cursor[cell_of_point[i]]++] = static_cast<std::uint32_t>(i);
}

std::size_t SpatialIndex::cell_of(const Point3& p) const {
    std::size_t idx = 0;
    for (int axis = 2; axis >= 0; --axis) {
        long c = static_cast<long>(std::floor((p[axis] - bbox_.min[axis]) / cell_size_));
        c = std::clamp(c, 0L, dims_[axis] - 1);
        idx = idx * static_cast<std::size_t>(dims_[axis]) + static_cast<std::size_t>(c);
    }
    return idx;
}

std::size_t SpatialIndex::occupied_cells() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c + 1 < buckets_offsets_.size(); ++c)
        if (buckets_offsets_[c + 1] > buckets_offsets_[c]) ++n;
    return n;
}

void SpatialIndex::gather_cell_range(const std::array<long, 3>& lo, const std::array<long, 3>& hi,
                                     std::vector<std::uint32_t>& out) const {
    for (long iz = lo[2]; iz <= hi[2]; ++iz)
        for (long iy = lo[1]; iy <= hi[1]; ++iy) {
            std::size_t row = (static_cast<std::size_t>(iz) * dims_[1] + static_cast<std::size_t>(iy)) * dims_[0];
            std::size_t begin = buckets_offsets_[row + static_cast<std::size_t>(lo[0])];
            std::size_t end = buckets_offsets_[row + static_cast<std::size_t>(hi[0]) + 1];
            out.insert(out.end(), bucket_ids_.begin() + begin, bucket_ids_.begin() + end);
        }
}

void SpatialIndex::gather_ball_candidates(const Point3& center, double r,
                                          std::vector<std::uint32_t>& out) const {
    std::array<long, 3> lo, hi;
    for (int axis = 0; axis < 3; ++axis) {
        lo[axis] = static_cast<long>(std::floor((center[axis] - r - bbox_.min[axis]) / cell_size_));
        hi[axis] = static_cast<long>(std::floor((center[axis] + r - bbox_.min[axis]) / cell_size_));
    }
    gather_cell_range(clamp_cell(lo, dims_), clamp_cell(hi, dims_), out);
}

std::vector<std::uint32_t> SpatialIndex::radius_query(const Point3& center, double r) const {
    if (r < 0.0) throw std::invalid_argument("radius_query: negative radius");
    if (!center.finite()) throw std::invalid_argument("radius_query: non-finite center");

    std::vector<std::uint32_t> candidates;
    gather_ball_candidates(center, r, candidates);

    double r2 = r * r;
    std::vector<std::uint32_t> out;
    for (std::uint32_t i : candidates)
        if (squared_distance(cloud_->points[i], center) <= r2) out.push_back(i);
    std::sort(out.begin(), out.end());
    return out;
}

double SpatialIndex::nth_neighbor_squared_distance(std::uint32_t center_index, std::size_t n) const {
    if (center_index >= cloud_->size())
        throw std::invalid_argument("nth_neighbor_distance: bad center index");
    if (n < 1 || n > cloud_->size() - 1)
        throw std::invalid_argument("nth_neighbor_distance: n out of range");

    const Point3& c = cloud_->points[center_index];

    // Grow a Chebyshev box of cells until it holds n+1 points; every point of
    // that box lies within sqrt(3)*(level+1) cells of the center, so a ball of
    // that radius certainly contains the n-th nearest neighbor.
    std::array<long, 3> cc;
    for (int axis = 0; axis < 3; ++axis)
        cc[axis] = std::clamp(static_cast<long>(std::floor((c[axis] - bbox_.min[axis]) / cell_size_)), 0L,
                              dims_[axis] - 1);
    long max_dim = std::max(dims_[0], std::max(dims_[1], dims_[2]));
    long level = 0;
    std::vector<std::uint32_t> candidates;
    for (; level <= max_dim; ++level) {
        candidates.clear();
        std::array<long, 3> lo{cc[0] - level, cc[1] - level, cc[2] - level};
        std::array<long, 3> hi{cc[0] + level, cc[1] + level, cc[2] + level};
        gather_cell_range(clamp_cell(lo, dims_), clamp_cell(hi, dims_), candidates);
        if (candidates.size() >= n + 1) break;
    }

    double cover = cell_size_ * static_cast<double>(level + 1) * 1.7320508075688772 * (1.0 + 1e-12);
    candidates.clear();
    gather_ball_candidates(c, cover, candidates);

    std::vector<double> d2;
    d2.reserve(candidates.size());
    for (std::uint32_t i : candidates)
        if (i != center_index) d2.push_back(squared_distance(cloud_->points[i], c));
    std::nth_element(d2.begin(), d2.begin() + static_cast<long>(n - 1), d2.end());
    return d2[n - 1];
}

double SpatialIndex::nth_neighbor_distance(std::uint32_t center_index, std::size_t n) const {
    return std::sqrt(nth_neighbor_squared_distance(center_index, n));
}

SpatialIndex build_index(const PointCloud& cloud, double cell_size) { return SpatialIndex(cloud, cell_size); }

std::vector<std::uint32_t> radius_query(const SpatialIndex& index, const Point3& center, double r) {
    return index.radius_query(center, r);
}

SupportSet adaptive_support(const SpatialIndex& index, std::uint32_t center_index, int k) {
    const PointCloud& cloud = index.cloud();
    if (k < 2) throw std::invalid_argument("adaptive_support: k must be >= 2");
    std::size_t need = 2 * static_cast<std::size_t>(k);
    if (cloud.size() < need + 1)
        throw std::invalid_argument("adaptive_support: cloud must have more than 2k points");

    // Membership is decided in squared space against the exact (2k)-th
    // smallest squared distance; squaring the rounded radius could drop the
    // defining neighbor itself.
    double d2_threshold = index.nth_neighbor_squared_distance(center_index, need);

    SupportSet support;
    support.center_index = center_index;
    support.radius = std::sqrt(d2_threshold);

    const Point3& c = cloud.points[center_index];
    std::vector<std::uint32_t> candidates;
    index.gather_ball_candidates(c, support.radius * (1.0 + 1e-9) + 1e-300, candidates);
    for (std::uint32_t i : candidates) {
        if (i == center_index) continue;
        if (squared_distance(cloud.points[i], c) <= d2_threshold) support.member_indices.push_back(i);
    }
    std::sort(support.member_indices.begin(), support.member_indices.end());
    return support;
}

}  // namespace mortonnet
