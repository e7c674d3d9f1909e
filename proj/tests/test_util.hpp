#pragma once

// Shared helpers and independent oracles for the test suites. Everything in
// here stays deliberately brute-force and separate from the library's own
// code paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mortonnet/core.hpp"
#include "mortonnet/model.hpp"
#include "mortonnet/morton.hpp"
#include "mortonnet/rng.hpp"

namespace testutil {

constexpr double kBnEps = 1e-5;  // must mirror the library's batch-norm epsilon

/// Straight-line scalar re-implementation of linear -> train-mode batch norm
/// -> ReLU, used as the reference for both the encoder and classifier blocks.
inline Eigen::MatrixXd scalar_dense_bn_relu(const Eigen::MatrixXd& x,
                                            const mortonnet::EncoderLayer& layer) {
    const Eigen::Index n = x.rows(), out = layer.weight.rows(), in = layer.weight.cols();
    Eigen::MatrixXd a(n, out);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < out; ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < in; ++k) acc += x(i, k) * layer.weight(j, k);
            a(i, j) = acc;
        }
    Eigen::MatrixXd y(n, out);
    for (Eigen::Index j = 0; j < out; ++j) {
        double mean = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) mean += a(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) var += (a(i, j) - mean) * (a(i, j) - mean);
        var /= static_cast<double>(n);
        double inv_std = 1.0 / std::sqrt(var + kBnEps);
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = layer.gamma(j) * (a(i, j) - mean) * inv_std + layer.beta(j);
            y(i, j) = v > 0.0 ? v : 0.0;
        }
    }
    return y;
}

inline mortonnet::PointCloud random_cloud(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                          double hi = 1.0) {
    mortonnet::Rng rng(seed);
    mortonnet::PointCloud cloud;
    for (std::size_t i = 0; i < n; ++i)
        cloud.points.push_back({lo + (hi - lo) * rng.next_double(), lo + (hi - lo) * rng.next_double(),
                                lo + (hi - lo) * rng.next_double()});
    return cloud;
}

/// Snap coordinates to a dyadic lattice so that adding an integer translation
/// is exact in double precision.
inline void snap_to_lattice(mortonnet::PointCloud& cloud, double step = 0x1.0p-20) {
    for (mortonnet::Point3& p : cloud.points) {
        p.x = std::round(p.x / step) * step;
        p.y = std::round(p.y / step) * step;
        p.z = std::round(p.z / step) * step;
    }
}

/// Z-order comparison without computing interleaved codes: walk bit
/// positions most-significant-first, z slot before y before x.
inline bool morton_less_by_bits(const std::array<std::uint64_t, 3>& a,
                                const std::array<std::uint64_t, 3>& b, int bits) {
    for (int i = bits - 1; i >= 0; --i)
        for (int axis : {2, 1, 0}) {
            std::uint64_t abit = (a[axis] >> i) & 1u;
            std::uint64_t bbit = (b[axis] >> i) & 1u;
            if (abit != bbit) return abit < bbit;
        }
    return false;
}

/// O(n) reference for radius queries: indices with squared distance <= r^2.
inline std::vector<std::uint32_t> brute_radius_filter(const mortonnet::PointCloud& cloud,
                                                      const mortonnet::Point3& center, double r) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
        if (mortonnet::squared_distance(cloud.points[i], center) <= r * r) out.push_back(i);
    return out;
}

/// Sorted squared distances from the center point to every other point.
inline std::vector<double> brute_squared_distances(const mortonnet::PointCloud& cloud,
                                                   std::uint32_t center) {
    std::vector<double> d2;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
        if (i != center) d2.push_back(mortonnet::squared_distance(cloud.points[i], cloud.points[center]));
    std::sort(d2.begin(), d2.end());
    return d2;
}

}  // namespace testutil
