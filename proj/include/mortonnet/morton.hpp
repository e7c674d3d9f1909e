#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mortonnet/core.hpp"

namespace mortonnet {

/// 3D Morton (Z-order) code. Width is 3 * bits_per_axis, at most 63 bits.
using MortonCode = std::uint64_t;

struct Aabb {
    Point3 min;
    Point3 max;

    double extent(int axis) const { return max[axis] - min[axis]; }
    double longest_extent() const {
        return std::max(extent(0), std::max(extent(1), extent(2)));
    }
    bool contains(const Point3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
               p.z >= min.z && p.z <= max.z;
    }
};

/// Quantization domain for Morton coding: a bounding box discretized into
/// 2^bits_per_axis cells per axis. bits_per_axis in [1, 21] so the full code
/// fits 63 bits of a u64.
struct QuantSpec {
    int bits_per_axis = 16;
    Aabb bbox;

    std::uint64_t cells_per_axis() const { return std::uint64_t{1} << bits_per_axis; }
};

enum class OrderingKind : std::uint8_t { Morton = 0, CoordX = 1, CoordY = 2, CoordZ = 3, Random = 4 };

/// Total order over cloud points. Morton sorts by Z-order code, CoordX/Y/Z by
/// one coordinate, Random by a seeded uniform shuffle. All variants break
/// remaining ties by original point index, so every scheme is a deterministic
/// total order.
struct OrderingScheme {
    OrderingKind kind = OrderingKind::Morton;
    std::uint64_t seed = 0;  // used by Random only

    static OrderingScheme morton() { return {OrderingKind::Morton, 0}; }
    static OrderingScheme coord(int axis) {
        return {axis == 0 ? OrderingKind::CoordX : (axis == 1 ? OrderingKind::CoordY : OrderingKind::CoordZ), 0};
    }
    static OrderingScheme random(std::uint64_t seed) { return {OrderingKind::Random, seed}; }
};

const char* ordering_name(OrderingKind kind);
OrderingKind ordering_from_name(const std::string& name);

/// Tight axis-aligned bounding box of a non-empty finite cloud. Degenerate
/// (zero-extent) axes are widened to extent eps = 1e-9 * max(1, longest
/// extent), centered on the flat coordinate.
Aabb compute_bbox(const PointCloud& cloud);

/// Lattice cell of p: floor((coord - min) / extent * 2^bits) per axis,
/// clamped into [0, 2^bits - 1]. Points on the bbox boundary clamp; points
/// strictly outside throw.
std::array<std::uint64_t, 3> quantize(const Point3& p, const QuantSpec& spec);

/// Interleave the low `bits` bits of qx, qy, qz. Bit i of qx lands at code
/// bit 3i, qy at 3i+1, qz at 3i+2 (x in the least significant slot).
MortonCode morton_encode(std::uint64_t qx, std::uint64_t qy, std::uint64_t qz, int bits);

/// Inverse of morton_encode.
std::array<std::uint64_t, 3> morton_decode(MortonCode code, int bits);

inline MortonCode morton_code_of(const Point3& p, const QuantSpec& spec) {
    auto q = quantize(p, spec);
    return morton_encode(q[0], q[1], q[2], spec.bits_per_axis);
}

/// Permutation of point indices sorted ascending by the scheme's key, ties
/// broken by ascending original index. Random is a seeded uniform shuffle.
std::vector<std::uint32_t> order_points(const PointCloud& cloud, const OrderingScheme& scheme,
                                        const QuantSpec& spec);

/// rank[i] = position of point i in order_points(...). The rank array is the
/// scheme's order key in consumable form: comparing ranks compares points.
std::vector<std::uint32_t> ordering_ranks(const PointCloud& cloud, const OrderingScheme& scheme,
                                          const QuantSpec& spec);

}  // namespace mortonnet
