#include "mortonnet/morton.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mortonnet/rng.hpp"

namespace mortonnet {

namespace {

// Spread the low 21 bits of v so bit i moves to bit 3i.
inline std::uint64_t spread3(std::uint64_t v) {
    v &= 0x1fffffULL;
    v = (v | (v << 32)) & 0x1f00000000ffffULL;
    v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
    v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
    v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
    v = (v | (v << 2)) & 0x1249249249249249ULL;
    return v;
}

// Inverse of spread3: gather bits 0, 3, 6, ... back into the low 21 bits.
inline std::uint64_t compact3(std::uint64_t v) {
    v &= 0x1249249249249249ULL;
    v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
    v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
    v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
    v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
    v = (v ^ (v >> 32)) & 0x1fffffULL;
    return v;
}

void check_bits(int bits) {
    if (bits < 1 || bits > 21) throw std::invalid_argument("bits_per_axis must be in [1, 21]");
}

}  // namespace

const char* ordering_name(OrderingKind kind) {
    switch (kind) {
        case OrderingKind::Morton: return "morton";
        case OrderingKind::CoordX: return "coord-x";
        case OrderingKind::CoordY: return "coord-y";
        case OrderingKind::CoordZ: return "coord-z";
        case OrderingKind::Random: return "random";
    }
    return "?";
}

OrderingKind ordering_from_name(const std::string& name) {
    if (name == "morton") return OrderingKind::Morton;
    if (name == "coord-x" || name == "x") return OrderingKind::CoordX;
    if (name == "coord-y" || name == "y") return OrderingKind::CoordY;
    if (name == "coord-z" || name == "z") return OrderingKind::CoordZ;
    if (name == "random") return OrderingKind::Random;
    throw std::invalid_argument("unknown ordering scheme: " + name);
}

Aabb compute_bbox(const PointCloud& cloud) {
    if (cloud.empty()) throw std::invalid_argument("compute_bbox: empty cloud");
    require_finite(cloud);

    Aabb box{cloud.points[0], cloud.points[0]};
    for (const Point3& p : cloud.points) {
        box.min.x = std::min(box.min.x, p.x);
        box.min.y = std::min(box.min.y, p.y);
        box.min.z = std::min(box.min.z, p.z);
        box.max.x = std::max(box.max.x, p.x);
        box.max.y = std::max(box.max.y, p.y);
        box.max.z = std::max(box.max.z, p.z);
    }

    // Widen flat axes so quantization never divides by zero.
    double eps = 1e-9 * std::max(1.0, box.longest_extent());
    auto widen = [eps](double& lo, double& hi) {
        if (hi - lo <= 0.0) {
            double mid = lo;
            lo = mid - 0.5 * eps;
            hi = mid + 0.5 * eps;
        }
    };
    widen(box.min.x, box.max.x);
    widen(box.min.y, box.max.y);
    widen(box.min.z, box.max.z);
    return box;
}

std::array<std::uint64_t, 3> quantize(const Point3& p, const QuantSpec& spec) {
    check_bits(spec.bits_per_axis);
    if (!p.finite()) throw std::invalid_argument("quantize: non-finite point");
    if (!spec.bbox.contains(p)) throw std::invalid_argument("quantize: point outside quantization bbox");

    std::uint64_t cells = spec.cells_per_axis();
    std::array<std::uint64_t, 3> q{};
    for (int axis = 0; axis < 3; ++axis) {
        double t = (p[axis] - spec.bbox.min[axis]) / spec.bbox.extent(axis);
        double scaled = std::floor(t * static_cast<double>(cells));
        if (scaled < 0.0) scaled = 0.0;
        std::uint64_t qi = static_cast<std::uint64_t>(scaled);
        q[axis] = std::min(qi, cells - 1);
    }
    return q;
}

MortonCode morton_encode(std::uint64_t qx, std::uint64_t qy, std::uint64_t qz, int bits) {
    check_bits(bits);
    std::uint64_t cells = std::uint64_t{1} << bits;
    if (qx >= cells || qy >= cells || qz >= cells)
        throw std::invalid_argument("morton_encode: coordinate out of range for bit width");
    return spread3(qx) | (spread3(qy) << 1) | (spread3(qz) << 2);
}

std::array<std::uint64_t, 3> morton_decode(MortonCode code, int bits) {
    check_bits(bits);
    if (bits < 21 && code >= (std::uint64_t{1} << (3 * bits)))
        throw std::invalid_argument("morton_decode: code out of range for bit width");
    return {compact3(code), compact3(code >> 1), compact3(code >> 2)};
}

std::vector<std::uint32_t> order_points(const PointCloud& cloud, const OrderingScheme& scheme,
                                        const QuantSpec& spec) {
    require_finite(cloud);
    std::size_t n = cloud.size();
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);

    switch (scheme.kind) {
        case OrderingKind::Morton: {
            std::vector<MortonCode> codes(n);
            for (std::size_t i = 0; i < n; ++i) codes[i] = morton_code_of(cloud.points[i], spec);
            std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
                return codes[a] != codes[b] ? codes[a] < codes[b] : a < b;
            });
            break;
        }
        case OrderingKind::CoordX:
        case OrderingKind::CoordY:
        case OrderingKind::CoordZ: {
            int axis = static_cast<int>(scheme.kind) - static_cast<int>(OrderingKind::CoordX);
            std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
                double ca = cloud.points[a][axis], cb = cloud.points[b][axis];
                return ca != cb ? ca < cb : a < b;
            });
            break;
        }
        case OrderingKind::Random: {
            Rng rng(Rng::mix(scheme.seed, 0x5eedULL));
            rng.shuffle(perm);
            break;
        }
    }
    return perm;
}

std::vector<std::uint32_t> ordering_ranks(const PointCloud& cloud, const OrderingScheme& scheme,
                                          const QuantSpec& spec) {
    std::vector<std::uint32_t> perm = order_points(cloud, scheme, spec);
    std::vector<std::uint32_t> rank(perm.size());
    for (std::uint32_t pos = 0; pos < perm.size(); ++pos) rank[perm[pos]] = pos;
    return rank;
}

}  // namespace mortonnet
