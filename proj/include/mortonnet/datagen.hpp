#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mortonnet/core.hpp"

namespace mortonnet {

enum class ShapeKind : std::uint8_t { Plane, Sphere, Cylinder, Box, Torus, Composite };

const char* shape_name(ShapeKind kind);
ShapeKind shape_from_name(const std::string& name);

/// Seeded synthetic surface sampler. Points are drawn uniformly by surface
/// area, perturbed along the surface normal by Gaussian noise of sigma
/// noise_sigma (in pre-normalization units), and the whole cloud is scaled
/// uniformly about its bbox center into [-1, 1]^3.
///
/// Part labels per kind:
///   plane     1 part
///   sphere    2 parts: upper / lower hemisphere
///   cylinder  3 parts: side, top cap, bottom cap
///   box       6 parts: one per face
///   torus     2 parts: outer / inner half of the tube
///   composite 3 parts by local shape: plane patches, spheres, cylinder
///             sides, several instances of each at seeded positions
struct ShapeSpec {
    ShapeKind kind = ShapeKind::Sphere;
    std::size_t n_points = 1000;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Uniform scale + translation applied by the [-1,1]^3 normalization;
/// original = normalized * scale + center.
struct NormalizationTransform {
    Point3 center;
    double scale = 1.0;

    Point3 back_out(const Point3& p) const { return {p.x * scale + center.x, p.y * scale + center.y, p.z * scale + center.z}; }
};

struct GeneratedCloud {
    PointCloud cloud;
    NormalizationTransform transform;
    int num_parts = 0;
};

GeneratedCloud generate_shape(const ShapeSpec& spec);

}  // namespace mortonnet
