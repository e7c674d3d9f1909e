#include "mortonnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mortonnet/morton.hpp"
#include "mortonnet/rng.hpp"

namespace mortonnet {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

struct Sampled {
    Point3 position;
    Point3 normal;
    int label;
};

Sampled sample_plane(Rng& rng) {
    return {{2.0 * rng.next_double() - 1.0, 2.0 * rng.next_double() - 1.0, 0.0}, {0.0, 0.0, 1.0}, 0};
}

Sampled sample_sphere(Rng& rng, const Point3& center = {}, double radius = 1.0, int label_base = 0,
                      bool hemispheres = true) {
    double z = 2.0 * rng.next_double() - 1.0;
    double phi = kTau * rng.next_double();
    double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    Point3 n{rxy * std::cos(phi), rxy * std::sin(phi), z};
    Point3 p = center + n * radius;
    int label = label_base + (hemispheres && z < 0.0 ? 1 : 0);
    return {p, n, label};
}

Sampled sample_cylinder_side(Rng& rng, const Point3& center, double radius, double half_height,
                             int label) {
    double theta = kTau * rng.next_double();
    double z = (2.0 * rng.next_double() - 1.0) * half_height;
    Point3 n{std::cos(theta), std::sin(theta), 0.0};
    Point3 p{center.x + radius * n.x, center.y + radius * n.y, center.z + z};
    return {p, n, label};
}

Sampled sample_disc(Rng& rng, const Point3& center, double radius, double z_offset, double normal_z,
                    int label) {
    double theta = kTau * rng.next_double();
    double r = radius * std::sqrt(rng.next_double());
    Point3 p{center.x + r * std::cos(theta), center.y + r * std::sin(theta), center.z + z_offset};
    return {p, {0.0, 0.0, normal_z}, label};
}

Sampled sample_cylinder(Rng& rng) {
    constexpr double radius = 0.5, half_height = 1.0;
    double side = kTau * radius * (2.0 * half_height);
    double cap = kTau / 2.0 * radius * radius;  // pi r^2
    double pick = rng.next_double() * (side + 2.0 * cap);
    if (pick < side) return sample_cylinder_side(rng, {}, radius, half_height, 0);
    if (pick < side + cap) return sample_disc(rng, {}, radius, half_height, 1.0, 1);
    return sample_disc(rng, {}, radius, -half_height, -1.0, 2);
}

Sampled sample_box(Rng& rng) {
    constexpr double hx = 1.0, hy = 0.7, hz = 0.4;
    const double areas[3] = {4.0 * hy * hz, 4.0 * hx * hz, 4.0 * hx * hy};  // per axis pair
    double total = 2.0 * (areas[0] + areas[1] + areas[2]);
    double pick = rng.next_double() * total;
    int face = 0;
    for (int axis = 0; axis < 3; ++axis)
        for (int sign = 0; sign < 2; ++sign) {
            if (pick < areas[axis]) {
                double u = 2.0 * rng.next_double() - 1.0;
                double v = 2.0 * rng.next_double() - 1.0;
                double s = sign == 0 ? 1.0 : -1.0;
                Point3 p, n;
                if (axis == 0) {
                    p = {s * hx, u * hy, v * hz};
                    n = {s, 0.0, 0.0};
                } else if (axis == 1) {
                    p = {u * hx, s * hy, v * hz};
                    n = {0.0, s, 0.0};
                } else {
                    p = {u * hx, v * hy, s * hz};
                    n = {0.0, 0.0, s};
                }
                return {p, n, face};
            }
            pick -= areas[axis];
            ++face;
        }
    // unreachable up to rounding; land on the last face
    return {{hx, hy, -hz}, {0.0, 0.0, -1.0}, 5};
}

Sampled sample_torus(Rng& rng) {
    constexpr double ring = 0.7, tube = 0.25;
    // area element scales with (ring + tube*cos theta); rejection keeps the
    // sampling uniform over the surface
    double theta;
    for (;;) {
        theta = kTau * rng.next_double();
        double accept = (ring + tube * std::cos(theta)) / (ring + tube);
        if (rng.next_double() < accept) break;
    }
    double u = kTau * rng.next_double();
    double ct = std::cos(theta), st = std::sin(theta);
    Point3 p{(ring + tube * ct) * std::cos(u), (ring + tube * ct) * std::sin(u), tube * st};
    Point3 n{ct * std::cos(u), ct * std::sin(u), st};
    return {p, n, ct >= 0.0 ? 0 : 1};
}

struct CompositePart {
    int kind;  // 0 plane patch, 1 sphere, 2 cylinder side
    Point3 center;
    double area;
};

Sampled sample_composite_part(Rng& rng, const CompositePart& part) {
    constexpr double patch_half = 0.28, sphere_r = 0.22, cyl_r = 0.16, cyl_hh = 0.3;
    switch (part.kind) {
        case 0: {
            Point3 p{part.center.x + (2.0 * rng.next_double() - 1.0) * patch_half,
                     part.center.y + (2.0 * rng.next_double() - 1.0) * patch_half, part.center.z};
            return {p, {0.0, 0.0, 1.0}, 0};
        }
        case 1: {
            Sampled s = sample_sphere(rng, part.center, sphere_r, 1, false);
            return s;
        }
        default:
            return sample_cylinder_side(rng, part.center, cyl_r, cyl_hh, 2);
    }
}

}  // namespace

const char* shape_name(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Plane: return "plane";
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Cylinder: return "cylinder";
        case ShapeKind::Box: return "box";
        case ShapeKind::Torus: return "torus";
        case ShapeKind::Composite: return "composite";
    }
    return "?";
}

ShapeKind shape_from_name(const std::string& name) {
    if (name == "plane") return ShapeKind::Plane;
    if (name == "sphere") return ShapeKind::Sphere;
    if (name == "cylinder") return ShapeKind::Cylinder;
    if (name == "box") return ShapeKind::Box;
    if (name == "torus") return ShapeKind::Torus;
    if (name == "composite") return ShapeKind::Composite;
    throw std::invalid_argument("unknown shape kind: " + name);
}

GeneratedCloud generate_shape(const ShapeSpec& spec) {
    if (spec.n_points < 1) throw std::invalid_argument("generate_shape: n_points must be >= 1");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("generate_shape: noise_sigma must be >= 0");

    Rng rng(Rng::mix(spec.seed, 0xda7aULL));
    GeneratedCloud out;
    out.cloud.points.reserve(spec.n_points);
    out.cloud.labels.reserve(spec.n_points);

    std::vector<CompositePart> parts;
    double parts_total_area = 0.0;
    if (spec.kind == ShapeKind::Composite) {
        constexpr double patch_half = 0.28, sphere_r = 0.22, cyl_r = 0.16, cyl_hh = 0.3;
        const double area_by_kind[3] = {4.0 * patch_half * patch_half, 2.0 * kTau * sphere_r * sphere_r,
                                        kTau * cyl_r * (2.0 * cyl_hh)};
        for (int kind = 0; kind < 3; ++kind)
            for (int instance = 0; instance < 3; ++instance) {
                Point3 center{(2.0 * rng.next_double() - 1.0) * 0.65,
                              (2.0 * rng.next_double() - 1.0) * 0.65,
                              (2.0 * rng.next_double() - 1.0) * 0.65};
                parts.push_back({kind, center, area_by_kind[kind]});
                parts_total_area += area_by_kind[kind];
            }
    }

    int num_parts = 0;
    for (std::size_t i = 0; i < spec.n_points; ++i) {
        Sampled s;
        switch (spec.kind) {
            case ShapeKind::Plane:
                s = sample_plane(rng);
                num_parts = 1;
                break;
            case ShapeKind::Sphere:
                s = sample_sphere(rng);
                num_parts = 2;
                break;
            case ShapeKind::Cylinder:
                s = sample_cylinder(rng);
                num_parts = 3;
                break;
            case ShapeKind::Box:
                s = sample_box(rng);
                num_parts = 6;
                break;
            case ShapeKind::Torus:
                s = sample_torus(rng);
                num_parts = 2;
                break;
            case ShapeKind::Composite: {
                double pick = rng.next_double() * parts_total_area;
                std::size_t chosen = 0;
                for (; chosen + 1 < parts.size(); ++chosen) {
                    if (pick < parts[chosen].area) break;
                    pick -= parts[chosen].area;
                }
                s = sample_composite_part(rng, parts[chosen]);
                num_parts = 3;
                break;
            }
        }
        if (spec.noise_sigma > 0.0) {
            double amount = spec.noise_sigma * rng.next_gaussian();
            s.position = s.position + s.normal * amount;
        }
        out.cloud.points.push_back(s.position);
        out.cloud.labels.push_back(s.label);
    }
    out.num_parts = num_parts;

    Aabb box = compute_bbox(out.cloud);
    Point3 center{0.5 * (box.min.x + box.max.x), 0.5 * (box.min.y + box.max.y),
                  0.5 * (box.min.z + box.max.z)};
    double half = 0.5 * box.longest_extent();
    if (half <= 0.0) half = 1.0;
    for (Point3& p : out.cloud.points) {
        p.x = (p.x - center.x) / half;
        p.y = (p.y - center.y) / half;
        p.z = (p.z - center.z) / half;
    }
    out.transform.center = center;
    out.transform.scale = half;
    return out;
}

}  // namespace mortonnet
