#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mortonnet/datagen.hpp"
#include "test_util.hpp"

using namespace mortonnet;

TEST_SUITE("datagen") {

TEST_CASE("noise-free sphere points sit on the unit sphere after back-out") {
    GeneratedCloud g = generate_shape({ShapeKind::Sphere, 3000, 0.0, 7});
    for (const Point3& p : g.cloud.points) {
        Point3 original = g.transform.back_out(p);
        REQUIRE(original.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("noise-free plane has a single constant coordinate") {
    GeneratedCloud g = generate_shape({ShapeKind::Plane, 500, 0.0, 3});
    double z0 = g.cloud.points[0].z;
    for (const Point3& p : g.cloud.points) REQUIRE(p.z == doctest::Approx(z0).epsilon(1e-12));
    for (int label : g.cloud.labels) REQUIRE(label == 0);
}

TEST_CASE("box face counts follow the face areas") {
    const std::size_t n = 6000;
    GeneratedCloud g = generate_shape({ShapeKind::Box, n, 0.0, 11});
    // canonical box half-extents 1.0 / 0.7 / 0.4
    const double areas[6] = {4 * 0.7 * 0.4, 4 * 0.7 * 0.4, 4 * 1.0 * 0.4,
                             4 * 1.0 * 0.4, 4 * 1.0 * 0.7, 4 * 1.0 * 0.7};
    double total = 0;
    for (double a : areas) total += a;

    std::array<std::size_t, 6> counts{};
    for (int label : g.cloud.labels) ++counts[static_cast<std::size_t>(label)];
    for (int face = 0; face < 6; ++face) {
        double p = areas[face] / total;
        double mean = p * static_cast<double>(n);
        double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
        REQUIRE(std::abs(static_cast<double>(counts[static_cast<std::size_t>(face)]) - mean) <=
                3.0 * sigma);
    }
}

TEST_CASE("noise-free torus points sit on the torus surface") {
    GeneratedCloud g = generate_shape({ShapeKind::Torus, 1500, 0.0, 13});
    for (const Point3& p : g.cloud.points) {
        Point3 o = g.transform.back_out(p);
        double ring = std::sqrt(o.x * o.x + o.y * o.y) - 0.7;
        double tube = std::sqrt(ring * ring + o.z * o.z);
        REQUIRE(tube == doctest::Approx(0.25).epsilon(1e-9));
    }
    std::set<int> labels(g.cloud.labels.begin(), g.cloud.labels.end());
    CHECK(labels == std::set<int>{0, 1});
}

TEST_CASE("cylinder parts are side and caps") {
    GeneratedCloud g = generate_shape({ShapeKind::Cylinder, 2000, 0.0, 17});
    std::set<int> labels(g.cloud.labels.begin(), g.cloud.labels.end());
    CHECK(labels == std::set<int>{0, 1, 2});
    CHECK(g.num_parts == 3);
    for (std::size_t i = 0; i < g.cloud.size(); ++i) {
        Point3 o = g.transform.back_out(g.cloud.points[i]);
        if (g.cloud.labels[i] == 0)
            REQUIRE(std::sqrt(o.x * o.x + o.y * o.y) == doctest::Approx(0.5).epsilon(1e-9));
        else
            REQUIRE(std::abs(o.z) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("generation is deterministic in the seed") {
    ShapeSpec spec{ShapeKind::Composite, 800, 0.01, 23};
    GeneratedCloud a = generate_shape(spec);
    GeneratedCloud b = generate_shape(spec);
    REQUIRE(a.cloud.size() == b.cloud.size());
    for (std::size_t i = 0; i < a.cloud.size(); ++i) {
        CHECK(a.cloud.points[i].x == b.cloud.points[i].x);
        CHECK(a.cloud.points[i].y == b.cloud.points[i].y);
        CHECK(a.cloud.points[i].z == b.cloud.points[i].z);
        CHECK(a.cloud.labels[i] == b.cloud.labels[i]);
    }
    spec.seed = 24;
    GeneratedCloud c = generate_shape(spec);
    bool differs = false;
    for (std::size_t i = 0; i < a.cloud.size() && !differs; ++i)
        differs = a.cloud.points[i].x != c.cloud.points[i].x;
    CHECK(differs);
}

TEST_CASE("normalized clouds fit the unit cube and keep all labels") {
    for (ShapeKind kind : {ShapeKind::Plane, ShapeKind::Sphere, ShapeKind::Cylinder, ShapeKind::Box,
                           ShapeKind::Torus, ShapeKind::Composite}) {
        GeneratedCloud g = generate_shape({kind, 600, 0.02, 29});
        REQUIRE(g.cloud.labels.size() == g.cloud.size());
        Aabb box = compute_bbox(g.cloud);
        for (int axis = 0; axis < 3; ++axis) {
            REQUIRE(box.min[axis] >= -1.0 - 1e-12);
            REQUIRE(box.max[axis] <= 1.0 + 1e-12);
        }
        for (int label : g.cloud.labels) {
            REQUIRE(label >= 0);
            REQUIRE(label < g.num_parts);
        }
    }
}

TEST_CASE("composite scenes expose all three part kinds") {
    GeneratedCloud g = generate_shape({ShapeKind::Composite, 2000, 0.0, 31});
    std::set<int> labels(g.cloud.labels.begin(), g.cloud.labels.end());
    CHECK(labels == std::set<int>{0, 1, 2});
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(generate_shape({ShapeKind::Sphere, 0, 0.0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(generate_shape({ShapeKind::Sphere, 10, -0.5, 1}), std::invalid_argument);
    CHECK_THROWS_AS(shape_from_name("pyramid"), std::invalid_argument);
}

}  // TEST_SUITE
