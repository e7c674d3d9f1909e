#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mortonnet/neighborhood.hpp"
#include "test_util.hpp"

using namespace mortonnet;

TEST_SUITE("neighborhood") {

TEST_CASE("index over one point has one occupied cell") {
    PointCloud cloud;
    cloud.points = {{0.3, 0.4, 0.5}};
    SpatialIndex index(cloud, 0.1);
    CHECK(index.occupied_cells() == 1);
}

TEST_CASE("unit cube corners land in distinct half-open cells") {
    PointCloud cloud;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            for (int z = 0; z < 2; ++z)
                cloud.points.push_back({double(x), double(y), double(z)});
    SpatialIndex index(cloud, 1.0);
    CHECK(index.occupied_cells() == 8);
}

TEST_CASE("bucket population partitions the cloud") {
    PointCloud cloud = testutil::random_cloud(1000, 21);
    SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
    // a radius beyond the cloud diameter must return every index exactly once
    std::vector<std::uint32_t> all = index.radius_query({0, 0, 0}, 10.0);
    CHECK(all.size() == 1000);
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
}

TEST_CASE("index construction rejects bad input") {
    PointCloud cloud = testutil::random_cloud(10, 1);
    CHECK_THROWS_AS(SpatialIndex(PointCloud{}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SpatialIndex(cloud, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(SpatialIndex(cloud, -1.0), std::invalid_argument);
}

TEST_CASE("radius zero returns the point itself and exact duplicates") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {0.5, 0, 0}, {0, 0, 0}};
    SpatialIndex index(cloud, 0.25);
    CHECK(index.radius_query({0, 0, 0}, 0.0) == std::vector<std::uint32_t>{0, 2});
    CHECK_THROWS_AS(index.radius_query({0, 0, 0}, -0.1), std::invalid_argument);
}

TEST_CASE("radius query equals the brute-force filter") {
    PointCloud cloud = testutil::random_cloud(200, 77);
    SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Point3 center{2 * rng.next_double() - 1, 2 * rng.next_double() - 1, 2 * rng.next_double() - 1};
        double r = 0.3 * rng.next_double() + 0.05;
        CHECK(index.radius_query(center, r) == testutil::brute_radius_filter(cloud, center, r));
    }
}

TEST_CASE("radius query results grow with the radius") {
    PointCloud cloud = testutil::random_cloud(300, 13);
    SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
    Point3 center{0.1, -0.2, 0.05};
    std::vector<std::uint32_t> prev;
    for (double r = 0.05; r < 1.0; r += 0.1) {
        std::vector<std::uint32_t> cur = index.radius_query(center, r);
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = std::move(cur);
    }
}

TEST_CASE("adaptive support on collinear points") {
    PointCloud cloud;
    for (int x = 0; x <= 10; ++x) cloud.points.push_back({double(x), 0, 0});
    SpatialIndex index(cloud, 1.0);
    SupportSet s = adaptive_support(index, 0, 2);
    CHECK(s.radius == doctest::Approx(4.0));
    CHECK(s.member_indices == std::vector<std::uint32_t>{1, 2, 3, 4});
}

TEST_CASE("five points with k=2 force the full support") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
    SpatialIndex index(cloud, 0.5);
    SupportSet s = adaptive_support(index, 0, 2);
    CHECK(s.member_indices == std::vector<std::uint32_t>{1, 2, 3, 4});
    CHECK_THROWS_AS(adaptive_support(index, 0, 3), std::invalid_argument);
}

TEST_CASE("support radius equals the brute-force 2k-th neighbor distance") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        PointCloud cloud = testutil::random_cloud(500, seed);
        SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
        Rng rng(seed * 31 + 1);
        for (int trial = 0; trial < 20; ++trial) {
            std::uint32_t center = static_cast<std::uint32_t>(rng.next_below(cloud.size()));
            int k = 20;
            SupportSet s = adaptive_support(index, center, k);
            std::vector<double> d2 = testutil::brute_squared_distances(cloud, center);
            REQUIRE(s.radius == std::sqrt(d2[2 * k - 1]));

            std::vector<std::uint32_t> expected;
            for (std::uint32_t i = 0; i < cloud.size(); ++i)
                if (i != center &&
                    squared_distance(cloud.points[i], cloud.points[center]) <= d2[2 * k - 1])
                    expected.push_back(i);
            REQUIRE(s.member_indices == expected);
            REQUIRE(s.member_indices.size() >= 2 * static_cast<std::size_t>(k));
        }
    }
}

TEST_CASE("support radius is minimal") {
    PointCloud cloud = testutil::random_cloud(300, 9);
    SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
    int k = 10;
    SupportSet s = adaptive_support(index, 17, k);
    std::size_t below = 0;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
        if (i != 17 && squared_distance(cloud.points[i], cloud.points[17]) < s.radius * s.radius)
            ++below;
    CHECK(below < 2 * static_cast<std::size_t>(k));
}

TEST_CASE("index build is invariant to point order") {
    PointCloud cloud = testutil::random_cloud(150, 31);
    PointCloud reversed;
    reversed.points.assign(cloud.points.rbegin(), cloud.points.rend());

    SpatialIndex a(cloud, 0.2);
    SpatialIndex b(reversed, 0.2);
    Point3 center{0.0, 0.1, -0.3};
    auto qa = a.radius_query(center, 0.4);
    auto qb = b.radius_query(center, 0.4);
    // map reversed ids back to the original labels
    for (std::uint32_t& i : qb) i = static_cast<std::uint32_t>(cloud.size()) - 1 - i;
    std::sort(qb.begin(), qb.end());
    CHECK(qa == qb);
}

}  // TEST_SUITE
