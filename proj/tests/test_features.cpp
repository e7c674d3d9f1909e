#include <doctest.h>

#include <algorithm>

#include "mortonnet/features.hpp"
#include "test_util.hpp"

using namespace mortonnet;

namespace {

struct Pipeline {
    PointCloud cloud;
    QuantSpec spec;
    SpatialIndex index;
    Model model;
    SequenceGenConfig gen;

    Pipeline(PointCloud c, int k, int hidden, std::uint64_t seed)
        : cloud(std::move(c)), spec{12, compute_bbox(cloud)},
          index(cloud, SpatialIndex::default_cell_size(cloud)) {
        ModelConfig mcfg;
        mcfg.k = k;
        mcfg.enc_layers = 2;
        mcfg.enc_width = 8;
        mcfg.gru_layers = 3;
        mcfg.hidden = hidden;
        mcfg.init_seed = seed;
        model = init_model(mcfg);
        gen = SequenceGenConfig{k, 3, OrderingScheme::morton(), seed};
    }
};

bool features_bit_equal(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.valid != b.valid) return false;
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) return false;
    for (Eigen::Index i = 0; i < a.values.size(); ++i)
        if (a.values.data()[i] != b.values.data()[i]) return false;
    return true;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("pooling one state returns it unchanged") {
    Eigen::MatrixXd states(1, 4);
    states << 0.3, -0.2, 0.9, 0.0;
    CHECK(pool_states(states).transpose() == states.row(0));
    CHECK_THROWS_AS(pool_states(Eigen::MatrixXd(0, 4)), std::invalid_argument);
}

TEST_CASE("pooling takes the element-wise maximum") {
    Eigen::MatrixXd states(2, 2);
    states << 1, -2, 0, 5;
    Eigen::VectorXd pooled = pool_states(states);
    CHECK(pooled(0) == 1.0);
    CHECK(pooled(1) == 5.0);
}

TEST_CASE("pooling is invariant to row order and duplication") {
    Rng rng(8);
    Eigen::MatrixXd states(5, 7);
    for (Eigen::Index i = 0; i < states.size(); ++i)
        states.data()[i] = 2.0 * rng.next_double() - 1.0;
    Eigen::VectorXd base = pool_states(states);

    Eigen::MatrixXd shuffled = states;
    shuffled.row(0).swap(shuffled.row(4));
    shuffled.row(1).swap(shuffled.row(3));
    CHECK(pool_states(shuffled) == base);

    Eigen::MatrixXd duplicated(6, 7);
    duplicated.topRows(5) = states;
    duplicated.row(5) = states.row(2);
    CHECK(pool_states(duplicated) == base);
}

TEST_CASE("m=1 features equal the single sequence's final state") {
    Pipeline p(testutil::random_cloud(120, 5), 5, 16, 3);
    p.gen.m = 1;
    FeatureMatrix features = extract_features(p.model, p.cloud, p.gen, p.index, p.spec);

    std::vector<std::uint32_t> ranks = ordering_ranks(p.cloud, p.gen.scheme, p.spec);
    std::uint32_t point = 60;
    auto seqs = sequences_for_point(p.cloud, p.gen, p.index, ranks, point);
    REQUIRE(seqs.size() == 1);
    TrainingSample sample = normalize_sequence(p.cloud, seqs[0]);

    Model local = p.model;
    Eigen::MatrixXd encoded = encoder_forward(sample.inputs, local, Mode::Eval);
    Eigen::MatrixXd h = gru_forward(encoded, 1, local, Mode::Eval);
    CHECK(features.valid[point] == 1);
    CHECK(features.values.row(point) == h.row(0));
}

TEST_CASE("features are deterministic and thread-count independent") {
    Pipeline p(testutil::random_cloud(150, 9), 5, 16, 7);
    FeatureMatrix one = extract_features(p.model, p.cloud, p.gen, p.index, p.spec, 1);
    FeatureMatrix again = extract_features(p.model, p.cloud, p.gen, p.index, p.spec, 1);
    FeatureMatrix four = extract_features(p.model, p.cloud, p.gen, p.index, p.spec, 4);
    CHECK(features_bit_equal(one, again));
    CHECK(features_bit_equal(one, four));
}

TEST_CASE("exactly the curve minimum is masked") {
    Pipeline p(testutil::random_cloud(100, 11), 5, 16, 1);
    FeatureMatrix features = extract_features(p.model, p.cloud, p.gen, p.index, p.spec);
    CHECK(features.count_valid() == p.cloud.size() - 1);

    std::vector<std::uint32_t> perm = order_points(p.cloud, p.gen.scheme, p.spec);
    std::uint32_t curve_min = perm[0];
    CHECK(features.valid[curve_min] == 0);
    CHECK(features.values.row(curve_min).isZero(0.0));
}

TEST_CASE("valid features lie strictly inside (-1, 1)") {
    Pipeline p(testutil::random_cloud(100, 13), 5, 16, 2);
    FeatureMatrix features = extract_features(p.model, p.cloud, p.gen, p.index, p.spec);
    for (std::uint32_t i = 0; i < features.valid.size(); ++i)
        if (features.valid[i]) REQUIRE(features.values.row(i).array().abs().maxCoeff() < 1.0);
}

TEST_CASE("translating the cloud leaves features bit-identical") {
    PointCloud cloud = testutil::random_cloud(130, 17);
    testutil::snap_to_lattice(cloud);
    Pipeline a(cloud, 5, 16, 4);

    PointCloud shifted = cloud;
    for (Point3& q : shifted.points) q = q + Point3{10, -3, 7};
    Pipeline b(std::move(shifted), 5, 16, 4);

    FeatureMatrix fa = extract_features(a.model, a.cloud, a.gen, a.index, a.spec);
    FeatureMatrix fb = extract_features(b.model, b.cloud, b.gen, b.index, b.spec);
    CHECK(features_bit_equal(fa, fb));
}

TEST_CASE("k mismatch between model and config is an error") {
    Pipeline p(testutil::random_cloud(80, 19), 5, 16, 5);
    p.gen.k = 6;
    CHECK_THROWS_AS(extract_features(p.model, p.cloud, p.gen, p.index, p.spec),
                    std::invalid_argument);
}

TEST_CASE("coordinate features tile xyz") {
    PointCloud cloud = testutil::random_cloud(10, 23);
    FeatureMatrix f = coordinate_features(cloud, 8);
    CHECK(f.values.cols() == 8);
    CHECK(f.count_valid() == 10);
    CHECK(f.values(3, 0) == cloud.points[3].x);
    CHECK(f.values(3, 4) == cloud.points[3].y);
    CHECK(f.values(3, 7) == cloud.points[3].y);
}

}  // TEST_SUITE
