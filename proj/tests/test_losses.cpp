#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lapcomplete/losses.hpp"

using namespace lapcomplete;

namespace {

PointCloud random_cloud(int n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return cloud;
}

Parameter cloud_param(const std::string& name, const PointCloud& c) {
    return Parameter(name, Shape{c.size(), 3}, flat_from_cloud(c));
}

Tensor cloud_const(Tape& tape, const PointCloud& c) { return tape.constant_like(c.points); }

}  // namespace

TEST_CASE("reconstruction loss with lambda 0 ignores the final stage") {
    const PointCloud ps = random_cloud(10, 1);
    const PointCloud po = random_cloud(10, 2);
    const PointCloud gt = random_cloud(12, 3);
    Tape tape;
    Tensor with_zero = reconstruction_loss(tape, cloud_const(tape, ps),
                                           cloud_const(tape, po), cloud_const(tape, gt), 0.0);
    CHECK(with_zero.scalar() == doctest::Approx(chamfer_distance(ps, gt)).epsilon(1e-12));
}

TEST_CASE("reconstruction loss of a perfect pass is zero") {
    const PointCloud gt = random_cloud(9, 4);
    Tape tape;
    Tensor loss = reconstruction_loss(tape, cloud_const(tape, gt), cloud_const(tape, gt),
                                      cloud_const(tape, gt), 3.0);
    CHECK(loss.scalar() == 0.0);
}

TEST_CASE("reconstruction loss arithmetic") {
    // both chamfer terms equal 2 -> 2 + 3 * 2 = 8
    const PointCloud a{{{0, 0, 0}, {2, 0, 0}}};
    const PointCloud b{{{1, 0, 0}}};
    REQUIRE(chamfer_distance(a, b) == doctest::Approx(2.0));
    Tape tape;
    Tensor loss = reconstruction_loss(tape, cloud_const(tape, a), cloud_const(tape, a),
                                      cloud_const(tape, b), 3.0);
    CHECK(loss.scalar() == doctest::Approx(8.0));
}

TEST_CASE("matching loss is zero iff controls are unchanged") {
    const PointCloud before = random_cloud(8, 5);
    Tape tape;
    Tensor zero = matching_loss(tape, cloud_const(tape, before), cloud_const(tape, before));
    CHECK(zero.scalar() == 0.0);

    PointCloud moved = before;
    moved.points[3][1] += 1e-7;  // any nonzero displacement counts
    Tensor nonzero = matching_loss(tape, cloud_const(tape, before), cloud_const(tape, moved));
    CHECK(nonzero.scalar() > 0.0);
}

TEST_CASE("matching loss small-displacement branch") {
    // one coordinate displaced by 0.1 < 1/sigma^2: 0.5*(2*0.1)^2 / 3 coords
    const PointCloud before{{{1, 1, 1}}};
    PointCloud after = before;
    after.points[0][0] += 0.1;
    Tape tape;
    Tensor loss = matching_loss(tape, cloud_const(tape, before), cloud_const(tape, after));
    CHECK(loss.scalar() == doctest::Approx(0.02 / 3.0).epsilon(1e-12));
}

TEST_CASE("matching loss linear branch") {
    // displacement 1.0 >= 1/sigma^2: (1 - 0.125) / 3
    const PointCloud before{{{0, 0, 0}}};
    PointCloud after = before;
    after.points[0][2] = 1.0;
    Tape tape;
    Tensor loss = matching_loss(tape, cloud_const(tape, before), cloud_const(tape, after));
    CHECK(loss.scalar() == doctest::Approx(0.875 / 3.0).epsilon(1e-12));
}

TEST_CASE("matching loss rejects size mismatches") {
    Tape tape;
    Tensor a = tape.full({3, 3}, 0.0);
    Tensor b = tape.full({4, 3}, 0.0);
    CHECK_THROWS_AS(matching_loss(tape, a, b), ShapeError);
}

TEST_CASE("per-vertex shape loss vanishes at a symmetric hexagon center") {
    PointCloud cloud;
    cloud.points.push_back({0, 0, 0});  // center
    const double s = std::sqrt(3.0) / 2.0;
    cloud.points.push_back({1, 0, 0});
    cloud.points.push_back({0.5, s, 0});
    cloud.points.push_back({-0.5, s, 0});
    cloud.points.push_back({-1, 0, 0});
    cloud.points.push_back({-0.5, -s, 0});
    cloud.points.push_back({0.5, -s, 0});
    const LaplacianGraph graph = knn(cloud, 6);  // center's row is the 6 vertices

    Tape tape;
    Tensor loss = shape_preserving_loss(tape, graph, cloud_const(tape, cloud),
                                        ShapeLossForm::kPerVertex);
    // isolate the center's contribution: recompute with only vertex rows
    // changed is awkward, so check the center's umbrella vector directly
    // against the analytic value instead: it cancels to ~0
    // (the total loss is dominated by the ring vertices, which is fine here)
    CHECK(loss.scalar() >= 0.0);

    // direct check of the center vertex: its 6 unit-length edges cancel
    double ux = 0, uy = 0, uz = 0;
    double e = 0;
    for (int j : graph.row(0)) e += std::sqrt(squared_distance(cloud[0], cloud[j]));
    for (int j : graph.row(0)) {
        const double len = std::sqrt(squared_distance(cloud[0], cloud[j]));
        ux += 2 * (cloud[0][0] - cloud[j][0]) / (e * len);
        uy += 2 * (cloud[0][1] - cloud[j][1]) / (e * len);
        uz += 2 * (cloud[0][2] - cloud[j][2]) / (e * len);
    }
    CHECK(std::sqrt(ux * ux + uy * uy + uz * uz) <= 1e-9);
}

TEST_CASE("per-vertex shape loss single-neighbor closed form") {
    // one point with one neighbor at distance d: e = d, ||u|| = 2/d
    const double d = 0.8;
    const PointCloud cloud{{{0, 0, 0}, {d, 0, 0}}};
    LaplacianGraph graph;
    graph.k = 1;
    graph.neighbors = {1, 0};
    Tape tape;
    Tensor loss = shape_preserving_loss(tape, graph, cloud_const(tape, cloud),
                                        ShapeLossForm::kPerVertex);
    // both points contribute 2/d
    CHECK(loss.scalar() == doctest::Approx(2.0 * (2.0 / d)).epsilon(1e-12));
}

TEST_CASE("per-vertex shape loss is translation invariant") {
    const PointCloud base = random_cloud(20, 31);
    const LaplacianGraph graph = knn(base, 4);
    PointCloud moved = base;
    for (Vec3& p : moved.points) {
        p[0] += 11.0;
        p[1] -= 3.5;
        p[2] += 0.25;
    }
    Tape tape;
    const double a = shape_preserving_loss(tape, graph, cloud_const(tape, base),
                                           ShapeLossForm::kPerVertex)
                         .scalar();
    const double b = shape_preserving_loss(tape, graph, cloud_const(tape, moved),
                                           ShapeLossForm::kPerVertex)
                         .scalar();
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)));
}

TEST_CASE("global shape loss is exactly zero on symmetric edge sets") {
    const PointCloud cloud = random_cloud(12, 32);
    // build a symmetric graph: k = 2 ring, both directions present
    LaplacianGraph graph;
    graph.k = 2;
    const int n = cloud.size();
    graph.neighbors.resize(static_cast<std::size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        graph.neighbors[static_cast<std::size_t>(i) * 2] = (i + 1) % n;
        graph.neighbors[static_cast<std::size_t>(i) * 2 + 1] = (i + n - 1) % n;
    }
    Tape tape;
    Tensor loss =
        shape_preserving_loss(tape, graph, cloud_const(tape, cloud), ShapeLossForm::kGlobal);
    CHECK(loss.scalar() == 0.0);  // exact, not approximate
}

TEST_CASE("global shape loss is positive on one-way edges") {
    const PointCloud cloud{{{0, 0, 0}, {1, 0, 0}, {0, 2, 0}}};
    LaplacianGraph graph;
    graph.k = 1;
    graph.neighbors = {1, 2, 0};  // a 3-cycle, nothing reciprocated
    Tape tape;
    Tensor loss =
        shape_preserving_loss(tape, graph, cloud_const(tape, cloud), ShapeLossForm::kGlobal);
    CHECK(loss.scalar() > 0.0);
}

TEST_CASE("shape loss guards coincident neighbors") {
    PointCloud cloud{{{0, 0, 0}, {0, 0, 0}, {1, 0, 0}}};  // first two coincide
    LaplacianGraph graph;
    graph.k = 2;
    graph.neighbors = {1, 2, 0, 2, 0, 1};
    Tape tape;
    for (ShapeLossForm form : {ShapeLossForm::kPerVertex, ShapeLossForm::kGlobal}) {
        Tensor loss = shape_preserving_loss(tape, graph, cloud_const(tape, cloud), form);
        CHECK(std::isfinite(loss.scalar()));
    }
}

TEST_CASE("shape losses pass finite-difference checks") {
    const PointCloud base = random_cloud(16, 33);
    const LaplacianGraph graph = knn(base, 4);
    Parameter positions = cloud_param("pos", random_cloud(16, 34));
    auto per_vertex = [&](Tape& tape) {
        return shape_preserving_loss(tape, graph, tape.leaf(positions),
                                     ShapeLossForm::kPerVertex);
    };
    CHECK(finite_diff_check(per_vertex, {&positions}, 1e-5) <= 1e-3);
    auto global = [&](Tape& tape) {
        return shape_preserving_loss(tape, graph, tape.leaf(positions),
                                     ShapeLossForm::kGlobal);
    };
    CHECK(finite_diff_check(global, {&positions}, 1e-5) <= 1e-3);
}

TEST_CASE("matching loss passes a finite-difference check") {
    Parameter before = cloud_param("before", random_cloud(12, 35));
    Parameter after = cloud_param("after", random_cloud(12, 36));
    auto f = [&](Tape& tape) {
        return matching_loss(tape, tape.leaf(before), tape.leaf(after));
    };
    CHECK(finite_diff_check(f, {&before, &after}, 1e-5) <= 1e-3);
}

TEST_CASE("total loss composition and report identity") {
    LossWeights weights;
    weights.alpha = 1000.0;
    weights.beta = 0.5;
    weights.lambda = 3.0;
    Tape tape;
    Tensor ci = tape.scalar_const(1e-3);
    Tensor cf = tape.scalar_const(2e-3);
    Tensor match = tape.scalar_const(0.0);
    Tensor shape = tape.scalar_const(0.0);
    LossTerms terms = total_loss(tape, ci, cf, match, shape, weights);
    const LossReport report = terms.report(weights);
    CHECK(report.total == doctest::Approx(1000.0 * (1e-3 + 3.0 * 2e-3)).epsilon(1e-12));
    CHECK(std::abs(report.total - report.recombined(weights)) <= 1e-9);

    // all-zero components -> zero total
    Tensor z = tape.scalar_const(0.0);
    CHECK(total_loss(tape, z, z, z, z, weights).total.scalar() == 0.0);

    // recons 1e-3 with default weights -> 1.0
    LossWeights defaults;
    LossTerms one = total_loss(tape, tape.scalar_const(1e-3), z, z, z, defaults);
    CHECK(one.total.scalar() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loss weights reject negatives") {
    LossWeights weights;
    weights.beta = -0.5;
    CHECK_THROWS_AS(weights.validate(), UsageError);
}
