#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "lapcomplete/lsq_oracle.hpp"

using namespace lapcomplete;

namespace {

PointCloud random_cloud(int n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return cloud;
}

double max_point_error(const PointCloud& a, const PointCloud& b) {
    double worst = 0.0;
    for (int i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::sqrt(squared_distance(a[i], b[i])));
    return worst;
}

}  // namespace

TEST_CASE("laplacian coordinates vanish at neighbor centroids") {
    // middle point exactly at the mean of its two neighbors
    const PointCloud cloud{{{0, 0, 0}, {1, 1, -2}, {2, 2, -4}}};
    LaplacianGraph graph;
    graph.k = 2;
    graph.neighbors = {1, 2, 0, 2, 0, 1};
    const auto delta = laplacian_coordinates(cloud, graph);
    for (int c = 0; c < 3; ++c) CHECK(delta[1][c] == doctest::Approx(0.0));
}

TEST_CASE("laplacian coordinates of the 0-1-3 chain") {
    const PointCloud cloud{{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}};
    LaplacianGraph graph;
    graph.k = 2;
    graph.neighbors = {1, 2, 0, 2, 0, 1};
    const auto delta = laplacian_coordinates(cloud, graph);
    CHECK(delta[1][0] == doctest::Approx(-0.5));
    CHECK(delta[1][1] == doctest::Approx(0.0));
    CHECK(delta[1][2] == doctest::Approx(0.0));
}

TEST_CASE("laplacian coordinates are translation invariant") {
    const PointCloud cloud = random_cloud(15, 1);
    const LaplacianGraph graph = knn(cloud, 4);
    PointCloud moved = cloud;
    for (Vec3& p : moved.points) {
        p[0] += 5;
        p[1] -= 2;
        p[2] += 0.5;
    }
    const auto a = laplacian_coordinates(cloud, graph);
    const auto b = laplacian_coordinates(moved, graph);
    for (int i = 0; i < cloud.size(); ++i)
        CHECK(std::sqrt(squared_distance(a[static_cast<std::size_t>(i)],
                                         b[static_cast<std::size_t>(i)])) <= 1e-12);
}

TEST_CASE("full-control recovery is exact") {
    const PointCloud original = random_cloud(24, 2);
    LsqSystem system;
    system.n = original.size();
    system.graph = knn(original, 5);
    system.target_laplacians = laplacian_coordinates(original, system.graph);
    for (int i = 0; i < original.size(); ++i) {
        system.control_indices.push_back(i);
        system.control_targets.push_back(original[i]);
    }
    const PointCloud solved = lsq_solve(system);
    CHECK(max_point_error(solved, original) <= 1e-9);
}

TEST_CASE("three point chain pulls the middle to the midpoint") {
    // endpoints pinned at 0 and 2; middle starts off-axis but its target
    // laplacian says "be the average of your neighbors"
    const PointCloud start{{{0, 0, 0}, {0.7, 0.3, -0.1}, {2, 0, 0}}};
    LsqSystem system;
    system.n = 3;
    system.graph.k = 2;
    system.graph.neighbors = {1, 2, 0, 2, 0, 1};
    system.control_indices = {0, 2};
    system.control_targets = {{0, 0, 0}, {2, 0, 0}};
    system.control_weight = 1e3;
    // deltas from the straight chain 0-1-2
    const PointCloud straight{{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}};
    system.target_laplacians = laplacian_coordinates(straight, system.graph);
    const PointCloud solved = lsq_solve(system);
    CHECK(std::abs(solved[1][0] - 1.0) <= 1e-9);
    CHECK(std::abs(solved[1][1]) <= 1e-9);
    CHECK(std::abs(solved[1][2]) <= 1e-9);
    CHECK(max_point_error(solved, straight) <= 1e-9);
}

TEST_CASE("no controls leaves a translation null space and trips the rank check") {
    const PointCloud cloud = random_cloud(12, 3);
    LsqSystem system;
    system.n = cloud.size();
    system.graph = knn(cloud, 3);
    system.target_laplacians = laplacian_coordinates(cloud, system.graph);
    CHECK_THROWS_AS(lsq_solve(system), NumericError);
}

TEST_CASE("control residual is non-increasing in the control weight") {
    // controls consistent with a real cloud, laplacian targets from another:
    // the two sides fight, and more weight always serves the controls better
    const PointCloud truth = random_cloud(20, 4);
    const PointCloud warped = random_cloud(20, 5);
    const LaplacianGraph graph = knn(truth, 4);
    LsqSystem system;
    system.n = truth.size();
    system.graph = graph;
    system.target_laplacians = laplacian_coordinates(warped, graph);
    for (int i = 0; i < truth.size(); i += 3) {
        system.control_indices.push_back(i);
        system.control_targets.push_back(truth[i]);
    }
    double previous = std::numeric_limits<double>::infinity();
    for (double w : {1.0, 10.0, 100.0, 1000.0}) {
        system.control_weight = w;
        const PointCloud solved = lsq_solve(system);
        const double residual = control_residual(system, solved);
        CHECK(residual <= previous + 1e-12);
        previous = residual;
    }
}

TEST_CASE("growing a consistent control set never hurts the chamfer distance") {
    const PointCloud truth = random_cloud(30, 6);
    const LaplacianGraph graph = knn(truth, 5);
    const auto delta = laplacian_coordinates(truth, graph);
    double previous = std::numeric_limits<double>::infinity();
    for (int controls : {3, 9, 15, 30}) {
        LsqSystem system;
        system.n = truth.size();
        system.graph = graph;
        system.target_laplacians = delta;
        for (int i = 0; i < controls; ++i) {
            system.control_indices.push_back(i);
            system.control_targets.push_back(truth[i]);
        }
        const PointCloud solved = lsq_solve(system);
        const double cd = chamfer_distance(solved, truth);
        CHECK(cd <= previous + 1e-9);
        previous = cd;
    }
}

TEST_CASE("lsq system validation") {
    LsqSystem system;
    system.n = 0;
    CHECK_THROWS_AS(lsq_solve(system), UsageError);

    const PointCloud cloud = random_cloud(5, 7);
    system.n = 5;
    system.graph = knn(cloud, 2);
    system.target_laplacians = laplacian_coordinates(cloud, system.graph);
    system.control_indices = {1, 1};
    system.control_targets = {cloud[1], cloud[1]};
    CHECK_THROWS_AS(lsq_solve(system), UsageError);  // duplicate control
}
