#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lapcomplete/geometry.hpp"

using namespace lapcomplete;

namespace {

PointCloud random_cloud(int n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)});
    return cloud;
}

// independent greedy reference for fps
std::vector<int> fps_reference(const PointCloud& cloud, int m, int seed) {
    std::vector<int> sel{seed};
    std::vector<char> used(static_cast<std::size_t>(cloud.size()), 0);
    used[static_cast<std::size_t>(seed)] = 1;
    while (static_cast<int>(sel.size()) < m) {
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < cloud.size(); ++i) {
            if (used[static_cast<std::size_t>(i)]) continue;
            double min_d = std::numeric_limits<double>::infinity();
            for (int s : sel) min_d = std::min(min_d, squared_distance(cloud[i], cloud[s]));
            if (min_d > best_d) {
                best_d = min_d;
                best = i;
            }
        }
        sel.push_back(best);
        used[static_cast<std::size_t>(best)] = 1;
    }
    return sel;
}

double min_pairwise_distance(const PointCloud& cloud, const std::vector<int>& subset) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < subset.size(); ++i)
        for (std::size_t j = i + 1; j < subset.size(); ++j)
            best = std::min(best, squared_distance(cloud[subset[i]], cloud[subset[j]]));
    return best;
}

const PointCloud kSquareWithCenter{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0.5, 0.5, 0}}};

}  // namespace

TEST_CASE("fps base case returns the seed") {
    CHECK(fps(kSquareWithCenter, 1, 2) == std::vector<int>{2});
}

TEST_CASE("fps exhaustion selects every index") {
    const PointCloud cloud = random_cloud(9, 3);
    const std::vector<int> all = fps(cloud, 9, 0);
    std::vector<int> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 9; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(all == fps_reference(cloud, 9, 0));
}

TEST_CASE("fps on the unit square picks the corners, never the center") {
    const std::vector<int> picked = fps(kSquareWithCenter, 4, 0);
    CHECK(picked == fps_reference(kSquareWithCenter, 4, 0));
    for (int idx : picked) CHECK(idx != 4);
    std::vector<int> sorted = picked;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("fps rejects out-of-range m") {
    CHECK_THROWS_AS(fps(kSquareWithCenter, 0, 0), UsageError);
    CHECK_THROWS_AS(fps(kSquareWithCenter, 6, 0), UsageError);
}

TEST_CASE("fps matches the greedy reference on random clouds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PointCloud cloud = random_cloud(40, 100 + seed);
        CHECK(fps(cloud, 12, 0) == fps_reference(cloud, 12, 0));
    }
}

TEST_CASE("fps indices are distinct even with duplicate points") {
    PointCloud cloud;
    for (int i = 0; i < 6; ++i) cloud.points.push_back({1.0, 2.0, 3.0});
    const std::vector<int> sel = fps(cloud, 6, 0);
    std::vector<int> sorted = sel;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    CHECK(sorted.size() == 6);
}

TEST_CASE("fps spreads better than random subsets") {
    // statistical: in at least 95 of 100 trials the fps subset's min pairwise
    // distance beats a uniformly random subset of the same size
    int wins = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const PointCloud cloud = random_cloud(128, 1000 + static_cast<std::uint64_t>(trial));
        const std::vector<int> by_fps = fps(cloud, 16, 0);
        Rng rng(5000 + static_cast<std::uint64_t>(trial));
        std::vector<int> pool(128);
        for (int i = 0; i < 128; ++i) pool[static_cast<std::size_t>(i)] = i;
        shuffle(pool, rng);
        pool.resize(16);
        if (min_pairwise_distance(cloud, by_fps) >= min_pairwise_distance(cloud, pool))
            ++wins;
    }
    CHECK(wins >= 95);
}

TEST_CASE("knn on collinear points") {
    const PointCloud cloud{{{0, 0, 0}, {1, 0, 0}, {2.5, 0, 0}}};
    const LaplacianGraph g = knn(cloud, 1);
    CHECK(g.row(0)[0] == 1);
    CHECK(g.row(1)[0] == 0);
    CHECK(g.row(2)[0] == 1);
}

TEST_CASE("knn with k = n - 1 lists every other index") {
    const PointCloud cloud = random_cloud(7, 8);
    const LaplacianGraph g = knn(cloud, 6);
    for (int i = 0; i < 7; ++i) {
        std::vector<int> row(g.row(i).begin(), g.row(i).end());
        std::sort(row.begin(), row.end());
        std::vector<int> expect;
        for (int j = 0; j < 7; ++j)
            if (j != i) expect.push_back(j);
        CHECK(row == expect);
    }
}

TEST_CASE("knn ties resolve to the lowest index") {
    const PointCloud cloud{{{5, 5, 5}, {5, 5, 5}, {9, 9, 9}}};
    const LaplacianGraph g = knn(cloud, 1);
    CHECK(g.row(0)[0] == 1);  // distance 0 beats distance to point 2
    CHECK(g.row(1)[0] == 0);
}

TEST_CASE("knn rejects k >= n") {
    const PointCloud cloud = random_cloud(4, 9);
    CHECK_THROWS_AS(knn(cloud, 4), UsageError);
}

TEST_CASE("knn rows sum to one under the uniform weight") {
    const PointCloud cloud = random_cloud(30, 10);
    const LaplacianGraph g = knn(cloud, 7);
    for (int i = 0; i < 30; ++i) {
        double row_weight = 0.0;
        for ([[maybe_unused]] int j : g.row(i)) row_weight += g.weight();
        CHECK(row_weight == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("ball_group with everything inside returns all source indices") {
    const PointCloud source = random_cloud(6, 11);
    const PointCloud query{{source[2]}};
    const std::vector<int> g = ball_group(query, source, 100.0, 6);
    CHECK(g == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("ball_group falls back to the nearest point when the ball is empty") {
    const PointCloud source{{{0, 0, 0}, {0.5, 0, 0}, {9, 9, 9}}};
    const PointCloud query{{{0.55, 0, 0}}};
    const std::vector<int> g = ball_group(query, source, 0.01, 3);
    CHECK(g == std::vector<int>{1, 1, 1});
}

TEST_CASE("ball_group pads with the first in-ball index") {
    const PointCloud source{{{0, 0, 0}, {0.1, 0, 0}, {5, 5, 5}, {6, 6, 6}}};
    const PointCloud query{{{0.05, 0, 0}}};
    const std::vector<int> g = ball_group(query, source, 0.2, 4);
    CHECK(g == std::vector<int>{0, 1, 0, 0});
}

TEST_CASE("chamfer of identical clouds is zero") {
    const PointCloud cloud = random_cloud(20, 12);
    CHECK(chamfer_distance(cloud, cloud) == 0.0);
}

TEST_CASE("chamfer of two singletons") {
    const PointCloud x{{{0, 0, 0}}};
    const PointCloud y{{{3, 4, 0}}};
    CHECK(chamfer_distance(x, y) == doctest::Approx(50.0));
}

TEST_CASE("chamfer with asymmetric sizes") {
    const PointCloud x{{{0, 0, 0}, {2, 0, 0}}};
    const PointCloud y{{{1, 0, 0}}};
    CHECK(chamfer_distance(x, y) == doctest::Approx(2.0));
}

TEST_CASE("chamfer is symmetric, nonnegative, translation invariant") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PointCloud x = random_cloud(24, 20 + seed);
        const PointCloud y = random_cloud(17, 40 + seed);
        const double xy = chamfer_distance(x, y);
        CHECK(xy == chamfer_distance(y, x));
        CHECK(xy >= 0.0);

        PointCloud xt = x, yt = y;
        const Vec3 shift{0.73, -1.4, 2.2};
        for (Vec3& p : xt.points)
            for (int c = 0; c < 3; ++c) p[c] += shift[c];
        for (Vec3& p : yt.points)
            for (int c = 0; c < 3; ++c) p[c] += shift[c];
        CHECK(std::abs(chamfer_distance(xt, yt) - xy) <= 1e-12);
    }
}

TEST_CASE("chamfer zero implies mutual coverage") {
    PointCloud x = random_cloud(10, 60);
    PointCloud y = x;
    std::reverse(y.points.begin(), y.points.end());
    CHECK(chamfer_distance(x, y) == 0.0);
    y.points[0][2] += 0.25;
    CHECK(chamfer_distance(x, y) > 0.0);
}

TEST_CASE("grid nearest neighbors match brute force exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(900 + seed);
        const int nq = 1 + static_cast<int>(rng.below(512));
        const int nt = 1 + static_cast<int>(rng.below(512));
        const PointCloud q = random_cloud(nq, 7000 + seed, -2.0, 2.0);
        const PointCloud t = random_cloud(nt, 8000 + seed, -2.0, 2.0);
        CHECK(nearest_indices_grid(q, t) == nearest_indices_bruteforce(q, t));
    }
    // clustered duplicates exercise the tie rules
    PointCloud dup;
    for (int i = 0; i < 50; ++i) dup.points.push_back({0.5, 0.5, 0.5});
    for (int i = 0; i < 50; ++i) dup.points.push_back({-1.0, 0.0, 0.0});
    const PointCloud q = random_cloud(64, 99);
    CHECK(nearest_indices_grid(q, dup) == nearest_indices_bruteforce(q, dup));
}

TEST_CASE("chamfer_loss gradient flows into both clouds") {
    Parameter x("x", {4, 3}, flat_from_cloud(random_cloud(4, 70)));
    Parameter y("y", {5, 3}, flat_from_cloud(random_cloud(5, 71)));
    auto f = [&](Tape& tape) { return chamfer_loss(tape, tape.leaf(x), tape.leaf(y)); };
    CHECK(finite_diff_check(f, {&x, &y}, 1e-5) <= 1e-4);

    Tape tape;
    Tensor loss = chamfer_loss(tape, tape.leaf(x), tape.leaf(y));
    const PointCloud cx = cloud_from_flat(x.value);
    const PointCloud cy = cloud_from_flat(y.value);
    CHECK(loss.scalar() == doctest::Approx(chamfer_distance(cx, cy)).epsilon(1e-12));
}

TEST_CASE("chamfer_loss rejects empty-shaped operands") {
    Tape tape;
    Tensor bad = tape.full({3, 2}, 1.0);
    Tensor good = tape.full({3, 3}, 1.0);
    CHECK_THROWS_AS(chamfer_loss(tape, bad, good), ShapeError);
}

TEST_CASE("lexicographic seed rule") {
    const PointCloud cloud{{{1, 0, 0}, {0, 5, 5}, {0, 5, 4}, {2, 0, 0}}};
    CHECK(lexicographic_min_index(cloud) == 2);
}
