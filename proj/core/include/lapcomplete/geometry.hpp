#pragma once

#include <span>
#include <utility>
#include <vector>

#include "lapcomplete/common.hpp"
#include "lapcomplete/tensor.hpp"

namespace lapcomplete {

// Ordered list of 3D points in unitless model coordinates.
struct PointCloud {
    std::vector<Vec3> points;

    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

    int size() const { return static_cast<int>(points.size()); }
    bool empty() const { return points.empty(); }
    Vec3& operator[](int i) { return points[static_cast<std::size_t>(i)]; }
    const Vec3& operator[](int i) const { return points[static_cast<std::size_t>(i)]; }

    // throws UsageError on non-finite coordinates or an empty cloud
    void validate() const;

    std::pair<Vec3, Vec3> bounding_box() const;
    double bounding_box_diagonal() const;
};

PointCloud cloud_from_flat(const std::vector<double>& flat);
std::vector<double> flat_from_cloud(const PointCloud& cloud);

double squared_distance(const Vec3& a, const Vec3& b);

// Fixed-degree one-way adjacency with uniform 1/k edge weights.
struct LaplacianGraph {
    int k = 0;
    std::vector<int> neighbors;  // n * k, row-major

    int size() const { return k == 0 ? 0 : static_cast<int>(neighbors.size()) / k; }
    double weight() const { return 1.0 / k; }
    std::span<const int> row(int i) const {
        return {neighbors.data() + static_cast<std::size_t>(i) * k,
                static_cast<std::size_t>(k)};
    }
};

// Greedy farthest point sampling from an explicit seed. Each round picks the
// point with the largest min squared distance to the selected set; ties go to
// the lowest index. Returns m distinct indices in selection order.
std::vector<int> fps(const PointCloud& cloud, int m, int seed_index);

// Index of the lexicographically smallest (x, y, z) point; the default FPS
// seed rule, which makes downstream results permutation invariant.
int lexicographic_min_index(const PointCloud& cloud);

// k nearest other points per point, squared euclidean, ties to lowest index.
LaplacianGraph knn(const PointCloud& cloud, int k);

// For each query, up to m source indices with squared distance <= radius^2,
// scanned in ascending index order. Short lists are padded by repeating the
// first hit; a query with no hit gets its nearest source index m times.
// Returns |queries| * m indices, row-major.
std::vector<int> ball_group(const PointCloud& queries, const PointCloud& source,
                            double radius, int m);

// Index into `target` of the nearest target point for every query point.
// Both paths break distance ties by lowest index and agree bit-exactly.
std::vector<int> nearest_indices(const PointCloud& queries, const PointCloud& target);
std::vector<int> nearest_indices_bruteforce(const PointCloud& queries,
                                            const PointCloud& target);
std::vector<int> nearest_indices_grid(const PointCloud& queries, const PointCloud& target);

// Bidirectional mean of squared nearest-neighbor distances.
double chamfer_distance(const PointCloud& x, const PointCloud& y);

// The two directional terms (x->y, y->x); chamfer_distance is their sum.
std::pair<double, double> chamfer_terms(const PointCloud& x, const PointCloud& y);

// Differentiable Chamfer between (n, 3) tensors. The nearest-neighbor
// assignment is recomputed from current values and held constant for the
// gradient.
Tensor chamfer_loss(Tape& tape, Tensor x, Tensor y);

PointCloud cloud_from_tensor(const Tensor& t);

}  // namespace lapcomplete
