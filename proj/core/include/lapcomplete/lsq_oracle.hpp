#pragma once

#include <vector>

#include "lapcomplete/geometry.hpp"

namespace lapcomplete {

// Classical least-squares Laplacian deformation with soft positional
// constraints: minimize ||L x - delta||^2 + w^2 ||x_c - target_c||^2 per
// coordinate, L = I - (1/k) * adjacency.
struct LsqSystem {
    int n = 0;
    LaplacianGraph graph;
    std::vector<int> control_indices;
    std::vector<Vec3> control_targets;
    double control_weight = 1e3;
    std::vector<Vec3> target_laplacians;  // desired delta per point

    void validate() const;
};

// delta_i = p_i - mean of graph neighbors of i.
std::vector<Vec3> laplacian_coordinates(const PointCloud& cloud,
                                        const LaplacianGraph& graph);

// Direct normal-equation solve, one shared SPD factorization for the three
// coordinates. Throws NumericError naming the coordinate when the stacked
// system is rank deficient.
PointCloud lsq_solve(const LsqSystem& system);

// Sum over controls of ||x_c - target_c||^2 at the given positions; the
// quantity the control weight presses on.
double control_residual(const LsqSystem& system, const PointCloud& solution);

// Sum over points of ||(L x)_i - delta_i||^2.
double laplacian_residual(const LsqSystem& system, const PointCloud& solution);

}  // namespace lapcomplete
