#include "lapcomplete/lsq_oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace lapcomplete {

void LsqSystem::validate() const {
    if (n < 1) throw UsageError("lsq: system has no points");
    if (graph.size() != n) throw UsageError("lsq: graph size does not match point count");
    if (control_indices.size() != control_targets.size())
        throw UsageError("lsq: control index/target counts differ");
    if (static_cast<int>(target_laplacians.size()) != n)
        throw UsageError("lsq: need one target laplacian per point");
    if (!(control_weight > 0.0)) throw UsageError("lsq: control weight must be > 0");
    std::unordered_set<int> seen;
    for (int c : control_indices) {
        if (c < 0 || c >= n) throw UsageError("lsq: control index out of range");
        if (!seen.insert(c).second) throw UsageError("lsq: duplicate control index");
    }
}

std::vector<Vec3> laplacian_coordinates(const PointCloud& cloud,
                                        const LaplacianGraph& graph) {
    cloud.validate();
    if (graph.size() != cloud.size())
        throw UsageError("laplacian_coordinates: graph size does not match cloud");
    std::vector<Vec3> delta(static_cast<std::size_t>(cloud.size()));
    const double w = graph.weight();
    for (int i = 0; i < cloud.size(); ++i) {
        Vec3 acc{0, 0, 0};
        for (int j : graph.row(i))
            for (int c = 0; c < 3; ++c) acc[c] += cloud[j][c];
        for (int c = 0; c < 3; ++c)
            delta[static_cast<std::size_t>(i)][c] = cloud[i][c] - w * acc[c];
    }
    return delta;
}

PointCloud lsq_solve(const LsqSystem& system) {
    system.validate();
    const int n = system.n;

    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n);
    const double coeff = -system.graph.weight();
    for (int i = 0; i < n; ++i)
        for (int j : system.graph.row(i)) lap(i, j) += coeff;

    // normal matrix: L^T L + w^2 * diag(control indicator)
    Eigen::MatrixXd normal = lap.transpose() * lap;
    const double w2 = system.control_weight * system.control_weight;
    for (int c : system.control_indices) normal(c, c) += w2;

    Eigen::LDLT<Eigen::MatrixXd> factor(normal);
    const auto& d = factor.vectorD();
    const double dmax = d.maxCoeff();
    if (factor.info() != Eigen::Success || dmax <= 0.0 ||
        d.minCoeff() <= dmax * 1e-12 * n) {
        throw NumericError(
            "lsq_solve: rank-deficient normal equations (coordinates x, y, z); add "
            "control points or check graph connectivity");
    }

    PointCloud out;
    out.points.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd delta(n);
        for (int i = 0; i < n; ++i)
            delta(i) = system.target_laplacians[static_cast<std::size_t>(i)][c];
        rhs = lap.transpose() * delta;
        for (std::size_t ci = 0; ci < system.control_indices.size(); ++ci)
            rhs(system.control_indices[ci]) += w2 * system.control_targets[ci][c];
        Eigen::VectorXd x = factor.solve(rhs);
        for (int i = 0; i < n; ++i) out.points[static_cast<std::size_t>(i)][c] = x(i);
    }
    return out;
}

double control_residual(const LsqSystem& system, const PointCloud& solution) {
    double acc = 0.0;
    for (std::size_t ci = 0; ci < system.control_indices.size(); ++ci)
        acc += squared_distance(solution[system.control_indices[ci]],
                                system.control_targets[ci]);
    return acc;
}

double laplacian_residual(const LsqSystem& system, const PointCloud& solution) {
    const std::vector<Vec3> actual = laplacian_coordinates(solution, system.graph);
    double acc = 0.0;
    for (int i = 0; i < system.n; ++i)
        acc += squared_distance(actual[static_cast<std::size_t>(i)],
                                system.target_laplacians[static_cast<std::size_t>(i)]);
    return acc;
}

}  // namespace lapcomplete
