#include "lapcomplete/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace lapcomplete {

void PointCloud::validate() const {
    if (points.empty()) throw UsageError("point cloud is empty");
    for (const Vec3& p : points)
        for (double c : p)
            if (!std::isfinite(c)) throw UsageError("point cloud has non-finite coordinate");
}

std::pair<Vec3, Vec3> PointCloud::bounding_box() const {
    validate();
    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], p[c]);
            hi[c] = std::max(hi[c], p[c]);
        }
    }
    return {lo, hi};
}

double PointCloud::bounding_box_diagonal() const {
    auto [lo, hi] = bounding_box();
    return std::sqrt(squared_distance(lo, hi));
}

PointCloud cloud_from_flat(const std::vector<double>& flat) {
    if (flat.size() % 3 != 0) throw UsageError("flat coordinate buffer not divisible by 3");
    PointCloud cloud;
    cloud.points.resize(flat.size() / 3);
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        cloud.points[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
    return cloud;
}

std::vector<double> flat_from_cloud(const PointCloud& cloud) {
    std::vector<double> flat;
    flat.reserve(cloud.points.size() * 3);
    for (const Vec3& p : cloud.points) {
        flat.push_back(p[0]);
        flat.push_back(p[1]);
        flat.push_back(p[2]);
    }
    return flat;
}

double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

std::vector<int> fps(const PointCloud& cloud, int m, int seed_index) {
    const int n = cloud.size();
    if (m < 1 || m > n)
        throw UsageError("fps: m = " + std::to_string(m) + " out of range for cloud of size " +
                         std::to_string(n));
    if (seed_index < 0 || seed_index >= n)
        throw UsageError("fps: seed index " + std::to_string(seed_index) + " out of range");

    std::vector<int> selected;
    selected.reserve(static_cast<std::size_t>(m));
    selected.push_back(seed_index);
    std::vector<double> min_d2(static_cast<std::size_t>(n),
                               std::numeric_limits<double>::infinity());
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    used[static_cast<std::size_t>(seed_index)] = 1;
    int last = seed_index;
    for (int round = 1; round < m; ++round) {
        int best = -1;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            const double d2 = squared_distance(cloud[i], cloud[last]);
            if (d2 < min_d2[static_cast<std::size_t>(i)])
                min_d2[static_cast<std::size_t>(i)] = d2;
            if (used[static_cast<std::size_t>(i)]) continue;
            const double md = min_d2[static_cast<std::size_t>(i)];
            if (md > best_d2) {  // strict: ties keep the lowest index
                best_d2 = md;
                best = i;
            }
        }
        selected.push_back(best);
        used[static_cast<std::size_t>(best)] = 1;
        last = best;
    }
    return selected;
}

int lexicographic_min_index(const PointCloud& cloud) {
    cloud.validate();
    int best = 0;
    for (int i = 1; i < cloud.size(); ++i)
        if (cloud[i] < cloud[best]) best = i;
    return best;
}

LaplacianGraph knn(const PointCloud& cloud, int k) {
    const int n = cloud.size();
    if (k < 1 || k >= n)
        throw UsageError("knn: k = " + std::to_string(k) + " must satisfy 1 <= k < " +
                         std::to_string(n));
    LaplacianGraph graph;
    graph.k = k;
    graph.neighbors.resize(static_cast<std::size_t>(n) * k);
    std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            cand[c++] = {squared_distance(cloud[i], cloud[j]), j};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int r = 0; r < k; ++r)
            graph.neighbors[static_cast<std::size_t>(i) * k + r] = cand[static_cast<std::size_t>(r)].second;
    }
    return graph;
}

std::vector<int> ball_group(const PointCloud& queries, const PointCloud& source,
                            double radius, int m) {
    if (!(radius > 0.0)) throw UsageError("ball_group: radius must be > 0");
    if (m < 1) throw UsageError("ball_group: group size must be >= 1");
    source.validate();
    const double r2 = radius * radius;
    const int nq = queries.size();
    std::vector<int> out(static_cast<std::size_t>(nq) * m);
    for (int q = 0; q < nq; ++q) {
        int* row = out.data() + static_cast<std::size_t>(q) * m;
        int count = 0;
        for (int s = 0; s < source.size() && count < m; ++s) {
            if (squared_distance(queries[q], source[s]) <= r2) row[count++] = s;
        }
        if (count == 0) {
            int nearest = 0;
            double best = squared_distance(queries[q], source[0]);
            for (int s = 1; s < source.size(); ++s) {
                const double d2 = squared_distance(queries[q], source[s]);
                if (d2 < best) { best = d2; nearest = s; }
            }
            for (int j = 0; j < m; ++j) row[j] = nearest;
        } else {
            for (int j = count; j < m; ++j) row[j] = row[0];
        }
    }
    return out;
}

std::vector<int> nearest_indices_bruteforce(const PointCloud& queries,
                                            const PointCloud& target) {
    queries.validate();
    target.validate();
    std::vector<int> out(static_cast<std::size_t>(queries.size()));
    for (int q = 0; q < queries.size(); ++q) {
        int best = 0;
        double best_d2 = squared_distance(queries[q], target[0]);
        for (int t = 1; t < target.size(); ++t) {
            const double d2 = squared_distance(queries[q], target[t]);
            if (d2 < best_d2) {  // strict: ties keep the lowest index
                best_d2 = d2;
                best = t;
            }
        }
        out[static_cast<std::size_t>(q)] = best;
    }
    return out;
}

namespace {

// Uniform hash grid over the target cloud. Exact: shells are expanded until
// the best candidate provably beats every unvisited cell, and comparisons use
// the same (distance, index) rule as the brute-force path.
struct HashGrid {
    double cell = 1.0;
    Vec3 origin{0, 0, 0};
    std::unordered_map<std::int64_t, std::vector<int>> cells;
    const PointCloud* target = nullptr;

    static std::int64_t key(int ix, int iy, int iz) {
        return static_cast<std::int64_t>(ix) * 73856093LL ^
               static_cast<std::int64_t>(iy) * 19349663LL ^
               static_cast<std::int64_t>(iz) * 83492791LL;
    }

    std::array<int, 3> coords(const Vec3& p) const {
        return {static_cast<int>(std::floor((p[0] - origin[0]) / cell)),
                static_cast<int>(std::floor((p[1] - origin[1]) / cell)),
                static_cast<int>(std::floor((p[2] - origin[2]) / cell))};
    }

    explicit HashGrid(const PointCloud& t) : target(&t) {
        auto [lo, hi] = t.bounding_box();
        origin = lo;
        const double diag = std::sqrt(squared_distance(lo, hi));
        // aim for a handful of points per cell
        const double extent = std::max(diag, 1e-12);
        const double per_axis = std::cbrt(static_cast<double>(t.size()));
        cell = std::max(extent / std::max(per_axis, 1.0), 1e-12);
        for (int i = 0; i < t.size(); ++i) {
            auto c = coords(t[i]);
            cells[key(c[0], c[1], c[2])].push_back(i);
        }
    }

    int nearest(const Vec3& q) const {
        const auto c = coords(q);
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        auto scan_cell = [&](int ix, int iy, int iz) {
            auto it = cells.find(key(ix, iy, iz));
            if (it == cells.end()) return;
            for (int idx : it->second) {
                const double d2 = squared_distance(q, (*target)[idx]);
                if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                    best_d2 = d2;
                    best = idx;
                }
            }
        };
        for (int ring = 0;; ++ring) {
            // cells at Chebyshev distance `ring` from the query's cell
            for (int ix = c[0] - ring; ix <= c[0] + ring; ++ix) {
                for (int iy = c[1] - ring; iy <= c[1] + ring; ++iy) {
                    for (int iz = c[2] - ring; iz <= c[2] + ring; ++iz) {
                        if (std::max({std::abs(ix - c[0]), std::abs(iy - c[1]),
                                      std::abs(iz - c[2])}) != ring)
                            continue;
                        scan_cell(ix, iy, iz);
                    }
                }
            }
            if (best >= 0) {
                // any point in an unvisited cell sits at least `ring * cell`
                // away; strict comparison keeps tie-breaks identical to the
                // brute-force scan
                const double safe = static_cast<double>(ring) * cell;
                if (best_d2 < safe * safe) break;
            }
        }
        return best;
    }
};

}  // namespace

std::vector<int> nearest_indices_grid(const PointCloud& queries, const PointCloud& target) {
    queries.validate();
    target.validate();
    HashGrid grid(target);
    std::vector<int> out(static_cast<std::size_t>(queries.size()));
    for (int q = 0; q < queries.size(); ++q) out[static_cast<std::size_t>(q)] = grid.nearest(queries[q]);
    return out;
}

std::vector<int> nearest_indices(const PointCloud& queries, const PointCloud& target) {
    // the grid pays off once the quadratic scan gets heavy
    if (static_cast<std::int64_t>(queries.size()) * target.size() > 256 * 1024)
        return nearest_indices_grid(queries, target);
    return nearest_indices_bruteforce(queries, target);
}

std::pair<double, double> chamfer_terms(const PointCloud& x, const PointCloud& y) {
    const std::vector<int> nx = nearest_indices(x, y);
    const std::vector<int> ny = nearest_indices(y, x);
    double xy = 0.0, yx = 0.0;
    for (int i = 0; i < x.size(); ++i)
        xy += squared_distance(x[i], y[nx[static_cast<std::size_t>(i)]]);
    for (int j = 0; j < y.size(); ++j)
        yx += squared_distance(y[j], x[ny[static_cast<std::size_t>(j)]]);
    return {xy / x.size(), yx / y.size()};
}

double chamfer_distance(const PointCloud& x, const PointCloud& y) {
    auto [xy, yx] = chamfer_terms(x, y);
    return xy + yx;
}

namespace {

// mean_i ||a_i - b_match(i)||^2 on tape: mean over all 3n entries, times 3
Tensor directional_term(Tape& tape, Tensor a, Tensor b, const std::vector<int>& match) {
    Tensor matched = tape.gather(b, match);
    Tensor diff = tape.sub(a, matched);
    return tape.scale(tape.mean_all(tape.square(diff)), 3.0);
}

void require_cloud_tensor(const Tensor& t, const char* which) {
    const Shape& s = t.shape();
    if (s.size() != 2 || s[1] != 3)
        throw ShapeError(std::string("chamfer_loss: ") + which + " must be (n, 3), got " +
                         shape_str(s));
}

}  // namespace

PointCloud cloud_from_tensor(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.size() != 2 || s[1] != 3)
        throw ShapeError("cloud_from_tensor: expected (n, 3), got " + shape_str(s));
    return cloud_from_flat(t.values());
}

Tensor chamfer_loss(Tape& tape, Tensor x, Tensor y) {
    require_cloud_tensor(x, "x");
    require_cloud_tensor(y, "y");
    const PointCloud cx = cloud_from_tensor(x);
    const PointCloud cy = cloud_from_tensor(y);
    const std::vector<int> nx = nearest_indices(cx, cy);
    const std::vector<int> ny = nearest_indices(cy, cx);
    Tensor t_xy = directional_term(tape, x, y, nx);
    Tensor t_yx = directional_term(tape, y, x, ny);
    return tape.add(t_xy, t_yx);
}

}  // namespace lapcomplete
