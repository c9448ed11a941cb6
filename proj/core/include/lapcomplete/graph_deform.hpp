#pragma once

#include <array>
#include <vector>

#include "lapcomplete/geometry.hpp"
#include "lapcomplete/layers.hpp"

namespace lapcomplete {

// Fused cloud (controls first, then supports), its k-NN Laplacian map, and
// the one-hot control labels. Rebuilt from values on every forward pass.
struct DeformGraph {
    PointCloud merged;        // controls ++ supports
    LaplacianGraph graph;
    std::vector<double> labels;  // 1.0 for i < control_count
    int control_count = 0;

    int size() const { return merged.size(); }
};

DeformGraph build_graph(const PointCloud& input, const PointCloud& supports, int n_control,
                        int k, int fps_seed_index);

// Per-point multi-scale neighborhood encoder: for each radius in {r, 2r, 4r},
// group points of the original input around every merged point, run a shared
// per-point MLP on relative coordinates, max-pool the group, then concatenate
// the three radius features.
struct LocalFeatureParams {
    struct RadiusBranch {
        std::vector<LinearLayer> convs;
        std::vector<BatchNormLayer> norms;
    };
    std::array<RadiusBranch, 3> branches;
    std::vector<int> widths;  // conv widths per branch, e.g. {32, 64}
    int group_size = 16;

    LocalFeatureParams() = default;
    LocalFeatureParams(std::vector<int> widths_, int group_size_, Rng& rng);
    void collect(std::vector<Parameter*>& out);
    int feature_dim() const { return widths.empty() ? 0 : 3 * widths.back(); }
};

// merged_positions must be the (n, 3) tensor whose values equal graph.merged.
Tensor local_features(Tape& tape, const DeformGraph& graph, Tensor merged_positions,
                      const PointCloud& input, double radius, LocalFeatureParams& params,
                      bool training);

// Graph-convolution stack arranged in residual pairs. Each layer computes
// relu(W0*h + W1*mean_neighbors(h) + b); every second layer adds the pair's
// input back. The zero-initialized head emits offsets, so the stack starts as
// the identity deformation.
struct GcnParams {
    LinearLayer input_proj;
    struct GcnLayer {
        Parameter self_weight;      // (hidden, hidden)
        Parameter neighbor_weight;  // (hidden, hidden)
        Parameter bias;             // (1, hidden)
    };
    std::vector<GcnLayer> layers;  // even count
    LinearLayer head;              // hidden -> 3, zero-initialized

    GcnParams() = default;
    GcnParams(int input_dim, int hidden, int layer_count, Rng& rng);
    void collect(std::vector<Parameter*>& out);
};

// Returns the deformed cloud (n, 3): merged positions plus predicted offsets.
// shape_code is the (1, feature_dim) row broadcast to every point.
Tensor deform(Tape& tape, const DeformGraph& graph, Tensor merged_positions,
              Tensor point_features, Tensor shape_code, GcnParams& params);

}  // namespace lapcomplete
