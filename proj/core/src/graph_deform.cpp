#include "lapcomplete/graph_deform.hpp"

namespace lapcomplete {

DeformGraph build_graph(const PointCloud& input, const PointCloud& supports, int n_control,
                        int k, int fps_seed_index) {
    input.validate();
    if (n_control < 1 || n_control > input.size())
        throw UsageError("build_graph: control count " + std::to_string(n_control) +
                         " out of range for input of size " + std::to_string(input.size()));
    const int total = n_control + supports.size();
    if (k >= total)
        throw UsageError("build_graph: k = " + std::to_string(k) +
                         " must be below merged size " + std::to_string(total));

    DeformGraph g;
    g.control_count = n_control;
    g.merged.points.reserve(static_cast<std::size_t>(total));
    for (int idx : fps(input, n_control, fps_seed_index))
        g.merged.points.push_back(input[idx]);
    g.merged.points.insert(g.merged.points.end(), supports.points.begin(),
                           supports.points.end());
    g.graph = knn(g.merged, k);
    g.labels.assign(static_cast<std::size_t>(total), 0.0);
    for (int i = 0; i < n_control; ++i) g.labels[static_cast<std::size_t>(i)] = 1.0;
    return g;
}

LocalFeatureParams::LocalFeatureParams(std::vector<int> widths_, int group_size_, Rng& rng)
    : widths(std::move(widths_)), group_size(group_size_) {
    if (widths.empty()) throw UsageError("local features need at least one conv width");
    if (group_size < 1) throw UsageError("group size must be >= 1");
    for (int b = 0; b < 3; ++b) {
        int in = 3;
        for (std::size_t li = 0; li < widths.size(); ++li) {
            const std::string name =
                "features.r" + std::to_string(b) + ".conv" + std::to_string(li);
            branches[static_cast<std::size_t>(b)].convs.emplace_back(name, in,
                                                                     widths[li], rng);
            branches[static_cast<std::size_t>(b)].norms.emplace_back(name + ".bn",
                                                                     widths[li]);
            in = widths[li];
        }
    }
}

void LocalFeatureParams::collect(std::vector<Parameter*>& out) {
    for (auto& branch : branches) {
        for (LinearLayer& l : branch.convs) l.collect(out);
        for (BatchNormLayer& n : branch.norms) n.collect(out);
    }
}

Tensor local_features(Tape& tape, const DeformGraph& graph, Tensor merged_positions,
                      const PointCloud& input, double radius, LocalFeatureParams& params,
                      bool training) {
    if (!(radius > 0.0)) throw UsageError("local_features: radius must be > 0");
    const int n = graph.size();
    const int m = params.group_size;
    if (merged_positions.shape() != Shape{n, 3})
        throw ShapeError("local_features: positions " + shape_str(merged_positions.shape()) +
                         " do not cover the merged cloud of size " + std::to_string(n));

    Tensor source = tape.constant_like(input.points);
    std::vector<int> center_rep(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) center_rep[static_cast<std::size_t>(i) * m + j] = i;
    Tensor centers = tape.gather(merged_positions, center_rep);  // (n*m, 3)

    std::vector<Tensor> radius_feats;
    for (int b = 0; b < 3; ++b) {
        const double r = radius * static_cast<double>(1 << b);  // r, 2r, 4r
        std::vector<int> group = ball_group(graph.merged, input, r, m);
        Tensor neighbors = tape.gather(source, group);
        Tensor rel = tape.sub(neighbors, centers);  // gradient reaches the centers

        Tensor h = rel;
        auto& branch = params.branches[static_cast<std::size_t>(b)];
        for (std::size_t li = 0; li < branch.convs.size(); ++li) {
            h = branch.convs[li].apply(tape, h);
            h = branch.norms[li].apply(tape, h, training);
            h = tape.relu(h);
        }
        Tensor grouped = tape.reshape(h, {n, m, params.widths.back()});
        radius_feats.push_back(tape.reduce_max(grouped, 1));  // (n, width)
    }
    return tape.concat(radius_feats, 1);
}

GcnParams::GcnParams(int input_dim, int hidden, int layer_count, Rng& rng)
    : input_proj("gcn.input", input_dim, hidden, rng), head("gcn.head", hidden, 3, rng) {
    if (layer_count < 2 || layer_count % 2 != 0)
        throw UsageError("gcn layer count must be even and >= 2, got " +
                         std::to_string(layer_count));
    const double a = std::sqrt(6.0 / (hidden + hidden));
    for (int li = 0; li < layer_count; ++li) {
        GcnLayer layer{
            Parameter("gcn.l" + std::to_string(li) + ".self", Shape{hidden, hidden}),
            Parameter("gcn.l" + std::to_string(li) + ".neighbor", Shape{hidden, hidden}),
            Parameter("gcn.l" + std::to_string(li) + ".bias", Shape{1, hidden}),
        };
        for (double& w : layer.self_weight.value) w = rng.uniform(-a, a);
        for (double& w : layer.neighbor_weight.value) w = rng.uniform(-a, a);
        layers.push_back(std::move(layer));
    }
    head.zero_init();  // deformation starts as the identity
}

void GcnParams::collect(std::vector<Parameter*>& out) {
    input_proj.collect(out);
    for (GcnLayer& l : layers) {
        out.push_back(&l.self_weight);
        out.push_back(&l.neighbor_weight);
        out.push_back(&l.bias);
    }
    head.collect(out);
}

namespace {

// mean over the k graph neighbors of every point: exactly weight 1/k per edge
Tensor neighbor_mean(Tape& tape, const LaplacianGraph& graph, Tensor h) {
    const int n = graph.size();
    const int k = graph.k;
    const int width = h.shape()[1];
    Tensor gathered = tape.gather(h, graph.neighbors);  // (n*k, width)
    return tape.reduce_mean(tape.reshape(gathered, {n, k, width}), 1);
}

}  // namespace

Tensor deform(Tape& tape, const DeformGraph& graph, Tensor merged_positions,
              Tensor point_features, Tensor shape_code, GcnParams& params) {
    const int n = graph.size();
    if (merged_positions.shape() != Shape{n, 3})
        throw ShapeError("deform: positions " + shape_str(merged_positions.shape()) +
                         " do not match graph of size " + std::to_string(n));
    if (point_features.shape()[0] != n)
        throw ShapeError("deform: features " + shape_str(point_features.shape()) +
                         " do not cover " + std::to_string(n) + " points");
    const Shape& cs = shape_code.shape();
    if (cs.size() != 2 || cs[0] != 1)
        throw ShapeError("deform: shape code must be (1, d), got " + shape_str(cs));

    Tensor code_rows = tape.broadcast_rows(shape_code, n);
    Tensor labels = tape.constant({n, 1}, graph.labels);
    Tensor per_point =
        tape.concat({point_features, code_rows, merged_positions, labels}, 1);

    Tensor h = tape.relu(params.input_proj.apply(tape, per_point));
    Tensor block_input = h;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        auto& layer = params.layers[li];
        Tensor self_term = tape.matmul(h, tape.leaf(layer.self_weight));
        Tensor mixed = tape.matmul(neighbor_mean(tape, graph.graph, h),
                                   tape.leaf(layer.neighbor_weight));
        Tensor pre = tape.add(tape.add(self_term, mixed),
                              tape.broadcast_rows(tape.leaf(layer.bias), n));
        h = tape.relu(pre);
        if (li % 2 == 1) {  // close the residual pair
            h = tape.add(h, block_input);
            block_input = h;
        }
    }
    Tensor offsets = params.head.apply(tape, h);
    return tape.add(merged_positions, offsets);
}

}  // namespace lapcomplete
