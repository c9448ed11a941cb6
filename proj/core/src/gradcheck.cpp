#include "lapcomplete/gradcheck.hpp"

#include "lapcomplete/pipeline.hpp"

namespace lapcomplete {

namespace {

constexpr double kStep = 1e-5;

PointCloud random_cloud(int n, Rng& rng, double spread = 1.0) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back(
            {rng.uniform(-spread, spread), rng.uniform(-spread, spread),
             rng.uniform(-spread, spread)});
    return cloud;
}

Parameter cloud_parameter(const std::string& name, const PointCloud& cloud) {
    return Parameter(name, Shape{cloud.size(), 3}, flat_from_cloud(cloud));
}

// tiny model config so finite differences stay fast
RunConfig small_config(int n, int k, std::uint64_t seed) {
    RunConfig cfg;
    cfg.n_input = n;
    cfg.n_output = n;
    cfg.n_control = std::max(2, n / 4);
    cfg.knn_k = k;
    cfg.group_size = 4;
    cfg.feature_widths = {4, 6};
    cfg.d_mid = 6;
    cfg.feature_dim = 8;
    cfg.c0 = 5;
    cfg.tree_depth = 2;
    cfg.leaf_patch = 1;
    cfg.gcn_layers = 2;
    cfg.gcn_hidden = 10;
    cfg.seed = static_cast<std::int64_t>(seed);
    return cfg;
}

GradCheckResult check(const std::string& block, double tolerance,
                      const std::function<Tensor(Tape&)>& f,
                      const std::vector<Parameter*>& params) {
    GradCheckResult r;
    r.block = block;
    r.max_rel_error = finite_diff_check(f, params, kStep);
    r.pass = r.max_rel_error <= tolerance;
    return r;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(double tolerance, int n_points, int k,
                                                 std::uint64_t seed) {
    std::vector<GradCheckResult> results;
    Rng rng(seed);

    {
        // chamfer w.r.t. both clouds' coordinates
        Parameter x = cloud_parameter("x", random_cloud(n_points, rng));
        Parameter y = cloud_parameter("y", random_cloud(n_points, rng));
        auto f = [&](Tape& tape) {
            return chamfer_loss(tape, tape.leaf(x), tape.leaf(y));
        };
        results.push_back(check("chamfer", tolerance, f, {&x, &y}));
    }
    {
        Parameter before = cloud_parameter("before", random_cloud(n_points, rng));
        Parameter after = cloud_parameter("after", random_cloud(n_points, rng));
        auto f = [&](Tape& tape) {
            return matching_loss(tape, tape.leaf(before), tape.leaf(after));
        };
        results.push_back(check("matching", tolerance, f, {&before, &after}));
    }
    {
        const PointCloud base = random_cloud(n_points, rng);
        const LaplacianGraph graph = knn(base, k);
        Parameter positions = cloud_parameter("positions", random_cloud(n_points, rng));
        auto fp = [&](Tape& tape) {
            return shape_preserving_loss(tape, graph, tape.leaf(positions),
                                         ShapeLossForm::kPerVertex);
        };
        results.push_back(check("shape_per_vertex", tolerance, fp, {&positions}));
        auto fg = [&](Tape& tape) {
            return shape_preserving_loss(tape, graph, tape.leaf(positions),
                                         ShapeLossForm::kGlobal);
        };
        results.push_back(check("shape_global", tolerance, fg, {&positions}));
    }

    RunConfig cfg = small_config(n_points, k, seed);
    CompletionModel model = CompletionModel::create(cfg);
    const PointCloud input = random_cloud(n_points, rng);
    const PointCloud target = random_cloud(n_points, rng);

    {
        std::vector<Parameter*> params;
        model.encoder.collect(params);
        auto f = [&](Tape& tape) {
            return tape.mean_all(encode(tape, input, model.encoder));
        };
        results.push_back(check("encoder", tolerance, f, params));
    }
    {
        std::vector<Parameter*> params;
        model.decoder.collect(params);
        auto f = [&](Tape& tape) {
            Tensor code = encode(tape, input, model.encoder);
            Tensor cloud = decode(tape, code, model.decoder, n_points);
            return chamfer_loss(tape, cloud, tape.constant_like(target.points));
        };
        results.push_back(check("decoder", tolerance, f, params));
    }

    // one fixed graph for the deformation-side blocks
    const int n_control = static_cast<int>(cfg.n_control);
    const PointCloud supports = random_cloud(static_cast<int>(cfg.n_support()), rng);
    const DeformGraph graph = build_graph(input, supports, n_control, k, 0);
    const double radius = 0.3 * input.bounding_box_diagonal();

    {
        std::vector<Parameter*> params;
        model.features.collect(params);
        auto f = [&](Tape& tape) {
            Tensor merged = tape.constant_like(graph.merged.points);
            Tensor feats = local_features(tape, graph, merged, input, radius,
                                          model.features, true);
            return tape.mean_all(feats);
        };
        results.push_back(check("feature_extractor", tolerance, f, params));
    }
    {
        std::vector<Parameter*> params;
        model.gcn.collect(params);
        Rng code_rng(seed + 17);
        std::vector<double> code_data;
        for (int i = 0; i < static_cast<int>(cfg.feature_dim); ++i)
            code_data.push_back(code_rng.uniform(-1.0, 1.0));
        auto f = [&](Tape& tape) {
            Tensor merged = tape.constant_like(graph.merged.points);
            Tensor feats = local_features(tape, graph, merged, input, radius,
                                          model.features, true);
            Tensor code = tape.constant({1, static_cast<int>(cfg.feature_dim)}, code_data);
            Tensor out = deform(tape, graph, merged, feats, code, model.gcn);
            return chamfer_loss(tape, out, tape.constant_like(target.points));
        };
        results.push_back(check("gcn_stack", tolerance, f, params));
    }
    {
        std::vector<Parameter*> params = model.parameters();
        auto f = [&](Tape& tape) {
            ForwardOptions options;
            options.training = true;
            ForwardPass pass = run_forward(tape, model, input, options);
            LossTerms terms = compute_losses(tape, model, pass, target, 3.0);
            return terms.total;
        };
        results.push_back(check("end_to_end_total", tolerance, f, params));
    }
    return results;
}

}  // namespace lapcomplete
