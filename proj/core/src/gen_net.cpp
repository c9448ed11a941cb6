#include "lapcomplete/gen_net.hpp"

namespace lapcomplete {

PoolKind pool_kind_from_string(const std::string& s) {
    if (s == "max") return PoolKind::kMax;
    if (s == "mean") return PoolKind::kMean;
    throw UsageError("unknown pool kind '" + s + "' (max|mean)");
}

FpsSeedRule fps_seed_rule_from_string(const std::string& s) {
    if (s == "lex_min") return FpsSeedRule::kLexicographicMin;
    if (s == "first") return FpsSeedRule::kFirstIndex;
    throw UsageError("unknown fps seed rule '" + s + "' (lex_min|first)");
}

int fps_seed_for(const PointCloud& cloud, FpsSeedRule rule) {
    return rule == FpsSeedRule::kLexicographicMin ? lexicographic_min_index(cloud) : 0;
}

EncoderParams::EncoderParams(int d_mid_, int feature_dim_, Rng& rng)
    : point_embed("encoder.embed", 3, d_mid_, rng),
      point_refine("encoder.refine", d_mid_, d_mid_, rng),
      fuse("encoder.fuse", 6 * d_mid_, feature_dim_, rng),
      d_mid(d_mid_),
      feature_dim(feature_dim_) {}

void EncoderParams::collect(std::vector<Parameter*>& out) {
    point_embed.collect(out);
    point_refine.collect(out);
    fuse.collect(out);
}

namespace {

Tensor global_pool(Tape& tape, Tensor per_point, PoolKind pool) {
    Tensor pooled = pool == PoolKind::kMax ? tape.reduce_max(per_point, 0)
                                           : tape.reduce_mean(per_point, 0);
    return tape.reshape(pooled, {1, per_point.shape()[1]});
}

}  // namespace

Tensor encode(Tape& tape, const PointCloud& cloud, EncoderParams& params) {
    cloud.validate();
    const int n = cloud.size();
    if (n < 8)
        throw UsageError("encode: cloud of size " + std::to_string(n) +
                         " is too small to subsample (need >= 8)");

    Tensor points = tape.constant_like(cloud.points);
    Tensor embedded = tape.relu(params.point_embed.apply(tape, points));
    Tensor base = global_pool(tape, embedded, params.pool);  // shared term, full cloud

    const int seed = fps_seed_for(cloud, params.seed_rule);
    std::vector<Tensor> scale_codes;
    for (int divisor : {1, 2, 8}) {
        const int m = n / divisor;
        Tensor subset = embedded;
        if (m < n) subset = tape.gather(embedded, fps(cloud, m, seed));
        Tensor refined = tape.relu(params.point_refine.apply(tape, subset));
        scale_codes.push_back(
            tape.concat({base, global_pool(tape, refined, params.pool)}, 1));
    }
    Tensor code = params.fuse.apply(tape, tape.concat(scale_codes, 1));
    return tape.reshape(code, {1, params.feature_dim, 1});
}

DecoderParams::DecoderParams(int feature_dim, int c0_, int depth_, int patch_size_,
                             bool relu_hidden_, Rng& rng)
    : root("decoder.root", feature_dim, 8 * c0_, rng),
      leaf("decoder.leaf", c0_, 3 * patch_size_, rng),
      c0(c0_),
      depth(depth_),
      patch_size(patch_size_),
      relu_hidden(relu_hidden_) {
    if (depth_ < 1) throw UsageError("decoder depth must be >= 1");
    if (patch_size_ < 1) throw UsageError("decoder patch size must be >= 1");
    for (int level = 1; level < depth_; ++level)
        levels.emplace_back("decoder.level" + std::to_string(level), c0_, 8 * c0_, rng);
}

void DecoderParams::collect(std::vector<Parameter*>& out) {
    root.collect(out);
    for (LinearLayer& l : levels) l.collect(out);
    leaf.collect(out);
}

int DecoderParams::emitted_points() const {
    int leaves = 1;
    for (int i = 0; i < depth; ++i) leaves *= 8;
    return leaves * patch_size;
}

Tensor decode(Tape& tape, Tensor code, DecoderParams& params, int n_points) {
    if (n_points < 1) throw UsageError("decode: requested size must be >= 1");
    const Shape& cs = code.shape();
    if (numel(cs) != params.root.in_dim())
        throw ShapeError("decode: code " + shape_str(cs) + " does not match root input " +
                         std::to_string(params.root.in_dim()));
    Tensor flat_code = tape.reshape(code, {1, params.root.in_dim()});
    Tensor features = tape.reshape(params.root.apply(tape, flat_code), {8, params.c0});
    if (params.relu_hidden) features = tape.relu(features);
    for (LinearLayer& level : params.levels) {
        Tensor split = level.apply(tape, features);  // (m, 8*c0)
        features = tape.reshape(split, {features.shape()[0] * 8, params.c0});
        if (params.relu_hidden) features = tape.relu(features);
    }
    Tensor patches = params.leaf.apply(tape, features);  // (leaves, 3*patch)
    const int emitted = params.emitted_points();
    Tensor cloud = tape.reshape(patches, {emitted, 3});

    // total trim/tile rule: drop the tail or repeat from the start
    if (emitted == n_points) return cloud;
    std::vector<int> pick(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) pick[static_cast<std::size_t>(i)] = i % emitted;
    return tape.gather(cloud, pick);
}

}  // namespace lapcomplete
