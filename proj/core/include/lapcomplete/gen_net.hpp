#pragma once

#include <vector>

#include "lapcomplete/geometry.hpp"
#include "lapcomplete/layers.hpp"
#include "lapcomplete/tensor.hpp"

namespace lapcomplete {

enum class PoolKind { kMax, kMean };
PoolKind pool_kind_from_string(const std::string& s);

enum class FpsSeedRule { kLexicographicMin, kFirstIndex };
FpsSeedRule fps_seed_rule_from_string(const std::string& s);

int fps_seed_for(const PointCloud& cloud, FpsSeedRule rule);

// Multi-resolution shape encoder: a shared per-point layer on the full cloud
// plus a deeper per-point branch on three FPS subsamples (full, half,
// eighth), each globally pooled, concatenated and fused into the shape code.
struct EncoderParams {
    LinearLayer point_embed;   // 3 -> d_mid
    LinearLayer point_refine;  // d_mid -> d_mid
    LinearLayer fuse;          // 6*d_mid -> feature_dim
    int d_mid = 128;
    int feature_dim = 256;
    PoolKind pool = PoolKind::kMax;
    FpsSeedRule seed_rule = FpsSeedRule::kLexicographicMin;

    EncoderParams() = default;
    EncoderParams(int d_mid_, int feature_dim_, Rng& rng);
    void collect(std::vector<Parameter*>& out);
};

// Eightfold tree decoder: the code becomes 8 root features, each level splits
// every feature into 8 children, leaves emit small point patches, and the
// result is trimmed or tiled to the requested size.
struct DecoderParams {
    LinearLayer root;                 // feature_dim -> 8*c0
    std::vector<LinearLayer> levels;  // c0 -> 8*c0, one per split after the root
    LinearLayer leaf;                 // c0 -> 3*patch_size
    int c0 = 64;
    int depth = 3;       // number of eightfold splits including the root
    int patch_size = 1;  // points emitted per leaf
    bool relu_hidden = true;

    DecoderParams() = default;
    DecoderParams(int feature_dim, int c0_, int depth_, int patch_size_, bool relu_hidden_,
                  Rng& rng);
    void collect(std::vector<Parameter*>& out);

    int emitted_points() const;
};

// Shape code of shape (1, feature_dim, 1). Requires |cloud| >= 8 so the
// eighth-resolution subsample is nonempty.
Tensor encode(Tape& tape, const PointCloud& cloud, EncoderParams& params);

// Decoded cloud of exactly n_points rows, shape (n_points, 3).
Tensor decode(Tape& tape, Tensor code, DecoderParams& params, int n_points);

}  // namespace lapcomplete
