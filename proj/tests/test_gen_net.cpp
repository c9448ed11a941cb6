#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lapcomplete/gen_net.hpp"

using namespace lapcomplete;

namespace {

PointCloud random_cloud(int n, std::uint64_t seed, double spread = 1.0) {
    Rng rng(seed);
    PointCloud cloud;
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                                rng.uniform(-spread, spread)});
    return cloud;
}

EncoderParams small_encoder(std::uint64_t seed) {
    Rng rng(seed);
    return EncoderParams(6, 10, rng);
}

}  // namespace

TEST_CASE("encode emits a (1, feature_dim, 1) code") {
    EncoderParams enc = small_encoder(1);
    const PointCloud cloud = random_cloud(32, 2);
    Tape tape;
    Tensor code = encode(tape, cloud, enc);
    CHECK(code.shape() == Shape{1, 10, 1});
}

TEST_CASE("encode rejects clouds below the subsampling floor") {
    EncoderParams enc = small_encoder(3);
    const PointCloud tiny = random_cloud(7, 4);
    Tape tape;
    CHECK_THROWS_AS(encode(tape, tiny, enc), UsageError);
}

TEST_CASE("encode is invariant to input permutation") {
    EncoderParams enc = small_encoder(5);
    const PointCloud cloud = random_cloud(24, 6);
    PointCloud permuted = cloud;
    Rng rng(7);
    shuffle(permuted.points, rng);

    Tape t1, t2;
    const std::vector<double> a = encode(t1, cloud, enc).values();
    const std::vector<double> b = encode(t2, permuted, enc).values();
    CHECK(a == b);  // bit identical under the geometric seed rule
}

TEST_CASE("encode ignores a point that no channel's max-pool sees") {
    EncoderParams enc = small_encoder(8);
    PointCloud cloud = random_cloud(24, 9);

    Tape tape;
    const std::vector<double> base_code = encode(tape, cloud, enc).values();

    // pick a point that is neither any pooled channel's argmax nor selected
    // by the subsampling, then nudge it; construct adversarially and verify
    // by forward evaluation
    const int seed_idx = fps_seed_for(cloud, enc.seed_rule);
    std::vector<char> protect(static_cast<std::size_t>(cloud.size()), 0);
    protect[static_cast<std::size_t>(seed_idx)] = 1;
    for (int m : {cloud.size(), cloud.size() / 2, cloud.size() / 8})
        for (int idx : fps(cloud, m == cloud.size() ? cloud.size() : m, seed_idx))
            if (m != cloud.size()) protect[static_cast<std::size_t>(idx)] = 1;

    auto embedded_argmax_rows = [&](const PointCloud& c) {
        Tape t;
        EncoderParams& e = enc;
        Tensor pts = t.constant_like(c.points);
        Tensor h = t.relu(e.point_embed.apply(t, pts));
        Tensor r = t.relu(e.point_refine.apply(t, h));
        std::vector<char> rows(static_cast<std::size_t>(c.size()), 0);
        for (Tensor m : {h, r}) {
            const auto& v = m.values();
            const int cols = m.shape()[1];
            for (int col = 0; col < cols; ++col) {
                int arg = 0;
                for (int row = 1; row < c.size(); ++row)
                    if (v[static_cast<std::size_t>(row) * cols + col] >
                        v[static_cast<std::size_t>(arg) * cols + col])
                        arg = row;
                rows[static_cast<std::size_t>(arg)] = 1;
            }
        }
        return rows;
    };
    const std::vector<char> hot = embedded_argmax_rows(cloud);
    int victim = -1;
    for (int i = 0; i < cloud.size(); ++i) {
        if (!hot[static_cast<std::size_t>(i)] && !protect[static_cast<std::size_t>(i)]) {
            victim = i;
            break;
        }
    }
    REQUIRE(victim >= 0);

    PointCloud nudged = cloud;
    for (int c = 0; c < 3; ++c) nudged.points[static_cast<std::size_t>(victim)][c] -= 1e-4;
    // the nudge must not have changed any pooled argmax or fps pick
    REQUIRE(embedded_argmax_rows(nudged) == hot);
    for (int m : {nudged.size() / 2, nudged.size() / 8})
        REQUIRE(fps(nudged, m, fps_seed_for(nudged, enc.seed_rule)) ==
                fps(cloud, m, seed_idx));

    Tape tape2;
    CHECK(encode(tape2, nudged, enc).values() == base_code);
}

TEST_CASE("decode emits exactly the requested count") {
    Rng rng(11);
    DecoderParams dec(10, 4, 2, 1, true, rng);  // 8^2 = 64 leaves
    EncoderParams enc = small_encoder(12);
    const PointCloud cloud = random_cloud(16, 13);

    Tape tape;
    Tensor code = encode(tape, cloud, enc);
    CHECK(decode(tape, code, dec, 64).shape() == Shape{64, 3});   // exact fit
    CHECK(decode(tape, code, dec, 40).shape() == Shape{40, 3});   // trim
    CHECK(decode(tape, code, dec, 100).shape() == Shape{100, 3}); // tile
}

TEST_CASE("depth-3 patch-4 decode covers 1792 after trimming") {
    Rng rng(14);
    DecoderParams dec(10, 4, 3, 4, true, rng);
    CHECK(dec.emitted_points() == 2048);  // 512 leaves x 4-point patches
    EncoderParams enc = small_encoder(15);
    const PointCloud cloud = random_cloud(16, 16);
    Tape tape;
    Tensor code = encode(tape, cloud, enc);
    Tensor out = decode(tape, code, dec, 1792);
    CHECK(out.shape() == Shape{1792, 3});
    // trimming drops the tail: the first 1792 rows of the full emission
    Tensor full = decode(tape, code, dec, 2048);
    for (int i = 0; i < 1792 * 3; ++i)
        CHECK(out.values()[static_cast<std::size_t>(i)] ==
              full.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("zero code with zero biases lands every point at the origin") {
    Rng rng(17);
    DecoderParams dec(10, 4, 2, 1, true, rng);  // biases are zero-initialized
    Tape tape;
    Tensor code = tape.zeros({1, 10, 1});
    Tensor out = decode(tape, code, dec, 64);
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("generation pipeline passes a finite-difference check") {
    EncoderParams enc = small_encoder(18);
    Rng rng(19);
    DecoderParams dec(10, 4, 2, 1, true, rng);
    const PointCloud input = random_cloud(32, 20);
    const PointCloud target = random_cloud(32, 21);

    std::vector<Parameter*> params;
    enc.collect(params);
    dec.collect(params);
    auto f = [&](Tape& tape) {
        Tensor code = encode(tape, input, enc);
        Tensor cloud = decode(tape, code, dec, 32);
        return chamfer_loss(tape, cloud, tape.constant_like(target.points));
    };
    CHECK(finite_diff_check(f, params, 1e-5) <= 1e-3);
}

TEST_CASE("pool and seed rule parsing") {
    CHECK(pool_kind_from_string("max") == PoolKind::kMax);
    CHECK(pool_kind_from_string("mean") == PoolKind::kMean);
    CHECK_THROWS_AS(pool_kind_from_string("sum"), UsageError);
    CHECK(fps_seed_rule_from_string("lex_min") == FpsSeedRule::kLexicographicMin);
    CHECK(fps_seed_rule_from_string("first") == FpsSeedRule::kFirstIndex);
}
