#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "lapcomplete/datagen.hpp"

using namespace lapcomplete;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("lapcomplete_test_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("sphere samples sit on the sphere") {
    ShapeSpec spec;
    spec.kind = ShapeKind::kSphere;
    spec.scale = {2.0, 2.0, 2.0};
    spec.seed = 5;
    const PointCloud cloud = generate_shape(spec, 1000);
    REQUIRE(cloud.size() == 1000);
    for (const Vec3& p : cloud.points) {
        const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        CHECK(std::abs(r - 1.0) <= 1e-9);  // radius 0.5 * scale
    }
}

TEST_CASE("unit box samples touch the surface") {
    ShapeSpec spec;
    spec.kind = ShapeKind::kBox;
    spec.seed = 6;
    const PointCloud cloud = generate_shape(spec, 500);
    for (const Vec3& p : cloud.points) {
        const double m = std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2])});
        CHECK(std::abs(m - 0.5) <= 1e-9);
    }
}

TEST_CASE("identical specs give bit-identical clouds") {
    ShapeSpec spec;
    spec.kind = ShapeKind::kLamp;
    spec.seed = 7;
    spec.pose = {0.3, 1.2, -0.4};
    const PointCloud a = generate_shape(spec, 333);
    const PointCloud b = generate_shape(spec, 333);
    CHECK(a.points == b.points);
}

TEST_CASE("every shape kind generates the requested count") {
    for (int k = 0; k < kShapeKindCount; ++k) {
        ShapeSpec spec;
        spec.kind = static_cast<ShapeKind>(k);
        spec.seed = static_cast<std::uint64_t>(100 + k);
        CHECK(generate_shape(spec, 77).size() == 77);
    }
    ShapeSpec bad;
    bad.scale = {0.0, 1.0, 1.0};
    CHECK_THROWS_AS(generate_shape(bad, 5), UsageError);
}

TEST_CASE("make_partial keeps the facing half by projection rank") {
    ShapeSpec spec;
    spec.kind = ShapeKind::kSphere;
    spec.seed = 8;
    const PointCloud sphere = generate_shape(spec, 2000);
    const PointCloud partial = make_partial(sphere, {0, 0, 1}, 0.5, 600, 9);
    std::vector<double> zs;
    for (const Vec3& p : sphere.points) zs.push_back(p[2]);
    std::nth_element(zs.begin(), zs.begin() + zs.size() / 2, zs.end());
    const double median = zs[zs.size() / 2];
    for (const Vec3& p : partial.points) CHECK(p[2] >= median - 1e-6);
}

TEST_CASE("make_partial keep_fraction 1 resamples the whole cloud") {
    ShapeSpec spec;
    spec.kind = ShapeKind::kBox;
    spec.seed = 10;
    const PointCloud box = generate_shape(spec, 100);
    const PointCloud full = make_partial(box, {1, 0, 0}, 1.0, 100, 11);
    // every output point exists in the source
    for (const Vec3& p : full.points) {
        bool found = false;
        for (const Vec3& q : box.points) found = found || squared_distance(p, q) == 0.0;
        CHECK(found);
    }
}

TEST_CASE("make_partial pads by repetition when asked for more points") {
    ShapeSpec spec;
    spec.kind = ShapeKind::kCylinder;
    spec.seed = 12;
    const PointCloud cyl = generate_shape(spec, 40);
    const PointCloud out = make_partial(cyl, {0, 1, 0}, 0.25, 64, 13);
    CHECK(out.size() == 64);
    // only ~10 distinct source points are available, so repeats must exist
    std::vector<Vec3> unique_pts = out.points;
    std::sort(unique_pts.begin(), unique_pts.end());
    unique_pts.erase(std::unique(unique_pts.begin(), unique_pts.end()), unique_pts.end());
    CHECK(unique_pts.size() < out.points.size());
}

TEST_CASE("xyz round trip is exact") {
    TempDir tmp;
    Rng rng(14);
    PointCloud cloud;
    for (int i = 0; i < 64; ++i)
        cloud.points.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
    const std::string path = (tmp.path / "cloud.xyz").string();
    write_xyz(path, cloud);
    const PointCloud loaded = read_xyz(path);
    REQUIRE(loaded.size() == cloud.size());
    for (int i = 0; i < cloud.size(); ++i)
        CHECK(squared_distance(loaded[i], cloud[i]) <= 1e-24);
}

TEST_CASE("xyz parser reports malformed lines with their number") {
    TempDir tmp;
    const std::string path = (tmp.path / "bad.xyz").string();
    {
        std::ofstream out(path);
        out << "1 2 3\n1 2\n";
    }
    CHECK_THROWS_WITH_AS(read_xyz(path), doctest::Contains("line 2"), IoError);
}

TEST_CASE("empty xyz file is rejected") {
    TempDir tmp;
    const std::string path = (tmp.path / "empty.xyz").string();
    std::ofstream(path).close();
    CHECK_THROWS_WITH_AS(read_xyz(path), doctest::Contains("empty"), IoError);
}

TEST_CASE("dataset generation is deterministic and normalized") {
    TempDir tmp;
    DatasetConfig config;
    config.dir = (tmp.path / "data").string();
    config.samples = 12;
    config.partial_size = 64;
    config.complete_size = 256;
    config.seed = 99;

    generate_dataset(config);
    const auto train = read_manifest(config.dir + "/train.json");
    const auto val = read_manifest(config.dir + "/val.json");
    const auto test = read_manifest(config.dir + "/test.json");
    CHECK(train.size() + val.size() + test.size() == 12);
    CHECK(val.size() == 1);
    CHECK(test.size() == 1);

    for (const auto& manifest : {train, val, test}) {
        for (const ManifestEntry& e : manifest) {
            const PointCloud partial = read_xyz(e.partial_path);
            const PointCloud complete = read_xyz(e.complete_path);
            CHECK(partial.size() == 64);
            CHECK(complete.size() == 256);
            for (const PointCloud* c : {&partial, &complete})
                for (const Vec3& p : c->points)
                    for (double v : p) CHECK(std::abs(v) <= 0.5 + 1e-12);
        }
    }

    // regeneration reproduces byte-identical files
    std::vector<std::pair<std::string, std::string>> before;
    for (const auto& entry : fs::recursive_directory_iterator(config.dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        before.emplace_back(entry.path().string(), std::move(content));
    }
    generate_dataset(config);
    for (const auto& [path, content] : before) {
        std::ifstream in(path, std::ios::binary);
        std::string now((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
        CHECK(now == content);
    }
}

TEST_CASE("dataset generation rejects zero samples") {
    DatasetConfig config;
    config.samples = 0;
    CHECK_THROWS_AS(generate_dataset(config), UsageError);
}
