#pragma once

#include <string>
#include <vector>

#include "lapcomplete/common.hpp"
#include "lapcomplete/geometry.hpp"

namespace lapcomplete {

enum class ShapeKind { kSphere, kBox, kCylinder, kLamp, kTable };

constexpr int kShapeKindCount = 5;
const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& s);

struct ShapeSpec {
    ShapeKind kind = ShapeKind::kSphere;
    Vec3 scale{1.0, 1.0, 1.0};
    Vec3 pose{0.0, 0.0, 0.0};  // rotation angles around x, y, z (radians)
    std::uint64_t seed = 0;

    void validate() const;
};

// Deterministic uniform surface sampling; exactly n points.
PointCloud generate_shape(const ShapeSpec& spec, int n);

// Keeps the points facing view_dir (by projection rank) up to keep_fraction,
// then seeded random resampling (with repetition when short) to n_out points.
PointCloud make_partial(const PointCloud& complete, const Vec3& view_dir,
                        double keep_fraction, int n_out, std::uint64_t seed);

// One point per line: three decimal floats, single spaces, LF endings, no
// header. Writes 17 significant digits so a round trip is exact.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

struct ManifestEntry {
    std::string partial_path;
    std::string complete_path;
    std::string label;
};

struct DatasetConfig {
    std::string dir = "data";
    int samples = 200;
    int partial_size = 512;   // stored input size
    int complete_size = 2048; // ground-truth size
    double keep_fraction = 0.5;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 42;
};

// Writes XYZ files plus train/val/test manifests (JSON lists of
// {partial_path, complete_path, label}). Pure function of the config.
void generate_dataset(const DatasetConfig& config);

std::vector<ManifestEntry> read_manifest(const std::string& path);

// Uniform rescale of both clouds into the unit cube centered at the origin,
// using the complete cloud's bounding box for the shared transform.
void normalize_pair(PointCloud& partial, PointCloud& complete);

}  // namespace lapcomplete
