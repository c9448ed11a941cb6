#include "lapcomplete/datagen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace lapcomplete {

namespace {

using json = nlohmann::json;

constexpr double kTau = 2.0 * std::numbers::pi;

Vec3 rotate(const Vec3& p, const Vec3& angles) {
    Vec3 q = p;
    const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
    const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
    const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
    q = {q[0], cx * q[1] - sx * q[2], sx * q[1] + cx * q[2]};
    q = {cy * q[0] + sy * q[2], q[1], -sy * q[0] + cy * q[2]};
    q = {cz * q[0] - sz * q[1], sz * q[0] + cz * q[1], q[2]};
    return q;
}

Vec3 sphere_point(Rng& rng, double radius) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, kTau);
    const double r_xy = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {radius * r_xy * std::cos(phi), radius * r_xy * std::sin(phi), radius * z};
}

// Axis-aligned box surface spanning +-half, faces weighted by area.
Vec3 box_point(Rng& rng, const Vec3& half) {
    const double ax = half[1] * half[2];
    const double ay = half[0] * half[2];
    const double az = half[0] * half[1];
    const double total = 2.0 * (ax + ay + az);
    double pick = rng.uniform01() * total;
    const double u = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform(-1.0, 1.0);
    for (int axis = 0; axis < 3; ++axis) {
        const double area = axis == 0 ? ax : axis == 1 ? ay : az;
        for (double side : {-1.0, 1.0}) {
            if (pick < area) {
                Vec3 p;
                p[axis] = side * half[axis];
                p[(axis + 1) % 3] = u * half[(axis + 1) % 3];
                p[(axis + 2) % 3] = v * half[(axis + 2) % 3];
                return p;
            }
            pick -= area;
        }
    }
    return {half[0], u * half[1], v * half[2]};  // numerical edge of the partition
}

// Upright cylinder: lateral wall and both caps, area weighted.
Vec3 cylinder_point(Rng& rng, double radius, double half_height) {
    const double lateral = kTau * radius * 2.0 * half_height;
    const double caps = 2.0 * std::numbers::pi * radius * radius;
    const double pick = rng.uniform01() * (lateral + caps);
    const double phi = rng.uniform(0.0, kTau);
    if (pick < lateral) {
        const double z = rng.uniform(-half_height, half_height);
        return {radius * std::cos(phi), radius * std::sin(phi), z};
    }
    const double r = radius * std::sqrt(rng.uniform01());
    const double z = rng.uniform01() < 0.5 ? -half_height : half_height;
    return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 offset(const Vec3& p, const Vec3& d) { return {p[0] + d[0], p[1] + d[1], p[2] + d[2]}; }

// Sphere head on a thin stem over a base disk.
Vec3 lamp_point(Rng& rng) {
    const double head_area = 4.0 * std::numbers::pi * 0.28 * 0.28;
    const double stem_area = kTau * 0.04 * 0.55;
    const double base_area = std::numbers::pi * 0.18 * 0.18;
    const double pick = rng.uniform01() * (head_area + stem_area + base_area);
    if (pick < head_area) return offset(sphere_point(rng, 0.28), {0.0, 0.0, 0.62});
    if (pick < head_area + stem_area) {
        const double phi = rng.uniform(0.0, kTau);
        const double z = rng.uniform(-0.55, 0.0);
        return {0.04 * std::cos(phi), 0.04 * std::sin(phi), z + 0.3};
    }
    const double phi = rng.uniform(0.0, kTau);
    const double r = 0.18 * std::sqrt(rng.uniform01());
    return {r * std::cos(phi), r * std::sin(phi), -0.28};
}

// Slab top over four corner legs.
Vec3 table_point(Rng& rng) {
    const Vec3 top_half{0.5, 0.35, 0.04};
    const Vec3 leg_half{0.04, 0.04, 0.3};
    const auto area = [](const Vec3& h) {
        return 8.0 * (h[1] * h[2] + h[0] * h[2] + h[0] * h[1]);
    };
    const double top_area = area(top_half);
    const double legs_area = 4.0 * area(leg_half);
    if (rng.uniform01() * (top_area + legs_area) < top_area)
        return offset(box_point(rng, top_half), {0.0, 0.0, 0.3});
    const int leg = static_cast<int>(rng.below(4));
    const double lx = (leg & 1) ? 0.42 : -0.42;
    const double ly = (leg & 2) ? 0.27 : -0.27;
    return offset(box_point(rng, leg_half), {lx, ly, -0.04});
}

}  // namespace

const char* to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::kSphere: return "sphere";
        case ShapeKind::kBox: return "box";
        case ShapeKind::kCylinder: return "cylinder";
        case ShapeKind::kLamp: return "lamp";
        case ShapeKind::kTable: return "table";
    }
    return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
    for (int i = 0; i < kShapeKindCount; ++i)
        if (s == to_string(static_cast<ShapeKind>(i))) return static_cast<ShapeKind>(i);
    throw UsageError("unknown shape kind '" + s + "'");
}

void ShapeSpec::validate() const {
    for (double s : scale)
        if (!(s > 0.0)) throw UsageError("shape scale must be > 0");
}

PointCloud generate_shape(const ShapeSpec& spec, int n) {
    spec.validate();
    if (n < 1) throw UsageError("generate_shape: need n >= 1");
    Rng rng(spec.seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Vec3 p;
        switch (spec.kind) {
            case ShapeKind::kSphere: p = sphere_point(rng, 0.5); break;
            case ShapeKind::kBox:
                p = box_point(rng, {0.5, 0.5, 0.5});
                break;
            case ShapeKind::kCylinder: p = cylinder_point(rng, 0.5, 0.5); break;
            case ShapeKind::kLamp: p = lamp_point(rng); break;
            case ShapeKind::kTable: p = table_point(rng); break;
        }
        for (int c = 0; c < 3; ++c) p[c] *= spec.scale[c];
        cloud.points.push_back(rotate(p, spec.pose));
    }
    return cloud;
}

PointCloud make_partial(const PointCloud& complete, const Vec3& view_dir,
                        double keep_fraction, int n_out, std::uint64_t seed) {
    complete.validate();
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
        throw UsageError("make_partial: keep_fraction must be in (0, 1]");
    if (n_out < 1) throw UsageError("make_partial: n_out must be >= 1");

    const int n = complete.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    auto proj = [&](int i) {
        const Vec3& p = complete[i];
        return p[0] * view_dir[0] + p[1] * view_dir[1] + p[2] * view_dir[2];
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return proj(a) > proj(b); });
    const int keep = std::max(1, static_cast<int>(std::llround(keep_fraction * n)));
    order.resize(static_cast<std::size_t>(std::min(keep, n)));

    Rng rng(seed);
    PointCloud out;
    out.points.reserve(static_cast<std::size_t>(n_out));
    for (int i = 0; i < n_out; ++i)
        out.points.push_back(complete[order[static_cast<std::size_t>(
            rng.below(order.size()))]]);
    return out;
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    PointCloud cloud;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        Vec3 p;
        std::string extra;
        if (!(fields >> p[0] >> p[1] >> p[2]) || (fields >> extra))
            throw IoError("'" + path + "' line " + std::to_string(line_no) +
                          ": expected exactly three floats, got '" + line + "'");
        cloud.points.push_back(p);
    }
    if (cloud.empty()) throw IoError("'" + path + "': empty cloud");
    return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
    cloud.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    char buf[128];
    for (const Vec3& p : cloud.points) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
        out << buf;
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

void normalize_pair(PointCloud& partial, PointCloud& complete) {
    auto [lo, hi] = complete.bounding_box();
    const Vec3 center{(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0};
    double extent = 0.0;
    for (int c = 0; c < 3; ++c) extent = std::max(extent, hi[c] - lo[c]);
    const double inv = extent > 0.0 ? 1.0 / extent : 1.0;
    auto apply = [&](PointCloud& cloud) {
        for (Vec3& p : cloud.points)
            for (int c = 0; c < 3; ++c) p[c] = (p[c] - center[c]) * inv;
    };
    apply(partial);
    apply(complete);
}

void generate_dataset(const DatasetConfig& config) {
    if (config.samples < 1) throw UsageError("generate_dataset: need at least one sample");
    if (config.partial_size < 1 || config.complete_size < 1)
        throw UsageError("generate_dataset: cloud sizes must be >= 1");
    if (config.val_fraction < 0 || config.test_fraction < 0 ||
        config.val_fraction + config.test_fraction >= 1.0)
        throw UsageError("generate_dataset: bad split fractions");

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(config.dir, ec);
    if (ec) throw IoError("cannot create dataset directory '" + config.dir + "'");

    std::vector<ManifestEntry> entries;
    for (int i = 0; i < config.samples; ++i) {
        const std::uint64_t sample_seed = mix_seed(config.seed, static_cast<std::uint64_t>(i));
        Rng rng(sample_seed);
        ShapeSpec spec;
        spec.kind = static_cast<ShapeKind>(i % kShapeKindCount);
        spec.scale = {rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4)};
        if (spec.kind == ShapeKind::kSphere) {
            // keep spheres spherical so radii stay well defined
            spec.scale = {spec.scale[0], spec.scale[0], spec.scale[0]};
        }
        spec.pose = {rng.uniform(0.0, kTau), rng.uniform(0.0, kTau), rng.uniform(0.0, kTau)};
        spec.seed = rng.next_u64();

        PointCloud complete = generate_shape(spec, config.complete_size);
        Vec3 view = sphere_point(rng, 1.0);
        PointCloud partial = make_partial(complete, view, config.keep_fraction,
                                          config.partial_size, rng.next_u64());
        normalize_pair(partial, complete);

        ManifestEntry e;
        e.label = to_string(spec.kind);
        e.partial_path = (fs::path(config.dir) /
                          ("sample_" + std::to_string(i) + "_partial.xyz")).string();
        e.complete_path = (fs::path(config.dir) /
                           ("sample_" + std::to_string(i) + "_complete.xyz")).string();
        write_xyz(e.partial_path, partial);
        write_xyz(e.complete_path, complete);
        entries.push_back(std::move(e));
    }

    // seeded shuffle, then contiguous train/val/test slices
    std::vector<int> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng split_rng(mix_seed(config.seed, 0x511f7ULL));
    shuffle(order, split_rng);
    const int n_val = static_cast<int>(config.val_fraction * config.samples);
    const int n_test = static_cast<int>(config.test_fraction * config.samples);
    const int n_train = config.samples - n_val - n_test;

    auto dump = [&](const std::string& name, int begin, int count) {
        json list = json::array();
        for (int i = begin; i < begin + count; ++i) {
            const ManifestEntry& e = entries[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
            list.push_back({{"partial_path", e.partial_path},
                            {"complete_path", e.complete_path},
                            {"label", e.label}});
        }
        const std::string path = (fs::path(config.dir) / (name + ".json")).string();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write manifest '" + path + "'");
        out << list.dump(2) << '\n';
    };
    dump("train", 0, n_train);
    dump("val", n_train, n_val);
    dump("test", n_train + n_val, n_test);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    json list;
    try {
        in >> list;
    } catch (const json::exception& e) {
        throw IoError("manifest '" + path + "': " + e.what());
    }
    if (!list.is_array()) throw IoError("manifest '" + path + "' is not a JSON list");
    std::vector<ManifestEntry> entries;
    for (const json& item : list) {
        ManifestEntry e;
        e.partial_path = item.at("partial_path").get<std::string>();
        e.complete_path = item.at("complete_path").get<std::string>();
        e.label = item.at("label").get<std::string>();
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace lapcomplete
