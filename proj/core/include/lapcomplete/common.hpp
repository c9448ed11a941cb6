#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lapcomplete {

using Vec3 = std::array<double, 3>;

// Bad flags, unusable argument values, violated call contracts. CLI exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape mismatches; message names the op and the offending extents.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN losses, rank-deficient solves, failed gradient checks. CLI exit 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing/corrupt files; message carries the path (and line where known). CLI exit 3.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic 64-bit generator (splitmix64). Used everywhere instead of
// std distributions so runs are bit-reproducible across standard libraries.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
    std::uint64_t state_;
};

// Stable stream derivation: one master seed fans out to independent substreams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0x517cc1b727220a95ULL * (stream + 1)));
    return r.next_u64();
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace lapcomplete
