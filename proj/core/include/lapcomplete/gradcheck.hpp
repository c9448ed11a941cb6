#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lapcomplete {

struct GradCheckResult {
    std::string block;
    double max_rel_error = 0.0;
    bool pass = false;
};

// Central finite differences (h = 1e-5) against backward() for every loss and
// network block at small sizes: chamfer, matching, shape loss (both forms),
// encoder, decoder, feature extractor, GCN stack, and the end-to-end total.
std::vector<GradCheckResult> run_gradient_checks(double tolerance, int n_points, int k,
                                                 std::uint64_t seed);

}  // namespace lapcomplete
