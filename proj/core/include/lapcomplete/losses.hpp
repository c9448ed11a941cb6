#pragma once

#include <string>

#include "lapcomplete/geometry.hpp"
#include "lapcomplete/tensor.hpp"

namespace lapcomplete {

struct LossWeights {
    double alpha = 1000.0;        // matching weight
    double beta = 0.5;            // shape weight
    double lambda = 0.0;          // final-stage Chamfer weight
    double recons_scale = 1000.0;

    void validate() const;
};

// Scalar values of one forward pass, serialized per optimizer step.
struct LossReport {
    double cd_intermediate = 0.0;
    double cd_final = 0.0;
    double match = 0.0;
    double shape = 0.0;
    double total = 0.0;

    // recons_scale*(cd_intermediate + lambda*cd_final) + alpha*match + beta*shape
    double recombined(const LossWeights& w) const;
};

// chamfer(intermediate, gt) + lambda * chamfer(final, gt)
Tensor reconstruction_loss(Tape& tape, Tensor intermediate, Tensor final_out, Tensor gt,
                           double lambda);

// Mean smooth-L1 with sigma = 2 over all coordinates of (after - before).
// Zero iff the clouds are elementwise identical.
Tensor matching_loss(Tape& tape, Tensor before, Tensor after, double sigma = 2.0);

enum class ShapeLossForm {
    kPerVertex,  // per-vertex edge-length-normalized umbrella, summed norms
    kGlobal,     // single global normalizer and one grand-sum norm
};

ShapeLossForm shape_loss_form_from_string(const std::string& s);
const char* to_string(ShapeLossForm form);

// Scale-dependent umbrella loss over the fixed graph, evaluated at the given
// positions. Coincident neighbor pairs contribute nothing and their length is
// excluded from the normalizer.
Tensor shape_preserving_loss(Tape& tape, const LaplacianGraph& graph, Tensor positions,
                             ShapeLossForm form = ShapeLossForm::kPerVertex);

struct LossTerms {
    Tensor total;
    Tensor cd_intermediate;
    Tensor cd_final;
    Tensor match;
    Tensor shape;

    LossReport report(const LossWeights& weights) const;
};

LossTerms total_loss(Tape& tape, Tensor cd_intermediate, Tensor cd_final, Tensor match,
                     Tensor shape, const LossWeights& weights);

}  // namespace lapcomplete
