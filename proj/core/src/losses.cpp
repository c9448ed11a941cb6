#include "lapcomplete/losses.hpp"

#include <cmath>

namespace lapcomplete {

void LossWeights::validate() const {
    if (alpha < 0 || beta < 0 || lambda < 0 || recons_scale < 0)
        throw UsageError("loss weights must be >= 0");
}

double LossReport::recombined(const LossWeights& w) const {
    return w.recons_scale * (cd_intermediate + w.lambda * cd_final) + w.alpha * match +
           w.beta * shape;
}

Tensor reconstruction_loss(Tape& tape, Tensor intermediate, Tensor final_out, Tensor gt,
                           double lambda) {
    Tensor cd_i = chamfer_loss(tape, intermediate, gt);
    Tensor cd_f = chamfer_loss(tape, final_out, gt);
    return tape.add(cd_i, tape.scale(cd_f, lambda));
}

Tensor matching_loss(Tape& tape, Tensor before, Tensor after, double sigma) {
    if (before.shape() != after.shape())
        throw ShapeError("matching_loss: clouds have shapes " + shape_str(before.shape()) +
                         " and " + shape_str(after.shape()));
    Tensor diff = tape.sub(after, before);
    return tape.mean_all(tape.huber(diff, sigma));
}

ShapeLossForm shape_loss_form_from_string(const std::string& s) {
    if (s == "per_vertex") return ShapeLossForm::kPerVertex;
    if (s == "global") return ShapeLossForm::kGlobal;
    throw UsageError("unknown shape loss form '" + s + "' (per_vertex|global)");
}

const char* to_string(ShapeLossForm form) {
    return form == ShapeLossForm::kPerVertex ? "per_vertex" : "global";
}

namespace {

struct EdgeTensors {
    std::vector<int> owners;     // n*k
    std::vector<int> neighbors;  // n*k
    Tensor diff;                 // (n*k, 3), owner - neighbor
    Tensor length;               // (n*k), zero-length edges masked to 0
    Tensor length_safe;          // (n*k), masked entries shifted to 1
    std::vector<double> mask;    // 1 = live edge, 0 = coincident pair
};

// Per-edge x - y differences and guarded lengths over the fixed graph.
EdgeTensors edge_tensors(Tape& tape, const LaplacianGraph& graph, Tensor positions) {
    const int n = graph.size();
    const int k = graph.k;
    EdgeTensors et;
    et.owners.reserve(static_cast<std::size_t>(n) * k);
    et.neighbors.assign(graph.neighbors.begin(), graph.neighbors.end());
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < k; ++r) et.owners.push_back(i);

    Tensor px = tape.gather(positions, et.owners);
    Tensor py = tape.gather(positions, et.neighbors);
    et.diff = tape.sub(px, py);
    Tensor sq = tape.square(et.diff);
    Tensor row_sum = tape.scale(tape.reduce_mean(sq, 1), 3.0);
    Tensor raw_len = tape.sqrt(row_sum);

    const std::vector<double>& lv = raw_len.values();
    et.mask.resize(lv.size());
    std::vector<double> shift(lv.size());
    for (std::size_t e = 0; e < lv.size(); ++e) {
        et.mask[e] = lv[e] > 0.0 ? 1.0 : 0.0;
        shift[e] = 1.0 - et.mask[e];
    }
    const Shape len_shape{static_cast<int>(lv.size())};
    Tensor mask_t = tape.constant(len_shape, et.mask);
    et.length = tape.mul(raw_len, mask_t);
    et.length_safe = tape.add(et.length, tape.constant(len_shape, shift));
    return et;
}

Tensor sum_axis1(Tape& tape, Tensor t) {
    const int red = t.shape()[1];
    return tape.scale(tape.reduce_mean(t, 1), static_cast<double>(red));
}

// broadcast an (m) column factor to (m, 3)
Tensor widen3(Tape& tape, Tensor col) {
    const int m = col.shape()[0];
    Tensor as_col = tape.reshape(col, {m, 1});
    return tape.matmul(as_col, tape.full({1, 3}, 1.0));
}

Tensor per_vertex_form(Tape& tape, const LaplacianGraph& graph, const EdgeTensors& et) {
    const int n = graph.size();
    const int k = graph.k;
    // normalizer per owner, with fully-masked owners shifted to keep 0/0 out
    Tensor len_by_owner = tape.reshape(et.length, {n, k});
    Tensor owner_sum = sum_axis1(tape, len_by_owner);  // (n)
    std::vector<double> owner_shift(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        bool any_live = false;
        for (int r = 0; r < k; ++r)
            any_live = any_live || et.mask[static_cast<std::size_t>(i) * k + r] > 0.0;
        if (!any_live) owner_shift[static_cast<std::size_t>(i)] = 1.0;
    }
    Tensor owner_safe = tape.add(owner_sum, tape.constant({n}, owner_shift));
    Tensor e_per_edge = tape.gather(owner_safe, et.owners);  // (n*k)

    std::vector<double> numer(et.mask.size());
    for (std::size_t e = 0; e < et.mask.size(); ++e) numer[e] = 2.0 * et.mask[e];
    Tensor coeff = tape.div(tape.constant({static_cast<int>(numer.size())}, numer),
                            tape.mul(e_per_edge, et.length_safe));
    Tensor terms = tape.mul(et.diff, widen3(tape, coeff));  // (n*k, 3)
    // group per owner and sum over the k incident edges
    Tensor u = tape.scale(tape.reduce_mean(tape.reshape(terms, {n, k, 3}), 1),
                          static_cast<double>(k));
    Tensor u_norm = tape.sqrt(sum_axis1(tape, tape.square(u)));  // (n)
    return tape.scale(tape.reduce_mean(u_norm, 0), static_cast<double>(n));
}

Tensor global_form(Tape& tape, const LaplacianGraph& graph, const EdgeTensors& et) {
    const int n = graph.size();
    const int k = graph.k;
    Tensor e_global = tape.scale(tape.reduce_mean(et.length, 0),
                                 static_cast<double>(n) * k);  // scalar ()

    // a -> b edges paired with b -> a cancel identically (same length, negated
    // difference, shared normalizer), so only unmatched edges carry value or
    // gradient
    std::vector<char> matched(et.owners.size(), 0);
    for (std::size_t e = 0; e < et.owners.size(); ++e) {
        const int a = et.owners[e];
        const int b = et.neighbors[e];
        for (int r = 0; r < k; ++r) {
            if (graph.neighbors[static_cast<std::size_t>(b) * k + r] == a) {
                matched[e] = 1;
                break;
            }
        }
    }
    std::vector<int> unmatched;
    for (std::size_t e = 0; e < et.owners.size(); ++e)
        if (!matched[e]) unmatched.push_back(static_cast<int>(e));
    if (unmatched.empty()) return tape.scalar_const(0.0);

    const int u_count = static_cast<int>(unmatched.size());
    Tensor diff_u = tape.gather(et.diff, unmatched);
    Tensor len_u = tape.gather(et.length_safe, unmatched);
    std::vector<double> numer(static_cast<std::size_t>(u_count));
    for (int e = 0; e < u_count; ++e)
        numer[static_cast<std::size_t>(e)] = 2.0 * et.mask[static_cast<std::size_t>(unmatched[static_cast<std::size_t>(e)])];
    Tensor e_bcast = tape.reshape(
        tape.broadcast_rows(tape.reshape(e_global, {1, 1}), u_count), Shape{u_count});
    Tensor coeff = tape.div(tape.constant({u_count}, numer), tape.mul(e_bcast, len_u));
    Tensor terms = tape.mul(diff_u, widen3(tape, coeff));  // (u, 3)
    Tensor grand = tape.scale(tape.reduce_mean(terms, 0), static_cast<double>(u_count));  // (3)
    Tensor norm2 = tape.scale(tape.reduce_mean(tape.square(grand), 0), 3.0);
    return tape.sqrt(norm2);
}

}  // namespace

Tensor shape_preserving_loss(Tape& tape, const LaplacianGraph& graph, Tensor positions,
                             ShapeLossForm form) {
    const Shape& s = positions.shape();
    if (s.size() != 2 || s[1] != 3)
        throw ShapeError("shape_preserving_loss: positions must be (n, 3), got " +
                         shape_str(s));
    if (s[0] != graph.size())
        throw ShapeError("shape_preserving_loss: graph covers " +
                         std::to_string(graph.size()) + " points, positions have " +
                         std::to_string(s[0]));
    EdgeTensors et = edge_tensors(tape, graph, positions);
    return form == ShapeLossForm::kPerVertex ? per_vertex_form(tape, graph, et)
                                             : global_form(tape, graph, et);
}

LossTerms total_loss(Tape& tape, Tensor cd_intermediate, Tensor cd_final, Tensor match,
                     Tensor shape, const LossWeights& weights) {
    weights.validate();
    for (const Tensor* t : {&cd_intermediate, &cd_final, &match, &shape})
        if (t->size() != 1)
            throw ShapeError("total_loss: components must be scalar, got " +
                             shape_str(t->shape()));
    Tensor recons = tape.add(cd_intermediate, tape.scale(cd_final, weights.lambda));
    Tensor total = tape.add(
        tape.add(tape.scale(recons, weights.recons_scale), tape.scale(match, weights.alpha)),
        tape.scale(shape, weights.beta));
    return {total, cd_intermediate, cd_final, match, shape};
}

LossReport LossTerms::report(const LossWeights& weights) const {
    LossReport r;
    r.cd_intermediate = cd_intermediate.scalar();
    r.cd_final = cd_final.scalar();
    r.match = match.scalar();
    r.shape = shape.scalar();
    r.total = total.scalar();
    (void)weights;
    return r;
}

}  // namespace lapcomplete
