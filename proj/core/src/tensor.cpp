#include "lapcomplete/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lapcomplete {

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>;
using MutMatMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// outer * reduced * inner decomposition for a single-axis reduction.
struct AxisSplit {
    std::int64_t outer = 1, red = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[i];
    s.red = shape[axis];
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, int axis) {
    Shape out;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i)
        if (i != axis) out.push_back(shape[i]);
    return out;
}

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
    throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void require_same_shape(Op op, const Shape& a, const Shape& b) {
    if (a != b)
        shape_fail(op, "operand shapes " + shape_str(a) + " and " + shape_str(b) +
                           " must match");
}

}  // namespace

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kConst: return "const";
        case Op::kMatmul: return "matmul";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "mul";
        case Op::kDiv: return "div";
        case Op::kRelu: return "relu";
        case Op::kSquare: return "square";
        case Op::kSqrt: return "sqrt";
        case Op::kHuber: return "huber";
        case Op::kConcat: return "concat";
        case Op::kReduceMax: return "reduce_max";
        case Op::kReduceMean: return "reduce_mean";
        case Op::kGather: return "gather";
        case Op::kReshape: return "reshape";
        case Op::kBatchNorm: return "batch_norm";
    }
    return "?";
}

Parameter::Parameter(std::string name_, Shape shape_, std::vector<double> value_)
    : name(std::move(name_)), shape(std::move(shape_)), value(std::move(value_)) {
    for (int e : shape)
        if (e < 1) throw ShapeError("parameter " + name + ": extent < 1");
    if (static_cast<std::int64_t>(value.size()) != numel(shape))
        throw ShapeError("parameter " + name + ": data length " +
                         std::to_string(value.size()) + " != numel" + shape_str(shape));
}

Parameter::Parameter(std::string name_, Shape shape_, double fill)
    : Parameter(std::move(name_), shape_,
                std::vector<double>(static_cast<std::size_t>(numel(shape_)), fill)) {}

// ---- Tensor accessors ---------------------------------------------------

const Shape& Tensor::shape() const { return tape_->shape_of(node_); }
const std::vector<double>& Tensor::values() const { return tape_->values_of(node_); }
std::int64_t Tensor::size() const { return numel(shape()); }
bool Tensor::requires_grad() const { return tape_->node_requires_grad(node_); }

double Tensor::scalar() const {
    if (size() != 1)
        throw ShapeError("scalar(): tensor has shape " + shape_str(shape()));
    return values()[0];
}

// ---- Tape: construction ---------------------------------------------------

Tensor Tape::push(Node node) {
    if (static_cast<std::int64_t>(node.value.size()) != numel(node.shape))
        shape_fail(node.op, "internal: value length mismatch for " + shape_str(node.shape));
    nodes_.push_back(std::move(node));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::any_needs_grad(const std::vector<int>& parents) const {
    for (int p : parents)
        if (nodes_[p].needs_grad) return true;
    return false;
}

Tensor Tape::leaf(Parameter& param) {
    Node n;
    n.op = Op::kLeaf;
    n.shape = param.shape;
    n.value = param.value;
    n.needs_grad = true;
    n.param = &param;
    return push(std::move(n));
}

Tensor Tape::constant(Shape shape, std::vector<double> data) {
    for (int e : shape)
        if (e < 1) throw ShapeError("constant: extent < 1 in " + shape_str(shape));
    if (static_cast<std::int64_t>(data.size()) != numel(shape))
        throw ShapeError("constant: data length " + std::to_string(data.size()) +
                         " != numel" + shape_str(shape));
    Node n;
    n.op = Op::kConst;
    n.shape = std::move(shape);
    n.value = std::move(data);
    return push(std::move(n));
}

Tensor Tape::constant_like(const std::vector<Vec3>& points) {
    std::vector<double> flat;
    flat.reserve(points.size() * 3);
    for (const Vec3& p : points) {
        flat.push_back(p[0]);
        flat.push_back(p[1]);
        flat.push_back(p[2]);
    }
    return constant({static_cast<int>(points.size()), 3}, std::move(flat));
}

Tensor Tape::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tape::full(Shape shape, double v) {
    std::vector<double> data(static_cast<std::size_t>(numel(shape)), v);
    return constant(std::move(shape), std::move(data));
}

Tensor Tape::scalar_const(double v) { return constant({1}, {v}); }

// ---- Tape: primitive ops -------------------------------------------------

Tensor Tape::matmul(Tensor a, Tensor b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2)
        shape_fail(Op::kMatmul, "expects rank-2 operands, got " + shape_str(sa) + " and " +
                                    shape_str(sb));
    if (sa[1] != sb[0])
        shape_fail(Op::kMatmul, "inner extents disagree: " + shape_str(sa) + " vs " +
                                    shape_str(sb));
    Node n;
    n.op = Op::kMatmul;
    n.shape = {sa[0], sb[1]};
    n.parents = {a.node(), b.node()};
    n.needs_grad = any_needs_grad(n.parents);
    n.value.resize(static_cast<std::size_t>(sa[0]) * sb[1]);
    MatMap ma(a.values().data(), sa[0], sa[1]);
    MatMap mb(b.values().data(), sb[0], sb[1]);
    MutMatMap mc(n.value.data(), sa[0], sb[1]);
    mc.noalias() = ma * mb;
    return push(std::move(n));
}

Tensor Tape::add(Tensor a, Tensor b) {
    require_same_shape(Op::kAdd, a.shape(), b.shape());
    Node n;
    n.op = Op::kAdd;
    n.shape = a.shape();
    n.parents = {a.node(), b.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    const auto& vb = b.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
    return push(std::move(n));
}

Tensor Tape::sub(Tensor a, Tensor b) {
    require_same_shape(Op::kSub, a.shape(), b.shape());
    Node n;
    n.op = Op::kSub;
    n.shape = a.shape();
    n.parents = {a.node(), b.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    const auto& vb = b.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] - vb[i];
    return push(std::move(n));
}

Tensor Tape::mul(Tensor a, Tensor b) {
    require_same_shape(Op::kMul, a.shape(), b.shape());
    Node n;
    n.op = Op::kMul;
    n.shape = a.shape();
    n.parents = {a.node(), b.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    const auto& vb = b.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * vb[i];
    return push(std::move(n));
}

Tensor Tape::div(Tensor a, Tensor b) {
    require_same_shape(Op::kDiv, a.shape(), b.shape());
    Node n;
    n.op = Op::kDiv;
    n.shape = a.shape();
    n.parents = {a.node(), b.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    const auto& vb = b.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] / vb[i];
    return push(std::move(n));
}

Tensor Tape::relu(Tensor a) {
    Node n;
    n.op = Op::kRelu;
    n.shape = a.shape();
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] > 0.0 ? va[i] : 0.0;
    return push(std::move(n));
}

Tensor Tape::square(Tensor a) {
    Node n;
    n.op = Op::kSquare;
    n.shape = a.shape();
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * va[i];
    return push(std::move(n));
}

Tensor Tape::sqrt(Tensor a) {
    Node n;
    n.op = Op::kSqrt;
    n.shape = a.shape();
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const auto& va = a.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::sqrt(va[i]);
    return push(std::move(n));
}

Tensor Tape::huber(Tensor a, double sigma) {
    if (!(sigma > 0.0)) throw UsageError("huber: sigma must be > 0");
    Node n;
    n.op = Op::kHuber;
    n.shape = a.shape();
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    n.sigma = sigma;
    const double cut = 1.0 / (sigma * sigma);
    const auto& va = a.values();
    n.value.resize(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double x = va[i];
        n.value[i] = std::abs(x) < cut ? 0.5 * (sigma * x) * (sigma * x)
                                       : std::abs(x) - 0.5 * cut;
    }
    return push(std::move(n));
}

Tensor Tape::concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) shape_fail(Op::kConcat, "needs at least one operand");
    const Shape& first = parts[0].shape();
    const int rank = static_cast<int>(first.size());
    if (axis < 0 || axis >= rank)
        shape_fail(Op::kConcat, "axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(first));
    Shape out = first;
    out[axis] = 0;
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        if (static_cast<int>(s.size()) != rank)
            shape_fail(Op::kConcat, "rank mismatch: " + shape_str(first) + " vs " +
                                        shape_str(s));
        for (int i = 0; i < rank; ++i)
            if (i != axis && s[i] != first[i])
                shape_fail(Op::kConcat, "extent mismatch off axis " + std::to_string(axis) +
                                            ": " + shape_str(first) + " vs " + shape_str(s));
        out[axis] += s[axis];
    }
    Node n;
    n.op = Op::kConcat;
    n.shape = out;
    n.axis = axis;
    n.needs_grad = false;
    for (const Tensor& t : parts) {
        n.parents.push_back(t.node());
        n.needs_grad = n.needs_grad || t.requires_grad();
    }
    n.value.resize(static_cast<std::size_t>(numel(out)));
    const AxisSplit so = split_axis(out, axis);
    std::int64_t offset = 0;  // running start along the concat axis
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        const AxisSplit si = split_axis(s, axis);
        const auto& v = t.values();
        for (std::int64_t o = 0; o < si.outer; ++o) {
            const double* src = v.data() + o * si.red * si.inner;
            double* dst = n.value.data() + (o * so.red + offset) * so.inner;
            std::copy(src, src + si.red * si.inner, dst);
        }
        offset += s[axis];
    }
    return push(std::move(n));
}

Tensor Tape::reduce_max(Tensor a, int axis) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        shape_fail(Op::kReduceMax, "axis " + std::to_string(axis) + " out of range for " +
                                       shape_str(s));
    Node n;
    n.op = Op::kReduceMax;
    n.shape = drop_axis(s, axis);
    n.axis = axis;
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const AxisSplit sp = split_axis(s, axis);
    const auto& v = a.values();
    n.value.resize(static_cast<std::size_t>(sp.outer * sp.inner));
    for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            double best = v[static_cast<std::size_t>((o * sp.red) * sp.inner + i)];
            for (std::int64_t r = 1; r < sp.red; ++r) {
                const double x = v[static_cast<std::size_t>((o * sp.red + r) * sp.inner + i)];
                if (x > best) best = x;
            }
            n.value[static_cast<std::size_t>(o * sp.inner + i)] = best;
        }
    }
    return push(std::move(n));
}

Tensor Tape::reduce_mean(Tensor a, int axis) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        shape_fail(Op::kReduceMean, "axis " + std::to_string(axis) + " out of range for " +
                                        shape_str(s));
    Node n;
    n.op = Op::kReduceMean;
    n.shape = drop_axis(s, axis);
    n.axis = axis;
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const AxisSplit sp = split_axis(s, axis);
    const auto& v = a.values();
    n.value.resize(static_cast<std::size_t>(sp.outer * sp.inner));
    const double inv = 1.0 / static_cast<double>(sp.red);
    for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            double acc = 0.0;
            for (std::int64_t r = 0; r < sp.red; ++r)
                acc += v[static_cast<std::size_t>((o * sp.red + r) * sp.inner + i)];
            n.value[static_cast<std::size_t>(o * sp.inner + i)] = acc * inv;
        }
    }
    return push(std::move(n));
}

Tensor Tape::gather(Tensor a, std::vector<int> indices) {
    const Shape& s = a.shape();
    if (s.empty()) shape_fail(Op::kGather, "cannot gather from a scalar");
    if (indices.empty()) shape_fail(Op::kGather, "index list is empty");
    for (int i : indices)
        if (i < 0 || i >= s[0])
            shape_fail(Op::kGather, "index " + std::to_string(i) + " out of range for " +
                                        shape_str(s));
    Node n;
    n.op = Op::kGather;
    n.shape = s;
    n.shape[0] = static_cast<int>(indices.size());
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    const std::int64_t row = numel(s) / s[0];
    n.value.resize(indices.size() * static_cast<std::size_t>(row));
    const auto& v = a.values();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = v.data() + static_cast<std::int64_t>(indices[i]) * row;
        std::copy(src, src + row, n.value.data() + static_cast<std::int64_t>(i) * row);
    }
    n.indices = std::move(indices);
    return push(std::move(n));
}

Tensor Tape::reshape(Tensor a, Shape shape) {
    for (int e : shape)
        if (e < 1) shape_fail(Op::kReshape, "extent < 1 in " + shape_str(shape));
    if (numel(shape) != a.size())
        shape_fail(Op::kReshape, "cannot view " + shape_str(a.shape()) + " as " +
                                     shape_str(shape));
    Node n;
    n.op = Op::kReshape;
    n.shape = std::move(shape);
    n.parents = {a.node()};
    n.needs_grad = any_needs_grad(n.parents);
    n.value = a.values();
    return push(std::move(n));
}

Tensor Tape::batch_norm(Tensor x, Tensor gamma, Tensor beta, BatchNormState& state,
                        bool training) {
    const Shape& sx = x.shape();
    if (sx.size() != 2)
        shape_fail(Op::kBatchNorm, "expects rank-2 input, got " + shape_str(sx));
    const int rows = sx[0];
    const int ch = sx[1];
    if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch})
        shape_fail(Op::kBatchNorm, "gamma/beta must have shape (" + std::to_string(ch) +
                                       "), got " + shape_str(gamma.shape()) + " and " +
                                       shape_str(beta.shape()));
    if (static_cast<int>(state.running_mean.size()) != ch)
        shape_fail(Op::kBatchNorm, "state has " + std::to_string(state.running_mean.size()) +
                                       " channels, input has " + std::to_string(ch));
    Node n;
    n.op = Op::kBatchNorm;
    n.shape = sx;
    n.parents = {x.node(), gamma.node(), beta.node()};
    n.needs_grad = any_needs_grad(n.parents);
    n.bn_training = training;
    n.bn_eps = state.eps;
    n.bn_mean.resize(ch);
    n.bn_var.resize(ch);
    const auto& vx = x.values();
    if (training) {
        // Biased (1/N) variance, matching the normalization below.
        for (int c = 0; c < ch; ++c) {
            double mean = 0.0;
            for (int r = 0; r < rows; ++r) mean += vx[static_cast<std::size_t>(r) * ch + c];
            mean /= rows;
            double var = 0.0;
            for (int r = 0; r < rows; ++r) {
                const double d = vx[static_cast<std::size_t>(r) * ch + c] - mean;
                var += d * d;
            }
            var /= rows;
            n.bn_mean[c] = mean;
            n.bn_var[c] = var;
        }
        bn_updates_.push_back({&state, n.bn_mean, n.bn_var});
    } else {
        n.bn_mean = state.running_mean;
        n.bn_var = state.running_var;
    }
    const auto& vg = gamma.values();
    const auto& vb = beta.values();
    n.value.resize(vx.size());
    for (int c = 0; c < ch; ++c) {
        const double inv = 1.0 / std::sqrt(n.bn_var[c] + n.bn_eps);
        for (int r = 0; r < rows; ++r) {
            const std::size_t i = static_cast<std::size_t>(r) * ch + c;
            n.value[i] = vg[c] * ((vx[i] - n.bn_mean[c]) * inv) + vb[c];
        }
    }
    return push(std::move(n));
}

void Tape::apply_bn_updates(const std::vector<BnPendingUpdate>& updates) {
    for (const BnPendingUpdate& u : updates) {
        BatchNormState& s = *u.state;
        const double m = s.momentum;
        for (std::size_t c = 0; c < s.running_mean.size(); ++c) {
            s.running_mean[c] = m * s.running_mean[c] + (1.0 - m) * u.batch_mean[c];
            s.running_var[c] = m * s.running_var[c] + (1.0 - m) * u.batch_var[c];
        }
    }
}

// ---- Tape: composites -----------------------------------------------------

Tensor Tape::scale(Tensor a, double c) { return mul(a, full(a.shape(), c)); }

Tensor Tape::mean_all(Tensor a) {
    Tensor flat = reshape(a, {static_cast<int>(a.size())});
    return reduce_mean(flat, 0);
}

Tensor Tape::sum_all(Tensor a) {
    return scale(mean_all(a), static_cast<double>(a.size()));
}

Tensor Tape::broadcast_rows(Tensor row, int n) {
    const Shape& s = row.shape();
    if (s.size() != 2 || s[0] != 1)
        throw ShapeError("broadcast_rows: expects shape (1, d), got " + shape_str(s));
    return gather(row, std::vector<int>(static_cast<std::size_t>(n), 0));
}

Tensor Tape::affine(Tensor x, Tensor w, Tensor b) {
    Tensor y = matmul(x, w);
    return add(y, broadcast_rows(b, y.shape()[0]));
}

// ---- backward -------------------------------------------------------------

GradMap Tape::backward(Tensor loss) const {
    if (loss.tape() != this) throw UsageError("backward: loss is not on this tape");
    if (loss.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (nodes_.empty()) throw UsageError("backward: tape is empty");

    const int last = loss.node();
    std::vector<std::vector<double>> grads(static_cast<std::size_t>(last) + 1);
    auto grad_buf = [&](int i) -> std::vector<double>& {
        if (grads[i].empty())
            grads[i].assign(static_cast<std::size_t>(numel(nodes_[i].shape)), 0.0);
        return grads[i];
    };
    grad_buf(last)[0] = 1.0;

    for (int i = last; i >= 0; --i) {
        const Node& n = nodes_[i];
        if (!n.needs_grad || grads[i].empty()) continue;
        const std::vector<double>& g = grads[i];
        switch (n.op) {
            case Op::kLeaf:
            case Op::kConst:
                break;
            case Op::kMatmul: {
                const Node& a = nodes_[n.parents[0]];
                const Node& b = nodes_[n.parents[1]];
                const int m = a.shape[0], k = a.shape[1], c = b.shape[1];
                MatMap mg(g.data(), m, c);
                if (a.needs_grad) {
                    MatMap mb(b.value.data(), k, c);
                    MutMatMap ga(grad_buf(n.parents[0]).data(), m, k);
                    ga.noalias() += mg * mb.transpose();
                }
                if (b.needs_grad) {
                    MatMap ma(a.value.data(), m, k);
                    MutMatMap gb(grad_buf(n.parents[1]).data(), k, c);
                    gb.noalias() += ma.transpose() * mg;
                }
                break;
            }
            case Op::kAdd: {
                for (int side = 0; side < 2; ++side) {
                    if (!nodes_[n.parents[side]].needs_grad) continue;
                    auto& gp = grad_buf(n.parents[side]);
                    for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j];
                }
                break;
            }
            case Op::kSub: {
                if (nodes_[n.parents[0]].needs_grad) {
                    auto& gp = grad_buf(n.parents[0]);
                    for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j];
                }
                if (nodes_[n.parents[1]].needs_grad) {
                    auto& gp = grad_buf(n.parents[1]);
                    for (std::size_t j = 0; j < g.size(); ++j) gp[j] -= g[j];
                }
                break;
            }
            case Op::kMul: {
                const auto& va = nodes_[n.parents[0]].value;
                const auto& vb = nodes_[n.parents[1]].value;
                if (nodes_[n.parents[0]].needs_grad) {
                    auto& gp = grad_buf(n.parents[0]);
                    for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j] * vb[j];
                }
                if (nodes_[n.parents[1]].needs_grad) {
                    auto& gp = grad_buf(n.parents[1]);
                    for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j] * va[j];
                }
                break;
            }
            case Op::kDiv: {
                const auto& va = nodes_[n.parents[0]].value;
                const auto& vb = nodes_[n.parents[1]].value;
                if (nodes_[n.parents[0]].needs_grad) {
                    auto& gp = grad_buf(n.parents[0]);
                    for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j] / vb[j];
                }
                if (nodes_[n.parents[1]].needs_grad) {
                    auto& gp = grad_buf(n.parents[1]);
                    for (std::size_t j = 0; j < g.size(); ++j)
                        gp[j] -= g[j] * va[j] / (vb[j] * vb[j]);
                }
                break;
            }
            case Op::kRelu: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                const auto& vx = nodes_[n.parents[0]].value;
                auto& gp = grad_buf(n.parents[0]);
                // subgradient at 0 is 0
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (vx[j] > 0.0) gp[j] += g[j];
                break;
            }
            case Op::kSquare: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                const auto& vx = nodes_[n.parents[0]].value;
                auto& gp = grad_buf(n.parents[0]);
                for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j] * 2.0 * vx[j];
                break;
            }
            case Op::kSqrt: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                auto& gp = grad_buf(n.parents[0]);
                // derivative unbounded at 0; define it as 0 there (same spirit as relu)
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (n.value[j] > 0.0) gp[j] += g[j] * 0.5 / n.value[j];
                break;
            }
            case Op::kHuber: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                const auto& vx = nodes_[n.parents[0]].value;
                auto& gp = grad_buf(n.parents[0]);
                const double s2 = n.sigma * n.sigma;
                const double cut = 1.0 / s2;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double x = vx[j];
                    const double d = std::abs(x) < cut ? s2 * x : (x > 0.0 ? 1.0 : -1.0);
                    gp[j] += g[j] * d;
                }
                break;
            }
            case Op::kConcat: {
                const AxisSplit so = split_axis(n.shape, n.axis);
                std::int64_t offset = 0;
                for (int p : n.parents) {
                    const Node& src = nodes_[p];
                    const AxisSplit si = split_axis(src.shape, n.axis);
                    if (src.needs_grad) {
                        auto& gp = grad_buf(p);
                        for (std::int64_t o = 0; o < si.outer; ++o) {
                            const double* gsrc = g.data() + (o * so.red + offset) * so.inner;
                            double* gdst = gp.data() + o * si.red * si.inner;
                            for (std::int64_t j = 0; j < si.red * si.inner; ++j)
                                gdst[j] += gsrc[j];
                        }
                    }
                    offset += src.shape[n.axis];
                }
                break;
            }
            case Op::kReduceMax: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                const Node& src = nodes_[n.parents[0]];
                const AxisSplit sp = split_axis(src.shape, n.axis);
                auto& gp = grad_buf(n.parents[0]);
                // all of the gradient goes to the first argmax (lowest index on ties)
                for (std::int64_t o = 0; o < sp.outer; ++o) {
                    for (std::int64_t i2 = 0; i2 < sp.inner; ++i2) {
                        std::int64_t arg = 0;
                        double best = src.value[static_cast<std::size_t>(o * sp.red * sp.inner + i2)];
                        for (std::int64_t r = 1; r < sp.red; ++r) {
                            const double x =
                                src.value[static_cast<std::size_t>((o * sp.red + r) * sp.inner + i2)];
                            if (x > best) { best = x; arg = r; }
                        }
                        gp[static_cast<std::size_t>((o * sp.red + arg) * sp.inner + i2)] +=
                            g[static_cast<std::size_t>(o * sp.inner + i2)];
                    }
                }
                break;
            }
            case Op::kReduceMean: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                const Node& src = nodes_[n.parents[0]];
                const AxisSplit sp = split_axis(src.shape, n.axis);
                auto& gp = grad_buf(n.parents[0]);
                const double inv = 1.0 / static_cast<double>(sp.red);
                for (std::int64_t o = 0; o < sp.outer; ++o)
                    for (std::int64_t r = 0; r < sp.red; ++r)
                        for (std::int64_t i2 = 0; i2 < sp.inner; ++i2)
                            gp[static_cast<std::size_t>((o * sp.red + r) * sp.inner + i2)] +=
                                g[static_cast<std::size_t>(o * sp.inner + i2)] * inv;
                break;
            }
            case Op::kGather: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                const Node& src = nodes_[n.parents[0]];
                const std::int64_t row = numel(src.shape) / src.shape[0];
                auto& gp = grad_buf(n.parents[0]);
                // scatter-add; repeated indices accumulate
                for (std::size_t r = 0; r < n.indices.size(); ++r) {
                    const double* gsrc = g.data() + static_cast<std::int64_t>(r) * row;
                    double* gdst = gp.data() + static_cast<std::int64_t>(n.indices[r]) * row;
                    for (std::int64_t j = 0; j < row; ++j) gdst[j] += gsrc[j];
                }
                break;
            }
            case Op::kReshape: {
                if (!nodes_[n.parents[0]].needs_grad) break;
                auto& gp = grad_buf(n.parents[0]);
                for (std::size_t j = 0; j < g.size(); ++j) gp[j] += g[j];
                break;
            }
            case Op::kBatchNorm: {
                const Node& x = nodes_[n.parents[0]];
                const Node& gamma = nodes_[n.parents[1]];
                const int rows = n.shape[0];
                const int ch = n.shape[1];
                // per channel: xhat, then the train-mode chain rule through
                // batch statistics (or the plain affine in eval mode)
                std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
                std::vector<double> inv_std(ch);
                for (int c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(n.bn_var[c] + n.bn_eps);
                for (int r = 0; r < rows; ++r) {
                    for (int c = 0; c < ch; ++c) {
                        const std::size_t j = static_cast<std::size_t>(r) * ch + c;
                        const double xhat = (x.value[j] - n.bn_mean[c]) * inv_std[c];
                        sum_g[c] += g[j];
                        sum_gx[c] += g[j] * xhat;
                    }
                }
                if (gamma.needs_grad) {
                    auto& gg = grad_buf(n.parents[1]);
                    for (int c = 0; c < ch; ++c) gg[c] += sum_gx[c];
                }
                if (nodes_[n.parents[2]].needs_grad) {
                    auto& gb = grad_buf(n.parents[2]);
                    for (int c = 0; c < ch; ++c) gb[c] += sum_g[c];
                }
                if (x.needs_grad) {
                    auto& gx = grad_buf(n.parents[0]);
                    const double invn = 1.0 / rows;
                    for (int r = 0; r < rows; ++r) {
                        for (int c = 0; c < ch; ++c) {
                            const std::size_t j = static_cast<std::size_t>(r) * ch + c;
                            const double go = g[j] * gamma.value[c];
                            if (n.bn_training) {
                                const double xhat = (x.value[j] - n.bn_mean[c]) * inv_std[c];
                                gx[j] += inv_std[c] *
                                         (go - gamma.value[c] * invn *
                                                   (sum_g[c] + xhat * sum_gx[c]));
                            } else {
                                gx[j] += go * inv_std[c];
                            }
                        }
                    }
                }
                break;
            }
        }
    }

    GradMap out;
    for (int i = 0; i <= last; ++i) {
        const Node& n = nodes_[i];
        if (n.op != Op::kLeaf || grads[i].empty()) continue;
        auto [it, fresh] = out.try_emplace(n.param, grads[i]);
        if (!fresh)
            for (std::size_t j = 0; j < grads[i].size(); ++j) it->second[j] += grads[i][j];
    }
    // parameters that never received gradient still appear, with zeros
    for (int i = 0; i <= last; ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::kLeaf)
            out.try_emplace(n.param,
                            std::vector<double>(static_cast<std::size_t>(numel(n.shape)), 0.0));
    }
    return out;
}

// ---- Adam -----------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)) {
    state_.config = config;
    state_.m.reserve(params_.size());
    state_.v.reserve(params_.size());
    for (Parameter* p : params_) {
        state_.m.emplace_back(p->value.size(), 0.0);
        state_.v.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step(const GradMap& grads) {
    const AdamConfig& c = state_.config;
    state_.step_count += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state_.step_count));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state_.step_count));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter& p = *params_[pi];
        auto it = grads.find(&p);
        const std::vector<double>* g = it == grads.end() ? nullptr : &it->second;
        if (g && g->size() != p.value.size())
            throw ShapeError("adam_step: gradient size " + std::to_string(g->size()) +
                             " != parameter '" + p.name + "' size " +
                             std::to_string(p.value.size()));
        auto& m = state_.m[pi];
        auto& v = state_.v[pi];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double gj = g ? (*g)[j] : 0.0;
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

// ---- finite differences -----------------------------------------------------

double finite_diff_check(const std::function<Tensor(Tape&)>& f,
                         const std::vector<Parameter*>& params, double h) {
    if (!(h > 0.0)) throw UsageError("finite_diff_check: h must be > 0");
    GradMap analytic;
    {
        Tape tape;
        Tensor loss = f(tape);
        analytic = tape.backward(loss);
    }
    auto value = [&]() {
        Tape tape;
        return f(tape).scalar();
    };
    double max_rel = 0.0;
    for (Parameter* p : params) {
        auto it = analytic.find(p);
        for (std::size_t j = 0; j < p->value.size(); ++j) {
            const double keep = p->value[j];
            p->value[j] = keep + h;
            const double fp = value();
            p->value[j] = keep - h;
            const double fm = value();
            p->value[j] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = it == analytic.end() ? 0.0 : it->second[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace lapcomplete
