#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lapcomplete/common.hpp"

namespace lapcomplete {

// Row-major dense extents. An empty shape is a scalar (one element).
using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// A named, learnable f64 buffer. Lives outside any tape; a tape references it
// through leaf nodes so backward() can key gradients by parameter.
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;

    Parameter() = default;
    Parameter(std::string name_, Shape shape_, std::vector<double> value_);
    Parameter(std::string name_, Shape shape_, double fill = 0.0);

    std::int64_t size() const { return numel(shape); }
};

// Running statistics for batch-norm. Updates are collected per forward pass
// and applied by the caller (see Tape::bn_updates) so data-parallel tapes
// stay race-free and deterministic.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.9;

    BatchNormState() = default;
    explicit BatchNormState(int channels)
        : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

struct BnPendingUpdate {
    BatchNormState* state;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
};

enum class Op {
    kLeaf,
    kConst,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kRelu,
    kSquare,
    kSqrt,
    kHuber,
    kConcat,
    kReduceMax,
    kReduceMean,
    kGather,
    kReshape,
    kBatchNorm,
};

const char* op_name(Op op);

class Tape;

// Cheap handle to a node on a tape. Values are owned by the tape.
class Tensor {
 public:
    Tensor() = default;

    const Shape& shape() const;
    const std::vector<double>& values() const;
    std::int64_t size() const;
    double scalar() const;  // requires exactly one element
    bool requires_grad() const;
    int node() const { return node_; }
    Tape* tape() const { return tape_; }
    bool defined() const { return tape_ != nullptr; }

 private:
    friend class Tape;
    Tensor(Tape* tape, int node) : tape_(tape), node_(node) {}

    Tape* tape_ = nullptr;
    int node_ = -1;
};

using GradMap = std::unordered_map<const Parameter*, std::vector<double>>;

// Append-only record of operations. Parent indices always precede a node, so
// forward values are final when written and backward is a single reverse scan.
class Tape {
 public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Tensor leaf(Parameter& param);
    Tensor constant(Shape shape, std::vector<double> data);
    Tensor constant_like(const std::vector<Vec3>& points);  // (n, 3)
    Tensor zeros(Shape shape);
    Tensor full(Shape shape, double v);
    Tensor scalar_const(double v);

    // Primitive ops.
    Tensor matmul(Tensor a, Tensor b);
    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);
    Tensor div(Tensor a, Tensor b);
    Tensor relu(Tensor a);
    Tensor square(Tensor a);
    Tensor sqrt(Tensor a);
    Tensor huber(Tensor a, double sigma);
    Tensor concat(const std::vector<Tensor>& parts, int axis);
    Tensor reduce_max(Tensor a, int axis);
    Tensor reduce_mean(Tensor a, int axis);
    Tensor gather(Tensor a, std::vector<int> indices);  // rows along axis 0
    Tensor reshape(Tensor a, Shape shape);
    Tensor batch_norm(Tensor x, Tensor gamma, Tensor beta, BatchNormState& state,
                      bool training);

    // Composite conveniences (no new op kinds).
    Tensor scale(Tensor a, double c);              // elementwise a * c
    Tensor mean_all(Tensor a);                     // scalar mean over all elements
    Tensor sum_all(Tensor a);                      // scalar sum over all elements
    Tensor broadcast_rows(Tensor row, int n);      // (1, d) -> (n, d)
    Tensor affine(Tensor x, Tensor w, Tensor b);   // x·w + b per row; b is (1, d)

    // Reverse-mode sweep from a scalar loss. Returns d loss / d parameter for
    // every parameter leaf reachable from the loss.
    GradMap backward(Tensor loss) const;

    // Batch statistics recorded by training-mode batch_norm nodes, in op order.
    const std::vector<BnPendingUpdate>& bn_updates() const { return bn_updates_; }
    static void apply_bn_updates(const std::vector<BnPendingUpdate>& updates);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    const Shape& shape_of(int node) const { return nodes_[node].shape; }
    const std::vector<double>& values_of(int node) const { return nodes_[node].value; }
    bool node_requires_grad(int node) const { return nodes_[node].needs_grad; }

 private:
    struct Node {
        Op op;
        Shape shape;
        std::vector<double> value;
        std::vector<int> parents;
        bool needs_grad = false;
        // attributes (meaning depends on op)
        int axis = -1;
        double sigma = 0.0;
        std::vector<int> indices;
        Parameter* param = nullptr;
        // batch-norm saved stats for backward
        std::vector<double> bn_mean, bn_var;
        bool bn_training = false;
        double bn_eps = 0.0;
    };

    Tensor push(Node node);
    const Node& at(int i) const { return nodes_[i]; }
    bool any_needs_grad(const std::vector<int>& parents) const;

    std::vector<Node> nodes_;
    std::vector<BnPendingUpdate> bn_updates_;

    friend class Tensor;
};

// ---- Adam -------------------------------------------------------------

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers shaped like their parameters plus a shared
// step counter; bias correction per the standard update.
struct AdamState {
    AdamConfig config;
    std::int64_t step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

class Adam {
 public:
    Adam(std::vector<Parameter*> params, AdamConfig config);

    // One update from the given gradients; parameters without an entry are
    // treated as zero-gradient (moments still decay).
    void step(const GradMap& grads);

    const std::vector<Parameter*>& params() const { return params_; }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

 private:
    std::vector<Parameter*> params_;
    AdamState state_;
};

// ---- Gradient checking --------------------------------------------------

// Compares backward() against central finite differences over every element
// of every listed parameter. The callback must rebuild the computation from
// the parameters' current values on the given tape and return a scalar.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<Tensor(Tape&)>& f,
                         const std::vector<Parameter*>& params, double h);

}  // namespace lapcomplete
