#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lapcomplete/common.hpp"
#include "lapcomplete/tensor.hpp"

namespace lapcomplete {

// Shared-weight per-point linear map (a kernel-size-1 conv over the point
// axis). Bias starts at zero; weights are uniform in +-sqrt(6/(fin+fout)).
struct LinearLayer {
    Parameter weight;  // (in, out)
    Parameter bias;    // (1, out)

    LinearLayer() = default;
    LinearLayer(const std::string& name, int in, int out, Rng& rng)
        : weight(name + ".weight", Shape{in, out}), bias(name + ".bias", Shape{1, out}) {
        const double a = std::sqrt(6.0 / (in + out));
        for (double& w : weight.value) w = rng.uniform(-a, a);
    }

    int in_dim() const { return weight.shape[0]; }
    int out_dim() const { return weight.shape[1]; }

    Tensor apply(Tape& tape, Tensor x) {
        return tape.affine(x, tape.leaf(weight), tape.leaf(bias));
    }

    void zero_init() {
        std::fill(weight.value.begin(), weight.value.end(), 0.0);
        std::fill(bias.value.begin(), bias.value.end(), 0.0);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

// Learnable batch-norm affine plus its running statistics.
struct BatchNormLayer {
    Parameter gamma;  // (c)
    Parameter beta;   // (c)
    BatchNormState state;

    BatchNormLayer() = default;
    BatchNormLayer(const std::string& name, int channels)
        : gamma(name + ".gamma", Shape{channels}, 1.0),
          beta(name + ".beta", Shape{channels}, 0.0),
          state(channels) {}

    Tensor apply(Tape& tape, Tensor x, bool training) {
        return tape.batch_norm(x, tape.leaf(gamma), tape.leaf(beta), state, training);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

}  // namespace lapcomplete
