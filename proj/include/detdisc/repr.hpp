#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "detdisc/common.hpp"

namespace detdisc {

enum class Activation { Identity, RectifiedLinear };

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;
};

// The trainable representation phi: a small affine/rectifier stack.
// An empty layer list is the identity map (output_dim == input_dim).
struct ReprParams {
  std::vector<Layer> layers;
  int input_dim = 0;
  int output_dim = 0;
};

struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct ReprGrad {
  std::vector<LayerGrad> layers;
};

struct BackwardResult {
  ReprGrad params;
  Eigen::VectorXd input;  // gradient w.r.t. x
};

// Throws ConfigError if the layer dimensions do not chain.
void check_repr(const ReprParams& p);

Eigen::VectorXd repr_forward(const ReprParams& p, const Eigen::VectorXd& x);

// Reverse-mode gradients of upstream . phi(x).
// Subgradient through a rectifier kink (pre-activation exactly 0) is 0.
BackwardResult repr_backward(const ReprParams& p, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& upstream);

// Weights i.i.d. uniform in [-s, s] with s = sqrt(6/(in+out)); biases zero.
// dims = {D, h1, ..., F}; activations has dims.size()-1 entries.
ReprParams init_repr(std::uint64_t seed, const std::vector<int>& dims,
                     const std::vector<Activation>& activations);

ReprGrad zero_grad(const ReprParams& p);
void add_scaled(ReprGrad& acc, const ReprGrad& g, double scale);
void scale_grad(ReprGrad& g, double scale);
bool grad_finite(const ReprGrad& g);

}  // namespace detdisc
