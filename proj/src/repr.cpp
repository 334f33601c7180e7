#include "detdisc/repr.hpp"

#include <cmath>
#include <random>

namespace detdisc {

void check_repr(const ReprParams& p) {
  if (p.input_dim <= 0) throw ConfigError("repr: input_dim must be positive");
  if (p.layers.empty()) {
    if (p.output_dim != p.input_dim)
      throw ConfigError("repr: identity stack requires output_dim == input_dim");
    return;
  }
  int in = p.input_dim;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Layer& layer = p.layers[l];
    if (layer.weight.cols() != in)
      throw ConfigError("repr: layer " + std::to_string(l) + " input dim mismatch");
    if (layer.bias.size() != layer.weight.rows())
      throw ConfigError("repr: layer " + std::to_string(l) + " bias dim mismatch");
    in = static_cast<int>(layer.weight.rows());
  }
  if (in != p.output_dim) throw ConfigError("repr: last layer must output output_dim");
}

static Eigen::VectorXd apply_activation(Activation a, Eigen::VectorXd v) {
  if (a == Activation::RectifiedLinear) v = v.cwiseMax(0.0);
  return v;
}

Eigen::VectorXd repr_forward(const ReprParams& p, const Eigen::VectorXd& x) {
  if (x.size() != p.input_dim) throw ValidationError("repr_forward: input dimension mismatch");
  Eigen::VectorXd h = x;
  for (const Layer& layer : p.layers) {
    h = apply_activation(layer.activation, layer.weight * h + layer.bias);
  }
  return h;
}

BackwardResult repr_backward(const ReprParams& p, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& upstream) {
  if (x.size() != p.input_dim) throw ValidationError("repr_backward: input dimension mismatch");
  if (upstream.size() != p.output_dim)
    throw ValidationError("repr_backward: upstream dimension mismatch");

  const std::size_t L = p.layers.size();
  std::vector<Eigen::VectorXd> inputs(L);   // input to each layer
  std::vector<Eigen::VectorXd> preacts(L);  // affine output before activation
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < L; ++l) {
    inputs[l] = h;
    preacts[l] = p.layers[l].weight * h + p.layers[l].bias;
    h = apply_activation(p.layers[l].activation, preacts[l]);
  }

  BackwardResult out;
  out.params.layers.resize(L);
  Eigen::VectorXd delta = upstream;
  for (std::size_t li = L; li-- > 0;) {
    const Layer& layer = p.layers[li];
    Eigen::VectorXd local = delta;
    if (layer.activation == Activation::RectifiedLinear) {
      for (Eigen::Index i = 0; i < local.size(); ++i) {
        if (preacts[li](i) <= 0.0) local(i) = 0.0;
      }
    }
    out.params.layers[li].weight = local * inputs[li].transpose();
    out.params.layers[li].bias = local;
    delta = layer.weight.transpose() * local;
  }
  out.input = delta;
  return out;
}

ReprParams init_repr(std::uint64_t seed, const std::vector<int>& dims,
                     const std::vector<Activation>& activations) {
  if (dims.empty()) throw ConfigError("init_repr: dims must not be empty");
  for (int d : dims) {
    if (d <= 0) throw ConfigError("init_repr: dims must be positive");
  }
  if (activations.size() + 1 != dims.size())
    throw ConfigError("init_repr: need one activation per layer");

  ReprParams p;
  p.input_dim = dims.front();
  p.output_dim = dims.back();
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    const int in = dims[l];
    const int out = dims[l + 1];
    const double s = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-s, s);
    layer.weight.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = activations[l];
    p.layers.push_back(std::move(layer));
  }
  check_repr(p);
  return p;
}

ReprGrad zero_grad(const ReprParams& p) {
  ReprGrad g;
  g.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    g.layers[l].weight = Eigen::MatrixXd::Zero(p.layers[l].weight.rows(), p.layers[l].weight.cols());
    g.layers[l].bias = Eigen::VectorXd::Zero(p.layers[l].bias.size());
  }
  return g;
}

void add_scaled(ReprGrad& acc, const ReprGrad& g, double scale) {
  if (acc.layers.size() != g.layers.size())
    throw ValidationError("add_scaled: gradient shape mismatch");
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    acc.layers[l].weight += scale * g.layers[l].weight;
    acc.layers[l].bias += scale * g.layers[l].bias;
  }
}

void scale_grad(ReprGrad& g, double scale) {
  for (LayerGrad& l : g.layers) {
    l.weight *= scale;
    l.bias *= scale;
  }
}

bool grad_finite(const ReprGrad& g) {
  for (const LayerGrad& l : g.layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

}  // namespace detdisc
