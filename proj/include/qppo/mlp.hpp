#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qppo/errors.hpp"
#include "qppo/rng.hpp"

namespace qppo {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Feed-forward network: tanh on hidden layers, identity on the output layer.
/// weights[l] is (layer_sizes[l+1] x layer_sizes[l]).
template <typename Scalar>
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += Eigen::Index(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
    return n;
  }

  bool operator==(const MlpParams& o) const {
    if (layer_sizes != o.layer_sizes) return false;
    for (int l = 0; l < num_layers(); ++l)
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    return true;
  }
};

using Mlp = MlpParams<double>;

/// Post-activations per layer; activations[0] is the input batch, the last
/// entry is the (linear) output. Columns are batch samples.
template <typename Scalar>
struct MlpCache {
  std::vector<MatrixX<Scalar>> activations;
};

template <typename Scalar>
void validate(const MlpParams<Scalar>& p) {
  if (p.layer_sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
  for (std::size_t i = 0; i < p.layer_sizes.size(); ++i)
    if (p.layer_sizes[i] <= 0) throw ConfigError("mlp: layer " + std::to_string(i) + " has non-positive size");
  if (p.weights.size() + 1 != p.layer_sizes.size() || p.biases.size() != p.weights.size())
    throw ConfigError("mlp: tensor count does not match layer_sizes");
  for (int l = 0; l < p.num_layers(); ++l) {
    if (p.weights[l].rows() != p.layer_sizes[l + 1] || p.weights[l].cols() != p.layer_sizes[l])
      throw ConfigError("mlp: weight shape mismatch in layer " + std::to_string(l));
    if (p.biases[l].size() != p.layer_sizes[l + 1])
      throw ConfigError("mlp: bias shape mismatch in layer " + std::to_string(l));
  }
}

template <typename Scalar>
MlpParams<Scalar> zero_mlp(const std::vector<int>& layer_sizes) {
  MlpParams<Scalar> p;
  p.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    p.weights.push_back(MatrixX<Scalar>::Zero(layer_sizes[l + 1], layer_sizes[l]));
    p.biases.push_back(VectorX<Scalar>::Zero(layer_sizes[l + 1]));
  }
  validate(p);
  return p;
}

/// Uniform in +-sqrt(6/(fan_in+fan_out)), zero biases; the output layer is
/// multiplied by output_scale. Weights are drawn row-major, layer by layer.
template <typename Scalar = double>
MlpParams<Scalar> init_mlp(const std::vector<int>& layer_sizes, Rng& rng, double output_scale = 1.0) {
  auto p = zero_mlp<Scalar>(layer_sizes);
  for (int l = 0; l < p.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / (layer_sizes[l] + layer_sizes[l + 1]));
    const double scale = (l + 1 == p.num_layers()) ? output_scale : 1.0;
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c)
        p.weights[l](r, c) = Scalar(scale * rng.uniform(-limit, limit));
  }
  return p;
}

template <typename Scalar, typename Derived>
std::pair<MatrixX<Scalar>, MlpCache<Scalar>> mlp_forward_batch(const MlpParams<Scalar>& p,
                                                               const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != p.input_size())
    throw ConfigError("mlp_forward: input has " + std::to_string(inputs.rows()) + " rows, layer 0 expects " +
                      std::to_string(p.input_size()));
  MlpCache<Scalar> cache;
  cache.activations.reserve(p.num_layers() + 1);
  cache.activations.emplace_back(inputs);
  for (int l = 0; l < p.num_layers(); ++l) {
    MatrixX<Scalar> z = p.weights[l] * cache.activations.back();
    z.colwise() += p.biases[l];
    if (l + 1 < p.num_layers()) z = z.array().tanh().matrix();
    cache.activations.push_back(std::move(z));
  }
  MatrixX<Scalar> out = cache.activations.back();
  return {std::move(out), std::move(cache)};
}

template <typename Scalar, typename Derived>
std::pair<VectorX<Scalar>, MlpCache<Scalar>> mlp_forward(const MlpParams<Scalar>& p,
                                                         const Eigen::MatrixBase<Derived>& input) {
  auto [out, cache] = mlp_forward_batch(p, MatrixX<Scalar>(input));
  return {VectorX<Scalar>(out.col(0)), std::move(cache)};
}

/// Output only, for inference paths that never backpropagate.
template <typename Scalar, typename Derived>
VectorX<Scalar> mlp_predict(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& input) {
  if (input.size() != p.input_size())
    throw ConfigError("mlp_predict: input size does not match layer 0");
  VectorX<Scalar> h = input;
  for (int l = 0; l < p.num_layers(); ++l) {
    VectorX<Scalar> z = p.weights[l] * h + p.biases[l];
    h = (l + 1 < p.num_layers()) ? VectorX<Scalar>(z.array().tanh()) : std::move(z);
  }
  return h;
}

/// Gradient of sum over batch columns of <output, output_grad> with respect
/// to all parameters, laid out as flatten() lays them out.
template <typename Scalar, typename Derived>
VectorX<Scalar> mlp_backward(const MlpParams<Scalar>& p, const MlpCache<Scalar>& cache,
                             const Eigen::MatrixBase<Derived>& output_grad) {
  if (static_cast<int>(cache.activations.size()) != p.num_layers() + 1)
    throw UsageError("mlp_backward: cache was not produced by these params");
  if (output_grad.rows() != p.output_size() || output_grad.cols() != cache.activations.back().cols())
    throw UsageError("mlp_backward: output_grad shape does not match cache");

  VectorX<Scalar> grad(p.param_count());
  std::vector<Eigen::Index> offsets(p.num_layers());
  Eigen::Index off = 0;
  for (int l = 0; l < p.num_layers(); ++l) {
    offsets[l] = off;
    off += p.weights[l].size() + p.biases[l].size();
  }

  MatrixX<Scalar> delta = output_grad;
  for (int l = p.num_layers() - 1; l >= 0; --l) {
    const auto& in = cache.activations[l];
    Eigen::Map<MatrixX<Scalar>> gw(grad.data() + offsets[l], p.weights[l].rows(), p.weights[l].cols());
    gw.noalias() = delta * in.transpose();
    grad.segment(offsets[l] + p.weights[l].size(), p.biases[l].size()) = delta.rowwise().sum();
    if (l > 0) {
      MatrixX<Scalar> back = p.weights[l].transpose() * delta;
      delta = (back.array() * (Scalar(1) - in.array().square())).matrix();
    }
  }
  return grad;
}

/// Per layer: weight matrix (column-major) followed by bias.
template <typename Scalar>
VectorX<Scalar> flatten(const MlpParams<Scalar>& p) {
  VectorX<Scalar> flat(p.param_count());
  Eigen::Index off = 0;
  for (int l = 0; l < p.num_layers(); ++l) {
    flat.segment(off, p.weights[l].size()) = p.weights[l].reshaped();
    off += p.weights[l].size();
    flat.segment(off, p.biases[l].size()) = p.biases[l];
    off += p.biases[l].size();
  }
  return flat;
}

template <typename Scalar, typename Derived>
void assign_flat(MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& flat) {
  if (flat.size() != p.param_count()) throw ConfigError("assign_flat: flat vector length mismatch");
  Eigen::Index off = 0;
  for (int l = 0; l < p.num_layers(); ++l) {
    p.weights[l].reshaped() = flat.segment(off, p.weights[l].size());
    off += p.weights[l].size();
    p.biases[l] = flat.segment(off, p.biases[l].size());
    off += p.biases[l].size();
  }
}

template <typename Scalar, typename Derived>
MlpParams<Scalar> unflatten(const std::vector<int>& layer_sizes, const Eigen::MatrixBase<Derived>& flat) {
  auto p = zero_mlp<Scalar>(layer_sizes);
  assign_flat(p, flat);
  return p;
}

}  // namespace qppo
