#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cmda/linalg.hpp"

namespace cmda {

// One affine map. weight is (outputs x inputs).
struct DenseLayer {
  Matrix weight;
  Vector bias;

  std::size_t inputDim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t outputDim() const { return static_cast<std::size_t>(weight.rows()); }
};

// Activations recorded by a batched forward pass, needed for backprop.
struct ForwardCache {
  // layerInputs[k] is the input to layer k (post-ReLU for k > 0).
  std::vector<Matrix> layerInputs;
  Matrix preNorm;
  Matrix output;
  Vector norms;
};

// Affine layers with ReLU in between and L2 normalization after the last one.
class EmbeddingNet {
 public:
  EmbeddingNet() = default;
  explicit EmbeddingNet(std::vector<DenseLayer> layers);

  // Layer sizes given as {input, hidden..., output}. Weights are drawn from
  // U(-r, r) with r = sqrt(6 / (fanIn + fanOut)); biases start at zero.
  static EmbeddingNet glorot(std::span<const std::size_t> sizes, std::mt19937_64& rng);

  std::size_t inputDim() const;
  std::size_t outputDim() const;
  std::size_t parameterCount() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Vector forward(const Vector& x) const;
  Matrix forwardBatch(const Matrix& x) const;
  ForwardCache forwardCached(const Matrix& x) const;

  // Flat views over every parameter tensor: weight0, bias0, weight1, ...
  std::vector<std::span<double>> parameterSpans();

 private:
  std::vector<DenseLayer> layers_;
};

// Gradients laid out exactly like the network they belong to.
struct NetGradients {
  std::vector<DenseLayer> layers;

  static NetGradients zerosLike(const EmbeddingNet& net);
  void setZero();
  NetGradients& operator+=(const NetGradients& other);
  NetGradients& operator*=(double s);
  std::vector<std::span<const double>> spans() const;
  double squaredNorm() const;
};

struct BackwardResult {
  NetGradients params;
  Vector input;
};

// Gradient of <upstream, forward(x)> with respect to all parameters and x.
BackwardResult backward(const EmbeddingNet& net, const Vector& x, const Vector& upstream);

// Batched variant; parameter gradients are summed over columns into `accum`.
// When `inputGrad` is non-null it receives d/dx for every column.
void backwardBatch(const EmbeddingNet& net, const ForwardCache& cache,
                   const Matrix& upstream, NetGradients& accum,
                   Matrix* inputGrad = nullptr);

// Classical momentum: v <- m v - lr g ; p <- p + v.
class SgdMomentum {
 public:
  SgdMomentum(double learningRate, double momentum);

  double learningRate() const { return learningRate_; }
  double momentum() const { return momentum_; }

  // Velocity buffers are created on the first call and must keep matching
  // the parameter shapes afterwards.
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads);

  const std::vector<std::vector<double>>& velocities() const { return velocity_; }
  void setVelocities(std::vector<std::vector<double>> v) { velocity_ = std::move(v); }

 private:
  double learningRate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace cmda
