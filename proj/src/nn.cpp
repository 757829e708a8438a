#include "cmda/nn.hpp"

#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "cmda/error.hpp"

namespace cmda {

EmbeddingNet::EmbeddingNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error(ErrorKind::kInvalidArgument, "EmbeddingNet needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (static_cast<std::size_t>(l.bias.size()) != l.outputDim()) {
      throw DimensionError("EmbeddingNet layer " + std::to_string(k) + " bias", l.outputDim(),
                           static_cast<std::size_t>(l.bias.size()));
    }
    if (k > 0 && layers_[k - 1].outputDim() != l.inputDim()) {
      throw DimensionError("EmbeddingNet layer " + std::to_string(k) + " input",
                           layers_[k - 1].outputDim(), l.inputDim());
    }
  }
}

EmbeddingNet EmbeddingNet::glorot(std::span<const std::size_t> sizes, std::mt19937_64& rng) {
  if (sizes.size() < 2) throw Error(ErrorKind::kInvalidArgument, "glorot: need input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const std::size_t fanIn = sizes[k];
    const std::size_t fanOut = sizes[k + 1];
    if (fanIn == 0 || fanOut == 0) throw Error(ErrorKind::kInvalidArgument, "glorot: zero layer size");
    const double r = std::sqrt(6.0 / static_cast<double>(fanIn + fanOut));
    std::uniform_real_distribution<double> dist(-r, r);
    DenseLayer layer{Matrix(fanOut, fanIn), Vector::Zero(static_cast<Eigen::Index>(fanOut))};
    // Fill row-major so the draw order matches the on-disk layout.
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return EmbeddingNet(std::move(layers));
}

std::size_t EmbeddingNet::inputDim() const { return layers_.empty() ? 0 : layers_.front().inputDim(); }

std::size_t EmbeddingNet::outputDim() const { return layers_.empty() ? 0 : layers_.back().outputDim(); }

std::size_t EmbeddingNet::parameterCount() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vector EmbeddingNet::forward(const Vector& x) const {
  Matrix in = x;
  return forwardBatch(in).col(0);
}

Matrix EmbeddingNet::forwardBatch(const Matrix& x) const { return forwardCached(x).output; }

ForwardCache EmbeddingNet::forwardCached(const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != inputDim()) {
    throw DimensionError("EmbeddingNet::forward", inputDim(), static_cast<std::size_t>(x.rows()));
  }
  ForwardCache cache;
  cache.layerInputs.reserve(layers_.size());
  Matrix h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Matrix z = l.weight * h;
    z.colwise() += l.bias;
    cache.layerInputs.push_back(std::move(h));
    if (k + 1 < layers_.size()) {
      h = z.cwiseMax(0.0);
    } else {
      h = std::move(z);
    }
  }
  cache.preNorm = std::move(h);
  cache.norms = cache.preNorm.colwise().norm().transpose();
  cache.output = cache.preNorm;
  for (Eigen::Index j = 0; j < cache.output.cols(); ++j) {
    if (cache.norms(j) >= kNormFloor) {
      cache.output.col(j) /= cache.norms(j);
    } else {
      spdlog::debug("EmbeddingNet: pre-normalization norm {} below floor, output left unnormalized",
                    cache.norms(j));
    }
  }
  return cache;
}

std::vector<std::span<double>> EmbeddingNet::parameterSpans() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

NetGradients NetGradients::zerosLike(const EmbeddingNet& net) {
  NetGradients g;
  for (const auto& l : net.layers()) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return g;
}

void NetGradients::setZero() {
  for (auto& l : layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

NetGradients& NetGradients::operator+=(const NetGradients& other) {
  if (other.layers.size() != layers.size()) {
    throw DimensionError("NetGradients::+=", layers.size(), other.layers.size());
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].weight += other.layers[k].weight;
    layers[k].bias += other.layers[k].bias;
  }
  return *this;
}

NetGradients& NetGradients::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  return *this;
}

std::vector<std::span<const double>> NetGradients::spans() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

double NetGradients::squaredNorm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

void backwardBatch(const EmbeddingNet& net, const ForwardCache& cache, const Matrix& upstream,
                   NetGradients& accum, Matrix* inputGrad) {
  const auto& layers = net.layers();
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw DimensionError("backward upstream", static_cast<std::size_t>(cache.output.size()),
                         static_cast<std::size_t>(upstream.size()));
  }
  if (accum.layers.size() != layers.size()) {
    throw DimensionError("backward gradient layers", layers.size(), accum.layers.size());
  }

  // Through y = z / |z|: dz = (g - y <y, g>) / |z|.
  Matrix dz(upstream.rows(), upstream.cols());
  for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
    const double n = cache.norms(j);
    if (n >= kNormFloor) {
      const auto y = cache.output.col(j);
      dz.col(j) = (upstream.col(j) - y * y.dot(upstream.col(j))) / n;
    } else {
      dz.col(j) = upstream.col(j);
    }
  }

  for (std::size_t k = layers.size(); k-- > 0;) {
    const Matrix& in = cache.layerInputs[k];
    accum.layers[k].weight.noalias() += dz * in.transpose();
    accum.layers[k].bias += dz.rowwise().sum();
    if (k == 0 && inputGrad == nullptr) break;
    Matrix dh = layers[k].weight.transpose() * dz;
    if (k == 0) {
      *inputGrad = std::move(dh);
      break;
    }
    // ReLU mask: the stored input is post-activation, positive iff z > 0.
    dz = dh.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
  }
}

BackwardResult backward(const EmbeddingNet& net, const Vector& x, const Vector& upstream) {
  Matrix in = x;
  const ForwardCache cache = net.forwardCached(in);
  if (static_cast<std::size_t>(upstream.size()) != net.outputDim()) {
    throw DimensionError("backward upstream", net.outputDim(), static_cast<std::size_t>(upstream.size()));
  }
  BackwardResult result{NetGradients::zerosLike(net), Vector()};
  Matrix up = upstream;
  Matrix dx;
  backwardBatch(net, cache, up, result.params, &dx);
  result.input = dx.col(0);
  return result;
}

SgdMomentum::SgdMomentum(double learningRate, double momentum)
    : learningRate_(learningRate), momentum_(momentum) {
  if (!(learningRate > 0.0)) throw ConfigError("SGD learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("SGD momentum must be in [0, 1)");
}

void SgdMomentum::step(std::span<const std::span<double>> params,
                       std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("SgdMomentum::step tensor count", params.size(), grads.size());
  }
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t t = 0; t < params.size(); ++t) velocity_[t].assign(params[t].size(), 0.0);
  }
  if (velocity_.size() != params.size()) {
    throw DimensionError("SgdMomentum::step velocity tensors", velocity_.size(), params.size());
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    auto& v = velocity_[t];
    if (p.size() != g.size() || v.size() != p.size()) {
      throw DimensionError("SgdMomentum::step tensor " + std::to_string(t), v.size(),
                           p.size() != g.size() ? g.size() : p.size());
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] - learningRate_ * g[i];
      p[i] += v[i];
    }
  }
}

}  // namespace cmda
