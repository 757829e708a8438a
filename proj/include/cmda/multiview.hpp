#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmda/corpus.hpp"
#include "cmda/nn.hpp"

namespace cmda {

class BinaryReader;
class BinaryWriter;

enum class Modality : std::uint8_t { kVideo = 0, kText = 1 };

std::string_view toString(Modality m);

struct ModelDims {
  std::size_t videoInput = 3072;
  std::size_t textInput = 200;
  std::size_t videoHidden = 228;
  std::size_t textHidden = 1664;
  std::size_t embedDim = 256;
  // Learned affine head over the concatenated action vector. Off by default:
  // the action space is then the normalized concatenation itself.
  bool actionHead = false;
};

// Verb and noun spaces each have a video-side and a text-side network. The
// action space is built from the concatenation of the two per-view outputs.
class MultiViewModel {
 public:
  MultiViewModel() = default;

  static MultiViewModel create(const ModelDims& dims, std::uint64_t seed);

  std::size_t videoInputDim() const { return net(View::kVerb, Modality::kVideo).inputDim(); }
  std::size_t textInputDim() const { return net(View::kVerb, Modality::kText).inputDim(); }
  std::size_t embedDim(View view) const;
  bool hasActionHead() const { return heads_[0].has_value(); }

  // Per-view networks; `view` must be Verb or Noun.
  const EmbeddingNet& net(View view, Modality m) const;
  EmbeddingNet& net(View view, Modality m);
  const std::optional<EmbeddingNet>& actionHead(Modality m) const {
    return heads_[static_cast<std::size_t>(m)];
  }

  Vector embedVideo(const Vector& videoFeature, View view) const;
  Vector embedText(const CaptionRecord& caption, View view) const;
  Vector embedTextFeature(const Vector& textFeature, View view) const;
  // One input per column.
  Matrix embedBatch(const Matrix& inputs, Modality m, View view) const;

  // Every network with its stable name, in checkpoint order.
  std::vector<std::pair<std::string, const EmbeddingNet*>> namedNetworks() const;
  std::vector<std::span<double>> parameterSpans();

  void write(BinaryWriter& w) const;
  static MultiViewModel read(BinaryReader& r);

 private:
  // Index = 2 * view + modality for the verb/noun networks.
  std::array<EmbeddingNet, 4> nets_;
  std::array<std::optional<EmbeddingNet>, 2> heads_;
};

struct ModelGradients {
  std::array<NetGradients, 4> nets;
  std::array<std::optional<NetGradients>, 2> heads;

  static ModelGradients zerosLike(const MultiViewModel& model);
  NetGradients& net(View view, Modality m);
  const NetGradients& net(View view, Modality m) const;
  ModelGradients& operator+=(const ModelGradients& other);
  ModelGradients& operator*=(double s);
  // Same order as MultiViewModel::parameterSpans.
  std::vector<std::span<const double>> spans() const;
};

// Batched forward pass of one modality through all three views, keeping what
// backprop needs. Callers accumulate dL/d(embedding) into gradient(view) and
// then call backward().
class ModalityPass {
 public:
  ModalityPass(const MultiViewModel& model, Modality m, const Matrix& inputs);

  Modality modality() const { return modality_; }
  Eigen::Index size() const { return size_; }
  const Matrix& embedding(View view) const { return embeddings_[static_cast<std::size_t>(view)]; }
  Matrix& gradient(View view) { return grads_[static_cast<std::size_t>(view)]; }
  const Matrix& gradient(View view) const { return grads_[static_cast<std::size_t>(view)]; }

  void backward(ModelGradients& out) const;

 private:
  const MultiViewModel* model_;
  Modality modality_;
  Eigen::Index size_;
  ForwardCache verb_;
  ForwardCache noun_;
  Matrix concat_;
  Vector concatNorms_;
  Matrix concatUnit_;
  std::optional<ForwardCache> head_;
  std::array<Matrix, 3> embeddings_;
  std::array<Matrix, 3> grads_;
};

}  // namespace cmda
