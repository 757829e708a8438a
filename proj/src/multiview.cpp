#include "cmda/multiview.hpp"

#include "cmda/binary_io.hpp"
#include "cmda/error.hpp"

namespace cmda {

namespace {

constexpr std::array<const char*, 4> kNetNames{"verb_video", "verb_text", "noun_video", "noun_text"};
constexpr std::array<const char*, 2> kHeadNames{"action_video_head", "action_text_head"};

std::size_t netIndex(View view, Modality m) {
  if (view == View::kAction) {
    throw Error(ErrorKind::kInvalidArgument, "the action view has no dedicated embedding network");
  }
  return 2 * static_cast<std::size_t>(view) + static_cast<std::size_t>(m);
}

// Normalized concatenation of the verb and noun embeddings, column-wise.
void concatNormalize(const Matrix& verb, const Matrix& noun, Matrix& concat, Vector& norms, Matrix& unit) {
  concat.resize(verb.rows() + noun.rows(), verb.cols());
  concat.topRows(verb.rows()) = verb;
  concat.bottomRows(noun.rows()) = noun;
  norms = concat.colwise().norm().transpose();
  unit = concat;
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    if (norms(j) >= kNormFloor) unit.col(j) /= norms(j);
  }
}

}  // namespace

std::string_view toString(Modality m) { return m == Modality::kVideo ? "video" : "text"; }

MultiViewModel MultiViewModel::create(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MultiViewModel model;
  const std::array<std::size_t, 3> videoSizes{dims.videoInput, dims.videoHidden, dims.embedDim};
  const std::array<std::size_t, 3> textSizes{dims.textInput, dims.textHidden, dims.embedDim};
  for (View v : {View::kVerb, View::kNoun}) {
    model.nets_[netIndex(v, Modality::kVideo)] = EmbeddingNet::glorot(videoSizes, rng);
    model.nets_[netIndex(v, Modality::kText)] = EmbeddingNet::glorot(textSizes, rng);
  }
  if (dims.actionHead) {
    const std::array<std::size_t, 2> headSizes{2 * dims.embedDim, 2 * dims.embedDim};
    for (auto& head : model.heads_) head = EmbeddingNet::glorot(headSizes, rng);
  }
  return model;
}

std::size_t MultiViewModel::embedDim(View view) const {
  if (view == View::kAction) {
    if (heads_[0]) return heads_[0]->outputDim();
    return embedDim(View::kVerb) + embedDim(View::kNoun);
  }
  return nets_[netIndex(view, Modality::kVideo)].outputDim();
}

const EmbeddingNet& MultiViewModel::net(View view, Modality m) const { return nets_[netIndex(view, m)]; }

EmbeddingNet& MultiViewModel::net(View view, Modality m) { return nets_[netIndex(view, m)]; }

Matrix MultiViewModel::embedBatch(const Matrix& inputs, Modality m, View view) const {
  if (view != View::kAction) return net(view, m).forwardBatch(inputs);
  Matrix concat;
  Vector norms;
  Matrix unit;
  concatNormalize(net(View::kVerb, m).forwardBatch(inputs), net(View::kNoun, m).forwardBatch(inputs),
                  concat, norms, unit);
  const auto& head = heads_[static_cast<std::size_t>(m)];
  return head ? head->forwardBatch(unit) : unit;
}

Vector MultiViewModel::embedVideo(const Vector& videoFeature, View view) const {
  Matrix in = videoFeature;
  return embedBatch(in, Modality::kVideo, view).col(0);
}

Vector MultiViewModel::embedText(const CaptionRecord& caption, View view) const {
  return embedTextFeature(caption.textFeature, view);
}

Vector MultiViewModel::embedTextFeature(const Vector& textFeature, View view) const {
  Matrix in = textFeature;
  return embedBatch(in, Modality::kText, view).col(0);
}

std::vector<std::pair<std::string, const EmbeddingNet*>> MultiViewModel::namedNetworks() const {
  std::vector<std::pair<std::string, const EmbeddingNet*>> out;
  for (std::size_t i = 0; i < nets_.size(); ++i) out.emplace_back(kNetNames[i], &nets_[i]);
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    if (heads_[i]) out.emplace_back(kHeadNames[i], &*heads_[i]);
  }
  return out;
}

std::vector<std::span<double>> MultiViewModel::parameterSpans() {
  std::vector<std::span<double>> out;
  for (auto& n : nets_) {
    auto s = n.parameterSpans();
    out.insert(out.end(), s.begin(), s.end());
  }
  for (auto& h : heads_) {
    if (!h) continue;
    auto s = h->parameterSpans();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

void MultiViewModel::write(BinaryWriter& w) const {
  w.u32(static_cast<std::uint32_t>(kAllViews.size()));
  for (View v : kAllViews) {
    w.string(toString(v));
    w.u32(static_cast<std::uint32_t>(embedDim(v)));
  }
  const auto named = namedNetworks();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, net] : named) {
    w.string(name);
    writeNet(w, *net);
  }
}

MultiViewModel MultiViewModel::read(BinaryReader& r) {
  const std::uint32_t viewCount = r.u32();
  if (viewCount != kAllViews.size()) {
    throw FormatError(r.source() + ": expected 3 views, found " + std::to_string(viewCount));
  }
  std::array<std::uint32_t, 3> declaredDims{};
  for (View v : kAllViews) {
    const std::string name = r.string();
    if (name != toString(v)) throw FormatError(r.source() + ": unexpected view \"" + name + "\"");
    declaredDims[static_cast<std::size_t>(v)] = r.u32();
  }
  const std::uint32_t netCount = r.u32();
  if (netCount != 4 && netCount != 6) {
    throw FormatError(r.source() + ": unexpected network count " + std::to_string(netCount));
  }
  MultiViewModel model;
  for (std::uint32_t i = 0; i < netCount; ++i) {
    const std::string name = r.string();
    const std::string expected = i < 4 ? kNetNames[i] : kHeadNames[i - 4];
    if (name != expected) {
      throw FormatError(r.source() + ": expected network \"" + expected + "\", found \"" + name + "\"");
    }
    EmbeddingNet net = readNet(r);
    if (i < 4) {
      model.nets_[i] = std::move(net);
    } else {
      model.heads_[i - 4] = std::move(net);
    }
  }
  for (View v : {View::kVerb, View::kNoun}) {
    for (Modality m : {Modality::kVideo, Modality::kText}) {
      if (model.net(v, m).outputDim() != declaredDims[static_cast<std::size_t>(v)]) {
        throw FormatError(r.source() + ": network output does not match declared view dimension");
      }
    }
    if (model.net(v, Modality::kVideo).inputDim() != model.net(View::kVerb, Modality::kVideo).inputDim() ||
        model.net(v, Modality::kText).inputDim() != model.net(View::kVerb, Modality::kText).inputDim()) {
      throw FormatError(r.source() + ": verb and noun networks disagree on input dimension");
    }
  }
  if (model.embedDim(View::kAction) != declaredDims[2]) {
    throw FormatError(r.source() + ": action dimension does not match its networks");
  }
  return model;
}

ModelGradients ModelGradients::zerosLike(const MultiViewModel& model) {
  ModelGradients g;
  for (View v : {View::kVerb, View::kNoun}) {
    for (Modality m : {Modality::kVideo, Modality::kText}) {
      g.nets[netIndex(v, m)] = NetGradients::zerosLike(model.net(v, m));
    }
  }
  for (Modality m : {Modality::kVideo, Modality::kText}) {
    if (model.actionHead(m)) g.heads[static_cast<std::size_t>(m)] = NetGradients::zerosLike(*model.actionHead(m));
  }
  return g;
}

NetGradients& ModelGradients::net(View view, Modality m) { return nets[netIndex(view, m)]; }

const NetGradients& ModelGradients::net(View view, Modality m) const { return nets[netIndex(view, m)]; }

ModelGradients& ModelGradients::operator+=(const ModelGradients& other) {
  for (std::size_t i = 0; i < nets.size(); ++i) nets[i] += other.nets[i];
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] && other.heads[i]) *heads[i] += *other.heads[i];
  }
  return *this;
}

ModelGradients& ModelGradients::operator*=(double s) {
  for (auto& n : nets) n *= s;
  for (auto& h : heads) {
    if (h) *h *= s;
  }
  return *this;
}

std::vector<std::span<const double>> ModelGradients::spans() const {
  std::vector<std::span<const double>> out;
  for (const auto& n : nets) {
    auto s = n.spans();
    out.insert(out.end(), s.begin(), s.end());
  }
  for (const auto& h : heads) {
    if (!h) continue;
    auto s = h->spans();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

ModalityPass::ModalityPass(const MultiViewModel& model, Modality m, const Matrix& inputs)
    : model_(&model), modality_(m), size_(inputs.cols()) {
  verb_ = model.net(View::kVerb, m).forwardCached(inputs);
  noun_ = model.net(View::kNoun, m).forwardCached(inputs);
  concatNormalize(verb_.output, noun_.output, concat_, concatNorms_, concatUnit_);
  const auto& head = model.actionHead(m);
  if (head) head_ = head->forwardCached(concatUnit_);

  embeddings_[0] = verb_.output;
  embeddings_[1] = noun_.output;
  embeddings_[2] = head_ ? head_->output : concatUnit_;
  for (std::size_t v = 0; v < 3; ++v) grads_[v] = Matrix::Zero(embeddings_[v].rows(), size_);
}

void ModalityPass::backward(ModelGradients& out) const {
  Matrix gVerb = grads_[0];
  Matrix gNoun = grads_[1];
  const Matrix& gAction = grads_[2];

  if (!gAction.isZero(0.0)) {
    Matrix gUnit;
    const auto& head = model_->actionHead(modality_);
    if (head) {
      backwardBatch(*head, *head_, gAction, *out.heads[static_cast<std::size_t>(modality_)], &gUnit);
    } else {
      gUnit = gAction;
    }
    const Eigen::Index dv = verb_.output.rows();
    for (Eigen::Index j = 0; j < size_; ++j) {
      const double n = concatNorms_(j);
      Vector gc;
      if (n >= kNormFloor) {
        const auto u = concatUnit_.col(j);
        gc = (gUnit.col(j) - u * u.dot(gUnit.col(j))) / n;
      } else {
        gc = gUnit.col(j);
      }
      gVerb.col(j) += gc.head(dv);
      gNoun.col(j) += gc.tail(gc.size() - dv);
    }
  }
  if (!gVerb.isZero(0.0)) backwardBatch(model_->net(View::kVerb, modality_), verb_, gVerb, out.net(View::kVerb, modality_));
  if (!gNoun.isZero(0.0)) backwardBatch(model_->net(View::kNoun, modality_), noun_, gNoun, out.net(View::kNoun, modality_));
}

}  // namespace cmda
