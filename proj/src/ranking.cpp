#include "cmda/ranking.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <optional>
#include <string>

#include "cmda/error.hpp"

namespace cmda {

std::string_view toString(LossTerm t) {
  switch (t) {
    case LossTerm::kVideoToText: return "video_to_text";
    case LossTerm::kVideoToVideo: return "video_to_video";
    case LossTerm::kTextToVideo: return "text_to_video";
    case LossTerm::kTextToText: return "text_to_text";
    case LossTerm::kSourceToTarget: return "source_to_target";
    case LossTerm::kTargetToSource: return "target_to_source";
  }
  return "unknown";
}

void LossWeights::validate() const {
  if (!(margin > 0.0) || !std::isfinite(margin)) throw ConfigError("margin must be positive and finite");
  if (!(lambdaSrcToTgt >= 0.0) || !std::isfinite(lambdaSrcToTgt) || !(lambdaTgtToSrc >= 0.0) ||
      !std::isfinite(lambdaTgtToSrc)) {
    throw ConfigError("cross-domain weights must be non-negative and finite");
  }
  for (double w : viewWeights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("view weights must be non-negative and finite");
  }
}

double LossWeights::termWeight(View view, LossTerm term) const {
  const double w = viewWeights[static_cast<std::size_t>(view)];
  switch (term) {
    case LossTerm::kSourceToTarget: return w * lambdaSrcToTgt;
    case LossTerm::kTargetToSource: return w * lambdaTgtToSrc;
    default: return w;
  }
}

namespace {

// Unique item indices of one (domain, modality) slot, mapped to batch columns.
class Slot {
 public:
  void add(std::size_t index) { indices_.push_back(index); }
  void finalize() {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  }
  bool empty() const { return indices_.empty(); }
  Eigen::Index column(std::size_t index) const {
    return static_cast<Eigen::Index>(std::lower_bound(indices_.begin(), indices_.end(), index) - indices_.begin());
  }
  Matrix gather(const Gallery& g, Modality m) const {
    const std::size_t dim = m == Modality::kVideo ? g.videoDim : g.textDim;
    Matrix out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(indices_.size()));
    for (std::size_t c = 0; c < indices_.size(); ++c) {
      const auto& item = g.items.at(indices_[c]);
      if (m == Modality::kVideo) {
        out.col(static_cast<Eigen::Index>(c)) = item.videoFeature;
      } else {
        if (!item.caption) throw Error(ErrorKind::kInvalidArgument, "text endpoint on an uncaptioned item");
        out.col(static_cast<Eigen::Index>(c)) = item.caption->textFeature;
      }
    }
    return out;
  }

 private:
  std::vector<std::size_t> indices_;
};

int slotOf(const Endpoint& e) {
  if (e.item.domain == Domain::kTarget) {
    if (e.modality != Modality::kVideo) throw Error(ErrorKind::kInvalidArgument, "target items have no text");
    return 2;
  }
  return e.modality == Modality::kVideo ? 0 : 1;
}

}  // namespace

LossResult computeLoss(const MultiViewModel& model, const Gallery& source, const Gallery* target,
                       std::span<const TermBatch> batches, const LossWeights& weights, bool withGradients) {
  weights.validate();
  std::array<Slot, 3> slots;
  for (const auto& b : batches) {
    for (const auto& t : b.triplets) {
      for (const Endpoint* e : {&t.anchor, &t.positive, &t.negative}) slots[slotOf(*e)].add(e->item.index);
    }
  }
  for (auto& s : slots) s.finalize();
  if (!slots[2].empty() && target == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "computeLoss: target triplets without a target gallery");
  }

  std::array<std::optional<ModalityPass>, 3> passes;
  if (!slots[0].empty()) passes[0].emplace(model, Modality::kVideo, slots[0].gather(source, Modality::kVideo));
  if (!slots[1].empty()) passes[1].emplace(model, Modality::kText, slots[1].gather(source, Modality::kText));
  if (!slots[2].empty()) passes[2].emplace(model, Modality::kVideo, slots[2].gather(*target, Modality::kVideo));

  LossResult result;
  result.gradients = ModelGradients::zerosLike(model);
  for (const auto& b : batches) {
    TermLoss tl;
    tl.view = b.view;
    tl.term = b.term;
    tl.skipped = b.skipped;
    tl.triplets = b.triplets.size();
    tl.weight = weights.termWeight(b.view, b.term);
    const double coef = tl.weight;
    for (const auto& t : b.triplets) {
      if (t.view != b.view) throw Error(ErrorKind::kInvalidArgument, "triplet view differs from its batch");
      const int sa = slotOf(t.anchor);
      const int sp = slotOf(t.positive);
      const int sn = slotOf(t.negative);
      const Eigen::Index ca = slots[sa].column(t.anchor.item.index);
      const Eigen::Index cp = slots[sp].column(t.positive.item.index);
      const Eigen::Index cn = slots[sn].column(t.negative.item.index);
      const auto a = passes[sa]->embedding(b.view).col(ca);
      const auto p = passes[sp]->embedding(b.view).col(cp);
      const auto n = passes[sn]->embedding(b.view).col(cn);
      const double dPos = 1.0 - a.dot(p);
      const double dNeg = 1.0 - a.dot(n);
      const double h = tripletHinge(dPos, dNeg, weights.margin);
      if (h <= 0.0) continue;
      tl.hingeSum += h;
      ++tl.violated;
      if (withGradients && coef != 0.0) {
        // d(1 - a.p)/da = -p, d(-(1 - a.n))/da = n.
        passes[sa]->gradient(b.view).col(ca) += coef * (n - p);
        passes[sp]->gradient(b.view).col(cp) -= coef * a;
        passes[sn]->gradient(b.view).col(cn) += coef * a;
      }
    }
    result.total += tl.contribution();
    result.terms.push_back(tl);
  }
  if (withGradients) {
    for (const auto& pass : passes) {
      if (pass) pass->backward(result.gradients);
    }
  }
  return result;
}

LossResult sourceLoss(const MultiViewModel& model, const Gallery& source, std::span<const TermBatch> batches,
                      View view, const LossWeights& weights) {
  std::vector<TermBatch> kept;
  for (const auto& b : batches) {
    if (b.view == view && !isCrossDomain(b.term)) kept.push_back(b);
  }
  return computeLoss(model, source, nullptr, kept, weights);
}

LossResult crossDomainLoss(const MultiViewModel& model, const Gallery& source, const Gallery& target,
                           std::span<const TermBatch> batches, View view, LossTerm direction,
                           const LossWeights& weights) {
  if (!isCrossDomain(direction)) throw Error(ErrorKind::kInvalidArgument, "crossDomainLoss: not a cross-domain term");
  std::vector<TermBatch> kept;
  for (const auto& b : batches) {
    if (b.view == view && b.term == direction) kept.push_back(b);
  }
  return computeLoss(model, source, &target, kept, weights);
}

// ---------------------------------------------------------------------------

std::size_t HardNegativeIndex::neighbourCount(std::size_t prototypes, double fraction) {
  if (prototypes <= 1) return 0;
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(prototypes) + 1e-9));
  return std::clamp<std::size_t>(k, 1, prototypes - 1);
}

HardNegativeIndex::HardNegativeIndex(const std::vector<Prototype>& actionPrototypes, std::size_t groupCount,
                                     double fraction)
    : fraction_(fraction), nearest_(groupCount) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("hard negative fraction must be in (0, 1]");
  const std::size_t k = neighbourCount(actionPrototypes.size(), fraction);
  const Matrix d = pairwiseCosineDistance(centroidMatrix(actionPrototypes), centroidMatrix(actionPrototypes));
  for (std::size_t p = 0; p < actionPrototypes.size(); ++p) {
    std::vector<std::size_t> order;
    for (std::size_t q = 0; q < actionPrototypes.size(); ++q) {
      if (q != p) order.push_back(q);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(a)) <
             d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(b));
    });
    order.resize(k);
    auto& out = nearest_.at(actionPrototypes[p].group);
    for (std::size_t q : order) out.push_back(actionPrototypes[q].group);
  }
}

TripletSampler::TripletSampler(const RelevanceSets& relevance, const HardNegativeIndex* hardNegatives)
    : relevance_(&relevance), hardNegatives_(hardNegatives), mined_(hardNegatives != nullptr) {
  const auto& action = relevance[View::kAction];
  for (View v : kAllViews) {
    const auto& rel = relevance[v];
    auto& pools = negatives_[static_cast<std::size_t>(v)];
    if (mined_) {
      pools.resize(action.groupCount());
      for (std::size_t a = 0; a < action.groupCount(); ++a) {
        if (action.members(a).empty()) continue;
        const std::size_t ownGroup = rel.groupOf(action.members(a).front());
        auto& pool = pools[a];
        for (std::size_t g : hardNegatives->nearestGroups(a)) {
          for (std::size_t i : action.members(g)) {
            if (rel.groupOf(i) != ownGroup) pool.push_back(i);
          }
        }
        std::sort(pool.begin(), pool.end());
      }
    } else {
      pools.resize(rel.groupCount());
      for (std::size_t i = 0; i < rel.itemCount(); ++i) {
        for (std::size_t g = 0; g < rel.groupCount(); ++g) {
          if (rel.groupOf(i) != g) pools[g].push_back(i);
        }
      }
    }
  }
}

const std::vector<std::size_t>& TripletSampler::negativePool(View view, std::size_t anchor) const {
  const auto& pools = negatives_[static_cast<std::size_t>(view)];
  const std::size_t key = mined_ ? (*relevance_)[View::kAction].groupOf(anchor) : (*relevance_)[view].groupOf(anchor);
  return pools[key];
}

namespace {

std::size_t uniformIndex(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

TermBatch TripletSampler::sampleSource(View view, LossTerm term, std::span<const std::size_t> anchors,
                                       std::mt19937_64& rng) const {
  if (isCrossDomain(term)) throw Error(ErrorKind::kInvalidArgument, "sampleSource: cross-domain term");
  const auto& rel = (*relevance_)[view];
  const bool videoAnchor = term == LossTerm::kVideoToText || term == LossTerm::kVideoToVideo;
  const bool withinModal = term == LossTerm::kVideoToVideo || term == LossTerm::kTextToText;
  const Modality anchorModality = videoAnchor ? Modality::kVideo : Modality::kText;
  const Modality otherModality = withinModal ? anchorModality
                                             : (videoAnchor ? Modality::kText : Modality::kVideo);
  TermBatch batch;
  batch.view = view;
  batch.term = term;
  batch.triplets.reserve(anchors.size());
  for (std::size_t anchor : anchors) {
    const auto& members = rel.members(rel.groupOf(anchor));
    const auto& negatives = negativePool(view, anchor);
    // Within-modal positives exclude the anchor itself; cross-modal ones
    // include the anchor's own caption or video.
    const std::size_t positives = withinModal ? members.size() - 1 : members.size();
    if (positives == 0 || negatives.empty()) {
      ++batch.skipped;
      continue;
    }
    std::size_t pick = uniformIndex(positives, rng);
    if (withinModal) {
      const auto self = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), anchor) - members.begin());
      if (pick >= self) ++pick;
    }
    const std::size_t positive = members[pick];
    const std::size_t negative = negatives[uniformIndex(negatives.size(), rng)];
    batch.triplets.push_back(Triplet{Endpoint{{Domain::kSource, anchor}, anchorModality},
                                     Endpoint{{Domain::kSource, positive}, otherModality},
                                     Endpoint{{Domain::kSource, negative}, otherModality}, view});
  }
  return batch;
}

TermBatch TripletSampler::sampleCrossDomain(const PseudoLabelTable& table, LossTerm direction, std::size_t count,
                                            std::mt19937_64& rng, const PseudoLabelTable* actionTable) const {
  if (!isCrossDomain(direction)) throw Error(ErrorKind::kInvalidArgument, "sampleCrossDomain: not a cross-domain term");
  const auto& rel = (*relevance_)[table.view];
  const auto& actionRel = (*relevance_)[View::kAction];
  const bool mined = hardNegatives_ && actionTable;
  if (mined && actionTable->entries.size() != table.entries.size()) {
    throw DimensionError("sampleCrossDomain: action table vs view table", table.entries.size(),
                         actionTable->entries.size());
  }
  TermBatch batch;
  batch.view = table.view;
  batch.term = direction;

  std::vector<std::vector<std::size_t>> selectedByGroup(rel.groupCount());
  std::vector<std::size_t> selected;
  for (const auto& e : table.entries) {
    if (!e.selected) continue;
    selectedByGroup.at(e.inheritedGroup).push_back(e.target);
    selected.push_back(e.target);
  }
  const auto video = [](Domain d, std::size_t i) { return Endpoint{{d, i}, Modality::kVideo}; };
  // Negative pools are keyed by (action group used for mining, view group to exclude).
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> pools;

  if (direction == LossTerm::kSourceToTarget) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < rel.itemCount(); ++i) {
      const auto& same = selectedByGroup[rel.groupOf(i)];
      if (!same.empty() && selected.size() > same.size()) eligible.push_back(i);
    }
    if (eligible.empty()) {
      batch.skipped = count;
      return batch;
    }
    // Selected targets outside view group g, restricted under mining to
    // those whose action pseudo-label is a hard-negative group of `a`.
    auto poolFor = [&](std::size_t a, std::size_t g) -> const std::vector<std::size_t>& {
      auto [it, fresh] = pools.try_emplace({mined ? a : 0, g});
      if (!fresh) return it->second;
      std::vector<char> near;
      if (mined) {
        near.assign(actionRel.groupCount(), 0);
        for (std::size_t h : hardNegatives_->nearestGroups(a)) near[h] = 1;
      }
      for (std::size_t t : selected) {
        if (table.entries[t].inheritedGroup == g) continue;
        if (mined && !near[actionTable->entries[t].inheritedGroup]) continue;
        it->second.push_back(t);
      }
      return it->second;
    };
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t s = eligible[uniformIndex(eligible.size(), rng)];
      const std::size_t g = rel.groupOf(s);
      const auto& negatives = poolFor(actionRel.groupOf(s), g);
      if (negatives.empty()) {
        ++batch.skipped;
        continue;
      }
      const std::size_t pos = selectedByGroup[g][uniformIndex(selectedByGroup[g].size(), rng)];
      const std::size_t neg = negatives[uniformIndex(negatives.size(), rng)];
      batch.triplets.push_back(
          Triplet{video(Domain::kSource, s), video(Domain::kTarget, pos), video(Domain::kTarget, neg), table.view});
    }
    return batch;
  }

  if (selected.empty()) {
    batch.skipped = count;
    return batch;
  }
  // Source items outside view group g, restricted under mining to the
  // hard-negative action groups of the target's action pseudo-label `a`.
  auto poolFor = [&](std::size_t a, std::size_t g) -> const std::vector<std::size_t>& {
    auto [it, fresh] = pools.try_emplace({mined ? a : 0, g});
    if (!fresh) return it->second;
    if (mined) {
      for (std::size_t h : hardNegatives_->nearestGroups(a)) {
        for (std::size_t i : actionRel.members(h)) {
          if (rel.groupOf(i) != g) it->second.push_back(i);
        }
      }
      std::sort(it->second.begin(), it->second.end());
    } else {
      for (std::size_t i = 0; i < rel.itemCount(); ++i) {
        if (rel.groupOf(i) != g) it->second.push_back(i);
      }
    }
    return it->second;
  };
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t t = selected[uniformIndex(selected.size(), rng)];
    const std::size_t g = table.entries[t].inheritedGroup;
    const auto& members = rel.members(g);
    const auto& negatives = poolFor(mined ? actionTable->entries[t].inheritedGroup : 0, g);
    if (members.empty() || negatives.empty()) {
      ++batch.skipped;
      continue;
    }
    const std::size_t pos = members[uniformIndex(members.size(), rng)];
    const std::size_t neg = negatives[uniformIndex(negatives.size(), rng)];
    batch.triplets.push_back(
        Triplet{video(Domain::kTarget, t), video(Domain::kSource, pos), video(Domain::kSource, neg), table.view});
  }
  return batch;
}

}  // namespace cmda
