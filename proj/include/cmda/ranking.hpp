#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "cmda/adapt.hpp"
#include "cmda/corpus.hpp"
#include "cmda/multiview.hpp"

namespace cmda {

// max(gamma + dPos - dNeg, 0)
inline double tripletHinge(double dPos, double dNeg, double gamma) {
  const double h = gamma + dPos - dNeg;
  return h > 0.0 ? h : 0.0;
}

struct Endpoint {
  ItemId item;
  Modality modality = Modality::kVideo;

  auto operator<=>(const Endpoint&) const = default;
};

struct Triplet {
  Endpoint anchor;
  Endpoint positive;
  Endpoint negative;
  View view = View::kAction;
};

enum class LossTerm : std::uint8_t {
  kVideoToText,     // source, cross-modal, video anchor
  kVideoToVideo,    // source, within-modal, video anchor
  kTextToVideo,     // source, cross-modal, text anchor
  kTextToText,      // source, within-modal, text anchor
  kSourceToTarget,  // cross-domain, source video anchor, target videos
  kTargetToSource,  // cross-domain, target video anchor, source videos
};

inline constexpr std::array<LossTerm, 4> kSourceTerms{LossTerm::kVideoToText, LossTerm::kVideoToVideo,
                                                      LossTerm::kTextToVideo, LossTerm::kTextToText};

std::string_view toString(LossTerm t);
inline bool isCrossDomain(LossTerm t) { return t == LossTerm::kSourceToTarget || t == LossTerm::kTargetToSource; }

struct TermBatch {
  View view = View::kAction;
  LossTerm term = LossTerm::kVideoToText;
  std::vector<Triplet> triplets;
  std::size_t skipped = 0;  // anchors that had no valid positive or negative
};

struct LossWeights {
  double margin = 0.1;
  double lambdaSrcToTgt = 0.1;
  double lambdaTgtToSrc = 0.1;
  std::array<double, 3> viewWeights{1.0, 1.0, 1.0};  // verb, noun, action

  void validate() const;
  // Weight applied to the hinge sum of one term.
  double termWeight(View view, LossTerm term) const;
};

struct TermLoss {
  View view = View::kAction;
  LossTerm term = LossTerm::kVideoToText;
  double hingeSum = 0.0;
  std::size_t triplets = 0;
  std::size_t violated = 0;
  std::size_t skipped = 0;
  double weight = 0.0;

  double mean() const { return triplets ? hingeSum / static_cast<double>(triplets) : 0.0; }
  double contribution() const { return weight * hingeSum; }
};

struct LossResult {
  double total = 0.0;
  std::vector<TermLoss> terms;
  ModelGradients gradients;
};

// Objective = sum over batches of termWeight * (sum of hinges over the
// batch's triplets). Distances are cosine distances between unit embeddings.
// `target` may be null when no batch references target items.
LossResult computeLoss(const MultiViewModel& model, const Gallery& source, const Gallery* target,
                       std::span<const TermBatch> batches, const LossWeights& weights,
                       bool withGradients = true);

// Source-only objective for one view (the four source terms).
LossResult sourceLoss(const MultiViewModel& model, const Gallery& source,
                      std::span<const TermBatch> batches, View view, const LossWeights& weights);

// Cross-domain objective for one view and one direction.
LossResult crossDomainLoss(const MultiViewModel& model, const Gallery& source, const Gallery& target,
                           std::span<const TermBatch> batches, View view, LossTerm direction,
                           const LossWeights& weights);

// Objective over every view and loss kind.
inline LossResult totalLoss(const MultiViewModel& model, const Gallery& source, const Gallery* target,
                            std::span<const TermBatch> batches, const LossWeights& weights) {
  return computeLoss(model, source, target, batches, weights);
}

// For each action prototype, the nearest fraction of the other action
// prototypes: max(1, floor(fraction * count)), capped at count - 1, ordered by
// cosine distance with ties to the lower index.
class HardNegativeIndex {
 public:
  HardNegativeIndex(const std::vector<Prototype>& actionPrototypes, std::size_t groupCount, double fraction);

  static std::size_t neighbourCount(std::size_t prototypes, double fraction);
  const std::vector<std::size_t>& nearestGroups(std::size_t actionGroup) const {
    return nearest_[actionGroup];
  }
  double fraction() const { return fraction_; }

 private:
  double fraction_;
  std::vector<std::vector<std::size_t>> nearest_;
};

class TripletSampler {
 public:
  // `hardNegatives` may be null, meaning negatives are drawn uniformly from
  // every irrelevant item.
  TripletSampler(const RelevanceSets& relevance, const HardNegativeIndex* hardNegatives);

  // One triplet per anchor (source item indices).
  TermBatch sampleSource(View view, LossTerm term, std::span<const std::size_t> anchors,
                         std::mt19937_64& rng) const;

  // `count` anchors drawn uniformly from the eligible ones. Only selected
  // targets of `table` take part. With hard-negative mining and the action
  // view's table, negatives are limited to items whose action group (true
  // for source videos, pseudo-label for targets) is among the nearest action
  // prototypes of the anchor's action group; anchors left without a negative
  // are skipped.
  TermBatch sampleCrossDomain(const PseudoLabelTable& table, LossTerm direction, std::size_t count,
                              std::mt19937_64& rng, const PseudoLabelTable* actionTable = nullptr) const;

  // Negative pool of a source anchor under hard-negative mining.
  const std::vector<std::size_t>& negativePool(View view, std::size_t anchor) const;

 private:
  const RelevanceSets* relevance_;
  const HardNegativeIndex* hardNegatives_;
  // [view][action group] when mining; [view][view group] otherwise.
  std::array<std::vector<std::vector<std::size_t>>, 3> negatives_;
  bool mined_;
};

}  // namespace cmda
