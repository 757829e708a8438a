#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cmda/corpus.hpp"
#include "cmda/multiview.hpp"

namespace cmda {

// Mean embedding of one relevance group's source videos.
struct Prototype {
  View view = View::kAction;
  GroupKey label;
  std::size_t group = 0;  // index into the view's RelevanceView
  Vector centroid;
  std::size_t memberCount = 0;
  // Centroid too close to the origin to define a direction (e.g. members
  // that cancel out). Such prototypes give confidence 0.
  bool degenerate = false;
};

inline constexpr double kDegenerateCentroidNorm = 1e-9;

// One prototype per group; `sourceEmbeddings` holds one source video per column.
std::vector<Prototype> computePrototypes(const Matrix& sourceEmbeddings, const RelevanceView& relevance);
std::vector<Prototype> computePrototypes(const MultiViewModel& model, const Gallery& source,
                                         const RelevanceView& relevance);
Matrix centroidMatrix(const std::vector<Prototype>& prototypes);

enum class LabellingVariant { kNearestSource, kNearestPrototype };
enum class ConfidenceVariant { kPrototype, kNeighbour };
enum class SamplingVariant { kPerPrototypeTopX, kUniformTopX };

std::string_view toString(LabellingVariant v);
std::string_view toString(ConfidenceVariant v);
std::string_view toString(SamplingVariant v);
LabellingVariant parseLabellingVariant(std::string_view s);
ConfidenceVariant parseConfidenceVariant(std::string_view s);
SamplingVariant parseSamplingVariant(std::string_view s);

struct AdaptConfig {
  double samplePercent = 60.0;  // x, in (0, 100]
  LabellingVariant labelling = LabellingVariant::kNearestSource;
  ConfidenceVariant confidence = ConfidenceVariant::kPrototype;
  SamplingVariant sampling = SamplingVariant::kPerPrototypeTopX;

  void validate() const;
};

struct PseudoLabelEntry {
  std::size_t target = 0;
  View view = View::kAction;
  std::size_t nearestSource = 0;
  std::size_t inheritedGroup = 0;  // group index in the source RelevanceView
  GroupKey label;
  double neighbourDistance = 0.0;  // d(f(t), f(s_nearest))
  double prototypeDistance = 0.0;  // d(f(t), centroid of inheritedGroup)
  double confidence = 0.0;
  bool selected = false;
};

struct PseudoLabelTable {
  View view = View::kAction;
  std::size_t prototypeCount = 0;
  std::vector<PseudoLabelEntry> entries;  // indexed by target item

  std::size_t selectedCount() const;
};

struct DistanceCounter {
  std::size_t sourcePairs = 0;     // target x source video distances
  std::size_t prototypePairs = 0;  // target x prototype distances
};

// Assigns every target a relevance group: that of its nearest source video,
// or (kNearestPrototype) that of its nearest non-degenerate prototype. Ties
// go to the lowest index. Confidences are left at 0 and nothing is selected.
PseudoLabelTable pseudoLabel(const Matrix& targetEmbeddings, const Matrix& sourceEmbeddings,
                             const std::vector<Prototype>& prototypes, const RelevanceView& relevance,
                             LabellingVariant variant, DistanceCounter* counter = nullptr);

inline double confidenceFromDistance(double d) { return std::exp(-d); }

double confidence(const PseudoLabelEntry& entry, const std::vector<Prototype>& prototypes,
                  ConfidenceVariant variant);
void assignConfidence(PseudoLabelTable& table, const std::vector<Prototype>& prototypes,
                      ConfidenceVariant variant);

// Number kept out of `assigned` at x percent: max(1, floor(x * n / 100)), and
// 0 when nothing is assigned.
std::size_t selectionCount(std::size_t assigned, double percent);

// Sets the selected flags. Ranking is by confidence, descending, ties to the
// lower target index.
void selectTargets(PseudoLabelTable& table, double percent, SamplingVariant variant);

struct ViewAdaptation {
  std::vector<Prototype> prototypes;
  PseudoLabelTable table;
};

struct AdaptState {
  std::array<ViewAdaptation, 3> views;
  DistanceCounter distances;

  const ViewAdaptation& operator[](View v) const { return views[static_cast<std::size_t>(v)]; }
};

// Recomputes embeddings, prototypes, labels, confidences and selections for
// all three views from the current (frozen) model.
AdaptState epochRefresh(const MultiViewModel& model, const Gallery& source, const Gallery& target,
                        const RelevanceSets& relevance, const AdaptConfig& config);

struct LabelAccuracy {
  double all = 0.0;
  double selected = 0.0;  // 0 when nothing is selected
  std::size_t selectedCount = 0;
};

// Compares inherited labels with held-out target captions.
LabelAccuracy labelAccuracy(const PseudoLabelTable& table, std::span<const CaptionRecord> truth);

// Fraction of prototypes that received at least one selected target.
double labelDiversity(const PseudoLabelTable& table);

double meanConfidence(const PseudoLabelTable& table);

}  // namespace cmda
